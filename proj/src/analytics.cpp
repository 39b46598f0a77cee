#include "glad/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "glad/objectives.hpp"

namespace glad {

DistanceMap::DistanceMap(std::size_t grid, std::size_t patch_size) : grid_(grid), c_(grid * grid * grid * grid) {
  const std::size_t K = tokens();
  for (std::size_t j = 0; j < K; ++j) {
    for (std::size_t k = 0; k < K; ++k) {
      const double dr = static_cast<double>(j / grid) - static_cast<double>(k / grid);
      const double dc = static_cast<double>(j % grid) - static_cast<double>(k % grid);
      c_[j * K + k] = static_cast<double>(patch_size) * std::sqrt(dr * dr + dc * dc);
    }
  }
}

double DistanceMap::max() const { return c_.empty() ? 0.0 : *std::max_element(c_.begin(), c_.end()); }

template <typename T>
std::vector<double> attention_distances(const LayerAttention<T>& layer, const DistanceMap& map, AttentionPath path) {
  const auto p = layer.path(path).data();
  const std::size_t K = layer.tokens;
  if (K != map.tokens()) {
    throw Error(ErrorCode::DimMismatch, "attention over " + std::to_string(K) + " tokens, distance map over " +
                                            std::to_string(map.tokens()));
  }
  std::vector<double> out(layer.heads, 0.0);
  for (std::size_t b = 0; b < layer.batch; ++b) {
    for (std::size_t h = 0; h < layer.heads; ++h) {
      const T* a = p.data() + (b * layer.heads + h) * K * K;
      double acc = 0.0;
      for (std::size_t q = 0; q < K; ++q) {
        double mass = 0.0, weighted = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          mass += static_cast<double>(a[q * K + k]);
          weighted += map.at(q, k) * static_cast<double>(a[q * K + k]);
        }
        acc += mass > 0.0 ? weighted / mass : 0.0;
      }
      out[h] += acc / static_cast<double>(K);
    }
  }
  for (auto& v : out) v /= static_cast<double>(layer.batch);
  return out;
}

template <typename T>
double attention_distance(const AttentionRecord<T>& record, const DistanceMap& map, std::size_t layer,
                          std::size_t head, AttentionPath path) {
  const auto d = attention_distances(record.layers.at(layer), map, path);
  if (head >= d.size()) throw Error(ErrorCode::DimMismatch, "head index out of range");
  return d[head];
}

template <typename T>
std::vector<std::vector<double>> attention_entropy_stats(const AttentionRecord<T>& record) {
  std::vector<std::vector<double>> out;
  for (std::size_t l = 0; l < record.layers.size(); ++l) {
    std::vector<double> heads;
    for (std::size_t h = 0; h < record.layers[l].heads; ++h) {
      heads.push_back(static_cast<double>(head_entropy(record, l, h, AttentionPath::adaptor_free)));
    }
    out.push_back(std::move(heads));
  }
  return out;
}

MeanStd mean_and_std(const std::vector<double>& values) {
  if (values.empty()) return {};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / static_cast<double>(values.size()))};
}

LayerStats aggregate_layer_stats(const std::string& phase, const std::string& dataset, std::size_t layer,
                                 const std::vector<double>& distances, const std::vector<double>& entropies) {
  const MeanStd d = mean_and_std(distances), e = mean_and_std(entropies);
  return {phase, dataset, layer, std::max(distances.size(), entropies.size()), d.mean, d.std, e.mean, e.std};
}

std::vector<LayerStats> collect_layer_stats(const ViTModel<float>& model, const Tensor<float>& images,
                                            const std::string& phase, const std::string& dataset,
                                            std::size_t batch_size) {
  const ViTConfig& cfg = model.config();
  const DistanceMap map = DistanceMap::for_model(cfg);
  const std::size_t n = images.dim(0), stride = cfg.pixels();
  std::vector<std::vector<double>> dist(cfg.depth, std::vector<double>(cfg.heads, 0.0));
  auto entr = dist;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t b = std::min(batch_size, n - start);
    std::vector<float> px(images.data().begin() + static_cast<std::ptrdiff_t>(start * stride),
                          images.data().begin() + static_cast<std::ptrdiff_t>((start + b) * stride));
    const Tensor<float> batch({b, cfg.channels, cfg.image_size, cfg.image_size}, std::move(px));
    const auto rec = model.forward(batch, ForwardMode::features).attention;
    const auto e = attention_entropy_stats(rec);
    for (std::size_t l = 0; l < cfg.depth; ++l) {
      const auto d = attention_distances(rec.layers[l], map);
      for (std::size_t h = 0; h < cfg.heads; ++h) {
        dist[l][h] += d[h] * static_cast<double>(b);
        entr[l][h] += e[l][h] * static_cast<double>(b);
      }
    }
  }
  std::vector<LayerStats> out;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      dist[l][h] /= static_cast<double>(n);
      entr[l][h] /= static_cast<double>(n);
    }
    out.push_back(aggregate_layer_stats(phase, dataset, l, dist[l], entr[l]));
  }
  return out;
}

std::string format_stats_csv(std::vector<LayerStats> stats) {
  std::stable_sort(stats.begin(), stats.end(), [](const LayerStats& a, const LayerStats& b) {
    return a.phase != b.phase ? a.phase < b.phase : a.layer < b.layer;
  });
  std::string out = "phase,dataset,layer,head_count,dist_mean,dist_std,entr_mean,entr_std\n";
  char buf[256];
  for (const auto& s : stats) {
    std::snprintf(buf, sizeof buf, ",%zu,%zu,%.6g,%.6g,%.6g,%.6g\n", s.layer, s.head_count, s.dist_mean, s.dist_std,
                  s.entr_mean, s.entr_std);
    out += s.phase + "," + s.dataset + buf;
  }
  return out;
}

void emit_stats_csv(const std::vector<LayerStats>& stats, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  os << format_stats_csv(stats);
  if (!os) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

#define GLAD_INSTANTIATE(T)                                                                                \
  template std::vector<double> attention_distances(const LayerAttention<T>&, const DistanceMap&, AttentionPath); \
  template double attention_distance(const AttentionRecord<T>&, const DistanceMap&, std::size_t, std::size_t,     \
                                     AttentionPath);                                                      \
  template std::vector<std::vector<double>> attention_entropy_stats(const AttentionRecord<T>&);

GLAD_INSTANTIATE(float)
GLAD_INSTANTIATE(double)

#undef GLAD_INSTANTIATE

}  // namespace glad
