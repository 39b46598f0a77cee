#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "glad/vit.hpp"

namespace glad {

// Pixel-space Euclidean distances between patch centers on a g x g grid:
// c[j][k] = s * sqrt((r_j - r_k)^2 + (c_j - c_k)^2).
class DistanceMap {
 public:
  DistanceMap(std::size_t grid, std::size_t patch_size);
  static DistanceMap for_model(const ViTConfig& cfg) { return DistanceMap(cfg.grid(), cfg.patch_size); }

  std::size_t tokens() const { return grid_ * grid_; }
  double at(std::size_t j, std::size_t k) const { return c_[j * tokens() + k]; }
  double max() const;
  const std::vector<double>& values() const { return c_; }

 private:
  std::size_t grid_;
  std::vector<double> c_;
};

// Per-head attention distance: sum_k c[q][k] a[q][k] for every query row,
// averaged over queries and batch. Throws DimMismatch when K differs.
template <typename T>
std::vector<double> attention_distances(const LayerAttention<T>& layer, const DistanceMap& map,
                                        AttentionPath path = AttentionPath::adaptor_free);

template <typename T>
double attention_distance(const AttentionRecord<T>& record, const DistanceMap& map, std::size_t layer,
                          std::size_t head, AttentionPath path = AttentionPath::adaptor_free);

// Per-layer, per-head entropies on the adaptor-free path.
template <typename T>
std::vector<std::vector<double>> attention_entropy_stats(const AttentionRecord<T>& record);

struct LayerStats {
  std::string phase;
  std::string dataset;
  std::size_t layer = 0;
  std::size_t head_count = 0;
  double dist_mean = 0.0;
  double dist_std = 0.0;
  double entr_mean = 0.0;
  double entr_std = 0.0;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};

MeanStd mean_and_std(const std::vector<double>& values);

LayerStats aggregate_layer_stats(const std::string& phase, const std::string& dataset, std::size_t layer,
                                 const std::vector<double>& distances, const std::vector<double>& entropies);

// Runs the model over `images` in batches without recording a tape and
// aggregates per-head distance and entropy over the whole set.
std::vector<LayerStats> collect_layer_stats(const ViTModel<float>& model, const Tensor<float>& images,
                                            const std::string& phase, const std::string& dataset,
                                            std::size_t batch_size = 64);

// CSV `phase,dataset,layer,head_count,dist_mean,dist_std,entr_mean,entr_std`,
// rows sorted by (phase, layer), values printed with 6 significant digits.
std::string format_stats_csv(std::vector<LayerStats> stats);
void emit_stats_csv(const std::vector<LayerStats>& stats, const std::filesystem::path& path);

}  // namespace glad
