#include "glad/objectives.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>

#include "glad/ops.hpp"

namespace glad {

std::vector<std::uint8_t> sample_mask(std::size_t tokens, double rho, CounterRng& rng) {
  std::vector<std::uint8_t> m(tokens);
  for (auto& v : m) v = rng.uniform() < rho ? 1 : 0;
  return m;
}

std::vector<std::uint8_t> sample_mask(const MaskSpec& spec) {
  CounterRng rng(spec.seed, "mask");
  return sample_mask(spec.tokens, spec.rho, rng);
}

template <typename T>
Tensor<T> masked_l1(const Tensor<T>& predictions, const Tensor<T>& targets,
                    const std::vector<std::uint8_t>& visible) {
  if (predictions.shape() != targets.shape() || predictions.rank() != 2 ||
      visible.size() != predictions.dim(0)) {
    throw Error(ErrorCode::ShapeMismatch, "masked_l1 needs [N,P] predictions/targets and N mask entries");
  }
  std::vector<std::size_t> masked;
  for (std::size_t i = 0; i < visible.size(); ++i) {
    if (!visible[i]) masked.push_back(i);
  }
  if (masked.empty()) throw Error(ErrorCode::EmptyMask, "no masked tokens to reconstruct");
  const auto pred = gather_rows(predictions, masked);
  const auto target = gather_rows(targets, masked);
  const T norm = static_cast<T>(masked.size() * predictions.dim(1));
  return scale(l1_distance(pred, target), T(1) / norm);
}

template <typename T>
Tensor<T> normalize_pixel_targets(const Tensor<T>& images) {
  if (images.rank() != 4) throw Error(ErrorCode::DimMismatch, "expected [B,C,H,W] images");
  const std::size_t plane = images.dim(2) * images.dim(3);
  const std::size_t planes = images.dim(0) * images.dim(1);
  std::vector<T> out(images.data().begin(), images.data().end());
  for (std::size_t p = 0; p < planes; ++p) {
    auto first = out.begin() + static_cast<std::ptrdiff_t>(p * plane);
    auto last = first + static_cast<std::ptrdiff_t>(plane);
    const auto [lo, hi] = std::minmax_element(first, last);
    const T low = *lo, range = *hi - *lo;
    for (auto it = first; it != last; ++it) *it = range > T(0) ? (*it - low) / range : T(0);
  }
  return Tensor<T>(images.shape(), std::move(out));
}

template <typename T>
LossWithAttention<T> mim_loss(const ViTModel<T>& model, const Tensor<T>& images,
                              const std::vector<std::uint8_t>& visible, const MimOptions& options) {
  const bool pixel_mask = options.mask_in_pixel_space || options.literal_target;
  ForwardResult<T> fwd = model.forward(images, ForwardMode::reconstruct, &visible, pixel_mask);
  const Tensor<T> source = options.normalize_targets ? normalize_pixel_targets(images) : images;
  Tensor<T> targets = patchify(source, model.config());
  LossWithAttention<T> out;
  if (options.literal_target) {
    std::vector<T> keep(visible.begin(), visible.end());
    targets = mul(targets, Tensor<T>({visible.size(), 1}, std::move(keep)));
    out.loss = scale(l1_distance(fwd.output, targets), T(1) / static_cast<T>(targets.numel()));
  } else {
    out.loss = masked_l1(fwd.output, targets, visible);
  }
  out.output = fwd.output;
  out.attention = std::move(fwd.attention);
  return out;
}

template <typename T>
LossWithAttention<T> ce_loss(const ViTModel<T>& model, const Tensor<T>& images,
                             std::span<const std::size_t> labels) {
  ForwardResult<T> fwd = model.forward(images, ForwardMode::classify);
  LossWithAttention<T> out;
  out.loss = cross_entropy(fwd.output, labels);
  out.output = fwd.output;
  out.attention = std::move(fwd.attention);
  return out;
}

template <typename T>
Tensor<T> head_entropies(const LayerAttention<T>& layer, AttentionPath path) {
  const Tensor<T>& probs = layer.path(path);
  auto rows = row_entropy(probs);  // [B*H, K]
  rows = reshape(rows, {layer.batch, layer.heads, layer.tokens});
  return mean(mean(rows, 2), 0);
}

template <typename T>
T head_entropy(const AttentionRecord<T>& record, std::size_t layer, std::size_t head, AttentionPath path) {
  const LayerAttention<T>& l = record.layers.at(layer);
  if (head >= l.heads) throw Error(ErrorCode::DimMismatch, "head index out of range");
  // Evaluated off-tape: analytics must not grow the graph.
  Tensor<T> probs = l.path(path).detach();
  LayerAttention<T> copy{probs, Tensor<T>(), l.batch, l.heads, l.tokens};
  return head_entropies(copy, AttentionPath::adaptor_free)[head];
}

void GladConfig::validate() const {
  if (lambda < 0.0) throw Error(ErrorCode::ConfigConflict, "glad.lambda must be >= 0");
  if (!(epsilon > 0.0)) throw Error(ErrorCode::ConfigConflict, "glad.epsilon must be > 0");
  if (weight < 0.0) throw Error(ErrorCode::ConfigConflict, "glad.weight must be >= 0");
}

template <typename T>
Tensor<T> glad_regularizer(const std::vector<Tensor<T>>& layer_entropies, const GladConfig& config) {
  if (layer_entropies.empty()) throw Error(ErrorCode::DimMismatch, "no layers to regularize");
  std::vector<Tensor<T>> terms;
  for (const auto& a : layer_entropies) {
    if (a.numel() < 2) {
      throw Error(ErrorCode::SingleHead, "entropy spread needs at least two heads per layer");
    }
    const auto a_bar = mean_all(a);
    const auto spread = sqrt(mean_all(square(sub(a, a_bar))));
    const auto inverse = div(Tensor<T>::scalar(T(1)),
                             add(spread, Tensor<T>::scalar(static_cast<T>(config.epsilon))));
    terms.push_back(add(inverse, scale(square(a_bar), static_cast<T>(config.lambda))));
  }
  Tensor<T> acc = terms.front();
  for (std::size_t l = 1; l < terms.size(); ++l) acc = add(acc, terms[l]);
  return scale(acc, T(1) / static_cast<T>(terms.size()));
}

template <typename T>
Tensor<T> glad_regularizer(const AttentionRecord<T>& record, const GladConfig& config) {
  std::vector<Tensor<T>> entropies;
  for (const auto& layer : record.layers) entropies.push_back(head_entropies(layer, config.regularized_path));
  return glad_regularizer(entropies, config);
}

template <typename T>
void SiState<T>::reset(std::span<const ParamRef<T>> params) {
  entries.clear();
  for (const auto& p : params) {
    const std::size_t n = p.tensor.numel();
    entries.push_back(SiEntry<T>{p.name, std::vector<T>(n, T(0)),
                                 std::vector<T>(p.tensor.data().begin(), p.tensor.data().end()),
                                 std::vector<T>(n, T(0))});
  }
}

template <typename T>
void si_accumulate(SiState<T>& state, const std::vector<std::vector<T>>& grads,
                   const std::vector<std::vector<T>>& deltas) {
  if (grads.size() != state.entries.size() || deltas.size() != state.entries.size()) {
    throw Error(ErrorCode::ShapeMismatch, "si_accumulate: one grad and delta per tracked parameter");
  }
  for (std::size_t k = 0; k < state.entries.size(); ++k) {
    auto& omega = state.entries[k].omega;
    if (grads[k].size() != omega.size() || deltas[k].size() != omega.size()) {
      throw Error(ErrorCode::ShapeMismatch, "si_accumulate: " + state.entries[k].name);
    }
    for (std::size_t i = 0; i < omega.size(); ++i) omega[i] -= grads[k][i] * deltas[k][i];
  }
}

namespace {

template <typename T>
void check_si_params(const SiState<T>& state, std::span<const ParamRef<T>> params) {
  if (params.size() != state.entries.size()) {
    throw Error(ErrorCode::ShapeMismatch, "SI state tracks a different parameter list");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].tensor.numel() != state.entries[k].reference.size()) {
      throw Error(ErrorCode::ShapeMismatch, "SI shape mismatch for " + params[k].name);
    }
  }
}

}  // namespace

template <typename T>
void si_consolidate(SiState<T>& state, std::span<const ParamRef<T>> params) {
  check_si_params(state, params);
  const T xi = static_cast<T>(state.damping);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& e = state.entries[k];
    const auto w = params[k].tensor.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const T drift = w[i] - e.reference[i];
      // Omega stays nonnegative even if a non-descent step made omega < 0.
      e.importance[i] += std::max(T(0), e.omega[i]) / (drift * drift + xi);
      e.reference[i] = w[i];
      e.omega[i] = T(0);
    }
  }
}

template <typename T>
Tensor<T> si_penalty(const SiState<T>& state, std::span<const ParamRef<T>> params) {
  check_si_params(state, params);
  std::optional<Tensor<T>> acc;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& e = state.entries[k];
    const Shape& shape = params[k].tensor.shape();
    const Tensor<T> ref(shape, e.reference);
    const Tensor<T> omega(shape, e.importance);
    auto term = sum_all(mul(omega, square(sub(params[k].tensor, ref))));
    acc = acc ? add(*acc, term) : term;
  }
  if (!acc) return Tensor<T>::scalar(T(0));
  return scale(*acc, static_cast<T>(state.strength));
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& task, const std::optional<Tensor<T>>& glad_term,
                     const std::optional<Tensor<T>>& si_term, LossTerms* terms) {
  Tensor<T> total = task;
  if (glad_term) total = add(total, *glad_term);
  if (si_term) total = add(total, *si_term);
  if (terms != nullptr) {
    terms->task = static_cast<double>(task.item());
    terms->glad = glad_term ? static_cast<double>(glad_term->item()) : 0.0;
    terms->si = si_term ? static_cast<double>(si_term->item()) : 0.0;
    terms->total = static_cast<double>(total.item());
  }
  return total;
}

void write_loss_log_header(std::ostream& os) { os << "step,task_loss,glad_term,si_term,total\n"; }

void write_loss_log_row(std::ostream& os, std::size_t step, const LossTerms& t) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g\n", step, t.task, t.glad, t.si, t.total);
  os << buf;
}

#define GLAD_INSTANTIATE(T)                                                                       \
  template Tensor<T> masked_l1(const Tensor<T>&, const Tensor<T>&, const std::vector<std::uint8_t>&); \
  template Tensor<T> normalize_pixel_targets(const Tensor<T>&);                                   \
  template LossWithAttention<T> mim_loss(const ViTModel<T>&, const Tensor<T>&,                    \
                                         const std::vector<std::uint8_t>&, const MimOptions&);    \
  template LossWithAttention<T> ce_loss(const ViTModel<T>&, const Tensor<T>&,                     \
                                        std::span<const std::size_t>);                            \
  template Tensor<T> head_entropies(const LayerAttention<T>&, AttentionPath);                     \
  template T head_entropy(const AttentionRecord<T>&, std::size_t, std::size_t, AttentionPath);    \
  template Tensor<T> glad_regularizer(const std::vector<Tensor<T>>&, const GladConfig&);          \
  template Tensor<T> glad_regularizer(const AttentionRecord<T>&, const GladConfig&);              \
  template struct SiState<T>;                                                                     \
  template void si_accumulate(SiState<T>&, const std::vector<std::vector<T>>&,                    \
                              const std::vector<std::vector<T>>&);                                \
  template void si_consolidate(SiState<T>&, std::span<const ParamRef<T>>);                        \
  template Tensor<T> si_penalty(const SiState<T>&, std::span<const ParamRef<T>>);                 \
  template Tensor<T> total_loss(const Tensor<T>&, const std::optional<Tensor<T>>&,                \
                                const std::optional<Tensor<T>>&, LossTerms*);

GLAD_INSTANTIATE(float)
GLAD_INSTANTIATE(double)

#undef GLAD_INSTANTIATE

}  // namespace glad
