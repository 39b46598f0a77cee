#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "glad/optim.hpp"
#include "glad/rng.hpp"
#include "glad/tensor.hpp"
#include "glad/vit.hpp"

namespace glad {

// ---------------------------------------------------------------------------
// Masked image modeling

struct MaskSpec {
  std::size_t tokens = 0;  // K
  double rho = 0.4;        // probability that a token stays VISIBLE; mask ratio is 1 - rho
  std::uint64_t seed = 0;
};

// Independent Bernoulli(rho) draw per token; 1 = visible, 0 = masked.
std::vector<std::uint8_t> sample_mask(const MaskSpec& spec);
std::vector<std::uint8_t> sample_mask(std::size_t tokens, double rho, CounterRng& rng);

struct MimOptions {
  // Pixel-space zeroing instead of the learned mask token.
  bool mask_in_pixel_space = false;
  // Regress m *_s x over every token instead of the original pixels of the
  // masked tokens. Kept for documentation; it trains nothing useful.
  bool literal_target = false;
  // Per-image, per-channel min-max rescaling of targets to [0, 1].
  bool normalize_targets = true;
};

// Mean absolute error over the masked rows of [N, P] predictions/targets,
// normalized by (masked rows * P). Visible rows contribute neither value nor
// gradient. Throws EmptyMask when every row is visible.
template <typename T>
Tensor<T> masked_l1(const Tensor<T>& predictions, const Tensor<T>& targets,
                    const std::vector<std::uint8_t>& visible);

// Per-image, per-channel min-max normalization of [B, C, H, W] pixels.
template <typename T>
Tensor<T> normalize_pixel_targets(const Tensor<T>& images);

template <typename T>
struct LossWithAttention {
  Tensor<T> loss;
  Tensor<T> output;
  AttentionRecord<T> attention;
};

// `visible` has one entry per token of the batch (B * K).
template <typename T>
LossWithAttention<T> mim_loss(const ViTModel<T>& model, const Tensor<T>& images,
                              const std::vector<std::uint8_t>& visible, const MimOptions& options = {});

// ---------------------------------------------------------------------------
// Supervised cross-entropy

template <typename T>
LossWithAttention<T> ce_loss(const ViTModel<T>& model, const Tensor<T>& images,
                             std::span<const std::size_t> labels);

// ---------------------------------------------------------------------------
// Attention entropy and the GLAD regularizer

// Per-head entropy of one layer: row entropies averaged over queries, then
// over the batch. Differentiable; shape [heads].
template <typename T>
Tensor<T> head_entropies(const LayerAttention<T>& layer, AttentionPath path);

template <typename T>
T head_entropy(const AttentionRecord<T>& record, std::size_t layer, std::size_t head, AttentionPath path);

struct GladConfig {
  double lambda = 0.01;   // scale of the squared mean-entropy term
  double epsilon = 1e-6;  // floor under the entropy standard deviation
  double weight = 1.0;    // multiplier on the whole regularizer in the total loss
  AttentionPath regularized_path = AttentionPath::adaptor_free;
  bool train_adaptor = true;

  void validate() const;
};

// (1/L) * sum_l [ 1 / (std_i(a[l][i]) + eps) + lambda * mean_i(a[l][i])^2 ]
// with population std over heads. Throws SingleHead if a layer has < 2 heads.
template <typename T>
Tensor<T> glad_regularizer(const std::vector<Tensor<T>>& layer_entropies, const GladConfig& config);

template <typename T>
Tensor<T> glad_regularizer(const AttentionRecord<T>& record, const GladConfig& config);

// ---------------------------------------------------------------------------
// Synaptic intelligence

template <typename T>
struct SiEntry {
  std::string name;
  std::vector<T> omega;       // path-integral accumulator for the current task
  std::vector<T> reference;   // w* at the last consolidation
  std::vector<T> importance;  // Omega
};

template <typename T>
struct SiState {
  double strength = 100.0;  // lambda_SI
  double damping = 0.1;     // xi
  std::vector<SiEntry<T>> entries;

  // Snapshots `params` as the reference with zero importance.
  void reset(std::span<const ParamRef<T>> params);
  bool empty() const { return entries.empty(); }
};

// omega += -grad * delta for one optimizer step.
template <typename T>
void si_accumulate(SiState<T>& state, const std::vector<std::vector<T>>& grads,
                   const std::vector<std::vector<T>>& deltas);

// Omega += omega / ((w - w*)^2 + xi); then w* <- w and omega <- 0.
template <typename T>
void si_consolidate(SiState<T>& state, std::span<const ParamRef<T>> params);

// lambda_SI * sum Omega * (w - w*)^2, differentiable in the parameters.
template <typename T>
Tensor<T> si_penalty(const SiState<T>& state, std::span<const ParamRef<T>> params);

// ---------------------------------------------------------------------------
// Combined objective

struct LossTerms {
  double task = 0.0;
  double glad = 0.0;
  double si = 0.0;
  double total = 0.0;
};

// Sum of the enabled terms; records each term's value in `terms` if given.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& task, const std::optional<Tensor<T>>& glad_term,
                     const std::optional<Tensor<T>>& si_term, LossTerms* terms = nullptr);

// CSV `step,task_loss,glad_term,si_term,total`.
void write_loss_log_header(std::ostream& os);
void write_loss_log_row(std::ostream& os, std::size_t step, const LossTerms& terms);

}  // namespace glad
