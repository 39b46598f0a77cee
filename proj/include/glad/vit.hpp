#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "glad/checkpoint_io.hpp"
#include "glad/optim.hpp"
#include "glad/rng.hpp"
#include "glad/tensor.hpp"

namespace glad {

enum class HeadKind { classifier, mim_decoder, none };

// Which attention probabilities a consumer reads from a GLAD-MSA layer.
enum class AttentionPath { adaptor_free, adaptor_guided };

const char* to_string(HeadKind kind);
const char* to_string(AttentionPath path);

struct ViTConfig {
  std::size_t image_size = 16;
  std::size_t channels = 3;
  std::size_t patch_size = 4;
  std::size_t embed_dim = 64;
  std::size_t depth = 4;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t num_classes = 5;
  HeadKind head_kind = HeadKind::classifier;
  bool glad = false;  // build GLAD-MSA layers with per-layer adaptors

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t tokens() const { return grid() * grid(); }
  std::size_t head_dim() const { return embed_dim / heads; }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
  std::size_t pixels() const { return channels * image_size * image_size; }

  // Throws DimMismatch when the extents cannot form a ViT.
  void validate() const;
};

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]

  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct LayerNormParams {
  Tensor<T> gamma;
  Tensor<T> beta;

  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct AttentionWeights {
  Linear<T> query, key, value, proj;
  std::size_t heads = 1;
};

template <typename T>
struct Block {
  LayerNormParams<T> ln1;
  AttentionWeights<T> attn;
  LayerNormParams<T> ln2;
  Linear<T> fc1, fc2;
};

// Attention probabilities of one layer, stored as [batch * heads, K, K].
template <typename T>
struct LayerAttention {
  Tensor<T> adaptor_free;
  Tensor<T> adaptor_guided;  // undefined for plain MSA
  std::size_t batch = 0;
  std::size_t heads = 0;
  std::size_t tokens = 0;

  // Throws PathMissing if the requested path was not captured.
  const Tensor<T>& path(AttentionPath which) const;
  // Detached [heads, K, K] average over the batch.
  Tensor<T> batch_averaged(AttentionPath which) const;
};

template <typename T>
struct AttentionRecord {
  std::vector<LayerAttention<T>> layers;
};

template <typename T>
struct AttentionOutput {
  Tensor<T> tokens;
  LayerAttention<T> attention;
};

// Scaled dot-product multi-head self-attention over `batch` sequences packed
// as [batch * K, d] rows.
template <typename T>
AttentionOutput<T> msa_forward(const Tensor<T>& tokens, const AttentionWeights<T>& w,
                               std::size_t batch);

// GLAD-MSA: the adaptor scales the query features, Q' = Q * v. The output is
// driven by softmax(Q'K^T / sqrt(d_h)); the unmodified softmax(QK^T / sqrt(d_h))
// is also captured so a regularizer can read it.
template <typename T>
AttentionOutput<T> glad_msa_forward(const Tensor<T>& tokens, const AttentionWeights<T>& w,
                                    const Tensor<T>& adaptor, std::size_t batch);

// [B, C, H, W] images -> [B*K, s*s*C] patch rows. Tokens are ordered row-major
// over the patch grid; within a patch values are ordered (dy, dx, channel).
template <typename T>
Tensor<T> patchify(const Tensor<T>& images, const ViTConfig& cfg);

enum ParamGroup : unsigned {
  kBackbone = 1u << 0,
  kAdaptor = 1u << 1,
  kClassifier = 1u << 2,
  kDecoder = 1u << 3,
  kAllParams = kBackbone | kAdaptor | kClassifier | kDecoder,
};

enum class ForwardMode { classify, reconstruct, features };

template <typename T>
struct ForwardResult {
  Tensor<T> output;  // logits [B, C] | reconstructions [B*K, P] | pooled features [B, d]
  AttentionRecord<T> attention;
};

template <typename T>
class ViTModel {
 public:
  // Weights are drawn from streams derived from `init` by parameter name, so
  // adding or removing heads never shifts the backbone initialization.
  ViTModel(const ViTConfig& config, const CounterRng& init);

  // Copies would alias parameter storage; use clone() for an independent model.
  ViTModel(const ViTModel&) = delete;
  ViTModel& operator=(const ViTModel&) = delete;
  ViTModel(ViTModel&&) noexcept = default;
  ViTModel& operator=(ViTModel&&) noexcept = default;
  ViTModel clone() const;

  const ViTConfig& config() const { return config_; }

  // Token embeddings [B*K, d] (patch projection + positional embedding).
  // `visible` (length B*K, 1 = visible) swaps masked tokens for the learned
  // mask token, or zeroes their pixels when `mask_pixels` is set.
  Tensor<T> embed(const Tensor<T>& images, const std::vector<std::uint8_t>* visible = nullptr,
                  bool mask_pixels = false) const;

  ForwardResult<T> forward(const Tensor<T>& images, ForwardMode mode,
                           const std::vector<std::uint8_t>* visible = nullptr,
                           bool mask_pixels = false) const;

  // Replaces the classifier with a freshly initialized one.
  void reset_classifier(std::size_t num_classes, const CounterRng& init);
  void reset_decoder(const CounterRng& init);
  void reset_adaptors();
  bool has_classifier() const { return classifier_.has_value(); }
  bool has_decoder() const { return decoder_.has_value(); }

  std::vector<ParamRef<T>> parameters(unsigned groups) const;

  std::vector<NamedArray> export_arrays(unsigned groups) const;
  // Copies values by name; every parameter of `groups` must be present.
  void import_arrays(const std::vector<NamedArray>& arrays, unsigned groups);

  const Block<T>& block(std::size_t l) const { return blocks_.at(l); }
  Block<T>& block(std::size_t l) { return blocks_.at(l); }
  const Tensor<T>& adaptor(std::size_t l) const { return adaptors_.at(l); }
  Tensor<T>& adaptor(std::size_t l) { return adaptors_.at(l); }
  Linear<T>& patch_embedding() { return patch_embed_; }
  Tensor<T>& pos_embed() { return pos_embed_; }
  Linear<T>& classifier();
  Linear<T>& decoder();

 private:
  ViTModel() = default;

  ViTConfig config_;
  Linear<T> patch_embed_;
  Tensor<T> pos_embed_;
  Tensor<T> mask_token_;
  std::vector<Block<T>> blocks_;
  LayerNormParams<T> norm_;
  std::vector<Tensor<T>> adaptors_;
  std::optional<Linear<T>> classifier_;
  std::optional<Linear<T>> decoder_;
};

}  // namespace glad
