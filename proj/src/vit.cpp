#include "glad/vit.hpp"

#include <cmath>
#include <map>

#include "glad/ops.hpp"

namespace glad {

const char* to_string(HeadKind kind) {
  switch (kind) {
    case HeadKind::classifier: return "classifier";
    case HeadKind::mim_decoder: return "mim-decoder";
    case HeadKind::none: return "none";
  }
  return "?";
}

const char* to_string(AttentionPath path) {
  return path == AttentionPath::adaptor_free ? "adaptor_free" : "adaptor_guided";
}

void ViTConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::DimMismatch, what); };
  if (patch_size == 0 || image_size == 0 || channels == 0) fail("image and patch extents must be positive");
  if (image_size % patch_size != 0) fail("image_size must be a multiple of patch_size");
  if (heads == 0 || embed_dim % heads != 0) fail("embed_dim must be divisible by heads");
  if (mlp_ratio == 0) fail("mlp_ratio must be positive");
  if (head_kind == HeadKind::classifier && num_classes == 0) fail("classifier needs num_classes > 0");
}

template <typename T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
  return add(matmul(x, weight), bias);
}

template <typename T>
Tensor<T> LayerNormParams<T>::operator()(const Tensor<T>& x) const {
  return layernorm(x, gamma, beta);
}

template <typename T>
const Tensor<T>& LayerAttention<T>::path(AttentionPath which) const {
  const Tensor<T>& t = which == AttentionPath::adaptor_free ? adaptor_free : adaptor_guided;
  if (!t.defined()) {
    throw Error(ErrorCode::PathMissing, std::string(to_string(which)) + " attention was not captured");
  }
  return t;
}

template <typename T>
Tensor<T> LayerAttention<T>::batch_averaged(AttentionPath which) const {
  const auto probs = path(which).data();
  const std::size_t block = heads * tokens * tokens;
  std::vector<T> out(block, T(0));
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < block; ++i) out[i] += probs[b * block + i];
  }
  for (auto& v : out) v /= static_cast<T>(batch);
  return Tensor<T>({heads, tokens, tokens}, std::move(out));
}

namespace {

struct AttentionDims {
  std::size_t batch, tokens, heads, head_dim, width;
};

template <typename T>
AttentionDims attention_dims(const Tensor<T>& x, const AttentionWeights<T>& w, std::size_t batch) {
  if (x.rank() != 2 || batch == 0 || x.dim(0) % batch != 0) {
    throw Error(ErrorCode::DimMismatch, "tokens must be [batch * K, d], got " + shape_str(x.shape()));
  }
  const std::size_t width = w.query.weight.dim(0);
  if (x.dim(1) != width || w.heads == 0 || width % w.heads != 0) {
    throw Error(ErrorCode::DimMismatch, "token width " + std::to_string(x.dim(1)) +
                                            " does not match attention width " + std::to_string(width));
  }
  return {batch, x.dim(0) / batch, w.heads, width / w.heads, width};
}

// [B*K, d] -> [B*H, K, d_h]
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, const AttentionDims& d) {
  auto t = reshape(x, {d.batch, d.tokens, d.heads, d.head_dim});
  t = permute(t, {0, 2, 1, 3});
  return reshape(t, {d.batch * d.heads, d.tokens, d.head_dim});
}

// [B*H, K, d_h] -> [B*K, d]
template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x, const AttentionDims& d) {
  auto t = reshape(x, {d.batch, d.heads, d.tokens, d.head_dim});
  t = permute(t, {0, 2, 1, 3});
  return reshape(t, {d.batch * d.tokens, d.width});
}

template <typename T>
Tensor<T> attention_probs(const Tensor<T>& qh, const Tensor<T>& kh, const AttentionDims& d) {
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(d.head_dim));
  return softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), 2);
}

template <typename T>
std::vector<T> trunc_normal(std::size_t n, const CounterRng& parent, const std::string& name) {
  CounterRng rng = parent.derive(name);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.truncated_normal(0.02));
  return v;
}

template <typename T>
Linear<T> make_linear(std::size_t in, std::size_t out, const CounterRng& init, const std::string& name) {
  return Linear<T>{Tensor<T>::parameter({in, out}, trunc_normal<T>(in * out, init, name + ".weight")),
                   Tensor<T>::parameter({out}, std::vector<T>(out, T(0)))};
}

template <typename T>
LayerNormParams<T> make_layernorm(std::size_t width) {
  return LayerNormParams<T>{Tensor<T>::parameter({width}, std::vector<T>(width, T(1))),
                            Tensor<T>::parameter({width}, std::vector<T>(width, T(0)))};
}

template <typename T>
void push_linear(std::vector<ParamRef<T>>& out, const std::string& name, const Linear<T>& l) {
  out.push_back({name + ".weight", l.weight, true});
  out.push_back({name + ".bias", l.bias, false});
}

template <typename T>
void push_layernorm(std::vector<ParamRef<T>>& out, const std::string& name, const LayerNormParams<T>& n) {
  out.push_back({name + ".gamma", n.gamma, false});
  out.push_back({name + ".beta", n.beta, false});
}

}  // namespace

template <typename T>
AttentionOutput<T> msa_forward(const Tensor<T>& tokens, const AttentionWeights<T>& w, std::size_t batch) {
  const AttentionDims d = attention_dims(tokens, w, batch);
  const auto qh = split_heads(w.query(tokens), d);
  const auto kh = split_heads(w.key(tokens), d);
  const auto vh = split_heads(w.value(tokens), d);
  auto probs = attention_probs(qh, kh, d);
  auto out = w.proj(merge_heads(matmul(probs, vh), d));
  return {out, LayerAttention<T>{probs, Tensor<T>(), d.batch, d.heads, d.tokens}};
}

template <typename T>
AttentionOutput<T> glad_msa_forward(const Tensor<T>& tokens, const AttentionWeights<T>& w,
                                    const Tensor<T>& adaptor, std::size_t batch) {
  const AttentionDims d = attention_dims(tokens, w, batch);
  if (adaptor.numel() != d.width) {
    throw Error(ErrorCode::DimMismatch, "adaptor length " + std::to_string(adaptor.numel()) +
                                            " != embed dim " + std::to_string(d.width));
  }
  const auto q = w.query(tokens);
  const auto kh = split_heads(w.key(tokens), d);
  const auto vh = split_heads(w.value(tokens), d);
  auto free_probs = attention_probs(split_heads(q, d), kh, d);
  auto guided_probs = attention_probs(split_heads(mul(q, adaptor), d), kh, d);
  auto out = w.proj(merge_heads(matmul(guided_probs, vh), d));
  return {out, LayerAttention<T>{free_probs, guided_probs, d.batch, d.heads, d.tokens}};
}

template <typename T>
Tensor<T> patchify(const Tensor<T>& images, const ViTConfig& cfg) {
  const std::size_t C = cfg.channels, H = cfg.image_size, s = cfg.patch_size, g = cfg.grid();
  if (images.rank() != 4 || images.dim(1) != C || images.dim(2) != H || images.dim(3) != H) {
    throw Error(ErrorCode::DimMismatch, "expected [B," + std::to_string(C) + "," + std::to_string(H) +
                                            "," + std::to_string(H) + "] images, got " +
                                            shape_str(images.shape()));
  }
  const std::size_t B = images.dim(0), P = cfg.patch_dim(), K = cfg.tokens();
  const auto px = images.data();
  std::vector<T> out(B * K * P);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t r = 0; r < g; ++r) {
      for (std::size_t c = 0; c < g; ++c) {
        T* row = out.data() + ((b * K) + r * g + c) * P;
        for (std::size_t dy = 0; dy < s; ++dy) {
          for (std::size_t dx = 0; dx < s; ++dx) {
            for (std::size_t ch = 0; ch < C; ++ch) {
              const std::size_t y = r * s + dy, x = c * s + dx;
              row[(dy * s + dx) * C + ch] = px[((b * C + ch) * H + y) * H + x];
            }
          }
        }
      }
    }
  }
  return Tensor<T>({B * K, P}, std::move(out));
}

template <typename T>
ViTModel<T>::ViTModel(const ViTConfig& config, const CounterRng& init) : config_(config) {
  config_.validate();
  const std::size_t d = config_.embed_dim, K = config_.tokens(), P = config_.patch_dim();
  patch_embed_ = make_linear<T>(P, d, init, "patch_embed");
  pos_embed_ = Tensor<T>::parameter({K, d}, trunc_normal<T>(K * d, init, "pos_embed"));
  mask_token_ = Tensor<T>::parameter({d}, trunc_normal<T>(d, init, "mask_token"));
  const std::size_t hidden = d * config_.mlp_ratio;
  for (std::size_t l = 0; l < config_.depth; ++l) {
    const std::string p = "layer" + std::to_string(l);
    Block<T> b;
    b.ln1 = make_layernorm<T>(d);
    b.attn.query = make_linear<T>(d, d, init, p + ".qkv.query");
    b.attn.key = make_linear<T>(d, d, init, p + ".qkv.key");
    b.attn.value = make_linear<T>(d, d, init, p + ".qkv.value");
    b.attn.proj = make_linear<T>(d, d, init, p + ".proj");
    b.attn.heads = config_.heads;
    b.ln2 = make_layernorm<T>(d);
    b.fc1 = make_linear<T>(d, hidden, init, p + ".mlp.fc1");
    b.fc2 = make_linear<T>(hidden, d, init, p + ".mlp.fc2");
    blocks_.push_back(std::move(b));
    if (config_.glad) adaptors_.push_back(Tensor<T>::parameter({d}, std::vector<T>(d, T(1))));
  }
  norm_ = make_layernorm<T>(d);
  if (config_.head_kind == HeadKind::classifier) reset_classifier(config_.num_classes, init);
  if (config_.head_kind == HeadKind::mim_decoder) reset_decoder(init);
}

template <typename T>
ViTModel<T> ViTModel<T>::clone() const {
  auto lin = [](const Linear<T>& l) { return Linear<T>{l.weight.clone(), l.bias.clone()}; };
  auto ln = [](const LayerNormParams<T>& n) { return LayerNormParams<T>{n.gamma.clone(), n.beta.clone()}; };
  ViTModel out;
  out.config_ = config_;
  out.patch_embed_ = lin(patch_embed_);
  out.pos_embed_ = pos_embed_.clone();
  out.mask_token_ = mask_token_.clone();
  for (const Block<T>& b : blocks_) {
    Block<T> c;
    c.ln1 = ln(b.ln1);
    c.attn = {lin(b.attn.query), lin(b.attn.key), lin(b.attn.value), lin(b.attn.proj), b.attn.heads};
    c.ln2 = ln(b.ln2);
    c.fc1 = lin(b.fc1);
    c.fc2 = lin(b.fc2);
    out.blocks_.push_back(std::move(c));
  }
  out.norm_ = ln(norm_);
  for (const auto& a : adaptors_) out.adaptors_.push_back(a.clone());
  if (classifier_) out.classifier_ = lin(*classifier_);
  if (decoder_) out.decoder_ = lin(*decoder_);
  return out;
}

template <typename T>
void ViTModel<T>::reset_classifier(std::size_t num_classes, const CounterRng& init) {
  if (num_classes == 0) throw Error(ErrorCode::HeadShapeMismatch, "classifier needs classes");
  config_.num_classes = num_classes;
  classifier_ = make_linear<T>(config_.embed_dim, num_classes, init, "head");
}

template <typename T>
void ViTModel<T>::reset_decoder(const CounterRng& init) {
  decoder_ = make_linear<T>(config_.embed_dim, config_.patch_dim(), init, "decoder");
}

template <typename T>
void ViTModel<T>::reset_adaptors() {
  for (auto& a : adaptors_) std::fill(a.mutable_data().begin(), a.mutable_data().end(), T(1));
}

template <typename T>
Linear<T>& ViTModel<T>::classifier() {
  if (!classifier_) throw Error(ErrorCode::MissingHead, "model has no classifier head");
  return *classifier_;
}

template <typename T>
Linear<T>& ViTModel<T>::decoder() {
  if (!decoder_) throw Error(ErrorCode::MissingHead, "model has no decoder head");
  return *decoder_;
}

template <typename T>
Tensor<T> ViTModel<T>::embed(const Tensor<T>& images, const std::vector<std::uint8_t>* visible,
                             bool mask_pixels) const {
  const std::size_t B = images.rank() == 4 ? images.dim(0) : 0;
  const std::size_t K = config_.tokens(), d = config_.embed_dim;
  Tensor<T> patches = patchify(images, config_);
  Tensor<T> keep;
  if (visible != nullptr) {
    if (visible->size() != B * K) {
      throw Error(ErrorCode::DimMismatch, "mask has " + std::to_string(visible->size()) +
                                              " entries for " + std::to_string(B * K) + " tokens");
    }
    std::vector<T> col(visible->begin(), visible->end());
    keep = Tensor<T>({B * K, 1}, std::move(col));
  }
  if (keep.defined() && mask_pixels) patches = mul(patches, keep);
  Tensor<T> x = patch_embed_(patches);
  if (keep.defined() && !mask_pixels) {
    std::vector<T> inv(B * K);
    for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = T(1) - keep[i];
    Tensor<T> drop({B * K, 1}, std::move(inv));
    x = add(mul(x, keep), mul(drop, mask_token_));
  }
  x = add(reshape(x, {B, K, d}), pos_embed_);
  return reshape(x, {B * K, d});
}

template <typename T>
ForwardResult<T> ViTModel<T>::forward(const Tensor<T>& images, ForwardMode mode,
                                      const std::vector<std::uint8_t>* visible, bool mask_pixels) const {
  if (mode == ForwardMode::classify && !classifier_) {
    throw Error(ErrorCode::MissingHead, "classify needs a classifier head");
  }
  if (mode == ForwardMode::reconstruct && !decoder_) {
    throw Error(ErrorCode::MissingHead, "reconstruct needs a decoder head");
  }
  ForwardResult<T> result;
  Tensor<T> x = embed(images, visible, mask_pixels);
  const std::size_t B = images.dim(0), K = config_.tokens(), d = config_.embed_dim;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const Block<T>& b = blocks_[l];
    const Tensor<T> h = b.ln1(x);
    AttentionOutput<T> a = config_.glad ? glad_msa_forward(h, b.attn, adaptors_[l], B)
                                        : msa_forward(h, b.attn, B);
    x = add(x, a.tokens);
    x = add(x, b.fc2(gelu(b.fc1(b.ln2(x)))));
    result.attention.layers.push_back(std::move(a.attention));
  }
  // A depth-0 model stays a purely linear map of the pixels.
  if (!blocks_.empty()) x = norm_(x);

  switch (mode) {
    case ForwardMode::classify:
      result.output = (*classifier_)(mean(reshape(x, {B, K, d}), 1));
      break;
    case ForwardMode::features:
      result.output = mean(reshape(x, {B, K, d}), 1);
      break;
    case ForwardMode::reconstruct:
      result.output = (*decoder_)(x);
      break;
  }
  return result;
}

template <typename T>
std::vector<ParamRef<T>> ViTModel<T>::parameters(unsigned groups) const {
  std::vector<ParamRef<T>> out;
  if (groups & kBackbone) {
    push_linear(out, "patch_embed", patch_embed_);
    out.push_back({"pos_embed", pos_embed_, false});
    out.push_back({"mask_token", mask_token_, false});
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
      const std::string p = "layer" + std::to_string(l);
      const Block<T>& b = blocks_[l];
      push_layernorm(out, p + ".ln1", b.ln1);
      push_linear(out, p + ".qkv.query", b.attn.query);
      push_linear(out, p + ".qkv.key", b.attn.key);
      push_linear(out, p + ".qkv.value", b.attn.value);
      push_linear(out, p + ".proj", b.attn.proj);
      push_layernorm(out, p + ".ln2", b.ln2);
      push_linear(out, p + ".mlp.fc1", b.fc1);
      push_linear(out, p + ".mlp.fc2", b.fc2);
    }
    if (!blocks_.empty()) push_layernorm(out, "norm", norm_);
  }
  if (groups & kAdaptor) {
    for (std::size_t l = 0; l < adaptors_.size(); ++l) {
      out.push_back({"adaptor." + std::to_string(l), adaptors_[l], false});
    }
  }
  if ((groups & kClassifier) && classifier_) push_linear(out, "head", *classifier_);
  if ((groups & kDecoder) && decoder_) push_linear(out, "decoder", *decoder_);
  return out;
}

template <typename T>
std::vector<NamedArray> ViTModel<T>::export_arrays(unsigned groups) const {
  std::vector<NamedArray> out;
  for (const auto& p : parameters(groups)) {
    NamedArray a{p.name, p.tensor.shape(), {}};
    a.values.assign(p.tensor.data().begin(), p.tensor.data().end());
    out.push_back(std::move(a));
  }
  return out;
}

template <typename T>
void ViTModel<T>::import_arrays(const std::vector<NamedArray>& arrays, unsigned groups) {
  std::map<std::string, const NamedArray*> by_name;
  for (const auto& a : arrays) by_name[a.name] = &a;
  for (auto& p : parameters(groups)) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw Error(ErrorCode::MissingEntry, "checkpoint lacks " + p.name);
    const NamedArray& a = *it->second;
    if (a.shape != p.tensor.shape()) {
      const bool head = p.name.rfind("head.", 0) == 0;
      throw Error(head ? ErrorCode::HeadShapeMismatch : ErrorCode::DimMismatch,
                  p.name + " has shape " + shape_str(a.shape) + ", model expects " +
                      shape_str(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(a.values[i]);
  }
}

#define GLAD_INSTANTIATE(T)                                                                       \
  template struct Linear<T>;                                                                      \
  template struct LayerNormParams<T>;                                                             \
  template struct LayerAttention<T>;                                                              \
  template class ViTModel<T>;                                                                     \
  template AttentionOutput<T> msa_forward(const Tensor<T>&, const AttentionWeights<T>&, std::size_t); \
  template AttentionOutput<T> glad_msa_forward(const Tensor<T>&, const AttentionWeights<T>&,      \
                                               const Tensor<T>&, std::size_t);                    \
  template Tensor<T> patchify(const Tensor<T>&, const ViTConfig&);

GLAD_INSTANTIATE(float)
GLAD_INSTANTIATE(double)

#undef GLAD_INSTANTIATE

}  // namespace glad
