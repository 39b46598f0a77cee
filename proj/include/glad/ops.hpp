#pragma once

#include <span>
#include <vector>

#include "glad/tensor.hpp"

// Differentiable tensor operations. Every op checks its shape contract and
// throws Error(ShapeMismatch) otherwise; a tape node is recorded whenever an
// input is tracked by the active tape.
namespace glad {

// [M,K]x[K,N] -> [M,N], or batched [B,M,K]x[B,K,N] -> [B,M,N].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// Elementwise with numpy-style right-aligned broadcasting.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);

// Output axis k is input axis axes[k].
template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& axes);

// Swaps the last two axes.
template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

// Selects rows along axis 0.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a, std::span<const std::size_t> rows);

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);

// Reductions drop the reduced axis.
template <typename T>
Tensor<T> sum(const Tensor<T>& a, std::size_t axis);
template <typename T>
Tensor<T> mean(const Tensor<T>& a, std::size_t axis);
template <typename T>
Tensor<T> sum_all(const Tensor<T>& a);
template <typename T>
Tensor<T> mean_all(const Tensor<T>& a);

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, std::size_t axis);

// Normalizes over the last axis, then applies per-feature scale and shift.
template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                    T eps = T(1e-6));

// tanh approximation.
template <typename T>
Tensor<T> gelu(const Tensor<T>& a);

template <typename T>
Tensor<T> log(const Tensor<T>& a);
// Gradient at exactly 0 is taken as 0 rather than +inf, so a zero spread
// passed through sqrt cannot poison the backward pass.
template <typename T>
Tensor<T> sqrt(const Tensor<T>& a);
template <typename T>
Tensor<T> abs(const Tensor<T>& a);
template <typename T>
Tensor<T> square(const Tensor<T>& a);

// Mean over rows of -log softmax(logits[n])[labels[n]]; logits is [N,C].
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> labels);

// Sum of |a - b| over all elements (same shapes).
template <typename T>
Tensor<T> l1_distance(const Tensor<T>& a, const Tensor<T>& b);

// Shannon entropy (natural log) of each distribution along the last axis,
// with 0 log 0 = 0. Output drops the last axis.
template <typename T>
Tensor<T> row_entropy(const Tensor<T>& p);

}  // namespace glad
