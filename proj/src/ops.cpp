#include "glad/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace glad {
namespace {

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": " + detail);
}

// Maps flat output indices to flat operand indices under broadcasting.
class OperandMap {
 public:
  enum class Kind { Same, Scalar, Trailing, Leading, General };

  OperandMap(const Shape& operand, const Shape& out) {
    const std::size_t n = shape_numel(operand);
    const std::size_t total = shape_numel(out);
    if (operand == out) {
      kind_ = Kind::Same;
      return;
    }
    if (n == 1) {
      kind_ = Kind::Scalar;
      return;
    }
    // Right-align the operand against the output.
    Shape padded(out.size() - operand.size(), 1);
    padded.insert(padded.end(), operand.begin(), operand.end());
    std::size_t first = 0;
    while (first < padded.size() && padded[first] == 1) ++first;
    bool trailing = true;
    for (std::size_t k = first; k < padded.size(); ++k) trailing &= padded[k] == out[k];
    if (trailing) {
      kind_ = Kind::Trailing;
      n_ = n;
      return;
    }
    std::size_t last = padded.size();
    while (last > 0 && padded[last - 1] == 1) --last;
    bool leading = true;
    for (std::size_t k = 0; k < last; ++k) leading &= padded[k] == out[k];
    if (leading) {
      kind_ = Kind::Leading;
      n_ = total / n;
      return;
    }
    kind_ = Kind::General;
    index_.resize(total);
    std::vector<std::size_t> stride(padded.size(), 0);
    std::size_t acc = 1;
    for (std::size_t k = padded.size(); k-- > 0;) {
      stride[k] = padded[k] == 1 ? 0 : acc;
      acc *= padded[k];
    }
    std::vector<std::size_t> counter(out.size(), 0);
    std::size_t offset = 0;
    for (std::size_t i = 0; i < total; ++i) {
      index_[i] = offset;
      for (std::size_t k = out.size(); k-- > 0;) {
        ++counter[k];
        offset += stride[k];
        if (counter[k] < out[k]) break;
        offset -= stride[k] * counter[k];
        counter[k] = 0;
      }
    }
  }

  std::size_t operator()(std::size_t i) const {
    switch (kind_) {
      case Kind::Same: return i;
      case Kind::Scalar: return 0;
      case Kind::Trailing: return i % n_;
      case Kind::Leading: return i / n_;
      case Kind::General: return index_[i];
    }
    return 0;
  }

 private:
  Kind kind_ = Kind::Same;
  std::size_t n_ = 1;
  std::vector<std::size_t> index_;
};

Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t da = k < rank - a.size() ? 1 : a[k - (rank - a.size())];
    const std::size_t db = k < rank - b.size() ? 1 : b[k - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      shape_error(op, "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[k] = std::max(da, db);
  }
  return out;
}

// Split of a shape around `axis` into outer * len * inner.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const char* op, const Shape& s, std::size_t axis) {
  if (axis >= s.size()) shape_error(op, "axis out of range for " + shape_str(s));
  AxisSplit r;
  for (std::size_t k = 0; k < axis; ++k) r.outer *= s[k];
  r.len = s[axis];
  for (std::size_t k = axis + 1; k < s.size(); ++k) r.inner *= s[k];
  return r;
}

enum class BinaryKind { Add, Sub, Mul, Div };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, BinaryKind kind, const char* name) {
  Shape out_shape = broadcast_shape(name, a.shape(), b.shape());
  const std::size_t n = shape_numel(out_shape);
  auto ma = std::make_shared<OperandMap>(a.shape(), out_shape);
  auto mb = std::make_shared<OperandMap>(b.shape(), out_shape);
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<T> out(n);
  switch (kind) {
    case BinaryKind::Add:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[(*ma)(i)] + bv[(*mb)(i)];
      break;
    case BinaryKind::Sub:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[(*ma)(i)] - bv[(*mb)(i)];
      break;
    case BinaryKind::Mul:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[(*ma)(i)] * bv[(*mb)(i)];
      break;
    case BinaryKind::Div:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[(*ma)(i)] / bv[(*mb)(i)];
      break;
  }
  Tensor<T> result(std::move(out_shape), std::move(out));
  if (Tape<T>* tape = tracking_tape<T>({&a, &b})) {
    tape->record(result, [tape, a, b, result, ma, mb, kind, n] {
      const auto g = result.grad();
      const auto av = a.data();
      const auto bv = b.data();
      if (T* ga = grad_target(*tape, a)) {
        switch (kind) {
          case BinaryKind::Add:
          case BinaryKind::Sub:
            for (std::size_t i = 0; i < n; ++i) ga[(*ma)(i)] += g[i];
            break;
          case BinaryKind::Mul:
            for (std::size_t i = 0; i < n; ++i) ga[(*ma)(i)] += g[i] * bv[(*mb)(i)];
            break;
          case BinaryKind::Div:
            for (std::size_t i = 0; i < n; ++i) ga[(*ma)(i)] += g[i] / bv[(*mb)(i)];
            break;
        }
      }
      if (T* gb = grad_target(*tape, b)) {
        switch (kind) {
          case BinaryKind::Add:
            for (std::size_t i = 0; i < n; ++i) gb[(*mb)(i)] += g[i];
            break;
          case BinaryKind::Sub:
            for (std::size_t i = 0; i < n; ++i) gb[(*mb)(i)] -= g[i];
            break;
          case BinaryKind::Mul:
            for (std::size_t i = 0; i < n; ++i) gb[(*mb)(i)] += g[i] * av[(*ma)(i)];
            break;
          case BinaryKind::Div:
            for (std::size_t i = 0; i < n; ++i) {
              const T y = bv[(*mb)(i)];
              gb[(*mb)(i)] -= g[i] * av[(*ma)(i)] / (y * y);
            }
            break;
        }
      }
    });
  }
  return result;
}

// Elementwise unary op: value and derivative (in terms of input x and output y).
template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& a, F f, D dfdx) {
  const auto av = a.data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  Tensor<T> result(a.shape(), std::move(out));
  if (Tape<T>* tape = tracking_tape<T>({&a})) {
    tape->record(result, [tape, a, result, dfdx] {
      T* ga = grad_target(*tape, a);
      if (ga == nullptr) return;
      const auto g = result.grad();
      const auto x = a.data();
      const auto y = result.data();
      for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g[i] * dfdx(x[i], y[i]);
    });
  }
  return result;
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  std::size_t batch = 1, m = 0, k = 0, n = 0;
  Shape out_shape;
  if (a.rank() == 2 && b.rank() == 2) {
    m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) shape_error("matmul", shape_str(a.shape()) + " x " + shape_str(b.shape()));
    out_shape = {m, n};
  } else if (a.rank() == 3 && b.rank() == 3) {
    batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    if (b.dim(0) != batch || b.dim(1) != k) {
      shape_error("matmul", shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    out_shape = {batch, m, n};
  } else {
    shape_error("matmul", "unsupported ranks " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  using Map = Eigen::Map<RowMat<T>>;
  using CMap = Eigen::Map<const RowMat<T>>;
  std::vector<T> out(batch * m * n, T(0));
  for (std::size_t p = 0; p < batch; ++p) {
    CMap am(a.data().data() + p * m * k, m, k);
    CMap bm(b.data().data() + p * k * n, k, n);
    Map cm(out.data() + p * m * n, m, n);
    cm.noalias() = am * bm;
  }
  Tensor<T> result(std::move(out_shape), std::move(out));
  if (Tape<T>* tape = tracking_tape<T>({&a, &b})) {
    tape->record(result, [tape, a, b, result, batch, m, k, n] {
      T* ga = grad_target(*tape, a);
      T* gb = grad_target(*tape, b);
      for (std::size_t p = 0; p < batch; ++p) {
        CMap gc(result.grad().data() + p * m * n, m, n);
        if (ga != nullptr) {
          CMap bm(b.data().data() + p * k * n, k, n);
          Map gam(ga + p * m * k, m, k);
          gam.noalias() += gc * bm.transpose();
        }
        if (gb != nullptr) {
          CMap am(a.data().data() + p * m * k, m, k);
          Map gbm(gb + p * k * n, k, n);
          gbm.noalias() += am.transpose() * gc;
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryKind::Add, "add");
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryKind::Sub, "sub");
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryKind::Mul, "mul");
}
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryKind::Div, "div");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary(a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    shape_error("reshape", shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  Tensor<T> result(std::move(shape), std::vector<T>(a.data().begin(), a.data().end()));
  if (Tape<T>* tape = tracking_tape<T>({&a})) {
    tape->record(result, [tape, a, result] {
      T* ga = grad_target(*tape, a);
      if (ga == nullptr) return;
      const auto g = result.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return result;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& axes) {
  const Shape& in = a.shape();
  const std::size_t rank = in.size();
  if (axes.size() != rank) shape_error("permute", "axes do not match rank of " + shape_str(in));
  std::vector<bool> seen(rank, false);
  for (auto ax : axes) {
    if (ax >= rank || seen[ax]) shape_error("permute", "axes are not a permutation");
    seen[ax] = true;
  }
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t k = rank; k-- > 1;) in_stride[k - 1] = in_stride[k] * in[k];
  Shape out_shape(rank);
  std::vector<std::size_t> stride(rank);
  for (std::size_t k = 0; k < rank; ++k) {
    out_shape[k] = in[axes[k]];
    stride[k] = in_stride[axes[k]];
  }
  const std::size_t n = a.numel();
  auto source = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < n; ++i) {
    (*source)[i] = offset;
    for (std::size_t k = rank; k-- > 0;) {
      ++counter[k];
      offset += stride[k];
      if (counter[k] < out_shape[k]) break;
      offset -= stride[k] * counter[k];
      counter[k] = 0;
    }
  }
  const auto av = a.data();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = av[(*source)[i]];
  Tensor<T> result(std::move(out_shape), std::move(out));
  if (Tape<T>* tape = tracking_tape<T>({&a})) {
    tape->record(result, [tape, a, result, source] {
      T* ga = grad_target(*tape, a);
      if (ga == nullptr) return;
      const auto g = result.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[(*source)[i]] += g[i];
    });
  }
  return result;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() < 2) shape_error("transpose", "rank < 2");
  std::vector<std::size_t> axes(a.rank());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  std::swap(axes[a.rank() - 1], axes[a.rank() - 2]);
  return permute(a, axes);
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a, std::span<const std::size_t> rows) {
  if (a.rank() < 1) shape_error("gather_rows", "scalar input");
  const std::size_t width = a.numel() / a.dim(0);
  auto idx = std::make_shared<std::vector<std::size_t>>(rows.begin(), rows.end());
  std::vector<T> out;
  out.reserve(idx->size() * width);
  for (auto r : *idx) {
    if (r >= a.dim(0)) shape_error("gather_rows", "row index out of range");
    auto row = a.data().subspan(r * width, width);
    out.insert(out.end(), row.begin(), row.end());
  }
  Shape shape = a.shape();
  shape[0] = idx->size();
  Tensor<T> result(std::move(shape), std::move(out));
  if (Tape<T>* tape = tracking_tape<T>({&a})) {
    tape->record(result, [tape, a, result, idx, width] {
      T* ga = grad_target(*tape, a);
      if (ga == nullptr) return;
      const auto g = result.grad();
      for (std::size_t i = 0; i < idx->size(); ++i) {
        for (std::size_t j = 0; j < width; ++j) ga[(*idx)[i] * width + j] += g[i * width + j];
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) shape_error("concat", "no inputs");
  const Shape& first = parts.front().shape();
  const AxisSplit base = split_axis("concat", first, axis);
  std::size_t total_len = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.size()) shape_error("concat", "rank mismatch");
    for (std::size_t k = 0; k < first.size(); ++k) {
      if (k != axis && p.dim(k) != first[k]) shape_error("concat", "extent mismatch off the axis");
    }
    total_len += p.dim(axis);
  }
  Shape out_shape = first;
  out_shape[axis] = total_len;
  std::vector<T> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t block = p.dim(axis) * base.inner;
    for (std::size_t o = 0; o < base.outer; ++o) {
      std::copy_n(p.data().begin() + o * block, block,
                  out.begin() + o * total_len * base.inner + offset);
    }
    offset += block;
  }
  Tensor<T> result(std::move(out_shape), std::move(out));
  Tape<T>* tape = Tape<T>::active();
  const bool tracked =
      tape != nullptr && std::any_of(parts.begin(), parts.end(),
                                     [tape](const Tensor<T>& p) { return tape->tracks(p); });
  if (tracked) {
    tape->record(result, [tape, parts, result, base, total_len, axis] {
      const auto g = result.grad();
      std::size_t offset = 0;
      for (const auto& p : parts) {
        const std::size_t block = p.dim(axis) * base.inner;
        if (T* gp = grad_target(*tape, p)) {
          for (std::size_t o = 0; o < base.outer; ++o) {
            for (std::size_t j = 0; j < block; ++j) {
              gp[o * block + j] += g[o * total_len * base.inner + offset + j];
            }
          }
        }
        offset += block;
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a, std::size_t axis) {
  const AxisSplit s = split_axis("sum", a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<T> out(s.outer * s.inner, T(0));
  const auto av = a.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t l = 0; l < s.len; ++l) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        out[o * s.inner + i] += av[(o * s.len + l) * s.inner + i];
      }
    }
  }
  Tensor<T> result(std::move(out_shape), std::move(out));
  if (Tape<T>* tape = tracking_tape<T>({&a})) {
    tape->record(result, [tape, a, result, s] {
      T* ga = grad_target(*tape, a);
      if (ga == nullptr) return;
      const auto g = result.grad();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t l = 0; l < s.len; ++l) {
          for (std::size_t i = 0; i < s.inner; ++i) {
            ga[(o * s.len + l) * s.inner + i] += g[o * s.inner + i];
          }
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a, std::size_t axis) {
  const std::size_t len = split_axis("mean", a.shape(), axis).len;
  return scale(sum(a, axis), T(1) / static_cast<T>(len));
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  T total = 0;
  for (T v : a.data()) total += v;
  Tensor<T> result = Tensor<T>::scalar(total);
  if (Tape<T>* tape = tracking_tape<T>({&a})) {
    tape->record(result, [tape, a, result] {
      T* ga = grad_target(*tape, a);
      if (ga == nullptr) return;
      const T g = result.grad()[0];
      for (std::size_t i = 0; i < a.numel(); ++i) ga[i] += g;
    });
  }
  return result;
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
  return scale(sum_all(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, std::size_t axis) {
  const AxisSplit s = split_axis("softmax", a.shape(), axis);
  const auto av = a.data();
  std::vector<T> out(av.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      T peak = av[base];
      for (std::size_t l = 1; l < s.len; ++l) peak = std::max(peak, av[base + l * s.inner]);
      T z = 0;
      for (std::size_t l = 0; l < s.len; ++l) {
        const T e = std::exp(av[base + l * s.inner] - peak);
        out[base + l * s.inner] = e;
        z += e;
      }
      for (std::size_t l = 0; l < s.len; ++l) out[base + l * s.inner] /= z;
    }
  }
  Tensor<T> result(a.shape(), std::move(out));
  if (Tape<T>* tape = tracking_tape<T>({&a})) {
    tape->record(result, [tape, a, result, s] {
      T* ga = grad_target(*tape, a);
      if (ga == nullptr) return;
      const auto g = result.grad();
      const auto y = result.data();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t base = o * s.len * s.inner + i;
          T dot = 0;
          for (std::size_t l = 0; l < s.len; ++l) dot += g[base + l * s.inner] * y[base + l * s.inner];
          for (std::size_t l = 0; l < s.len; ++l) {
            const std::size_t j = base + l * s.inner;
            ga[j] += y[j] * (g[j] - dot);
          }
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  if (x.rank() < 1) shape_error("layernorm", "scalar input");
  const std::size_t width = x.shape().back();
  if (gamma.numel() != width || beta.numel() != width) {
    shape_error("layernorm", "scale/shift must have " + std::to_string(width) + " entries");
  }
  const std::size_t rows = x.numel() / width;
  const auto xv = x.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  std::vector<T> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * width;
    T mu = 0;
    for (std::size_t j = 0; j < width; ++j) mu += row[j];
    mu /= static_cast<T>(width);
    T var = 0;
    for (std::size_t j = 0; j < width; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(width);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < width; ++j) {
      const T h = (row[j] - mu) * is;
      (*xhat)[r * width + j] = h;
      out[r * width + j] = h * gv[j] + bv[j];
    }
  }
  Tensor<T> result(x.shape(), std::move(out));
  if (Tape<T>* tape = tracking_tape<T>({&x, &gamma, &beta})) {
    tape->record(result, [tape, x, gamma, beta, result, xhat, inv_std, rows, width] {
      const auto g = result.grad();
      const auto gv = gamma.data();
      T* gx = grad_target(*tape, x);
      T* gg = grad_target(*tape, gamma);
      T* gb = grad_target(*tape, beta);
      std::vector<T> dh(width);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* h = xhat->data() + r * width;
        const T* gr = g.data() + r * width;
        if (gg != nullptr) {
          for (std::size_t j = 0; j < width; ++j) gg[j] += gr[j] * h[j];
        }
        if (gb != nullptr) {
          for (std::size_t j = 0; j < width; ++j) gb[j] += gr[j];
        }
        if (gx != nullptr) {
          T mean_dh = 0, mean_dh_h = 0;
          for (std::size_t j = 0; j < width; ++j) {
            dh[j] = gr[j] * gv[j];
            mean_dh += dh[j];
            mean_dh_h += dh[j] * h[j];
          }
          mean_dh /= static_cast<T>(width);
          mean_dh_h /= static_cast<T>(width);
          const T is = (*inv_std)[r];
          for (std::size_t j = 0; j < width; ++j) {
            gx[r * width + j] += is * (dh[j] - mean_dh - h[j] * mean_dh_h);
          }
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T k = T(0.044715);
  return unary(
      a,
      [](T x) { return T(0.5) * x * (T(1) + std::tanh(c * (x + k * x * x * x))); },
      [](T x, T) {
        const T t = std::tanh(c * (x + k * x * x * x));
        return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * c * (T(1) + T(3) * k * x * x);
      });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  for (T v : a.data()) {
    if (v < T(0)) throw Error(ErrorCode::NumericDomain, "log of a negative value");
  }
  return unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& a) {
  for (T v : a.data()) {
    if (v < T(0)) throw Error(ErrorCode::NumericDomain, "sqrt of a negative value");
  }
  return unary(a, [](T x) { return std::sqrt(x); }, [](T, T y) { return y > T(0) ? T(0.5) / y : T(0); });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
  return unary(
      a, [](T x) { return std::abs(x); },
      [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  return unary(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> labels) {
  if (logits.rank() != 2) shape_error("cross_entropy", "logits must be [N,C]");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n) shape_error("cross_entropy", "one label per row required");
  for (auto y : labels) {
    if (y >= c) throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(y));
  }
  const auto lv = logits.data();
  auto probs = std::make_shared<std::vector<T>>(n * c);
  T total = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const T* row = lv.data() + r * c;
    const T peak = *std::max_element(row, row + c);
    T z = 0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - peak);
    const T lse = peak + std::log(z);
    for (std::size_t j = 0; j < c; ++j) (*probs)[r * c + j] = std::exp(row[j] - lse);
    total += lse - row[labels[r]];
  }
  Tensor<T> result = Tensor<T>::scalar(total / static_cast<T>(n));
  if (Tape<T>* tape = tracking_tape<T>({&logits})) {
    auto ys = std::make_shared<std::vector<std::size_t>>(labels.begin(), labels.end());
    tape->record(result, [tape, logits, result, probs, ys, n, c] {
      T* gl = grad_target(*tape, logits);
      if (gl == nullptr) return;
      const T g = result.grad()[0] / static_cast<T>(n);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < c; ++j) {
          const T onehot = j == (*ys)[r] ? T(1) : T(0);
          gl[r * c + j] += g * ((*probs)[r * c + j] - onehot);
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> l1_distance(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    shape_error("l1_distance", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const auto av = a.data();
  const auto bv = b.data();
  T total = 0;
  for (std::size_t i = 0; i < av.size(); ++i) total += std::abs(av[i] - bv[i]);
  Tensor<T> result = Tensor<T>::scalar(total);
  if (Tape<T>* tape = tracking_tape<T>({&a, &b})) {
    tape->record(result, [tape, a, b, result] {
      const T g = result.grad()[0];
      const auto av = a.data();
      const auto bv = b.data();
      T* ga = grad_target(*tape, a);
      T* gb = grad_target(*tape, b);
      for (std::size_t i = 0; i < av.size(); ++i) {
        const T d = av[i] - bv[i];
        const T sign = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
        if (ga != nullptr) ga[i] += g * sign;
        if (gb != nullptr) gb[i] -= g * sign;
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> row_entropy(const Tensor<T>& p) {
  if (p.rank() < 1) shape_error("row_entropy", "scalar input");
  const std::size_t width = p.shape().back();
  const std::size_t rows = p.numel() / width;
  const auto pv = p.data();
  std::vector<T> out(rows, T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    T h = 0;
    for (std::size_t j = 0; j < width; ++j) {
      const T v = pv[r * width + j];
      if (v > T(0)) h -= v * std::log(v);
    }
    out[r] = h;
  }
  Shape shape(p.shape().begin(), p.shape().end() - 1);
  Tensor<T> result(std::move(shape), std::move(out));
  if (Tape<T>* tape = tracking_tape<T>({&p})) {
    tape->record(result, [tape, p, result, rows, width] {
      T* gp = grad_target(*tape, p);
      if (gp == nullptr) return;
      const auto g = result.grad();
      const auto pv = p.data();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < width; ++j) {
          const T v = pv[r * width + j];
          if (v > T(0)) gp[r * width + j] -= g[r] * (std::log(v) + T(1));
        }
      }
    });
  }
  return result;
}

#define GLAD_INSTANTIATE(T)                                                              \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> scale(const Tensor<T>&, T);                                         \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                   \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);         \
  template Tensor<T> transpose(const Tensor<T>&);                                        \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::size_t>);        \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                 \
  template Tensor<T> sum(const Tensor<T>&, std::size_t);                                 \
  template Tensor<T> mean(const Tensor<T>&, std::size_t);                                \
  template Tensor<T> sum_all(const Tensor<T>&);                                          \
  template Tensor<T> mean_all(const Tensor<T>&);                                         \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                             \
  template Tensor<T> layernorm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T); \
  template Tensor<T> gelu(const Tensor<T>&);                                             \
  template Tensor<T> log(const Tensor<T>&);                                              \
  template Tensor<T> sqrt(const Tensor<T>&);                                             \
  template Tensor<T> abs(const Tensor<T>&);                                              \
  template Tensor<T> square(const Tensor<T>&);                                           \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const std::size_t>);      \
  template Tensor<T> l1_distance(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> row_entropy(const Tensor<T>&);

GLAD_INSTANTIATE(float)
GLAD_INSTANTIATE(double)

#undef GLAD_INSTANTIATE

}  // namespace glad
