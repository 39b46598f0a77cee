#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "glad/error.hpp"

namespace glad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct TensorStorage {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first needed
  bool requires_grad = false;
  std::uint64_t tape_id = 0;  // id of the tape that produced this value, 0 for leaves
};

// Dense row-major array with an optional gradient buffer.
//
// Tensor is a handle: copies share the same storage, which is what lets a
// parameter held by a model receive gradients from the tape. Use clone() or
// detach() for an independent copy.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data);
  explicit Tensor(Shape shape, T fill = T(0));

  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }
  static Tensor parameter(Shape shape, std::vector<T> data);

  bool defined() const noexcept { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return s_->shape.at(axis); }
  std::size_t numel() const { return s_->data.size(); }

  std::span<const T> data() const { return s_->data; }
  std::span<T> mutable_data() { return s_->data; }
  T item() const;
  T operator[](std::size_t i) const { return s_->data[i]; }

  bool has_grad() const { return !s_->grad.empty(); }
  std::span<const T> grad() const { return s_->grad; }
  std::span<T> mutable_grad() { return s_->grad; }
  // Allocates the gradient buffer if needed and fills it with zeros.
  void zero_grad();

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool on) { s_->requires_grad = on; }
  std::uint64_t tape_id() const { return s_->tape_id; }

  // Independent copy of the values; never connected to any tape.
  Tensor detach() const;
  // Independent copy that keeps the requires_grad flag (for parameters).
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }
  const std::shared_ptr<TensorStorage<T>>& storage() const { return s_; }

 private:
  template <typename U>
  friend class Tape;

  std::shared_ptr<TensorStorage<T>> s_;
};

// Reverse-mode tape.
//
// Constructing a Tape makes it the active tape for the calling thread until
// it is destroyed (tapes nest). Ops record a node only when an active tape
// exists and at least one input is a grad-requiring leaf or a value produced
// on that tape. Destroying the tape frees the graph.
template <typename T>
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::uint64_t id() const noexcept { return id_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Fills grads of every reachable grad-requiring leaf with d(loss)/d(leaf),
  // accumulating into whatever the leaf grad already holds.
  void backward(const Tensor<T>& loss);

  static Tape* active() noexcept;

  // True when `t` should receive gradient from a node on this tape.
  bool tracks(const Tensor<T>& t) const noexcept {
    return t.requires_grad() || (t.tape_id() == id_ && id_ != 0);
  }

  // Registers `out` as produced by a node whose backward closure reads
  // out.grad and accumulates into input grads obtained from grad_target().
  void record(Tensor<T>& out, std::function<void()> backward_fn);

 private:
  struct Node {
    std::shared_ptr<TensorStorage<T>> out;
    std::function<void()> backward;
  };

  std::uint64_t id_;
  Tape* previous_;
  std::vector<Node> nodes_;
};

// Backpropagates from `loss` on the active tape.
template <typename T>
void backward(const Tensor<T>& loss);

// Returns the active tape if any input should be tracked, else nullptr.
template <typename T>
Tape<T>* tracking_tape(std::initializer_list<const Tensor<T>*> inputs);

// Grad buffer of an input inside a backward closure; nullptr when the input
// does not receive gradient.
template <typename T>
T* grad_target(const Tape<T>& tape, const Tensor<T>& input);

}  // namespace glad
