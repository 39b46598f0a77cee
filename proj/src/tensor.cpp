#include "glad/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>

namespace glad {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NumericDomain: return "NumericDomain";
    case ErrorCode::NotScalar: return "NotScalar";
    case ErrorCode::DetachedLoss: return "DetachedLoss";
    case ErrorCode::MissingGrad: return "MissingGrad";
    case ErrorCode::StepOutOfRange: return "StepOutOfRange";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::MissingHead: return "MissingHead";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::PathMissing: return "PathMissing";
    case ErrorCode::SingleHead: return "SingleHead";
    case ErrorCode::ConfigConflict: return "ConfigConflict";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::DataMissing: return "DataMissing";
    case ErrorCode::HeadShapeMismatch: return "HeadShapeMismatch";
    case ErrorCode::MissingEntry: return "MissingEntry";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::IndivisibleClasses: return "IndivisibleClasses";
  }
  return "Unknown";
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : s_(std::make_shared<TensorStorage<T>>()) {
  if (shape_numel(shape) != data.size()) {
    throw Error(ErrorCode::ShapeMismatch, "shape " + shape_str(shape) + " does not hold " +
                                              std::to_string(data.size()) + " values");
  }
  s_->shape = std::move(shape);
  s_->data = std::move(data);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : s_(std::make_shared<TensorStorage<T>>()) {
  s_->data.assign(shape_numel(shape), fill);
  s_->shape = std::move(shape);
}

template <typename T>
Tensor<T> Tensor<T>::parameter(Shape shape, std::vector<T> data) {
  Tensor t(std::move(shape), std::move(data));
  t.set_requires_grad(true);
  return t;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw Error(ErrorCode::NotScalar, "item() on " + shape_str(shape()));
  return s_->data[0];
}

template <typename T>
void Tensor<T>::zero_grad() {
  s_->grad.assign(s_->data.size(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(s_->shape, s_->data);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor t(s_->shape, s_->data);
  t.set_requires_grad(s_->requires_grad);
  return t;
}

namespace {

std::atomic<std::uint64_t> next_tape_id{1};

template <typename T>
Tape<T>*& active_tape_slot() {
  thread_local Tape<T>* slot = nullptr;
  return slot;
}

}  // namespace

template <typename T>
Tape<T>::Tape() : id_(next_tape_id.fetch_add(1)), previous_(active_tape_slot<T>()) {
  active_tape_slot<T>() = this;
}

template <typename T>
Tape<T>::~Tape() {
  active_tape_slot<T>() = previous_;
}

template <typename T>
Tape<T>* Tape<T>::active() noexcept {
  return active_tape_slot<T>();
}

template <typename T>
void Tape<T>::record(Tensor<T>& out, std::function<void()> backward_fn) {
  out.s_->tape_id = id_;
  nodes_.push_back(Node{out.s_, std::move(backward_fn)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw Error(ErrorCode::NotScalar, "backward() needs a scalar loss");
  }
  if (loss.tape_id() != id_) {
    throw Error(ErrorCode::DetachedLoss, "loss was not produced on this tape");
  }
  std::size_t end = nodes_.size();
  while (end > 0 && nodes_[end - 1].out != loss.storage()) --end;
  if (end == 0) throw Error(ErrorCode::DetachedLoss, "loss node not found on tape");

  for (std::size_t i = 0; i < end; ++i) {
    auto& out = *nodes_[i].out;
    out.grad.assign(out.data.size(), T(0));
  }
  loss.storage()->grad[0] = T(1);
  for (std::size_t i = end; i-- > 0;) nodes_[i].backward();
}

template <typename T>
void backward(const Tensor<T>& loss) {
  Tape<T>* tape = Tape<T>::active();
  if (tape == nullptr) throw Error(ErrorCode::DetachedLoss, "no active tape");
  tape->backward(loss);
}

template <typename T>
Tape<T>* tracking_tape(std::initializer_list<const Tensor<T>*> inputs) {
  Tape<T>* tape = Tape<T>::active();
  if (tape == nullptr) return nullptr;
  for (const Tensor<T>* t : inputs) {
    if (t != nullptr && t->defined() && tape->tracks(*t)) return tape;
  }
  return nullptr;
}

template <typename T>
T* grad_target(const Tape<T>& tape, const Tensor<T>& input) {
  if (!tape.tracks(input)) return nullptr;
  auto& s = *input.storage();
  if (s.grad.size() != s.data.size()) s.grad.assign(s.data.size(), T(0));
  return s.grad.data();
}

#define GLAD_INSTANTIATE(T)                                                         \
  template class Tensor<T>;                                                         \
  template class Tape<T>;                                                           \
  template void backward<T>(const Tensor<T>&);                                      \
  template Tape<T>* tracking_tape<T>(std::initializer_list<const Tensor<T>*>);      \
  template T* grad_target<T>(const Tape<T>&, const Tensor<T>&);

GLAD_INSTANTIATE(float)
GLAD_INSTANTIATE(double)

#undef GLAD_INSTANTIATE

}  // namespace glad
