#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "glad/tensor.hpp"

namespace glad {

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T> tensor;
  bool decay = true;  // decoupled weight decay applies
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

template <typename T>
class OptimizerState {
 public:
  OptimizerState() = default;
  explicit OptimizerState(AdamWConfig config) : config_(config) {}

  const AdamWConfig& config() const { return config_; }
  std::size_t step() const { return step_; }

  // Moment buffers, one per parameter in the order passed to adamw_step.
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }

 private:
  template <typename U>
  friend void adamw_step(std::span<ParamRef<U>> params, OptimizerState<U>& state, double lr);

  AdamWConfig config_;
  std::size_t step_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

// One AdamW update with bias-corrected moments and decoupled weight decay:
//   p <- p - lr * wd * p - lr * m_hat / (sqrt(v_hat) + eps)
// Throws MissingGrad if any parameter lacks a gradient buffer.
template <typename T>
void adamw_step(std::span<ParamRef<T>> params, OptimizerState<T>& state, double lr);

template <typename T>
void zero_grads(std::span<ParamRef<T>> params) {
  for (auto& p : params) p.tensor.zero_grad();
}

struct LrSchedule {
  double base_lr = 0.0;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 0;
  double min_lr = 0.0;
};

// Linear ramp from 0 to base_lr over the warmup, then cosine decay to min_lr
// at total_steps. Throws StepOutOfRange outside [0, total_steps].
double lr_at(const LrSchedule& schedule, std::size_t step);

// Linear batch-size scaling against a reference batch of 512.
double scaled_lr(double eta, double multiplier, std::size_t batch_size);

}  // namespace glad
