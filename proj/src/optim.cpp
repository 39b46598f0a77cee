#include "glad/optim.hpp"

#include <cmath>
#include <numbers>

namespace glad {

template <typename T>
void adamw_step(std::span<ParamRef<T>> params, OptimizerState<T>& state, double lr) {
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) throw Error(ErrorCode::MissingGrad, p.name);
  }
  if (state.m_.empty()) {
    for (const auto& p : params) {
      state.m_.emplace_back(p.tensor.numel(), T(0));
      state.v_.emplace_back(p.tensor.numel(), T(0));
    }
  }
  if (state.m_.size() != params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "optimizer state tracks a different parameter list");
  }
  ++state.step_;
  const AdamWConfig& c = state.config_;
  const auto t = static_cast<double>(state.step_);
  const T b1 = static_cast<T>(c.beta1);
  const T b2 = static_cast<T>(c.beta2);
  const T bc1 = static_cast<T>(1.0 - std::pow(c.beta1, t));
  const T bc2 = static_cast<T>(1.0 - std::pow(c.beta2, t));
  const T step = static_cast<T>(lr);
  const T eps = static_cast<T>(c.eps);
  const T decay = static_cast<T>(lr * c.weight_decay);

  for (std::size_t k = 0; k < params.size(); ++k) {
    auto w = params[k].tensor.mutable_data();
    const auto g = params[k].tensor.grad();
    auto& m = state.m_[k];
    auto& v = state.v_[k];
    if (m.size() != w.size()) {
      throw Error(ErrorCode::ShapeMismatch, "moment buffer shape for " + params[k].name);
    }
    const bool wd = params[k].decay && c.weight_decay != 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      if (wd) w[i] -= decay * w[i];
      const T m_hat = m[i] / bc1;
      const T v_hat = v[i] / bc2;
      w[i] -= step * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

double lr_at(const LrSchedule& s, std::size_t step) {
  if (step > s.total_steps || s.warmup_steps > s.total_steps) {
    throw Error(ErrorCode::StepOutOfRange,
                "step " + std::to_string(step) + " of " + std::to_string(s.total_steps));
  }
  if (step < s.warmup_steps) {
    return s.base_lr * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  }
  const std::size_t span = s.total_steps - s.warmup_steps;
  if (span == 0) return s.base_lr;
  const double progress = static_cast<double>(step - s.warmup_steps) / static_cast<double>(span);
  return s.min_lr + 0.5 * (s.base_lr - s.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

double scaled_lr(double eta, double multiplier, std::size_t batch_size) {
  return eta * multiplier * static_cast<double>(batch_size) / 512.0;
}

template void adamw_step<float>(std::span<ParamRef<float>>, OptimizerState<float>&, double);
template void adamw_step<double>(std::span<ParamRef<double>>, OptimizerState<double>&, double);

}  // namespace glad
