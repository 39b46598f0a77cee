#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "glad/tensor.hpp"

namespace glad::testing {

struct GradCheckResult {
  bool ok = true;
  std::size_t checked = 0;
  double worst_rel = 0.0;
  double worst_abs = 0.0;
  std::string first_failure;
  // Over failing elements only.
  std::size_t failures = 0;
  double failing_max_grad = 0.0;
  double failing_max_err = 0.0;
  // Failing elements re-differenced at the recheck steps: worst over elements
  // of the best agreement over steps.
  double recheck_worst_rel = 0.0;
};

// Compares tape gradients of `loss_fn` against central differences over every
// element of `params`. Elements whose gradients are both below `small` in
// magnitude are compared absolutely against `abs_tol`. Failing elements are
// re-differenced at each of `recheck_steps` for diagnosis only.
inline GradCheckResult check_gradients(std::vector<Tensor<double>> params,
                                       const std::function<Tensor<double>()>& loss_fn,
                                       double h = 1e-5, double rel_tol = 1e-5,
                                       double abs_tol = 1e-7, double small = 1e-6,
                                       const std::vector<double>& recheck_steps = {}) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    Tape<double> tape;
    tape.backward(loss_fn());
  }
  GradCheckResult r;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    for (std::size_t i = 0; i < p.numel(); ++i) {
      auto central = [&](double step) {
        const double saved = p[i];
        p.mutable_data()[i] = saved + step;
        const double up = loss_fn().item();
        p.mutable_data()[i] = saved - step;
        const double down = loss_fn().item();
        p.mutable_data()[i] = saved;
        return (up - down) / (2.0 * step);
      };
      const double numeric = central(h);
      const double a = analytic[i];
      ++r.checked;
      bool pass;
      if (std::abs(a) < small && std::abs(numeric) < small) {
        const double err = std::abs(a - numeric);
        r.worst_abs = std::max(r.worst_abs, err);
        pass = err < abs_tol;
      } else {
        const double err = std::abs(a - numeric) / std::max(std::abs(a), std::abs(numeric));
        r.worst_rel = std::max(r.worst_rel, err);
        pass = err < rel_tol;
      }
      if (!pass) {
        ++r.failures;
        r.failing_max_grad = std::max(r.failing_max_grad, std::max(std::abs(a), std::abs(numeric)));
        r.failing_max_err = std::max(r.failing_max_err, std::abs(a - numeric));
        if (!recheck_steps.empty()) {
          double best = INFINITY;
          for (double step : recheck_steps) {
            const double fd = central(step);
            best = std::min(best, std::abs(a - fd) / std::max(std::abs(a), std::abs(fd)));
          }
          r.recheck_worst_rel = std::max(r.recheck_worst_rel, best);
        }
      }
      if (!pass && r.ok) {
        r.ok = false;
        char buf[160];
        std::snprintf(buf, sizeof buf, "param %zu elem %zu: tape %.9e vs fd %.9e", k, i, a, numeric);
        r.first_failure = buf;
      }
    }
  }
  return r;
}

}  // namespace glad::testing
