#pragma once

// Central finite-difference gradient verification. This code never touches
// the tape: it only re-evaluates a forward closure at perturbed parameter
// values, which keeps it an independent check on the recorded backward
// rules. Used by the self-check command and by the test suites.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fieldex/tensor.hpp"

namespace fieldex {

// |a - n| relative to the larger magnitude, floored at 1 so gradients near
// zero are compared absolutely.
template <typename T>
double gradcheck_rel_error(T analytic, T numeric) {
  const double a = static_cast<double>(analytic);
  const double n = static_cast<double>(numeric);
  const double denom = std::max({1.0, std::abs(a), std::abs(n)});
  return std::abs(a - n) / denom;
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  size_t checked = 0;
};

// Central difference of `loss_fn` with respect to one flat element.
template <typename T, typename LossFn>
T central_difference(LossFn&& loss_fn, const Tensor<T>& param, size_t flat_index, T step) {
  T& slot = param.values()[flat_index];
  const T saved = slot;
  slot = saved + step;
  const T up = loss_fn();
  slot = saved - step;
  const T down = loss_fn();
  slot = saved;
  return (up - down) / (2 * step);
}

// Compare analytic gradients already accumulated in `params` against central
// finite differences of `loss_fn` over every element of every parameter.
// `loss_fn` must be a pure function of the parameter values.
template <typename T, typename LossFn>
GradCheckReport check_gradients(LossFn&& loss_fn, const ParameterStore<T>& params, T step) {
  GradCheckReport report;
  for (const auto& [name, tensor] : params.items()) {
    const auto& grad = tensor.grad();
    for (size_t i = 0; i < grad.size(); ++i) {
      const T numeric = central_difference(loss_fn, tensor, i, step);
      const double err = gradcheck_rel_error(grad[i], numeric);
      ++report.checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = name;
        report.worst_index = i;
        report.worst_analytic = static_cast<double>(grad[i]);
        report.worst_numeric = static_cast<double>(numeric);
      }
    }
  }
  return report;
}

}  // namespace fieldex
