#pragma once

#include <cmath>
#include <functional>

#include "rpk/tensor.hpp"

namespace rpk {

// Central finite differences over every element of `param`, for a scalar
// loss re-evaluated by `loss_fn`. The caller owns the mutable parameter
// storage; this helper restores it.
template <class S>
Tensor<S> central_difference_grad(Tensor<S>& param, const std::function<double()>& loss_fn,
                                  double h = 1e-5) {
  Tensor<S> grad(param.shape);
  for (std::size_t i = 0; i < param.size(); ++i) {
    S original = param.data[i];
    param.data[i] = static_cast<S>(static_cast<double>(original) + h);
    double f_plus = loss_fn();
    param.data[i] = static_cast<S>(static_cast<double>(original) - h);
    double f_minus = loss_fn();
    param.data[i] = original;
    grad.data[i] = static_cast<S>((f_plus - f_minus) / (2.0 * h));
  }
  return grad;
}

// Scale-aware relative error between an analytic and a numeric gradient.
template <class S>
double max_relative_error(const Tensor<S>& analytic, const Tensor<S>& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    double a = static_cast<double>(analytic.data[i]);
    double n = static_cast<double>(numeric.data[i]);
    double scale = std::max({1.0, std::abs(a), std::abs(n)});
    worst = std::max(worst, std::abs(a - n) / scale);
  }
  return worst;
}

}  // namespace rpk
