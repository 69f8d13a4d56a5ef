#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcal/tensor.hpp"

namespace dcal {

namespace detail {

// Fourth-order central difference: truncation O(eps^4), so the comparison
// noise floor is set by function rounding (~|f| * ulp / eps), not by the
// stencil.
inline double five_point(double fp, double fm, double fp2, double fm2,
                         double eps) {
  return (8.0 * (fp - fm) - (fp2 - fm2)) / (12.0 * eps);
}

}  // namespace detail

// Central-difference verification of reverse-mode gradients.
//
// `f` rebuilds the loss graph from the current parameter values on every
// call. The check first evaluates f twice to detect nondeterminism, runs
// one backward sweep, then perturbs every parameter entry by +-eps and
// compares the autodiff gradient against (f(p+eps) - f(p-eps)) / (2 eps).
// Returns the maximum relative error over all entries.
template <typename T>
double finite_diff_check(const std::function<Tensor<T>()>& f,
                         std::vector<Tensor<T>> params, T eps) {
  if (!(eps >= T(1e-5) && eps <= T(1e-3)))
    throw std::invalid_argument("finite_diff_check: eps outside [1e-5, 1e-3]");

  Tensor<T> loss = f();
  if (loss.numel() != 1)
    throw std::invalid_argument("finite_diff_check: f must return a scalar");
  Tensor<T> loss2 = f();
  if (loss.data()[0] != loss2.data()[0])
    throw std::logic_error("finite_diff_check: f is not deterministic");

  backward(loss);
  std::vector<std::vector<T>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    if (p.has_grad())
      analytic.push_back(p.grad());
    else
      analytic.emplace_back(p.numel(), T(0));
  }

  double worst = 0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& vals = params[pi].data();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const T saved = vals[i];
      auto eval_at = [&](T x) {
        vals[i] = x;
        return static_cast<double>(f().value());
      };
      double fd = detail::five_point(
          eval_at(saved + eps), eval_at(saved - eps),
          eval_at(saved + 2 * eps), eval_at(saved - 2 * eps),
          static_cast<double>(eps));
      vals[i] = saved;
      double ad = static_cast<double>(analytic[pi][i]);
      double denom = std::max({std::abs(ad), std::abs(fd), 1e-5});
      worst = std::max(worst, std::abs(ad - fd) / denom);
    }
  }
  return worst;
}

// 32-bit variant with a 64-bit difference oracle: autodiff runs in the
// float engine, the central differences on a double instantiation of the
// same function over the same parameter values. This keeps the comparison
// meaningful for parameters whose true gradient sits below float rounding.
// `params64` must alias the values of `params32` entry for entry.
inline double finite_diff_check_vs64(
    const std::function<Tensor<float>()>& f32,
    std::vector<Tensor<float>> params32,
    const std::function<Tensor<double>()>& f64,
    std::vector<Tensor<double>> params64, double eps) {
  if (!(eps >= 1e-5 && eps <= 1e-3))
    throw std::invalid_argument("finite_diff_check_vs64: eps outside [1e-5, 1e-3]");
  if (params32.size() != params64.size())
    throw std::invalid_argument("finite_diff_check_vs64: parameter list mismatch");

  Tensor<float> loss = f32();
  if (loss.numel() != 1)
    throw std::invalid_argument("finite_diff_check_vs64: f must return a scalar");
  if (loss.data()[0] != f32().data()[0])
    throw std::logic_error("finite_diff_check_vs64: f is not deterministic");
  backward(loss);

  double worst = 0;
  for (std::size_t pi = 0; pi < params32.size(); ++pi) {
    if (params32[pi].numel() != params64[pi].numel())
      throw std::invalid_argument("finite_diff_check_vs64: shape mismatch at " +
                                  std::to_string(pi));
    const std::vector<float> grad =
        params32[pi].has_grad() ? params32[pi].grad()
                                : std::vector<float>(params32[pi].numel(), 0.0f);
    auto& vals = params64[pi].data();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      auto eval_at = [&](double x) {
        vals[i] = x;
        return f64().value();
      };
      double fd = detail::five_point(eval_at(saved + eps), eval_at(saved - eps),
                                     eval_at(saved + 2 * eps),
                                     eval_at(saved - 2 * eps), eps);
      vals[i] = saved;
      double ad = static_cast<double>(grad[i]);
      double denom = std::max({std::abs(ad), std::abs(fd), 1e-5});
      worst = std::max(worst, std::abs(ad - fd) / denom);
    }
  }
  return worst;
}

}  // namespace dcal
