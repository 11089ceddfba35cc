#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "dggx/tensor.hpp"

namespace dggx {

using ScalarFunction = std::function<Tensor(const Tensor&)>;

/// Worst elementwise relative error between `gradient` and central
/// differences (f(x + eps e_i) - f(x - eps e_i)) / 2 eps, with denominator
/// max(|a|, |b|, 1e-8).
double max_relative_error(const ScalarFunction& f, const Tensor& x,
                          const std::vector<double>& gradient, double eps);

/// Compares the autodiff gradient of `f` at `x` against central differences.
double finite_diff_check(const ScalarFunction& f, const Tensor& x, double eps = 1e-5);

/// Autodiff gradient of `f` at `x` (x is copied into a fresh leaf).
std::vector<double> autodiff_gradient(const ScalarFunction& f, const Tensor& x);

/// f evaluated with one coordinate moved by `delta`.
using CoordinateProbe = std::function<double(double delta)>;

struct KinkSafeResult {
  double max_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t refined = 0;  // coordinates that needed a smaller step
};

/// Central differences for networks with ReLU / max-pool kinks. A step that
/// straddles a kink measures a secant rather than the derivative, so each
/// coordinate is tried with steps eps, eps/10, ..., eps/10^refinements and
/// scored by the first step that agrees with `analytic` within `tolerance`,
/// or by the best step when none does. Tiny gradients are limited by
/// rounding in f(x+h) - f(x-h) instead, so 10 eps and 100 eps come last.
double coordinate_relative_error(const CoordinateProbe& f, double analytic, double eps,
                                 std::size_t refinements, double tolerance = 1e-6,
                                 bool* refined = nullptr);

KinkSafeResult kink_safe_check(const ScalarFunction& f, const Tensor& x, double eps = 1e-4,
                               double tolerance = 1e-6, std::size_t refinements = 2);

}  // namespace dggx
