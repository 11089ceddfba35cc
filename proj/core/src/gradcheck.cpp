#include "dggx/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "dggx/errors.hpp"

namespace dggx {

std::vector<double> autodiff_gradient(const ScalarFunction& f, const Tensor& x) {
  Tensor leaf = x.detach();
  leaf.set_requires_grad(true);
  Tensor y = f(leaf);
  backward(y);
  return leaf.grad();
}

double max_relative_error(const ScalarFunction& f, const Tensor& x,
                          const std::vector<double>& gradient, double eps) {
  if (gradient.size() != x.numel()) throw ShapeError("gradient length does not match input");
  NoGradGuard no_grad;
  Tensor probe = x.detach();
  auto values = probe.mutable_data();
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double original = values[i];
    values[i] = original + eps;
    const double up = f(probe).item();
    values[i] = original - eps;
    const double down = f(probe).item();
    values[i] = original;
    const double numeric = (up - down) / (2.0 * eps);
    const double denom = std::max({std::abs(numeric), std::abs(gradient[i]), 1e-8});
    worst = std::max(worst, std::abs(numeric - gradient[i]) / denom);
  }
  return worst;
}

double finite_diff_check(const ScalarFunction& f, const Tensor& x, double eps) {
  return max_relative_error(f, x, autodiff_gradient(f, x), eps);
}

namespace {

double relative(double numeric, double analytic) {
  const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
  return std::abs(numeric - analytic) / denom;
}

}  // namespace

double coordinate_relative_error(const CoordinateProbe& f, double analytic, double eps,
                                 std::size_t refinements, double tolerance, bool* refined) {
  if (!(eps > 0.0)) throw ParameterError("finite-difference step must be positive");
  std::vector<double> steps{eps};
  for (std::size_t k = 0; k < refinements; ++k) steps.push_back(steps.back() / 10.0);
  steps.push_back(eps * 10.0);
  steps.push_back(eps * 100.0);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t attempt = 0; attempt < steps.size(); ++attempt) {
    const double h = steps[attempt];
    const double err = relative((f(h) - f(-h)) / (2.0 * h), analytic);
    if (refined) *refined = attempt > 0;
    best = std::min(best, err);
    if (err < tolerance) break;
  }
  return best;
}

KinkSafeResult kink_safe_check(const ScalarFunction& f, const Tensor& x, double eps, double tolerance,
                               std::size_t refinements) {
  const auto gradient = autodiff_gradient(f, x);
  NoGradGuard no_grad;
  Tensor probe = x.detach();
  auto values = probe.mutable_data();
  KinkSafeResult result;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double original = values[i];
    bool refined = false;
    const double err = coordinate_relative_error(
        [&](double delta) {
          values[i] = original + delta;
          const double v = f(probe).item();
          values[i] = original;
          return v;
        },
        gradient[i], eps, refinements, tolerance, &refined);
    result.max_error = std::max(result.max_error, err);
    ++result.coordinates;
    if (refined) ++result.refined;
  }
  return result;
}

}  // namespace dggx
