#pragma once

#include <cmath>
#include <cstdint>

#include "dggx/xai.hpp"
#include "test_support.hpp"

namespace dggx::testing {

struct CompletenessTrial {
  double gap = 0.0;        // F_c(x) - F_c(x')
  double error_64 = 0.0;   // |sum IG - gap| at 64 steps
  double error_256 = 0.0;  // same at 256 steps
};

/// IG completeness on a random tiny fused model, random input in [0,1] and
/// a random target class, against the zero baseline.
inline CompletenessTrial completeness_trial(std::uint64_t seed) {
  FusionModel model = tiny_model(seed);
  randomize_biases(model, seed);
  Rng rng = make_rng(seed, 3);
  const Tensor x = random_tensor({1, 16, 16}, rng, 0.0, 1.0);
  const auto target = static_cast<std::size_t>(uniform_index(rng, model.num_classes()));
  CompletenessTrial t;
  t.gap = class_score(model, x, target) - class_score(model, Tensor::zeros({1, 16, 16}), target);
  auto error = [&](std::size_t steps) {
    IGConfig cfg;
    cfg.steps = steps;
    double total = 0.0;
    for (double v : integrated_gradients(model, x, target, cfg).values.values) total += v;
    return std::abs(total - t.gap);
  };
  t.error_64 = error(64);
  t.error_256 = error(256);
  return t;
}

}  // namespace dggx::testing
