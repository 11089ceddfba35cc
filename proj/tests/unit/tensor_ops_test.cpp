#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "dggx/errors.hpp"
#include "dggx/gradcheck.hpp"
#include "dggx/ops.hpp"
#include "dggx/random.hpp"
#include "dggx/tensor.hpp"

using namespace dggx;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = lo + (hi - lo) * uniform01(rng);
  return Tensor(std::move(shape), std::move(v));
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Fixed random weights turn any tensor-valued op into a scalar test function
// whose gradient is not trivially uniform.
Tensor weighted_sum(const Tensor& t, std::uint64_t seed) {
  Rng rng = make_rng(seed, 99);
  return sum(mul(t, random_tensor(t.shape(), rng)));
}

}  // namespace

TEST(Tensor, ShapeAndDataAgree) {
  Tensor t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.dim(1), 3u);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(Tensor, RecordedOutputsAreFrozen) {
  Tensor a = Tensor::ones({2});
  a.set_requires_grad(true);
  Tensor b = scale(a, 2.0);
  EXPECT_THROW(b.mutable_data(), StateError);
}

TEST(Conv2d, ScalarKernelScales) {
  Tensor x({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor w({1, 1, 1, 1}, 2.0);
  Tensor b({1}, 0.0);
  EXPECT_EQ(values(conv2d(x, w, b)), (std::vector<double>{2, 4, 6, 8}));
}

TEST(Conv2d, IdentityKernelIsExactIdentity) {
  Rng rng = make_rng(1);
  Tensor x = random_tensor({2, 3, 5, 4}, rng, -10, 10);
  // 1x1 conv with identity channel mixing
  std::vector<double> wv(9, 0.0);
  for (int c = 0; c < 3; ++c) wv[c * 3 + c] = 1.0;
  Tensor y = conv2d(x, Tensor({3, 3, 1, 1}, wv), Tensor({3}, 0.0));
  EXPECT_EQ(values(y), values(x));
}

TEST(Conv2d, WindowSumsOfOnesKernel) {
  std::vector<double> v(9);
  std::iota(v.begin(), v.end(), 1.0);
  Tensor y = conv2d(Tensor({1, 1, 3, 3}, v), Tensor({1, 1, 2, 2}, 1.0), Tensor({1}, 0.0));
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(values(y), (std::vector<double>{12, 16, 24, 28}));
}

TEST(Conv2d, OutputExtentsFollowStrideAndPadding) {
  Tensor x({1, 2, 7, 6}, 1.0);
  Tensor y = conv2d(x, Tensor({4, 2, 3, 3}, 1.0), Tensor({4}, 0.0), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 4, 4, 3}));
}

TEST(Conv2d, RejectsChannelMismatchAndBadStride) {
  Tensor x({1, 2, 4, 4}, 1.0);
  EXPECT_THROW(conv2d(x, Tensor({1, 3, 3, 3}, 1.0), Tensor({1}, 0.0)), ShapeError);
  EXPECT_THROW(conv2d(x, Tensor({1, 2, 3, 3}, 1.0), Tensor({1}, 0.0), 0), ParameterError);
  EXPECT_THROW(conv2d(x, Tensor({1, 2, 5, 5}, 1.0), Tensor({1}, 0.0)), ShapeError);
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
  Rng rng = make_rng(2);
  const Tensor x = random_tensor({2, 2, 5, 5}, rng);
  const Tensor w = random_tensor({3, 2, 3, 3}, rng);
  const Tensor b = random_tensor({3}, rng);
  for (std::size_t stride : {1u, 2u}) {
    for (std::size_t pad : {0u, 1u}) {
      EXPECT_LT(finite_diff_check([&](const Tensor& t) { return weighted_sum(conv2d(t, w, b, stride, pad), 5); },
                                  x),
                1e-6);
      EXPECT_LT(finite_diff_check([&](const Tensor& t) { return weighted_sum(conv2d(x, t, b, stride, pad), 5); },
                                  w),
                1e-6);
      EXPECT_LT(finite_diff_check([&](const Tensor& t) { return weighted_sum(conv2d(x, w, t, stride, pad), 5); },
                                  b),
                1e-6);
    }
  }
}

TEST(MaxPool, MaxOfFour) {
  Tensor y = max_pool2d(Tensor({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4}), 2, 2);
  EXPECT_EQ(values(y), (std::vector<double>{4}));
}

TEST(MaxPool, ConstantMapStaysConstant) {
  Tensor y = max_pool2d(Tensor({1, 2, 4, 4}, 3.5), 2, 2);
  for (double v : y.data()) EXPECT_EQ(v, 3.5);
}

TEST(MaxPool, GradientGoesToUniqueMax) {
  Tensor x({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  x.set_requires_grad(true);
  backward(sum(max_pool2d(x, 2, 2)));
  EXPECT_EQ(x.grad(), (std::vector<double>{0, 0, 0, 1}));
}

TEST(MaxPool, TiesRouteToFirstElement) {
  Tensor x({1, 1, 2, 2}, 7.0);
  x.set_requires_grad(true);
  backward(sum(max_pool2d(x, 2, 2)));
  EXPECT_EQ(x.grad(), (std::vector<double>{1, 0, 0, 0}));
}

TEST(MaxPool, RejectsBadWindow) {
  Tensor x({1, 1, 2, 2}, 1.0);
  EXPECT_THROW(max_pool2d(x, 0, 1), ParameterError);
  EXPECT_THROW(max_pool2d(x, 2, 0), ParameterError);
  EXPECT_THROW(avg_pool2d(x, 0, 1), ParameterError);
}

TEST(AvgPool, MeanOfFourAndUniformGradient) {
  Tensor x({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  x.set_requires_grad(true);
  Tensor y = avg_pool2d(x, 2, 2);
  EXPECT_EQ(values(y), (std::vector<double>{2.5}));
  backward(sum(y));
  EXPECT_EQ(x.grad(), (std::vector<double>{0.25, 0.25, 0.25, 0.25}));
  EXPECT_EQ(values(avg_pool2d(Tensor({1, 1, 4, 4}, -2.0), 2, 2)), (std::vector<double>(4, -2.0)));
}

TEST(Relu, DefinitionAndGate) {
  EXPECT_EQ(values(relu(Tensor({3}, std::vector<double>{-1, 0, 2}))), (std::vector<double>{0, 0, 2}));
  Tensor pos({3}, std::vector<double>{0.5, 1, 9});
  EXPECT_EQ(values(relu(pos)), values(pos));
  Tensor x({2}, std::vector<double>{-1, 2});
  x.set_requires_grad(true);
  backward(sum(relu(x)));
  EXPECT_EQ(x.grad(), (std::vector<double>{0, 1}));
}

TEST(Linear, IdentityWeightAndDotPlusBias) {
  Tensor x({2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor eye({2, 2}, std::vector<double>{1, 0, 0, 1});
  EXPECT_EQ(values(linear(x, eye, Tensor({2}, 0.0))), values(x));
  Tensor y = linear(Tensor({1, 2}, std::vector<double>{1, 2}), Tensor({1, 2}, 1.0), Tensor({1}, 3.0));
  EXPECT_EQ(values(y), (std::vector<double>{6}));
  EXPECT_THROW(linear(x, Tensor({2, 3}, 1.0), Tensor({2}, 0.0)), ShapeError);
}

TEST(Linear, GradientMatchesFiniteDifferences) {
  Rng rng = make_rng(3);
  const Tensor x = random_tensor({3, 4}, rng);
  const Tensor w = random_tensor({5, 4}, rng);
  const Tensor b = random_tensor({5}, rng);
  EXPECT_LT(finite_diff_check([&](const Tensor& t) { return weighted_sum(linear(t, w, b), 1); }, x), 1e-6);
  EXPECT_LT(finite_diff_check([&](const Tensor& t) { return weighted_sum(linear(x, t, b), 1); }, w), 1e-6);
  EXPECT_LT(finite_diff_check([&](const Tensor& t) { return weighted_sum(linear(x, w, t), 1); }, b), 1e-6);
}

TEST(ConcatChannels, JoinsAlongLastAxis) {
  Tensor y = concat_channels(Tensor({1, 2}, std::vector<double>{1, 2}), Tensor({1, 1}, 3.0));
  EXPECT_EQ(values(y), (std::vector<double>{1, 2, 3}));
}

TEST(ConcatChannels, EmptyLeftOperandYieldsRight) {
  Tensor b({2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor y = concat_channels(Tensor({2, 0}), b);
  EXPECT_EQ(y.shape(), b.shape());
  EXPECT_EQ(values(y), values(b));
}

TEST(ConcatChannels, GradientRoutesToBothInputs) {
  Tensor a({2, 2}, 1.0), b({2, 3}, 1.0);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  backward(sum(concat_channels(a, b)));
  EXPECT_EQ(a.grad(), std::vector<double>(4, 1.0));
  EXPECT_EQ(b.grad(), std::vector<double>(6, 1.0));
  EXPECT_THROW(concat_channels(Tensor({2, 2}), Tensor({3, 2})), ShapeError);
}

TEST(GlobalAvgPool, MeanPerChannel) {
  Tensor x({1, 1, 2, 2}, std::vector<double>{1, 3, 5, 7});
  x.set_requires_grad(true);
  Tensor y = global_avg_pool(x);
  EXPECT_EQ(y.shape(), (Shape{1, 1}));
  EXPECT_EQ(y.item(), 4.0);
  backward(sum(y));
  EXPECT_EQ(x.grad(), std::vector<double>(4, 0.25));
  EXPECT_EQ(global_avg_pool(Tensor({1, 2, 3, 3}, 1.5)).data()[1], 1.5);
  EXPECT_THROW(global_avg_pool(Tensor({1, 1, 0, 2})), ParameterError);
}

TEST(Softmax, ClosedForms) {
  auto p = values(softmax(Tensor({1, 3}, 0.0)));
  for (double v : p) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  p = values(softmax(Tensor({1, 3}, std::vector<double>{0.0, std::log(2.0), std::log(3.0)})));
  EXPECT_NEAR(p[0], 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(p[1], 2.0 / 6.0, 1e-15);
  EXPECT_NEAR(p[2], 3.0 / 6.0, 1e-15);
  p = values(softmax(Tensor({1, 2}, 1000.0)));
  EXPECT_EQ(p[0], 0.5);
  EXPECT_EQ(p[1], 0.5);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  Rng rng = make_rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor z = random_tensor({4, 5}, rng, -30, 30);
    const double shift = -100 + 200 * uniform01(rng);
    std::vector<double> shifted = values(z);
    for (auto& v : shifted) v += shift;
    const auto p = values(softmax(z));
    const auto q = values(softmax(Tensor({4, 5}, shifted)));
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0.0;
      for (std::size_t j = 0; j < 5; ++j) {
        total += p[r * 5 + j];
        EXPECT_NEAR(p[r * 5 + j], q[r * 5 + j], 1e-12);
        EXPECT_TRUE(std::isfinite(p[r * 5 + j]));
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
  Rng rng = make_rng(5);
  const Tensor z = random_tensor({3, 4}, rng, -2, 2);
  EXPECT_LT(finite_diff_check([](const Tensor& t) { return weighted_sum(softmax(t), 8); }, z), 1e-6);
}

TEST(Dropout, RateZeroAndEvalModeAreIdentity) {
  Rng rng = make_rng(6);
  const Tensor x = random_tensor({3, 7}, rng);
  EXPECT_EQ(values(dropout(x, 0.0, true, rng)), values(x));
  EXPECT_EQ(values(dropout(x, 0.9, false, rng)), values(x));
}

TEST(Dropout, InvertedScalingKeepsExpectation) {
  Rng rng = make_rng(7);
  Tensor y = dropout(Tensor({100000}, 1.0), 0.3, true, rng);
  double mean = 0.0;
  for (double v : y.data()) {
    EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.7) < 1e-15);
    mean += v;
  }
  mean /= 100000.0;
  EXPECT_NEAR(mean, 1.0, 0.01);
}

TEST(Dropout, RejectsInvalidRate) {
  Rng rng = make_rng(8);
  EXPECT_THROW(dropout(Tensor({2}, 1.0), 1.0, true, rng), ParameterError);
  EXPECT_THROW(dropout(Tensor({2}, 1.0), -0.1, true, rng), ParameterError);
}

TEST(Dropout, GradientUsesSameMask) {
  Rng rng = make_rng(9);
  Tensor x = Tensor::ones({50});
  x.set_requires_grad(true);
  Tensor y = dropout(x, 0.5, true, rng);
  backward(sum(y));
  const auto g = x.grad();
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(g[i], y.data()[i]);
}

TEST(CceLoss, ClosedForms) {
  Tensor onehot({1, 3}, std::vector<double>{1, 0, 0});
  EXPECT_EQ(cce_loss(Tensor({1, 3}, std::vector<double>{1, 0, 0}), onehot).item(), 0.0);
  EXPECT_NEAR(cce_loss(Tensor({1, 3}, 1.0 / 3.0), onehot).item(), std::log(3.0), 1e-15);
  EXPECT_NEAR(cce_loss(Tensor({1, 3}, std::vector<double>{0.7, 0.2, 0.1}), onehot).item(), -std::log(0.7),
              1e-15);
}

TEST(CceLoss, ClampsAtProbabilityFloor) {
  Tensor y({1, 2}, std::vector<double>{0, 1});
  const double loss = cce_loss(Tensor({1, 2}, std::vector<double>{1, 0}), y).item();
  EXPECT_NEAR(loss, -std::log(kProbabilityFloor), 1e-12);
}

TEST(CceLoss, RejectsNonOneHotLabels) {
  Tensor p({1, 3}, 1.0 / 3.0);
  EXPECT_THROW(cce_loss(p, Tensor({1, 3}, std::vector<double>{0.5, 0.5, 0})), ValidationError);
  EXPECT_THROW(cce_loss(p, Tensor({1, 3}, std::vector<double>{1, 1, 0})), ValidationError);
  EXPECT_THROW(softmax_cce_loss(p, Tensor({1, 3}, 0.0)), ValidationError);
}

TEST(CceLoss, SoftmaxComposedGradientIsPMinusY) {
  Rng rng = make_rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor z = random_tensor({4, 3}, rng, -5, 5);
    std::vector<double> yv(12, 0.0);
    for (std::size_t r = 0; r < 4; ++r) yv[r * 3 + uniform_index(rng, 3)] = 1.0;
    const Tensor y({4, 3}, yv);
    const auto composed = autodiff_gradient([&](const Tensor& t) { return cce_loss(softmax(t), y); }, z);
    const auto fused = autodiff_gradient([&](const Tensor& t) { return softmax_cce_loss(t, y); }, z);
    const auto p = values(softmax(z));
    for (std::size_t i = 0; i < 12; ++i) {
      const double expected = (p[i] - yv[i]) / 4.0;  // mean over the batch
      EXPECT_NEAR(composed[i], expected, 1e-10);
      EXPECT_NEAR(fused[i], expected, 1e-10);
    }
  }
}

TEST(Backward, SumGivesOnes) {
  Tensor x({2, 3, 2}, 0.7);
  x.set_requires_grad(true);
  backward(sum(x));
  EXPECT_EQ(x.grad(), std::vector<double>(12, 1.0));
}

TEST(Backward, FanOutAccumulates) {
  Tensor x({3}, std::vector<double>{1, -2, 3});
  x.set_requires_grad(true);
  backward(sum(add(x, x)));
  EXPECT_EQ(x.grad(), std::vector<double>(3, 2.0));
}

TEST(Backward, ReluOfLinearMatchesFiniteDifferences) {
  Rng rng = make_rng(11);
  const Tensor x = random_tensor({2, 4}, rng);
  const Tensor w = random_tensor({3, 4}, rng);
  const Tensor zero({3}, 0.0);
  EXPECT_LT(kink_safe_check([&](const Tensor& t) { return sum(relu(linear(x, t, zero))); }, w).max_error, 1e-6);
  EXPECT_LT(kink_safe_check([&](const Tensor& t) { return sum(relu(linear(t, w, zero))); }, x).max_error, 1e-6);
}

TEST(Backward, RejectsTensorsOffTheTape) {
  EXPECT_THROW(backward(Tensor::scalar(1.0)), StateError);
  Tensor x = Tensor::ones({2});
  x.set_requires_grad(true);
  EXPECT_THROW(backward(scale(x, 2.0)), StateError);  // not a single element
  NoGradGuard guard;
  EXPECT_THROW(backward(sum(x)), StateError);
}

TEST(Backward, IsBitDeterministic) {
  Rng rng = make_rng(12);
  const Tensor x = random_tensor({2, 3, 6, 6}, rng);
  const Tensor w = random_tensor({4, 3, 3, 3}, rng);
  const Tensor b = random_tensor({4}, rng);
  auto f = [&](const Tensor& t) { return weighted_sum(relu(conv2d(t, w, b, 1, 1)), 3); };
  EXPECT_EQ(autodiff_gradient(f, x), autodiff_gradient(f, x));
}

TEST(GradCheck, LinearFunctionIsExactToRoundoff) {
  Rng rng = make_rng(13);
  const Tensor x = random_tensor({6}, rng);
  EXPECT_LT(finite_diff_check([](const Tensor& t) { return weighted_sum(t, 2); }, x), 1e-9);
}

TEST(GradCheck, SoftmaxSquaredSelfTest) {
  Rng rng = make_rng(14);
  const Tensor x = random_tensor({1, 5}, rng);
  EXPECT_LT(finite_diff_check([](const Tensor& t) {
              Tensor p = softmax(t);
              return sum(mul(p, p));
            },
                              x, 1e-5),
            1e-6);
}

TEST(GradCheck, DetectsWrongGradient) {
  Rng rng = make_rng(15);
  const Tensor x = random_tensor({5}, rng);
  ScalarFunction f = [](const Tensor& t) { return weighted_sum(t, 4); };
  auto g = autodiff_gradient(f, x);
  for (auto& v : g) v *= 2.0;
  // |2a - a| / max(|2a|, |a|) = 0.5 for every coordinate
  EXPECT_NEAR(max_relative_error(f, x, g, 1e-5), 0.5, 1e-6);
}

TEST(GradCheck, KinkSafeCheckRefinesStepsAcrossKinks) {
  // |t| has a kink at 0; x = 2e-5 lies inside the first step's window.
  const Tensor x({1}, 2e-5);
  const auto r = kink_safe_check([](const Tensor& t) { return sum(add(relu(t), relu(scale(t, -1.0)))); }, x);
  EXPECT_LT(r.max_error, 1e-6);
  EXPECT_EQ(r.refined, 1u);
  EXPECT_GT(max_relative_error([](const Tensor& t) { return sum(add(relu(t), relu(scale(t, -1.0)))); }, x,
                               {1.0}, 1e-4),
            0.5);
}

TEST(GradCheck, EveryDifferentiableOpOnRandomTensors) {
  Rng rng = make_rng(16);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor a = random_tensor({2, 3, 4, 4}, rng);
    const Tensor b = random_tensor({2, 3, 4, 4}, rng);
    const auto seed = static_cast<std::uint64_t>(trial);
    EXPECT_LT(kink_safe_check([&](const Tensor& t) { return weighted_sum(max_pool2d(t, 2, 2), seed); }, a).max_error,
              1e-6);
    EXPECT_LT(finite_diff_check([&](const Tensor& t) { return weighted_sum(avg_pool2d(t, 2, 2), seed); }, a), 1e-6);
    EXPECT_LT(kink_safe_check([&](const Tensor& t) { return weighted_sum(relu(t), seed); }, a).max_error, 1e-6);
    EXPECT_LT(finite_diff_check([&](const Tensor& t) { return weighted_sum(global_avg_pool(t), seed); }, a), 1e-6);
    EXPECT_LT(finite_diff_check([&](const Tensor& t) { return weighted_sum(concat(t, b, 1), seed); }, a), 1e-6);
    EXPECT_LT(finite_diff_check([&](const Tensor& t) { return weighted_sum(mul(t, b), seed); }, a), 1e-6);
    const Tensor flat = reshape(a, {6, 16});
    EXPECT_LT(finite_diff_check([&](const Tensor& t) { return weighted_sum(softmax(t), seed); }, flat), 1e-6);
  }
}
