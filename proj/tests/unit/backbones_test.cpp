#include <gtest/gtest.h>

#include "dggx/backbones.hpp"
#include "dggx/errors.hpp"
#include "dggx/gradcheck.hpp"
#include "dggx/ops.hpp"
#include "test_support.hpp"

using namespace dggx;
using dggx::testing::random_tensor;

namespace {

std::vector<std::vector<double>> parameter_values(const Backbone& b) {
  std::vector<std::vector<double>> out;
  for (const auto& p : b.parameters()) out.emplace_back(p.value.data().begin(), p.value.data().end());
  return out;
}

BackboneConfig vgg(std::vector<std::size_t> widths, std::size_t size, std::uint64_t seed = 1) {
  auto c = BackboneConfig::vgg_like(seed);
  c.stage_widths = std::move(widths);
  c.input_size = size;
  return c;
}

}  // namespace

TEST(MiniVgg, TwoStagesOn32) {
  const Backbone b = build_mini_vgg(vgg({8, 16}, 32));
  const auto out = forward_backbone(b, Tensor({1, 1, 32, 32}, 0.5));
  EXPECT_EQ(out.final_maps.shape(), (Shape{1, 16, 8, 8}));
  EXPECT_EQ(out.gap_vector.shape(), (Shape{1, 16}));
  EXPECT_EQ(b.feature_width(), 16u);
  EXPECT_EQ(b.final_map_size(), 8u);
}

TEST(MiniVgg, OneStageOn8) {
  const Backbone b = build_mini_vgg(vgg({4}, 8));
  EXPECT_EQ(forward_backbone(b, Tensor({2, 1, 8, 8}, 1.0)).final_maps.shape(), (Shape{2, 4, 4, 4}));
}

TEST(MiniVgg, SameSeedSameParameters) {
  EXPECT_EQ(parameter_values(build_mini_vgg(vgg({8, 16}, 32, 5))),
            parameter_values(build_mini_vgg(vgg({8, 16}, 32, 5))));
  EXPECT_NE(parameter_values(build_mini_vgg(vgg({8, 16}, 32, 5))),
            parameter_values(build_mini_vgg(vgg({8, 16}, 32, 6))));
}

TEST(MiniVgg, RejectsIndivisibleInput) {
  EXPECT_THROW(build_mini_vgg(vgg({8, 16, 32}, 20)), ConfigError);
  EXPECT_THROW(build_mini_vgg(BackboneConfig::dense_like()), ConfigError);
}

TEST(DenseBlock, ChannelCountIsC0PlusLTimesG) {
  Rng rng = make_rng(3);
  const auto weights = init_dense_block(4, 3, 2, rng);
  const Tensor y = dense_block(Tensor({1, 4, 5, 5}, 0.3), weights);
  EXPECT_EQ(y.shape(), (Shape{1, 10, 5, 5}));
}

TEST(DenseBlock, ChannelCountProperty) {
  Rng rng = make_rng(4);
  for (int trial = 0; trial < 25; ++trial) {
    const auto c0 = 1 + uniform_index(rng, 5);
    const auto l = 1 + uniform_index(rng, 4);
    const auto g = 1 + uniform_index(rng, 4);
    const auto weights = init_dense_block(c0, l, g, rng);
    EXPECT_EQ(dense_block(Tensor({1, c0, 3, 3}, 1.0), weights).dim(1), c0 + l * g);
  }
}

TEST(DenseBlock, RejectsZeroGrowthOrLength) {
  Rng rng = make_rng(5);
  EXPECT_THROW(init_dense_block(4, 1, 0, rng), ParameterError);
  EXPECT_THROW(init_dense_block(4, 0, 2, rng), ParameterError);
}

TEST(DenseBlock, GradientMatchesFiniteDifferences) {
  Rng rng = make_rng(6);
  const auto weights = init_dense_block(2, 2, 3, rng);
  const Tensor x = random_tensor({1, 2, 4, 4}, rng);
  const auto r = kink_safe_check([&](const Tensor& t) { return sum(dense_block(t, weights)); }, x);
  EXPECT_LT(r.max_error, 1e-6);
}

TEST(MiniDenseNet, ChannelBookkeeping) {
  auto c = BackboneConfig::dense_like(1);
  c.growth_rate = 4;
  c.block_lengths = {2, 2};
  c.compression = 0.5;
  c.stem_channels = 8;
  c.input_size = 32;
  const Backbone b = build_mini_densenet(c);
  EXPECT_EQ(b.feature_width(), 16u);
  const auto out = forward_backbone(b, Tensor({1, 1, 32, 32}, 0.2));
  EXPECT_EQ(out.final_maps.shape(), (Shape{1, 16, 16, 16}));
  EXPECT_NE(b.final_conv_layer().find("block2"), std::string::npos);
  // transition1 maps 16 channels to 8 with a 1x1 kernel
  bool found = false;
  for (const auto& p : b.parameters()) {
    if (p.name == "transition1.weight") {
      EXPECT_EQ(p.value.shape(), (Shape{8, 16, 1, 1}));
      found = true;
    }
  }
  EXPECT_TRUE(found);
}

TEST(MiniDenseNet, FullCompressionPreservesChannels) {
  auto c = BackboneConfig::dense_like(1);
  c.compression = 1.0;
  c.growth_rate = 4;
  c.stem_channels = 8;
  const Backbone b = build_mini_densenet(c);
  for (const auto& p : b.parameters()) {
    if (p.name == "transition1.weight") EXPECT_EQ(p.value.dim(0), p.value.dim(1));
  }
  EXPECT_EQ(b.feature_width(), 8u + 2 * 4 + 2 * 4);
}

TEST(MiniDenseNet, SameSeedSameParametersAndValidation) {
  auto c = BackboneConfig::dense_like(9);
  EXPECT_EQ(parameter_values(build_mini_densenet(c)), parameter_values(build_mini_densenet(c)));
  c.compression = 0.0;
  EXPECT_THROW(build_mini_densenet(c), ConfigError);
  c.compression = 0.5;
  c.input_size = 30;  // blocks {2,2} downsample once
  EXPECT_NO_THROW(build_mini_densenet(c));
  c.input_size = 31;
  EXPECT_THROW(build_mini_densenet(c), ConfigError);
  c = BackboneConfig::dense_like(9);
  c.growth_rate = 0;
  EXPECT_THROW(build_mini_densenet(c), ConfigError);
}

TEST(ForwardBackbone, ZeroInputGivesZeroGap) {
  for (const auto& cfg : {BackboneConfig::vgg_like(2), BackboneConfig::dense_like(3)}) {
    const auto out = forward_backbone(build_backbone(cfg), Tensor({2, 1, 32, 32}, 0.0));
    for (double v : out.gap_vector.data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(ForwardBackbone, GapEqualsPooledFinalMaps) {
  Rng rng = make_rng(7);
  const Tensor x = random_tensor({2, 1, 32, 32}, rng, 0, 1);
  for (const auto& cfg : {BackboneConfig::vgg_like(2), BackboneConfig::dense_like(3)}) {
    const auto out = forward_backbone(build_backbone(cfg), x);
    const Tensor pooled = global_avg_pool(out.final_maps);
    EXPECT_EQ(std::vector<double>(pooled.data().begin(), pooled.data().end()),
              std::vector<double>(out.gap_vector.data().begin(), out.gap_vector.data().end()));
  }
}

TEST(ForwardBackbone, BiasFreeConvIsHomogeneous) {
  Rng rng = make_rng(8);
  const Backbone b = build_mini_vgg(vgg({4}, 8));
  const Tensor& w = b.parameters()[0].value;
  const Tensor zero({w.dim(0)}, 0.0);
  const Tensor x = random_tensor({1, 1, 8, 8}, rng);
  std::vector<double> doubled(x.data().begin(), x.data().end());
  for (auto& v : doubled) v *= 2.0;
  const Tensor y1 = conv2d(x, w, zero, 1, 1);
  const Tensor y2 = conv2d(Tensor(x.shape(), doubled), w, zero, 1, 1);
  for (std::size_t i = 0; i < y1.numel(); ++i) EXPECT_EQ(y2.data()[i], 2.0 * y1.data()[i]);
}

TEST(ForwardBackbone, RejectsWrongInputShape) {
  const Backbone b = build_backbone(BackboneConfig::vgg_like(1));
  EXPECT_THROW(forward_backbone(b, Tensor({1, 1, 16, 16}, 0.0)), ShapeError);
  EXPECT_THROW(forward_backbone(b, Tensor({1, 3, 32, 32}, 0.0)), ShapeError);
}

TEST(ForwardBackbone, EndToEndGradientOn16x16) {
  Rng rng = make_rng(9);
  const Tensor x = random_tensor({1, 1, 16, 16}, rng, 0, 1);
  auto vc = BackboneConfig::vgg_like(4);
  vc.input_size = 16;
  vc.stage_widths = {4, 6};
  auto dc = BackboneConfig::dense_like(5);
  dc.input_size = 16;
  dc.stem_channels = 4;
  dc.growth_rate = 3;
  for (const auto& cfg : {vc, dc}) {
    const Backbone b = build_backbone(cfg);
    const auto r = kink_safe_check([&](const Tensor& t) { return sum(forward_backbone(b, t).final_maps); }, x);
    EXPECT_LT(r.max_error, 1e-6) << to_string(cfg.kind);
  }
}
