#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <optional>

#include "dggx/fusion_model.hpp"
#include "dggx/image_io.hpp"
#include "dggx/tensor.hpp"

namespace dggx {

enum class AttributionMethod { GradCam, IntegratedGradients };

/// A 2-D relevance map. Grad-CAM maps live at feature-map resolution and are
/// nonnegative; Integrated Gradients maps live at input resolution (summed
/// over channels) and may be signed.
struct AttributionMap {
  GrayImage values;
  AttributionMethod method = AttributionMethod::GradCam;
  std::size_t target_class = 0;
  std::optional<Branch> branch;  // Grad-CAM only
};

struct IGConfig {
  std::optional<Tensor> baseline;  // defaults to all zeros (a black image)
  std::size_t steps = 50;
  std::size_t batch_size = 32;  // path points evaluated per forward pass
};

/// ReLU(sum_k alpha_k A^k) with alpha_k the spatial mean of d score / d A^k,
/// for A of shape [1,K,h,w]. `score` must be a single-element tensor
/// computed from `maps` on the tape.
GrayImage grad_cam_from(const Tensor& maps, const Tensor& score);

/// Grad-CAM on one branch's final maps, targeting the pre-softmax logit of
/// class `target`. x: [C,H,W] or [1,C,H,W].
AttributionMap grad_cam(const FusionModel& model, const Tensor& x, std::size_t target, Branch branch);

/// Score function for IG: maps a batch [N,...] to per-row scalars [N].
using BatchScore = std::function<Tensor(const Tensor& batch)>;

/// Midpoint-rule Integrated Gradients:
/// IG_i = (x_i - x'_i) / m * sum_{s=1..m} dF(x' + ((s - 0.5)/m)(x - x'))/dx_i.
/// `x` is one sample without batch axis; the result has x's shape.
Tensor integrated_gradients(const BatchScore& score, const Tensor& x, const Tensor& baseline,
                            std::size_t steps, std::size_t batch_size = 32);

/// IG of the class-`target` logit, summed over channels. x: [C,H,W] or [1,C,H,W].
AttributionMap integrated_gradients(const FusionModel& model, const Tensor& x, std::size_t target,
                                    const IGConfig& config = {});

/// Pre-softmax logit of class `target` for one image.
double class_score(const FusionModel& model, const Tensor& x, std::size_t target);

/// Bilinear resize followed by min-max normalization to [0,1].
AttributionMap upsample_heatmap(const AttributionMap& map, std::size_t out_h, std::size_t out_w);

/// Blue (0) to red (1) colour ramp, each channel in [0,1].
std::array<double, 3> heat_color(double value);

/// (1 - alpha) * gray + alpha * colormap(heat), quantized to 8-bit RGB.
Image8 render_overlay(const GrayImage& image, const GrayImage& heat, double alpha);

/// Raw map as a depth-1 VOL1 volume.
Volume to_volume(const GrayImage& map);

}  // namespace dggx
