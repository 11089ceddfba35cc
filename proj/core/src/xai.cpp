#include "dggx/xai.hpp"

#include <algorithm>
#include <cmath>

#include "dggx/errors.hpp"
#include "dggx/ops.hpp"
#include "dggx/preprocess.hpp"

namespace dggx {

namespace {

Tensor as_batch(const Tensor& x) {
  if (x.rank() == 4) {
    if (x.dim(0) != 1) throw ShapeError("attribution expects a single image");
    return x.detach();
  }
  if (x.rank() != 3) throw ShapeError("attribution expects [C,H,W] or [1,C,H,W]");
  const auto& s = x.shape();
  return Tensor({1, s[0], s[1], s[2]}, std::vector<double>(x.data().begin(), x.data().end()));
}

void check_class(const FusionModel& model, std::size_t target) {
  if (target >= model.num_classes()) {
    throw ParameterError("class index " + std::to_string(target) + " out of range for " +
                         std::to_string(model.num_classes()) + " classes");
  }
}

// Attribution passes write parameter gradients as a side effect; clear them
// so the caller sees the model as it was.
void clear_parameter_grads(const FusionModel& model) {
  for (const auto* p : model.parameters()) {
    Tensor handle = p->value;
    handle.zero_grad();
  }
}

}  // namespace

GrayImage grad_cam_from(const Tensor& maps, const Tensor& score) {
  if (maps.rank() != 4 || maps.dim(0) != 1) throw ShapeError("grad_cam expects maps of shape [1,K,h,w]");
  const std::size_t k = maps.dim(1), h = maps.dim(2), w = maps.dim(3);
  const std::size_t z = h * w;
  GrayImage heat{h, w, std::vector<double>(z, 0.0)};
  if (!score.requires_grad()) return heat;  // score does not depend on anything trainable
  backward(score);
  const auto grads = maps.grad();
  const auto a = maps.data();
  for (std::size_t c = 0; c < k; ++c) {
    double alpha = 0.0;
    for (std::size_t i = 0; i < z; ++i) alpha += grads[c * z + i];
    alpha /= static_cast<double>(z);
    for (std::size_t i = 0; i < z; ++i) heat.values[i] += alpha * a[c * z + i];
  }
  for (auto& v : heat.values) v = std::max(v, 0.0);
  return heat;
}

AttributionMap grad_cam(const FusionModel& model, const Tensor& x, std::size_t target, Branch branch) {
  check_class(model, target);
  const auto out = forward_fused(model, as_batch(x), false);
  const Tensor& maps = branch == Branch::A ? out.branch_a.final_maps : out.branch_b.final_maps;
  AttributionMap map;
  map.values = grad_cam_from(maps, select_column(out.logits, target));
  map.method = AttributionMethod::GradCam;
  map.target_class = target;
  map.branch = branch;
  clear_parameter_grads(model);
  return map;
}

Tensor integrated_gradients(const BatchScore& score, const Tensor& x, const Tensor& baseline,
                            std::size_t steps, std::size_t batch_size) {
  if (steps < 1) throw ParameterError("integrated gradients needs at least one step");
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
  if (baseline.shape() != x.shape()) {
    throw ShapeError("baseline " + to_string(baseline.shape()) + " does not match input " +
                     to_string(x.shape()));
  }
  const auto xv = x.data();
  const auto bv = baseline.data();
  const std::size_t n = xv.size();
  std::vector<double> grad_sum(n, 0.0);

  for (std::size_t first = 0; first < steps; first += batch_size) {
    const std::size_t count = std::min(batch_size, steps - first);
    std::vector<double> points(count * n);
    for (std::size_t s = 0; s < count; ++s) {
      const double t = (static_cast<double>(first + s) + 0.5) / static_cast<double>(steps);
      for (std::size_t i = 0; i < n; ++i) points[s * n + i] = bv[i] + t * (xv[i] - bv[i]);
    }
    Shape shape{count};
    shape.insert(shape.end(), x.shape().begin(), x.shape().end());
    Tensor batch(std::move(shape), std::move(points));
    batch.set_requires_grad(true);
    const Tensor scores = score(batch);
    if (scores.numel() != count) throw ShapeError("score function must return one value per row");
    backward(sum(scores));
    const auto g = batch.grad();
    for (std::size_t s = 0; s < count; ++s) {
      for (std::size_t i = 0; i < n; ++i) grad_sum[i] += g[s * n + i];
    }
  }

  std::vector<double> ig(n);
  const double inv_steps = 1.0 / static_cast<double>(steps);
  for (std::size_t i = 0; i < n; ++i) ig[i] = (xv[i] - bv[i]) * grad_sum[i] * inv_steps;
  return Tensor(x.shape(), std::move(ig));
}

AttributionMap integrated_gradients(const FusionModel& model, const Tensor& x, std::size_t target,
                                    const IGConfig& config) {
  check_class(model, target);
  const Tensor input = as_batch(x);
  Shape sample(input.shape().begin() + 1, input.shape().end());
  const Tensor single = reshape(input, sample);
  const Tensor baseline = config.baseline ? reshape(config.baseline->detach(), config.baseline->rank() == 4
                                                                                   ? sample
                                                                                   : config.baseline->shape())
                                          : Tensor::zeros(sample);
  const Tensor ig = integrated_gradients(
      [&](const Tensor& batch) { return select_column(forward_fused(model, batch, false).logits, target); },
      single, baseline, config.steps, config.batch_size);
  clear_parameter_grads(model);

  const std::size_t c = sample[0], h = sample[1], w = sample[2];
  AttributionMap map;
  map.values = GrayImage{h, w, std::vector<double>(h * w, 0.0)};
  const auto v = ig.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < h * w; ++i) map.values.values[i] += v[ch * h * w + i];
  }
  map.method = AttributionMethod::IntegratedGradients;
  map.target_class = target;
  return map;
}

double class_score(const FusionModel& model, const Tensor& x, std::size_t target) {
  check_class(model, target);
  NoGradGuard no_grad;
  return forward_fused(model, as_batch(x), false).logits.data()[target];
}

AttributionMap upsample_heatmap(const AttributionMap& map, std::size_t out_h, std::size_t out_w) {
  AttributionMap out = map;
  out.values = normalize_minmax(resize_bilinear(map.values, out_h, out_w));
  return out;
}

std::array<double, 3> heat_color(double value) {
  const double v = std::clamp(value, 0.0, 1.0);
  return {v, 1.0 - std::abs(2.0 * v - 1.0), 1.0 - v};
}

Image8 render_overlay(const GrayImage& image, const GrayImage& heat, double alpha) {
  if (image.height != heat.height || image.width != heat.width) {
    throw ShapeError("overlay: heatmap and image extents differ");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ParameterError("overlay: alpha must lie in [0, 1]");
  Image8 out{image.width, image.height, 3, std::vector<std::uint8_t>(image.values.size() * 3)};
  for (std::size_t i = 0; i < image.values.size(); ++i) {
    const double gray = std::clamp(image.values[i], 0.0, 1.0);
    const auto color = heat_color(heat.values[i]);
    for (std::size_t c = 0; c < 3; ++c) {
      const double blended = (1.0 - alpha) * gray + alpha * color[c];
      out.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::lround(std::clamp(blended, 0.0, 1.0) * 255.0));
    }
  }
  return out;
}

Volume to_volume(const GrayImage& map) {
  Volume v{1, map.height, map.width, std::vector<float>(map.values.size())};
  for (std::size_t i = 0; i < map.values.size(); ++i) v.voxels[i] = static_cast<float>(map.values[i]);
  return v;
}

}  // namespace dggx
