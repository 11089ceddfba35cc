#include "dggx/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "dggx/errors.hpp"

namespace dggx {

std::vector<std::size_t> axial_slice_indices(std::size_t depth, std::size_t k) {
  if (k < 1 || k > depth) {
    throw ParameterError("slice count must lie in [1, " + std::to_string(depth) + "]");
  }
  std::vector<std::size_t> idx(k);
  // (2i + 1) * D / (2k) is the midpoint formula in exact integer arithmetic.
  for (std::size_t i = 0; i < k; ++i) idx[i] = (2 * i + 1) * depth / (2 * k);
  return idx;
}

std::vector<GrayImage> extract_axial_slices(const Volume& volume, std::size_t k) {
  if (volume.voxels.size() != volume.depth * volume.height * volume.width) {
    throw ShapeError("volume voxel count does not match extents");
  }
  const std::size_t plane = volume.height * volume.width;
  std::vector<GrayImage> slices;
  for (std::size_t d : axial_slice_indices(volume.depth, k)) {
    GrayImage img{volume.height, volume.width, std::vector<double>(plane)};
    for (std::size_t i = 0; i < plane; ++i) img.values[i] = volume.voxels[d * plane + i];
    slices.push_back(std::move(img));
  }
  return slices;
}

GrayImage resize_bilinear(const GrayImage& image, std::size_t out_h, std::size_t out_w) {
  if (out_h < 1 || out_w < 1) throw ParameterError("resize: target extents must be positive");
  if (image.height < 1 || image.width < 1) throw ParameterError("resize: empty source image");
  const double sy = static_cast<double>(image.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(image.width) / static_cast<double>(out_w);
  auto source = [](std::size_t dst, double scale, std::size_t extent) {
    const double s = (static_cast<double>(dst) + 0.5) * scale - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(extent - 1));
  };
  GrayImage out{out_h, out_w, std::vector<double>(out_h * out_w)};
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = source(y, sy, image.height);
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = source(x, sx, image.width);
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - static_cast<double>(x0);
      const double top = image.at(y0, x0) * (1.0 - wx) + image.at(y0, x1) * wx;
      const double bottom = image.at(y1, x0) * (1.0 - wx) + image.at(y1, x1) * wx;
      out.at(y, x) = top * (1.0 - wy) + bottom * wy;
    }
  }
  return out;
}

void normalize_minmax_inplace(std::span<double> values) {
  if (values.empty()) return;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) {
    std::fill(values.begin(), values.end(), 0.0);
    return;
  }
  const double range = hi - lo;
  for (auto& v : values) v = std::clamp((v - lo) / range, 0.0, 1.0);
}

GrayImage normalize_minmax(GrayImage image) {
  normalize_minmax_inplace(image.values);
  return image;
}

Tensor to_model_channels(const GrayImage& image, std::size_t channels) {
  if (channels < 1) throw ParameterError("channel count must be >= 1");
  std::vector<double> out;
  out.reserve(channels * image.values.size());
  for (std::size_t c = 0; c < channels; ++c) out.insert(out.end(), image.values.begin(), image.values.end());
  return Tensor({channels, image.height, image.width}, std::move(out));
}

Tensor preprocess_image(const GrayImage& image, std::size_t size, std::size_t channels) {
  GrayImage resized = (image.height == size && image.width == size) ? image
                                                                     : resize_bilinear(image, size, size);
  return to_model_channels(normalize_minmax(std::move(resized)), channels);
}

}  // namespace dggx
