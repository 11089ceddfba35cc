#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dggx/image_io.hpp"
#include "dggx/tensor.hpp"

namespace dggx {

/// Slice indices floor((i + 0.5) * D / k) for i in [0, k).
std::vector<std::size_t> axial_slice_indices(std::size_t depth, std::size_t k);

/// k evenly spaced axial slices (midpoint rule). Requires 1 <= k <= D.
std::vector<GrayImage> extract_axial_slices(const Volume& volume, std::size_t k);

/// Bilinear resize with half-pixel centres: source coordinate
/// (dst + 0.5) * (src / dst) - 0.5, clamped to the valid range.
GrayImage resize_bilinear(const GrayImage& image, std::size_t out_h, std::size_t out_w);

/// (v - min) / (max - min); a constant input maps to zeros.
void normalize_minmax_inplace(std::span<double> values);
GrayImage normalize_minmax(GrayImage image);

/// Grayscale replicated into a [channels, H, W] tensor.
Tensor to_model_channels(const GrayImage& image, std::size_t channels);

/// Full single-image pipeline: gray -> resize -> normalize -> channels.
Tensor preprocess_image(const GrayImage& image, std::size_t size, std::size_t channels);

}  // namespace dggx
