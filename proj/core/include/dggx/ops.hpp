#pragma once

#include <cstddef>

#include "dggx/random.hpp"
#include "dggx/tensor.hpp"

namespace dggx {

/// Floor applied to probabilities before taking the log in the loss.
inline constexpr double kProbabilityFloor = 1e-12;

/// 2-D cross-correlation. input [N,C,H,W], weight [K,C,kh,kw], bias [K].
/// Output extents are (H + 2p - kh) / stride + 1 (floor) and likewise for W.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              std::size_t stride = 1, std::size_t padding = 0);

/// Windowed maximum over [N,C,H,W]; backward routes to the first
/// (row-major) maximal element of each window.
Tensor max_pool2d(const Tensor& input, std::size_t k, std::size_t stride);

/// Windowed mean over [N,C,H,W].
Tensor avg_pool2d(const Tensor& input, std::size_t k, std::size_t stride);

Tensor relu(const Tensor& input);

/// input [N,D], weight [M,D], bias [M] -> [N,M].
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

/// Joins two tensors along `axis`; all other extents must agree.
Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);

/// Joins along the last (feature) axis.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// [N,C,H,W] -> [N,C] spatial mean.
Tensor global_avg_pool(const Tensor& input);

/// Row-wise softmax over the last axis of an [N,C] tensor (max-subtracted).
Tensor softmax(const Tensor& logits);

/// Inverted dropout: in training, zero each element with probability `rate`
/// and scale survivors by 1/(1-rate); identity otherwise.
Tensor dropout(const Tensor& input, double rate, bool training, Rng& rng);

/// Mean over rows of -sum_i y_i log(max(p_i, floor)). `labels` must be one-hot.
Tensor cce_loss(const Tensor& probs, const Tensor& labels);

/// Same value as cce_loss(softmax(logits), labels) with the fused gradient
/// (softmax(logits) - labels) / N with respect to the logits.
Tensor softmax_cce_loss(const Tensor& logits, const Tensor& labels);

// Small helpers used by tests, attribution and the training loop.

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// Sum of all elements, as a [1] tensor.
Tensor sum(const Tensor& a);
/// Same values under a new shape of equal element count.
Tensor reshape(const Tensor& a, Shape shape);
/// Column `c` of an [N,C] tensor, as [N].
Tensor select_column(const Tensor& a, std::size_t c);

}  // namespace dggx
