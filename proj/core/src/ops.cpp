#include "dggx/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <mutex>
#include <numbers>

#include <cblas.h>

#include "dggx/errors.hpp"
#include "dggx/parallel.hpp"

extern "C" void openblas_set_num_threads(int threads);

namespace dggx {

using detail::make_result;
using detail::Node;

namespace {

using Index = std::ptrdiff_t;

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + " expects rank " + std::to_string(rank) + ", got " +
                     to_string(t.shape()));
  }
}

bool wants_grad(const Node& n) { return n.requires_grad; }

// Valid output-column range [lo, hi) for kernel column kx such that the input
// column ox*stride + kx - pad lies inside [0, in_w).
std::pair<Index, Index> valid_range(Index in_w, Index out_w, Index kx, Index stride, Index pad) {
  const Index offset = kx - pad;
  Index lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  Index hi = in_w - offset <= 0 ? 0 : (in_w - 1 - offset) / stride + 1;
  hi = std::min(hi, out_w);
  lo = std::min(lo, hi);
  return {lo, hi};
}

struct ConvGeometry {
  Index n, c, h, w, k, kh, kw, oh, ow, stride, pad;
};

// Unfolds one sample into a [C*kh*kw, oh*ow] column matrix (zero padded).
void im2col(const ConvGeometry& g, const double* in, double* col) {
  const Index plane = g.oh * g.ow;
  for (Index c = 0; c < g.c; ++c) {
    const double* in_c = in + c * g.h * g.w;
    for (Index ky = 0; ky < g.kh; ++ky) {
      for (Index kx = 0; kx < g.kw; ++kx) {
        double* row = col + ((c * g.kh + ky) * g.kw + kx) * plane;
        const auto [lo, hi] = valid_range(g.w, g.ow, kx, g.stride, g.pad);
        for (Index oy = 0; oy < g.oh; ++oy) {
          double* dst = row + oy * g.ow;
          const Index iy = oy * g.stride + ky - g.pad;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.ow, 0.0);
            continue;
          }
          const double* src = in_c + iy * g.w + kx - g.pad;
          std::fill(dst, dst + lo, 0.0);
          for (Index ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride];
          std::fill(dst + hi, dst + g.ow, 0.0);
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column gradients back onto the input gradient.
void col2im_add(const ConvGeometry& g, const double* col, double* grad_in) {
  const Index plane = g.oh * g.ow;
  for (Index c = 0; c < g.c; ++c) {
    double* gi_c = grad_in + c * g.h * g.w;
    for (Index ky = 0; ky < g.kh; ++ky) {
      for (Index kx = 0; kx < g.kw; ++kx) {
        const double* row = col + ((c * g.kh + ky) * g.kw + kx) * plane;
        const auto [lo, hi] = valid_range(g.w, g.ow, kx, g.stride, g.pad);
        for (Index oy = 0; oy < g.oh; ++oy) {
          const Index iy = oy * g.stride + ky - g.pad;
          if (iy < 0 || iy >= g.h) continue;
          const double* src = row + oy * g.ow;
          double* dst = gi_c + iy * g.w + kx - g.pad;
          for (Index ox = lo; ox < hi; ++ox) dst[ox * g.stride] += src[ox];
        }
      }
    }
  }
}

// Parallelism comes from parallel_chunks; BLAS itself stays single threaded
// so every product has one fixed summation order.
void pin_blas_threads() {
  static std::once_flag once;
  std::call_once(once, [] { openblas_set_num_threads(1); });
}

Index patch_size(const ConvGeometry& g) { return g.c * g.kh * g.kw; }

void conv_forward_sample(const ConvGeometry& g, const double* in, const double* weight,
                         const double* bias, double* out, std::vector<double>& col) {
  const Index plane = g.oh * g.ow;
  const Index patch = patch_size(g);
  col.resize(static_cast<std::size_t>(patch * plane));
  im2col(g, in, col.data());
  for (Index k = 0; k < g.k; ++k) std::fill(out + k * plane, out + (k + 1) * plane, bias[k]);
  // out[K,P] += W[K,patch] * col[patch,P]
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(g.k), static_cast<int>(plane),
              static_cast<int>(patch), 1.0, weight, static_cast<int>(patch), col.data(),
              static_cast<int>(plane), 1.0, out, static_cast<int>(plane));
}

// Accumulates the input gradient (when grad_in != nullptr) and the weight and
// bias gradients of one sample.
void conv_backward_sample(const ConvGeometry& g, const double* in, const double* weight,
                          const double* grad_out, double* grad_in, double* grad_w, double* grad_b,
                          std::vector<double>& col) {
  const Index plane = g.oh * g.ow;
  const Index patch = patch_size(g);
  col.resize(static_cast<std::size_t>(patch * plane));
  if (grad_b) {
    for (Index k = 0; k < g.k; ++k) {
      const double* go_k = grad_out + k * plane;
      double acc = 0.0;
      for (Index i = 0; i < plane; ++i) acc += go_k[i];
      grad_b[k] += acc;
    }
  }
  if (grad_w) {
    im2col(g, in, col.data());
    // gW[K,patch] += gout[K,P] * col[patch,P]^T
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(g.k), static_cast<int>(patch),
                static_cast<int>(plane), 1.0, grad_out, static_cast<int>(plane), col.data(),
                static_cast<int>(plane), 1.0, grad_w, static_cast<int>(patch));
  }
  if (grad_in) {
    // gcol[patch,P] = W[K,patch]^T * gout[K,P]
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(patch), static_cast<int>(plane),
                static_cast<int>(g.k), 1.0, weight, static_cast<int>(patch), grad_out,
                static_cast<int>(plane), 0.0, col.data(), static_cast<int>(plane));
    col2im_add(g, col.data(), grad_in);
  }
}

enum class PoolKind { Max, Average };

Tensor pool2d(const Tensor& input, std::size_t k, std::size_t stride, PoolKind kind) {
  const char* name = kind == PoolKind::Max ? "max_pool2d" : "avg_pool2d";
  if (k < 1 || stride < 1) throw ParameterError(std::string(name) + ": k and stride must be >= 1");
  require_rank(input, 4, name);
  const auto& s = input.shape();
  const std::size_t n = s[0], c = s[1], h = s[2], w = s[3];
  if (k > h || k > w) throw ParameterError(std::string(name) + ": window larger than input");
  const std::size_t oh = (h - k) / stride + 1, ow = (w - k) / stride + 1;
  const auto src = input.data();
  std::vector<double> out(n * c * oh * ow);
  std::vector<std::size_t> argmax;
  if (kind == PoolKind::Max) argmax.resize(out.size());
  const double inv_area = 1.0 / static_cast<double>(k * k);

  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const double* in_p = src.data() + plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t o = (plane * oh + oy) * ow + ox;
        if (kind == PoolKind::Max) {
          std::size_t best = (oy * stride) * w + ox * stride;
          for (std::size_t dy = 0; dy < k; ++dy) {
            for (std::size_t dx = 0; dx < k; ++dx) {
              const std::size_t idx = (oy * stride + dy) * w + ox * stride + dx;
              if (in_p[idx] > in_p[best]) best = idx;
            }
          }
          out[o] = in_p[best];
          argmax[o] = plane * h * w + best;
        } else {
          double acc = 0.0;
          for (std::size_t dy = 0; dy < k; ++dy) {
            for (std::size_t dx = 0; dx < k; ++dx) acc += in_p[(oy * stride + dy) * w + ox * stride + dx];
          }
          out[o] = acc * inv_area;
        }
      }
    }
  }

  if (kind == PoolKind::Max) {
    return make_result({n, c, oh, ow}, std::move(out), "max_pool2d", {input},
                       [argmax = std::move(argmax)](const Node& self) {
                         auto& in = *self.inputs[0];
                         if (!wants_grad(in)) return;
                         auto& g = in.grad_slot();
                         for (std::size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += self.grad[o];
                       });
  }
  return make_result({n, c, oh, ow}, std::move(out), "avg_pool2d", {input},
                     [=](const Node& self) {
                       auto& in = *self.inputs[0];
                       if (!wants_grad(in)) return;
                       auto& g = in.grad_slot();
                       for (std::size_t plane = 0; plane < n * c; ++plane) {
                         for (std::size_t oy = 0; oy < oh; ++oy) {
                           for (std::size_t ox = 0; ox < ow; ++ox) {
                             const double share = self.grad[(plane * oh + oy) * ow + ox] * inv_area;
                             for (std::size_t dy = 0; dy < k; ++dy) {
                               for (std::size_t dx = 0; dx < k; ++dx) {
                                 g[plane * h * w + (oy * stride + dy) * w + ox * stride + dx] += share;
                               }
                             }
                           }
                         }
                       }
                     });
}

void validate_one_hot(const Tensor& labels) {
  const auto y = labels.data();
  const std::size_t cols = labels.dim(1);
  for (std::size_t r = 0; r < labels.dim(0); ++r) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = y[r * cols + j];
      if (v != 0.0 && v != 1.0) {
        throw ValidationError("label row " + std::to_string(r) + " is not one-hot");
      }
      row_sum += v;
    }
    if (row_sum != 1.0) throw ValidationError("label row " + std::to_string(r) + " is not one-hot");
  }
}

void require_matching_2d(const Tensor& probs, const Tensor& labels, const char* what) {
  require_rank(probs, 2, what);
  require_rank(labels, 2, what);
  if (probs.shape() != labels.shape()) {
    throw ShapeError(std::string(what) + ": predictions " + to_string(probs.shape()) +
                     " vs labels " + to_string(labels.shape()));
  }
}

std::vector<double> softmax_rows(std::span<const double> z, std::size_t rows, std::size_t cols) {
  std::vector<double> p(z.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* zr = z.data() + r * cols;
    double* pr = p.data() + r * cols;
    const double mx = *std::max_element(zr, zr + cols);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      pr[j] = std::exp(zr[j] - mx);
      total += pr[j];
    }
    for (std::size_t j = 0; j < cols; ++j) pr[j] /= total;
  }
  return p;
}

double mean_cross_entropy(std::span<const double> p, std::span<const double> y, std::size_t rows) {
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] != 0.0) total -= y[i] * std::log(std::max(p[i], kProbabilityFloor));
  }
  return total / static_cast<double>(rows);
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  require_rank(input, 4, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  require_rank(bias, 1, "conv2d bias");
  if (stride < 1) throw ParameterError("conv2d: stride must be >= 1");
  const auto& is = input.shape();
  const auto& ws = weight.shape();
  if (is[1] != ws[1]) {
    throw ShapeError("conv2d: input has " + std::to_string(is[1]) + " channels, weight expects " +
                     std::to_string(ws[1]));
  }
  if (bias.dim(0) != ws[0]) throw ShapeError("conv2d: bias length does not match output channels");
  if (ws[2] > is[2] + 2 * padding || ws[3] > is[3] + 2 * padding) {
    throw ShapeError("conv2d: kernel larger than padded input");
  }
  pin_blas_threads();
  ConvGeometry g{};
  g.n = static_cast<Index>(is[0]);
  g.c = static_cast<Index>(is[1]);
  g.h = static_cast<Index>(is[2]);
  g.w = static_cast<Index>(is[3]);
  g.k = static_cast<Index>(ws[0]);
  g.kh = static_cast<Index>(ws[2]);
  g.kw = static_cast<Index>(ws[3]);
  g.stride = static_cast<Index>(stride);
  g.pad = static_cast<Index>(padding);
  g.oh = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.ow = (g.w + 2 * g.pad - g.kw) / g.stride + 1;

  const Index in_sample = g.c * g.h * g.w;
  const Index out_sample = g.k * g.oh * g.ow;
  std::vector<double> out(static_cast<std::size_t>(g.n * out_sample));
  const double* in_ptr = input.data().data();
  const double* w_ptr = weight.data().data();
  const double* b_ptr = bias.data().data();
  parallel_chunks(static_cast<std::size_t>(g.n), [&](std::size_t, std::size_t begin, std::size_t end) {
    std::vector<double> col;
    for (auto s = static_cast<Index>(begin); s < static_cast<Index>(end); ++s) {
      conv_forward_sample(g, in_ptr + s * in_sample, w_ptr, b_ptr, out.data() + s * out_sample, col);
    }
  });

  Shape out_shape{is[0], ws[0], static_cast<std::size_t>(g.oh), static_cast<std::size_t>(g.ow)};
  return make_result(std::move(out_shape), std::move(out), "conv2d", {input, weight, bias},
                     [g, in_sample, out_sample](const Node& self) {
                       auto& in = *self.inputs[0];
                       auto& wt = *self.inputs[1];
                       auto& bs = *self.inputs[2];
                       double* gi = wants_grad(in) ? in.grad_slot().data() : nullptr;
                       const bool need_w = wants_grad(wt);
                       const bool need_b = wants_grad(bs);
                       const std::size_t wsize = wt.data.size();
                       const std::size_t chunks = chunk_count(static_cast<std::size_t>(g.n));
                       std::vector<double> gw(need_w ? wsize * chunks : 0);
                       std::vector<double> gb(need_b ? static_cast<std::size_t>(g.k) * chunks : 0);
                       parallel_chunks(static_cast<std::size_t>(g.n),
                                       [&](std::size_t chunk, std::size_t begin, std::size_t end) {
                                         double* gw_c = need_w ? gw.data() + chunk * wsize : nullptr;
                                         double* gb_c = need_b ? gb.data() + chunk * g.k : nullptr;
                                         std::vector<double> col;
                                         for (auto s = static_cast<Index>(begin); s < static_cast<Index>(end); ++s) {
                                           conv_backward_sample(g, in.data.data() + s * in_sample,
                                                                wt.data.data(),
                                                                self.grad.data() + s * out_sample,
                                                                gi ? gi + s * in_sample : nullptr, gw_c,
                                                                gb_c, col);
                                         }
                                       });
                       for (std::size_t chunk = 0; chunk < chunks; ++chunk) {
                         if (need_w) {
                           auto& dst = wt.grad_slot();
                           for (std::size_t i = 0; i < wsize; ++i) dst[i] += gw[chunk * wsize + i];
                         }
                         if (need_b) {
                           auto& dst = bs.grad_slot();
                           for (Index i = 0; i < g.k; ++i) dst[i] += gb[chunk * g.k + i];
                         }
                       }
                     });
}

Tensor max_pool2d(const Tensor& input, std::size_t k, std::size_t stride) {
  return pool2d(input, k, stride, PoolKind::Max);
}

Tensor avg_pool2d(const Tensor& input, std::size_t k, std::size_t stride) {
  return pool2d(input, k, stride, PoolKind::Average);
}

Tensor relu(const Tensor& input) {
  const auto src = input.data();
  std::vector<double> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = src[i] > 0.0 ? src[i] : 0.0;
  return make_result(input.shape(), std::move(out), "relu", {input}, [](const Node& self) {
    auto& in = *self.inputs[0];
    if (!wants_grad(in)) return;
    auto& g = in.grad_slot();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in.data[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(input, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  require_rank(bias, 1, "linear bias");
  const std::size_t n = input.dim(0), d = input.dim(1), m = weight.dim(0);
  if (weight.dim(1) != d) {
    throw ShapeError("linear: input width " + std::to_string(d) + " vs weight " +
                     to_string(weight.shape()));
  }
  if (bias.dim(0) != m) throw ShapeError("linear: bias length does not match output width");
  const auto x = input.data();
  const auto w = weight.data();
  const auto b = bias.data();
  std::vector<double> out(n * m);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t o = 0; o < m; ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < d; ++i) acc += x[r * d + i] * w[o * d + i];
      out[r * m + o] = acc;
    }
  }
  return make_result({n, m}, std::move(out), "linear", {input, weight, bias},
                     [n, d, m](const Node& self) {
                       auto& in = *self.inputs[0];
                       auto& wt = *self.inputs[1];
                       auto& bs = *self.inputs[2];
                       const auto& go = self.grad;
                       if (wants_grad(in)) {
                         auto& gi = in.grad_slot();
                         for (std::size_t r = 0; r < n; ++r)
                           for (std::size_t o = 0; o < m; ++o)
                             for (std::size_t i = 0; i < d; ++i) gi[r * d + i] += go[r * m + o] * wt.data[o * d + i];
                       }
                       if (wants_grad(wt)) {
                         auto& gw = wt.grad_slot();
                         for (std::size_t r = 0; r < n; ++r)
                           for (std::size_t o = 0; o < m; ++o)
                             for (std::size_t i = 0; i < d; ++i) gw[o * d + i] += go[r * m + o] * in.data[r * d + i];
                       }
                       if (wants_grad(bs)) {
                         auto& gb = bs.grad_slot();
                         for (std::size_t r = 0; r < n; ++r)
                           for (std::size_t o = 0; o < m; ++o) gb[o] += go[r * m + o];
                       }
                     });
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() != sb.size() || axis >= sa.size()) {
    throw ShapeError("concat: incompatible ranks " + to_string(sa) + " and " + to_string(sb));
  }
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (i != axis && sa[i] != sb[i]) {
      throw ShapeError("concat: extents differ off the join axis: " + to_string(sa) + " vs " +
                       to_string(sb));
    }
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= sa[i];
  for (std::size_t i = axis + 1; i < sa.size(); ++i) inner *= sa[i];
  const std::size_t block_a = sa[axis] * inner, block_b = sb[axis] * inner;
  Shape out_shape = sa;
  out_shape[axis] = sa[axis] + sb[axis];
  const auto da = a.data();
  const auto db = b.data();
  std::vector<double> out;
  out.reserve(outer * (block_a + block_b));
  for (std::size_t o = 0; o < outer; ++o) {
    out.insert(out.end(), da.begin() + o * block_a, da.begin() + (o + 1) * block_a);
    out.insert(out.end(), db.begin() + o * block_b, db.begin() + (o + 1) * block_b);
  }
  return make_result(std::move(out_shape), std::move(out), "concat", {a, b},
                     [outer, block_a, block_b](const Node& self) {
                       auto& na = *self.inputs[0];
                       auto& nb = *self.inputs[1];
                       const std::size_t stride = block_a + block_b;
                       if (wants_grad(na)) {
                         auto& g = na.grad_slot();
                         for (std::size_t o = 0; o < outer; ++o)
                           for (std::size_t i = 0; i < block_a; ++i) g[o * block_a + i] += self.grad[o * stride + i];
                       }
                       if (wants_grad(nb)) {
                         auto& g = nb.grad_slot();
                         for (std::size_t o = 0; o < outer; ++o)
                           for (std::size_t i = 0; i < block_b; ++i)
                             g[o * block_b + i] += self.grad[o * stride + block_a + i];
                       }
                     });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank()) throw ShapeError("concat_channels: rank mismatch");
  return concat(a, b, a.rank() - 1);
}

Tensor global_avg_pool(const Tensor& input) {
  require_rank(input, 4, "global_avg_pool");
  const auto& s = input.shape();
  const std::size_t planes = s[0] * s[1], area = s[2] * s[3];
  if (area == 0) throw ParameterError("global_avg_pool: empty spatial extent");
  const auto src = input.data();
  std::vector<double> out(planes);
  const double inv = 1.0 / static_cast<double>(area);
  for (std::size_t p = 0; p < planes; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < area; ++i) acc += src[p * area + i];
    out[p] = acc * inv;
  }
  return make_result({s[0], s[1]}, std::move(out), "global_avg_pool", {input},
                     [planes, area, inv](const Node& self) {
                       auto& in = *self.inputs[0];
                       if (!wants_grad(in)) return;
                       auto& g = in.grad_slot();
                       for (std::size_t p = 0; p < planes; ++p) {
                         const double share = self.grad[p] * inv;
                         for (std::size_t i = 0; i < area; ++i) g[p * area + i] += share;
                       }
                     });
}

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 2, "softmax");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  auto p = softmax_rows(logits.data(), rows, cols);
  return make_result({rows, cols}, std::move(p), "softmax", {logits},
                     [rows, cols](const Node& self) {
                       auto& in = *self.inputs[0];
                       if (!wants_grad(in)) return;
                       auto& g = in.grad_slot();
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* pr = self.data.data() + r * cols;
                         const double* gr = self.grad.data() + r * cols;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < cols; ++j) dot += gr[j] * pr[j];
                         for (std::size_t j = 0; j < cols; ++j) g[r * cols + j] += pr[j] * (gr[j] - dot);
                       }
                     });
}

Tensor dropout(const Tensor& input, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ParameterError("dropout: rate must lie in [0, 1)");
  if (!training || rate == 0.0) {
    return make_result(input.shape(), std::vector<double>(input.data().begin(), input.data().end()),
                       "dropout", {input}, [](const Node& self) {
                         auto& in = *self.inputs[0];
                         if (!wants_grad(in)) return;
                         auto& g = in.grad_slot();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                       });
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  const auto src = input.data();
  std::vector<double> mask(src.size());
  std::vector<double> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    mask[i] = uniform01(rng) < rate ? 0.0 : keep_scale;
    out[i] = src[i] * mask[i];
  }
  return make_result(input.shape(), std::move(out), "dropout", {input},
                     [mask = std::move(mask)](const Node& self) {
                       auto& in = *self.inputs[0];
                       if (!wants_grad(in)) return;
                       auto& g = in.grad_slot();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
                     });
}

Tensor cce_loss(const Tensor& probs, const Tensor& labels) {
  require_matching_2d(probs, labels, "cce_loss");
  validate_one_hot(labels);
  const std::size_t rows = probs.dim(0);
  const double value = mean_cross_entropy(probs.data(), labels.data(), rows);
  return make_result({1}, {value}, "cce_loss", {probs, labels}, [rows](const Node& self) {
    auto& p = *self.inputs[0];
    const auto& y = self.inputs[1]->data;
    if (!wants_grad(p)) return;
    auto& g = p.grad_slot();
    const double upstream = self.grad[0] / static_cast<double>(rows);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (y[i] != 0.0 && p.data[i] > kProbabilityFloor) g[i] -= upstream * y[i] / p.data[i];
    }
  });
}

Tensor softmax_cce_loss(const Tensor& logits, const Tensor& labels) {
  require_matching_2d(logits, labels, "softmax_cce_loss");
  validate_one_hot(labels);
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  auto p = softmax_rows(logits.data(), rows, cols);
  const double value = mean_cross_entropy(p, labels.data(), rows);
  return make_result({1}, {value}, "softmax_cce_loss", {logits, labels},
                     [rows, p = std::move(p)](const Node& self) {
                       auto& z = *self.inputs[0];
                       const auto& y = self.inputs[1]->data;
                       if (!wants_grad(z)) return;
                       auto& g = z.grad_slot();
                       const double upstream = self.grad[0] / static_cast<double>(rows);
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += upstream * (p[i] - y[i]);
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const auto da = a.data();
  const auto db = b.data();
  std::vector<double> out(da.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
  return make_result(a.shape(), std::move(out), "add", {a, b}, [](const Node& self) {
    for (const auto& in : self.inputs) {
      if (!wants_grad(*in)) continue;
      auto& g = in->grad_slot();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const auto da = a.data();
  const auto db = b.data();
  std::vector<double> out(da.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
  return make_result(a.shape(), std::move(out), "mul", {a, b}, [](const Node& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    if (wants_grad(na)) {
      auto& g = na.grad_slot();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * nb.data[i];
    }
    if (wants_grad(nb)) {
      auto& g = nb.grad_slot();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * na.data[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  const auto da = a.data();
  std::vector<double> out(da.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * factor;
  return make_result(a.shape(), std::move(out), "scale", {a}, [factor](const Node& self) {
    auto& in = *self.inputs[0];
    if (!wants_grad(in)) return;
    auto& g = in.grad_slot();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return make_result({1}, {acc}, "sum", {a}, [](const Node& self) {
    auto& in = *self.inputs[0];
    if (!wants_grad(in)) return;
    auto& g = in.grad_slot();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw ShapeError("reshape: " + to_string(a.shape()) + " to " + to_string(shape));
  }
  return make_result(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()),
                     "reshape", {a}, [](const Node& self) {
                       auto& in = *self.inputs[0];
                       if (!wants_grad(in)) return;
                       auto& g = in.grad_slot();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                     });
}

Tensor select_column(const Tensor& a, std::size_t c) {
  require_rank(a, 2, "select_column");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  if (c >= cols) throw ParameterError("select_column: column " + std::to_string(c) + " out of range");
  std::vector<double> out(rows);
  const auto src = a.data();
  for (std::size_t r = 0; r < rows; ++r) out[r] = src[r * cols + c];
  return make_result({rows}, std::move(out), "select_column", {a}, [rows, cols, c](const Node& self) {
    auto& in = *self.inputs[0];
    if (!wants_grad(in)) return;
    auto& g = in.grad_slot();
    for (std::size_t r = 0; r < rows; ++r) g[r * cols + c] += self.grad[r];
  });
}

double standard_normal(Rng& rng) {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace dggx
