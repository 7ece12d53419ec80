#pragma once

// Differentiable NCHW operations over BasicTensor. Each op computes its
// forward value eagerly and, when any input requires grad, records a
// backward closure on the result node.

#include "anglseg/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace anglseg {

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride = 1;
  std::size_t dilation = 1;
  std::size_t padding = 0;

  void validate() const {
    if (in_channels < 1 || out_channels < 1 || kernel_h < 1 || kernel_w < 1 || stride < 1 || dilation < 1) {
      throw std::invalid_argument("ConvSpec: channels, kernel, stride and dilation must be >= 1");
    }
  }

  /// floor((n + 2p - d(k-1) - 1)/s) + 1, or 0 when the window does not fit.
  std::size_t output_extent(std::size_t n, std::size_t k) const {
    const auto span = dilation * (k - 1) + 1;
    if (n + 2 * padding < span) return 0;
    return (n + 2 * padding - span) / stride + 1;
  }
  std::size_t output_height(std::size_t h) const { return output_extent(h, kernel_h); }
  std::size_t output_width(std::size_t w) const { return output_extent(w, kernel_w); }
};

/// 3x3 convolution with "same" padding for the given dilation and stride.
inline ConvSpec conv3x3(std::size_t in, std::size_t out, std::size_t stride = 1, std::size_t dilation = 1) {
  return ConvSpec{in, out, 3, 3, stride, dilation, dilation};
}

inline ConvSpec conv1x1(std::size_t in, std::size_t out, std::size_t stride = 1) {
  return ConvSpec{in, out, 1, 1, stride, 1, 0};
}

namespace detail {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline void require_rank(const char* op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) throw ShapeError(op, "rank", rank, s.size());
}

template <typename Scalar>
void im2col(const Scalar* x, std::size_t channels, std::size_t height, std::size_t width, const ConvSpec& spec,
            std::size_t out_h, std::size_t out_w, Scalar* cols) {
  const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < spec.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < spec.kernel_w; ++kj) {
        Scalar* row = cols + ((c * spec.kernel_h + ki) * spec.kernel_w + kj) * out_h * out_w;
        for (std::size_t oh = 0; oh < out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * spec.stride + ki * spec.dilation) - pad;
          Scalar* dst = row + oh * out_w;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(height)) {
            std::fill(dst, dst + out_w, Scalar(0));
            continue;
          }
          const Scalar* src = x + (c * height + static_cast<std::size_t>(ih)) * width;
          for (std::size_t ow = 0; ow < out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * spec.stride + kj * spec.dilation) - pad;
            dst[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(width)) ? Scalar(0) : src[iw];
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im(const Scalar* cols, std::size_t channels, std::size_t height, std::size_t width, const ConvSpec& spec,
            std::size_t out_h, std::size_t out_w, Scalar* dx) {
  const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < spec.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < spec.kernel_w; ++kj) {
        const Scalar* row = cols + ((c * spec.kernel_h + ki) * spec.kernel_w + kj) * out_h * out_w;
        for (std::size_t oh = 0; oh < out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * spec.stride + ki * spec.dilation) - pad;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(height)) continue;
          Scalar* dst = dx + (c * height + static_cast<std::size_t>(ih)) * width;
          const Scalar* src = row + oh * out_w;
          for (std::size_t ow = 0; ow < out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * spec.stride + kj * spec.dilation) - pad;
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(width)) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

template <typename Scalar>
bool is_pointwise(const ConvSpec& spec) {
  return spec.kernel_h == 1 && spec.kernel_w == 1 && spec.stride == 1 && spec.padding == 0;
}

}  // namespace detail

/// 2-D cross-correlation, NCHW input, [out, in, kh, kw] weights, optional
/// [out] bias (pass an undefined tensor to omit it).
template <typename Scalar>
BasicTensor<Scalar> conv2d(const BasicTensor<Scalar>& input, const BasicTensor<Scalar>& weights,
                           const BasicTensor<Scalar>& bias, const ConvSpec& spec) {
  using Mat = detail::RowMatrix<Scalar>;
  using Array = typename BasicTensor<Scalar>::Array;
  spec.validate();
  detail::require_rank("conv2d", input.shape(), 4);
  detail::require_rank("conv2d", weights.shape(), 4);
  const auto n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (c != spec.in_channels) throw ShapeError("conv2d", "input channels", spec.in_channels, c);
  if (weights.dim(0) != spec.out_channels) throw ShapeError("conv2d", "weight out channels", spec.out_channels, weights.dim(0));
  if (weights.dim(1) != spec.in_channels) throw ShapeError("conv2d", "weight in channels", spec.in_channels, weights.dim(1));
  if (weights.dim(2) != spec.kernel_h) throw ShapeError("conv2d", "kernel height", spec.kernel_h, weights.dim(2));
  if (weights.dim(3) != spec.kernel_w) throw ShapeError("conv2d", "kernel width", spec.kernel_w, weights.dim(3));
  if (bias.defined() && bias.numel() != spec.out_channels) throw ShapeError("conv2d", "bias length", spec.out_channels, bias.numel());
  const auto oh = spec.output_height(h), ow = spec.output_width(w);
  if (oh == 0) throw ShapeError("conv2d", "input height too small for kernel");
  if (ow == 0) throw ShapeError("conv2d", "input width too small for kernel");

  const auto k = c * spec.kernel_h * spec.kernel_w;
  const auto p = oh * ow;
  const auto co = spec.out_channels;
  const bool pointwise = detail::is_pointwise<Scalar>(spec);

  Array out(static_cast<Eigen::Index>(n * co * p));
  Eigen::Map<const Mat> wmat(weights.data(), co, k);
  Mat cols;
  if (!pointwise) cols.resize(k, p);
  for (std::size_t b = 0; b < n; ++b) {
    const Scalar* xb = input.data() + b * c * h * w;
    Eigen::Map<Mat> ob(out.data() + b * co * p, co, p);
    if (pointwise) {
      ob.noalias() = wmat * Eigen::Map<const Mat>(xb, k, p);
    } else {
      detail::im2col(xb, c, h, w, spec, oh, ow, cols.data());
      ob.noalias() = wmat * cols;
    }
    if (bias.defined()) {
      ob.colwise() += Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(bias.data(), co);
    }
  }

  auto xn = input.node();
  auto wn = weights.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  return detail::make_result<Scalar>(
      {n, co, oh, ow}, std::move(out), "conv2d", {&input, &weights, &bias},
      [xn, wn, bn, spec, n, c, h, w, oh, ow, k, p, co, pointwise](TensorNode<Scalar>& self) {
        Eigen::Map<const Mat> wmat(wn->value.data(), co, k);
        Mat cols(k, p), dcols(k, p);
        Scalar* dx = xn->requires_grad ? xn->grad_buffer().data() : nullptr;
        for (std::size_t b = 0; b < n; ++b) {
          Eigen::Map<const Mat> gb(self.grad.data() + b * co * p, co, p);
          const Scalar* xb = xn->value.data() + b * c * h * w;
          if (wn->requires_grad) {
            Eigen::Map<Mat> dw(wn->grad_buffer().data(), co, k);
            if (pointwise) {
              dw.noalias() += gb * Eigen::Map<const Mat>(xb, k, p).transpose();
            } else {
              detail::im2col(xb, c, h, w, spec, oh, ow, cols.data());
              dw.noalias() += gb * cols.transpose();
            }
          }
          if (bn && bn->requires_grad) {
            bn->grad_buffer().matrix() += gb.rowwise().sum();
          }
          if (dx) {
            if (pointwise) {
              Eigen::Map<Mat>(dx + b * c * h * w, k, p).noalias() += wmat.transpose() * gb;
            } else {
              dcols.noalias() = wmat.transpose() * gb;
              detail::col2im(dcols.data(), c, h, w, spec, oh, ow, dx + b * c * h * w);
            }
          }
        }
      });
}

enum class BatchNormMode { train, eval };

template <typename Scalar>
struct BatchNormState {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  Array running_mean;
  Array running_var;
  Scalar momentum = Scalar(0.1);
  Scalar eps = Scalar(1e-5);

  BatchNormState() = default;
  explicit BatchNormState(std::size_t channels)
      : running_mean(Array::Zero(static_cast<Eigen::Index>(channels))),
        running_var(Array::Ones(static_cast<Eigen::Index>(channels))) {}
};

/// Per-channel normalization. Train mode uses biased batch variance for the
/// output and folds the unbiased variance into the running estimate.
template <typename Scalar>
BasicTensor<Scalar> batch_norm(const BasicTensor<Scalar>& input, const BasicTensor<Scalar>& gamma,
                               const BasicTensor<Scalar>& beta, BatchNormState<Scalar>& state, BatchNormMode mode) {
  using Array = typename BasicTensor<Scalar>::Array;
  detail::require_rank("batch_norm", input.shape(), 4);
  const auto n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  if (gamma.numel() != c) throw ShapeError("batch_norm", "gamma length", c, gamma.numel());
  if (beta.numel() != c) throw ShapeError("batch_norm", "beta length", c, beta.numel());
  if (static_cast<std::size_t>(state.running_mean.size()) != c) {
    throw ShapeError("batch_norm", "running stats length", c, static_cast<std::size_t>(state.running_mean.size()));
  }
  const auto m = n * hw;
  if (mode == BatchNormMode::train && m < 2) throw ShapeError("batch_norm", "N*H*W (train mode needs >= 2)", 2, m);

  const Scalar* x = input.data();
  Array out(static_cast<Eigen::Index>(input.numel()));
  Array xhat(static_cast<Eigen::Index>(input.numel()));
  Array inv_std(static_cast<Eigen::Index>(c));

  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean = 0.0, var = 0.0;
    if (mode == BatchNormMode::train) {
      for (std::size_t b = 0; b < n; ++b) {
        const Scalar* xc = x + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) mean += xc[i];
      }
      mean /= static_cast<double>(m);
      for (std::size_t b = 0; b < n; ++b) {
        const Scalar* xc = x + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const double d = xc[i] - mean;
          var += d * d;
        }
      }
      const double unbiased = var / static_cast<double>(m - 1);
      var /= static_cast<double>(m);
      state.running_mean[ch] = static_cast<Scalar>((1.0 - state.momentum) * state.running_mean[ch] + state.momentum * mean);
      state.running_var[ch] = static_cast<Scalar>((1.0 - state.momentum) * state.running_var[ch] + state.momentum * unbiased);
    } else {
      mean = state.running_mean[ch];
      var = state.running_var[ch];
    }
    const double is = 1.0 / std::sqrt(var + static_cast<double>(state.eps));
    inv_std[ch] = static_cast<Scalar>(is);
    const Scalar g = gamma.data()[ch], bt = beta.data()[ch];
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const auto xh = static_cast<Scalar>((x[off + i] - mean) * is);
        xhat[off + i] = xh;
        out[off + i] = g * xh + bt;
      }
    }
  }

  auto xn = input.node(), gn = gamma.node(), bn = beta.node();
  const bool train = mode == BatchNormMode::train;
  return detail::make_result<Scalar>(
      input.shape(), std::move(out), "batch_norm", {&input, &gamma, &beta},
      [xn, gn, bn, xhat = std::move(xhat), inv_std, n, c, hw, m, train](TensorNode<Scalar>& self) {
        const auto& gy = self.grad;
        for (std::size_t ch = 0; ch < c; ++ch) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t off = (b * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              sum_g += gy[off + i];
              sum_gx += static_cast<double>(gy[off + i]) * xhat[off + i];
            }
          }
          if (gn->requires_grad) gn->grad_buffer()[ch] += static_cast<Scalar>(sum_gx);
          if (bn->requires_grad) bn->grad_buffer()[ch] += static_cast<Scalar>(sum_g);
          if (!xn->requires_grad) continue;
          auto& dx = xn->grad_buffer();
          const double g = gn->value[ch];
          const double is = inv_std[ch];
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t off = (b * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              if (train) {
                const double md = static_cast<double>(m);
                dx[off + i] += static_cast<Scalar>(g * is / md * (md * gy[off + i] - sum_g - xhat[off + i] * sum_gx));
              } else {
                dx[off + i] += static_cast<Scalar>(g * is * gy[off + i]);
              }
            }
          }
        }
      });
}

namespace detail {

struct LerpTable {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

/// align_corners=false source coordinates: src = (dst + 0.5)/f - 0.5, clamped at 0.
inline LerpTable lerp_table(std::size_t in, std::size_t factor) {
  LerpTable t;
  const auto out = in * factor;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    src = std::max(src, 0.0);
    auto i0 = static_cast<std::size_t>(std::floor(src));
    i0 = std::min(i0, in - 1);
    t.lo[o] = i0;
    t.hi[o] = std::min(i0 + 1, in - 1);
    t.frac[o] = src - static_cast<double>(i0);
  }
  return t;
}

}  // namespace detail

template <typename Scalar>
BasicTensor<Scalar> bilinear_upsample(const BasicTensor<Scalar>& input, std::size_t factor) {
  using Array = typename BasicTensor<Scalar>::Array;
  if (factor < 1) throw std::invalid_argument("bilinear_upsample: factor must be >= 1");
  detail::require_rank("bilinear_upsample", input.shape(), 4);
  if (factor == 1) return input;
  const auto n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const auto oh = h * factor, ow = w * factor;
  const auto ty = detail::lerp_table(h, factor);
  const auto tx = detail::lerp_table(w, factor);

  Array out(static_cast<Eigen::Index>(n * c * oh * ow));
  const Scalar* x = input.data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const Scalar* src = x + plane * h * w;
    Scalar* dst = out.data() + plane * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      const Scalar* r0 = src + ty.lo[y] * w;
      const Scalar* r1 = src + ty.hi[y] * w;
      const double fy = ty.frac[y];
      for (std::size_t xo = 0; xo < ow; ++xo) {
        const double fx = tx.frac[xo];
        const double top = r0[tx.lo[xo]] * (1.0 - fx) + r0[tx.hi[xo]] * fx;
        const double bot = r1[tx.lo[xo]] * (1.0 - fx) + r1[tx.hi[xo]] * fx;
        dst[y * ow + xo] = static_cast<Scalar>(top * (1.0 - fy) + bot * fy);
      }
    }
  }

  auto xn = input.node();
  return detail::make_result<Scalar>(
      {n, c, oh, ow}, std::move(out), "bilinear_upsample", {&input},
      [xn, ty, tx, n, c, h, w, oh, ow](TensorNode<Scalar>& self) {
        auto& dx = xn->grad_buffer();
        for (std::size_t plane = 0; plane < n * c; ++plane) {
          const Scalar* g = self.grad.data() + plane * oh * ow;
          Scalar* d = dx.data() + plane * h * w;
          for (std::size_t y = 0; y < oh; ++y) {
            const double fy = ty.frac[y];
            Scalar* r0 = d + ty.lo[y] * w;
            Scalar* r1 = d + ty.hi[y] * w;
            for (std::size_t xo = 0; xo < ow; ++xo) {
              const double fx = tx.frac[xo];
              const double gv = g[y * ow + xo];
              r0[tx.lo[xo]] += static_cast<Scalar>(gv * (1.0 - fy) * (1.0 - fx));
              r0[tx.hi[xo]] += static_cast<Scalar>(gv * (1.0 - fy) * fx);
              r1[tx.lo[xo]] += static_cast<Scalar>(gv * fy * (1.0 - fx));
              r1[tx.hi[xo]] += static_cast<Scalar>(gv * fy * fx);
            }
          }
        }
      });
}

template <typename Scalar>
BasicTensor<Scalar> relu(const BasicTensor<Scalar>& input) {
  auto xn = input.node();
  return detail::make_result<Scalar>(input.shape(), input.values().max(Scalar(0)), "relu", {&input},
                                     [xn](TensorNode<Scalar>& self) {
                                       xn->grad_buffer() += (xn->value > Scalar(0)).select(self.grad, Scalar(0));
                                     });
}

template <typename Scalar>
BasicTensor<Scalar> add(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add", "operand shapes differ: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  auto an = a.node(), bn = b.node();
  return detail::make_result<Scalar>(a.shape(), a.values() + b.values(), "add", {&a, &b},
                                     [an, bn](TensorNode<Scalar>& self) {
                                       if (an->requires_grad) an->grad_buffer() += self.grad;
                                       if (bn->requires_grad) bn->grad_buffer() += self.grad;
                                     });
}

template <typename Scalar>
BasicTensor<Scalar> scale(const BasicTensor<Scalar>& a, Scalar s) {
  auto an = a.node();
  return detail::make_result<Scalar>(a.shape(), a.values() * s, "scale", {&a},
                                     [an, s](TensorNode<Scalar>& self) { an->grad_buffer() += self.grad * s; });
}

/// Concatenation along dim 1; all inputs must agree on N, H, W.
template <typename Scalar>
BasicTensor<Scalar> concat_channels(const std::vector<BasicTensor<Scalar>>& inputs) {
  using Array = typename BasicTensor<Scalar>::Array;
  if (inputs.empty()) throw ShapeError("concat_channels", "at least one input required");
  for (const auto& t : inputs) detail::require_rank("concat_channels", t.shape(), 4);
  const auto n = inputs[0].dim(0), h = inputs[0].dim(2), w = inputs[0].dim(3);
  std::size_t c_total = 0;
  for (const auto& t : inputs) {
    if (t.dim(0) != n) throw ShapeError("concat_channels", "batch", n, t.dim(0));
    if (t.dim(2) != h) throw ShapeError("concat_channels", "height", h, t.dim(2));
    if (t.dim(3) != w) throw ShapeError("concat_channels", "width", w, t.dim(3));
    c_total += t.dim(1);
  }
  const auto hw = h * w;
  Array out(static_cast<Eigen::Index>(n * c_total * hw));
  std::vector<std::shared_ptr<TensorNode<Scalar>>> nodes;
  std::vector<std::size_t> widths;
  for (std::size_t b = 0; b < n; ++b) {
    std::size_t c_off = 0;
    for (const auto& t : inputs) {
      const auto ct = t.dim(1);
      std::copy_n(t.data() + b * ct * hw, ct * hw, out.data() + (b * c_total + c_off) * hw);
      c_off += ct;
    }
  }
  for (const auto& t : inputs) {
    nodes.push_back(t.node());
    widths.push_back(t.dim(1));
  }

  auto node = std::make_shared<TensorNode<Scalar>>();
  node->shape = {n, c_total, h, w};
  node->value = std::move(out);
  node->op = "concat_channels";
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& t : inputs) needs = needs || t.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = nodes;
    node->backward_fn = [nodes, widths, n, c_total, hw](TensorNode<Scalar>& self) {
      std::size_t c_off = 0;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto ct = widths[i];
        if (nodes[i]->requires_grad) {
          auto& g = nodes[i]->grad_buffer();
          for (std::size_t b = 0; b < n; ++b) {
            g.segment(static_cast<Eigen::Index>(b * ct * hw), static_cast<Eigen::Index>(ct * hw)) +=
                self.grad.segment(static_cast<Eigen::Index>((b * c_total + c_off) * hw), static_cast<Eigen::Index>(ct * hw));
          }
        }
        c_off += ct;
      }
    };
  }
  return BasicTensor<Scalar>(std::move(node));
}

/// Non-overlapping average pooling (stride = window). Border windows that
/// extend past the input are averaged over their in-bounds pixels, so the
/// output extent is ceil(H / window).
template <typename Scalar>
BasicTensor<Scalar> avg_pool2d(const BasicTensor<Scalar>& input, std::size_t window) {
  using Array = typename BasicTensor<Scalar>::Array;
  if (window < 1) throw std::invalid_argument("avg_pool2d: window must be >= 1");
  detail::require_rank("avg_pool2d", input.shape(), 4);
  const auto n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const auto oh = (h + window - 1) / window, ow = (w + window - 1) / window;
  Array out = Array::Zero(static_cast<Eigen::Index>(n * c * oh * ow));
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const Scalar* src = input.data() + plane * h * w;
    Scalar* dst = out.data() + plane * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      const auto y1 = std::min(h, (y + 1) * window);
      for (std::size_t x = 0; x < ow; ++x) {
        const auto x1 = std::min(w, (x + 1) * window);
        double acc = 0.0;
        for (std::size_t yy = y * window; yy < y1; ++yy)
          for (std::size_t xx = x * window; xx < x1; ++xx) acc += src[yy * w + xx];
        dst[y * ow + x] = static_cast<Scalar>(acc / static_cast<double>((y1 - y * window) * (x1 - x * window)));
      }
    }
  }
  auto xn = input.node();
  return detail::make_result<Scalar>(
      {n, c, oh, ow}, std::move(out), "avg_pool2d", {&input}, [xn, n, c, h, w, oh, ow, window](TensorNode<Scalar>& self) {
        auto& dx = xn->grad_buffer();
        for (std::size_t plane = 0; plane < n * c; ++plane) {
          const Scalar* g = self.grad.data() + plane * oh * ow;
          Scalar* d = dx.data() + plane * h * w;
          for (std::size_t y = 0; y < oh; ++y) {
            const auto y1 = std::min(h, (y + 1) * window);
            for (std::size_t x = 0; x < ow; ++x) {
              const auto x1 = std::min(w, (x + 1) * window);
              const auto share = g[y * ow + x] / static_cast<Scalar>((y1 - y * window) * (x1 - x * window));
              for (std::size_t yy = y * window; yy < y1; ++yy)
                for (std::size_t xx = x * window; xx < x1; ++xx) d[yy * w + xx] += share;
            }
          }
        }
      });
}

template <typename Scalar>
struct CrossEntropyResult {
  BasicTensor<Scalar> loss;     // scalar (rank 0)
  std::size_t counted = 0;      // non-ignored pixels
  bool all_ignored() const { return counted == 0; }
};

/// Mean negative log-likelihood over non-ignored pixels of NCHW logits.
/// `labels` holds N*H*W class ids in row-major order.
template <typename Scalar>
CrossEntropyResult<Scalar> softmax_cross_entropy(const BasicTensor<Scalar>& logits, std::span<const std::int32_t> labels,
                                                 std::int32_t ignore_index = -1) {
  using Array = typename BasicTensor<Scalar>::Array;
  detail::require_rank("softmax_cross_entropy", logits.shape(), 4);
  const auto n = logits.dim(0), k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  if (labels.size() != n * hw) throw ShapeError("softmax_cross_entropy", "label count", n * hw, labels.size());

  // d(loss)/d(logits) is computed alongside the forward value and kept for backward
  Array dlogits = Array::Zero(static_cast<Eigen::Index>(logits.numel()));
  double total = 0.0;
  std::size_t counted = 0;
  const Scalar* x = logits.data();
  std::vector<double> prob(k);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < hw; ++i) {
      const auto label = labels[b * hw + i];
      if (label == ignore_index) continue;
      if (label < 0 || static_cast<std::size_t>(label) >= k) {
        throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(label) + " outside [0, " +
                                std::to_string(k) + ")");
      }
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, static_cast<double>(x[(b * k + c) * hw + i]));
      double z = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        prob[c] = std::exp(static_cast<double>(x[(b * k + c) * hw + i]) - mx);
        z += prob[c];
      }
      total += std::log(z) + mx - static_cast<double>(x[(b * k + static_cast<std::size_t>(label)) * hw + i]);
      for (std::size_t c = 0; c < k; ++c) {
        dlogits[static_cast<Eigen::Index>((b * k + c) * hw + i)] =
            static_cast<Scalar>(prob[c] / z - (c == static_cast<std::size_t>(label) ? 1.0 : 0.0));
      }
      ++counted;
    }
  }
  Array value(1);
  value[0] = counted ? static_cast<Scalar>(total / static_cast<double>(counted)) : Scalar(0);
  if (counted) dlogits /= static_cast<Scalar>(counted);

  auto xn = logits.node();
  auto loss = detail::make_result<Scalar>(Shape{}, std::move(value), "softmax_cross_entropy", {&logits},
                                          [xn, dlogits = std::move(dlogits)](TensorNode<Scalar>& self) {
                                            xn->grad_buffer() += dlogits * self.grad[0];
                                          });
  return {std::move(loss), counted};
}

/// Per-pixel argmax over channels of NCHW logits; ties resolve to the lowest class.
template <typename Scalar>
std::vector<std::int32_t> argmax_channels(const BasicTensor<Scalar>& logits) {
  detail::require_rank("argmax_channels", logits.shape(), 4);
  const auto n = logits.dim(0), k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  std::vector<std::int32_t> out(n * hw);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < hw; ++i) {
      std::size_t best = 0;
      Scalar best_v = logits.data()[(b * k) * hw + i];
      for (std::size_t c = 1; c < k; ++c) {
        const Scalar v = logits.data()[(b * k + c) * hw + i];
        if (v > best_v) {
          best_v = v;
          best = c;
        }
      }
      out[b * hw + i] = static_cast<std::int32_t>(best);
    }
  }
  return out;
}

}  // namespace anglseg
