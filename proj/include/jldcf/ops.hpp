#pragma once

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "jldcf/tensor.hpp"

namespace jldcf {

namespace detail {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

inline void require_rank(const Shape& s, std::size_t rank, const std::string& who) {
  if (s.size() != rank) {
    throw DimensionError("rank", who + " expects rank " + std::to_string(rank) + ", got " +
                                     shape_string(s));
  }
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const std::string& who) {
  if (a.shape() != b.shape()) {
    throw DimensionError("shape", who + ": " + shape_string(a.shape()) + " vs " +
                                      shape_string(b.shape()));
  }
}

template <class T>
void accumulate(Node<T>& input, std::span<const T> delta) {
  if (!input.requires_grad) return;
  auto& g = input.grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

inline std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, std::int64_t stride,
                                    std::int64_t dilation, std::int64_t padding) {
  const std::int64_t span = in + 2 * padding - dilation * (k - 1) - 1;
  if (span < 0) return 0;
  return span / stride + 1;
}

/// Unrolls one image (C x H x W) into a (C*kh*kw) x (Ho*Wo) matrix.
template <class T>
void im2col(const T* img, std::int64_t c, std::int64_t h, std::int64_t w, std::int64_t kh,
            std::int64_t kw, std::int64_t stride, std::int64_t dilation, std::int64_t pad,
            std::int64_t ho, std::int64_t wo, T* col) {
  for (std::int64_t ci = 0; ci < c; ++ci) {
    for (std::int64_t ky = 0; ky < kh; ++ky) {
      for (std::int64_t kx = 0; kx < kw; ++kx) {
        T* row = col + ((ci * kh + ky) * kw + kx) * ho * wo;
        for (std::int64_t oy = 0; oy < ho; ++oy) {
          const std::int64_t iy = oy * stride - pad + ky * dilation;
          T* dst = row + oy * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = img + (ci * h + iy) * w;
          for (std::int64_t ox = 0; ox < wo; ++ox) {
            const std::int64_t ix = ox * stride - pad + kx * dilation;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const T* col, std::int64_t c, std::int64_t h, std::int64_t w, std::int64_t kh,
            std::int64_t kw, std::int64_t stride, std::int64_t dilation, std::int64_t pad,
            std::int64_t ho, std::int64_t wo, T* img) {
  for (std::int64_t ci = 0; ci < c; ++ci) {
    for (std::int64_t ky = 0; ky < kh; ++ky) {
      for (std::int64_t kx = 0; kx < kw; ++kx) {
        const T* row = col + ((ci * kh + ky) * kw + kx) * ho * wo;
        for (std::int64_t oy = 0; oy < ho; ++oy) {
          const std::int64_t iy = oy * stride - pad + ky * dilation;
          if (iy < 0 || iy >= h) continue;
          T* dst = img + (ci * h + iy) * w;
          const T* src = row + oy * wo;
          for (std::int64_t ox = 0; ox < wo; ++ox) {
            const std::int64_t ix = ox * stride - pad + kx * dilation;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

/// Per-axis sampling table for aligned-corners bilinear resampling.
struct LerpTable {
  std::vector<std::int64_t> lo, hi;
  std::vector<double> frac;
};

inline LerpTable aligned_corners_table(std::int64_t in, std::int64_t out) {
  LerpTable t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  for (std::int64_t o = 0; o < out; ++o) {
    if (in == 1 || out == 1) {
      t.lo[o] = t.hi[o] = 0;
      t.frac[o] = 0.0;
      continue;
    }
    // position = o * (in-1) / (out-1), split into integer and fraction exactly
    const std::int64_t num = o * (in - 1);
    const std::int64_t den = out - 1;
    const std::int64_t base = num / den;
    t.lo[o] = base;
    t.hi[o] = std::min(base + 1, in - 1);
    t.frac[o] = static_cast<double>(num - base * den) / static_cast<double>(den);
  }
  return t;
}

}  // namespace detail

struct ConvOptions {
  std::int64_t stride = 1;
  std::int64_t dilation = 1;
  std::int64_t padding = 0;
};

/// 2-D convolution over an NCHW batch with an O x C x kh x kw filter bank.
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 ConvOptions opt = {}) {
  detail::require_rank(input.shape(), 4, "conv2d input");
  detail::require_rank(weight.shape(), 4, "conv2d weight");
  if (opt.stride < 1) throw DimensionError("stride", "conv2d stride must be >= 1");
  if (opt.dilation < 1) throw DimensionError("dilation", "conv2d dilation must be >= 1");
  if (opt.padding < 0) throw DimensionError("padding", "conv2d padding must be >= 0");
  const auto n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const auto o = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != c) {
    throw DimensionError("channels", "conv2d input has " + std::to_string(c) +
                                         " channels, weight expects " +
                                         std::to_string(weight.dim(1)));
  }
  if (bias.numel() != o) {
    throw DimensionError("bias", "conv2d bias has " + std::to_string(bias.numel()) +
                                     " entries for " + std::to_string(o) + " filters");
  }
  const auto ho = detail::conv_out_extent(h, kh, opt.stride, opt.dilation, opt.padding);
  const auto wo = detail::conv_out_extent(w, kw, opt.stride, opt.dilation, opt.padding);
  if (ho < 1) throw DimensionError("height", "conv2d output height < 1");
  if (wo < 1) throw DimensionError("width", "conv2d output width < 1");

  const std::int64_t kdim = c * kh * kw;
  const std::int64_t pix = ho * wo;
  const bool pointwise = kh == 1 && kw == 1 && opt.stride == 1 && opt.padding == 0;
  const bool record = grad_enabled() && (input.requires_grad() || weight.requires_grad() ||
                                         bias.requires_grad());

  std::vector<T> out(static_cast<std::size_t>(n * o * pix));
  auto cols = std::make_shared<std::vector<std::vector<T>>>();
  if (!pointwise) cols->resize(static_cast<std::size_t>(n));
  detail::ConstMatMap<T> wmat(weight.data().data(), o, kdim);
  std::vector<T> scratch;
  for (std::int64_t b = 0; b < n; ++b) {
    const T* img = input.data().data() + b * c * h * w;
    const T* colp = img;
    if (!pointwise) {
      auto& col = record ? (*cols)[b] : scratch;
      col.resize(static_cast<std::size_t>(kdim * pix));
      detail::im2col(img, c, h, w, kh, kw, opt.stride, opt.dilation, opt.padding, ho, wo,
                     col.data());
      colp = col.data();
    }
    detail::ConstMatMap<T> cmat(colp, kdim, pix);
    detail::MatMap<T> omat(out.data() + b * o * pix, o, pix);
    omat.noalias() = wmat * cmat;
    for (std::int64_t oc = 0; oc < o; ++oc) omat.row(oc).array() += bias.data()[oc];
  }

  return make_result<T>(
      "conv2d", {n, o, ho, wo}, std::move(out), {input, weight, bias},
      [=](Node<T>& self) {
        Node<T>& in = *self.inputs[0];
        Node<T>& wt = *self.inputs[1];
        Node<T>& bs = *self.inputs[2];
        detail::ConstMatMap<T> wm(wt.data.data(), o, kdim);
        std::vector<T> gcol;
        for (std::int64_t b = 0; b < n; ++b) {
          detail::ConstMatMap<T> gout(self.grad.data() + b * o * pix, o, pix);
          const T* colp = pointwise ? in.data.data() + b * c * h * w : (*cols)[b].data();
          if (wt.requires_grad) {
            detail::MatMap<T> gw(wt.grad_buffer().data(), o, kdim);
            detail::ConstMatMap<T> cm(colp, kdim, pix);
            gw.noalias() += gout * cm.transpose();
          }
          if (bs.requires_grad) {
            auto& gb = bs.grad_buffer();
            for (std::int64_t oc = 0; oc < o; ++oc) gb[oc] += gout.row(oc).sum();
          }
          if (in.requires_grad) {
            T* gimg = in.grad_buffer().data() + b * c * h * w;
            if (pointwise) {
              detail::MatMap<T> gi(gimg, c, pix);
              gi.noalias() += wm.transpose() * gout;
            } else {
              gcol.resize(static_cast<std::size_t>(kdim * pix));
              detail::MatMap<T> gc(gcol.data(), kdim, pix);
              gc.noalias() = wm.transpose() * gout;
              detail::col2im(gcol.data(), c, h, w, kh, kw, opt.stride, opt.dilation,
                             opt.padding, ho, wo, gimg);
            }
          }
        }
      });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = v > T(0) ? v : T(0);
  return make_result<T>("relu", x.shape(), std::move(out), {x}, [](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in.data[i] > T(0)) g[i] += self.grad[i];
    }
  });
}

template <class T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = stable_sigmoid(v);
  return make_result<T>("sigmoid", x.shape(), std::move(out), {x}, [](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T s = self.data[i];
      g[i] += self.grad[i] * s * (T(1) - s);
    }
  });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
  return make_result<T>("add", a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    detail::accumulate<T>(*self.inputs[0], self.grad);
    detail::accumulate<T>(*self.inputs[1], self.grad);
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
  return make_result<T>("mul", a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    Node<T>& x = *self.inputs[0];
    Node<T>& y = *self.inputs[1];
    if (x.requires_grad) {
      auto& g = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y.data[i];
    }
    if (y.requires_grad) {
      auto& g = y.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.data[i];
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return make_result<T>("scale", x.shape(), std::move(out), {x}, [factor](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

/// Sum of all elements as a rank-0-like {1} tensor.
template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = T(0);
  for (T v : x.data()) total += v;
  return make_result<T>("sum", {1}, {total}, {x}, [](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

/// Max pooling. Backward routes each window's gradient to its first maximum
/// in row-major order; padded cells never win.
template <class T>
Tensor<T> maxpool2d(const Tensor<T>& input, std::int64_t kernel, std::int64_t stride,
                    std::int64_t padding) {
  detail::require_rank(input.shape(), 4, "maxpool2d");
  if (kernel < 1) throw DimensionError("kernel", "maxpool2d kernel must be >= 1");
  if (stride < 1) throw DimensionError("stride", "maxpool2d stride must be >= 1");
  if (padding < 0 || padding >= kernel) {
    throw DimensionError("padding", "maxpool2d padding must lie in [0, kernel)");
  }
  const auto n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const auto ho = detail::conv_out_extent(h, kernel, stride, 1, padding);
  const auto wo = detail::conv_out_extent(w, kernel, stride, 1, padding);
  if (ho < 1) throw DimensionError("height", "maxpool2d output height < 1");
  if (wo < 1) throw DimensionError("width", "maxpool2d output width < 1");

  std::vector<T> out(static_cast<std::size_t>(n * c * ho * wo));
  auto argmax = std::make_shared<std::vector<std::int64_t>>(out.size());
  const T* src = input.data().data();
  for (std::int64_t plane = 0; plane < n * c; ++plane) {
    const T* p = src + plane * h * w;
    for (std::int64_t oy = 0; oy < ho; ++oy) {
      for (std::int64_t ox = 0; ox < wo; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::int64_t best_idx = -1;
        for (std::int64_t ky = 0; ky < kernel; ++ky) {
          const std::int64_t iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= h) continue;
          for (std::int64_t kx = 0; kx < kernel; ++kx) {
            const std::int64_t ix = ox * stride - padding + kx;
            if (ix < 0 || ix >= w) continue;
            const T v = p[iy * w + ix];
            if (best_idx < 0 || v > best) {
              best = v;
              best_idx = iy * w + ix;
            }
          }
        }
        const auto o = (plane * ho + oy) * wo + ox;
        out[o] = best;
        (*argmax)[o] = plane * h * w + best_idx;
      }
    }
  }
  return make_result<T>("maxpool2d", {n, c, ho, wo}, std::move(out), {input},
                        [argmax](Node<T>& self) {
                          Node<T>& in = *self.inputs[0];
                          if (!in.requires_grad) return;
                          auto& g = in.grad_buffer();
                          for (std::size_t i = 0; i < self.grad.size(); ++i) {
                            g[(*argmax)[i]] += self.grad[i];
                          }
                        });
}

/// Aligned-corners bilinear resampling of the two spatial axes to (oh, ow).
/// Linear in the input; the backward pass applies the exact transpose.
template <class T>
Tensor<T> resize_bilinear(const Tensor<T>& input, std::int64_t oh, std::int64_t ow) {
  detail::require_rank(input.shape(), 4, "resize_bilinear");
  if (oh < 1 || ow < 1) throw DimensionError("height", "resize target must be positive");
  const auto n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  auto ty = std::make_shared<detail::LerpTable>(detail::aligned_corners_table(h, oh));
  auto tx = std::make_shared<detail::LerpTable>(detail::aligned_corners_table(w, ow));
  std::vector<T> out(static_cast<std::size_t>(n * c * oh * ow));
  const T* src = input.data().data();
  for (std::int64_t plane = 0; plane < n * c; ++plane) {
    const T* p = src + plane * h * w;
    T* q = out.data() + plane * oh * ow;
    for (std::int64_t y = 0; y < oh; ++y) {
      const T fy = static_cast<T>(ty->frac[y]);
      const T* r0 = p + ty->lo[y] * w;
      const T* r1 = p + ty->hi[y] * w;
      for (std::int64_t x = 0; x < ow; ++x) {
        const T fx = static_cast<T>(tx->frac[x]);
        const auto x0 = tx->lo[x], x1 = tx->hi[x];
        const T top = r0[x0] + fx * (r0[x1] - r0[x0]);
        const T bot = r1[x0] + fx * (r1[x1] - r1[x0]);
        q[y * ow + x] = top + fy * (bot - top);
      }
    }
  }
  return make_result<T>(
      "resize_bilinear", {n, c, oh, ow}, std::move(out), {input}, [=](Node<T>& self) {
        Node<T>& in = *self.inputs[0];
        if (!in.requires_grad) return;
        auto& g = in.grad_buffer();
        for (std::int64_t plane = 0; plane < n * c; ++plane) {
          T* p = g.data() + plane * h * w;
          const T* q = self.grad.data() + plane * oh * ow;
          for (std::int64_t y = 0; y < oh; ++y) {
            const T fy = static_cast<T>(ty->frac[y]);
            T* r0 = p + ty->lo[y] * w;
            T* r1 = p + ty->hi[y] * w;
            for (std::int64_t x = 0; x < ow; ++x) {
              const T fx = static_cast<T>(tx->frac[x]);
              const auto x0 = tx->lo[x], x1 = tx->hi[x];
              const T go = q[y * ow + x];
              const T top = go * (T(1) - fy);
              const T bot = go * fy;
              r0[x0] += top * (T(1) - fx);
              r0[x1] += top * fx;
              r1[x0] += bot * (T(1) - fx);
              r1[x1] += bot * fx;
            }
          }
        }
      });
}

inline bool is_supported_upsample_factor(std::int64_t factor) {
  return factor == 2 || factor == 4 || factor == 8 || factor == 16;
}

/// Integer-factor bilinear upsampling (aligned corners). Factor in {2,4,8,16}.
template <class T>
Tensor<T> bilinear_upsample(const Tensor<T>& input, std::int64_t factor) {
  if (!is_supported_upsample_factor(factor)) {
    throw DimensionError("factor", "unsupported upsample factor " + std::to_string(factor));
  }
  detail::require_rank(input.shape(), 4, "bilinear_upsample");
  return resize_bilinear(input, input.dim(2) * factor, input.dim(3) * factor);
}

/// Stacks tensors along axis 0. All other extents must agree.
template <class T>
Tensor<T> concat_batch(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("batch", "concat_batch of nothing");
  Shape shape = parts.front().shape();
  if (shape.empty()) throw DimensionError("rank", "concat_batch needs rank >= 1");
  std::int64_t rows = 0;
  std::vector<T> out;
  for (const auto& p : parts) {
    if (p.rank() != shape.size()) throw DimensionError("rank", "concat_batch rank mismatch");
    for (std::size_t ax = 1; ax < shape.size(); ++ax) {
      if (p.dim(ax) != shape[ax]) {
        throw DimensionError(ax == 1 ? "channels" : ax == 2 ? "height" : ax == 3 ? "width" : "axis",
                             "concat_batch extent mismatch " + shape_string(p.shape()) +
                                 " vs " + shape_string(shape));
      }
    }
    rows += p.dim(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  shape[0] = rows;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) sizes.push_back(static_cast<std::size_t>(p.numel()));
  return make_result<T>("concat_batch", shape, std::move(out), parts, [sizes](Node<T>& self) {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      detail::accumulate<T>(*self.inputs[i],
                            std::span<const T>(self.grad.data() + offset, sizes[i]));
      offset += sizes[i];
    }
  });
}

template <class T>
Tensor<T> concat_batch(const Tensor<T>& a, const Tensor<T>& b) {
  return concat_batch<T>(std::vector<Tensor<T>>{a, b});
}

/// Rows [begin, begin+count) of axis 0.
template <class T>
Tensor<T> slice_batch(const Tensor<T>& t, std::int64_t begin, std::int64_t count) {
  if (t.rank() < 1) throw DimensionError("rank", "slice_batch needs rank >= 1");
  if (begin < 0 || count < 1 || begin + count > t.dim(0)) {
    throw DimensionError("batch", "slice [" + std::to_string(begin) + ", " +
                                      std::to_string(begin + count) + ") out of batch " +
                                      std::to_string(t.dim(0)));
  }
  const std::int64_t row = t.numel() / t.dim(0);
  Shape shape = t.shape();
  shape[0] = count;
  std::vector<T> out(t.data().begin() + begin * row, t.data().begin() + (begin + count) * row);
  return make_result<T>("slice_batch", shape, std::move(out), {t}, [=](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::int64_t i = 0; i < count * row; ++i) g[begin * row + i] += self.grad[i];
  });
}

/// Inverse of the two-way concat_batch: splits an even batch into halves.
template <class T>
std::pair<Tensor<T>, Tensor<T>> split_batch(const Tensor<T>& t) {
  if (t.rank() < 1 || t.dim(0) % 2 != 0) {
    throw DimensionError("batch", "split_batch needs an even batch extent, got " +
                                      shape_string(t.shape()));
  }
  const auto half = t.dim(0) / 2;
  return {slice_batch(t, 0, half), slice_batch(t, half, half)};
}

/// Concatenates NCHW tensors along the channel axis.
template <class T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("channels", "concat_channels of nothing");
  const auto& ref = parts.front();
  detail::require_rank(ref.shape(), 4, "concat_channels");
  const auto n = ref.dim(0), h = ref.dim(2), w = ref.dim(3);
  std::int64_t channels = 0;
  std::vector<std::int64_t> widths;
  for (const auto& p : parts) {
    detail::require_rank(p.shape(), 4, "concat_channels");
    if (p.dim(0) != n) throw DimensionError("batch", "concat_channels batch mismatch");
    if (p.dim(2) != h) throw DimensionError("height", "concat_channels height mismatch");
    if (p.dim(3) != w) throw DimensionError("width", "concat_channels width mismatch");
    widths.push_back(p.dim(1));
    channels += p.dim(1);
  }
  const std::int64_t plane = h * w;
  std::vector<T> out(static_cast<std::size_t>(n * channels * plane));
  for (std::int64_t b = 0; b < n; ++b) {
    std::int64_t off = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const T* src = parts[i].data().data() + b * widths[i] * plane;
      std::copy(src, src + widths[i] * plane, out.data() + (b * channels + off) * plane);
      off += widths[i];
    }
  }
  return make_result<T>(
      "concat_channels", {n, channels, h, w}, std::move(out), parts, [=](Node<T>& self) {
        for (std::int64_t b = 0; b < n; ++b) {
          std::int64_t off = 0;
          for (std::size_t i = 0; i < widths.size(); ++i) {
            Node<T>& in = *self.inputs[i];
            if (in.requires_grad) {
              auto& g = in.grad_buffer();
              const T* src = self.grad.data() + (b * channels + off) * plane;
              T* dst = g.data() + b * widths[i] * plane;
              for (std::int64_t j = 0; j < widths[i] * plane; ++j) dst[j] += src[j];
            }
            off += widths[i];
          }
        }
      });
}

/// Per-pixel softmax over the channel axis of an NCHW tensor.
template <class T>
Tensor<T> softmax_channels(const Tensor<T>& x) {
  detail::require_rank(x.shape(), 4, "softmax_channels");
  const auto n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  std::vector<T> out(x.data().begin(), x.data().end());
  for (std::int64_t b = 0; b < n; ++b) {
    T* base = out.data() + b * c * plane;
    for (std::int64_t p = 0; p < plane; ++p) {
      T mx = base[p];
      for (std::int64_t k = 1; k < c; ++k) mx = std::max(mx, base[k * plane + p]);
      T total = T(0);
      for (std::int64_t k = 0; k < c; ++k) {
        T& v = base[k * plane + p];
        v = std::exp(v - mx);
        total += v;
      }
      for (std::int64_t k = 0; k < c; ++k) base[k * plane + p] /= total;
    }
  }
  return make_result<T>("softmax_channels", x.shape(), std::move(out), {x}, [=](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::int64_t b = 0; b < n; ++b) {
      const T* s = self.data.data() + b * c * plane;
      const T* go = self.grad.data() + b * c * plane;
      T* gi = g.data() + b * c * plane;
      for (std::int64_t p = 0; p < plane; ++p) {
        T dot = T(0);
        for (std::int64_t k = 0; k < c; ++k) dot += s[k * plane + p] * go[k * plane + p];
        for (std::int64_t k = 0; k < c; ++k) {
          gi[k * plane + p] += s[k * plane + p] * (go[k * plane + p] - dot);
        }
      }
    }
  });
}

/// Horizontal mirror of an NCHW tensor (data augmentation, not recorded).
template <class T>
Tensor<T> mirror_horizontal(const Tensor<T>& x) {
  detail::require_rank(x.shape(), 4, "mirror_horizontal");
  const auto rows = x.dim(0) * x.dim(1) * x.dim(2), w = x.dim(3);
  std::vector<T> out(x.data().begin(), x.data().end());
  for (std::int64_t r = 0; r < rows; ++r) std::reverse(out.begin() + r * w, out.begin() + (r + 1) * w);
  return Tensor<T>(x.shape(), std::move(out));
}

}  // namespace jldcf
