#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <utility>
#include <vector>

#include "jldcf/backbone.hpp"

namespace jldcf {

/// Raw single-channel depth, row-major, arbitrary units.
struct DepthMap {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<double> values;
};

/// Gray color mapping of depth: affine normalization to [0, 255], then the
/// single channel replicated three times. Constant maps become all zeros.
template <class T>
Tensor<T> depth_to_3ch(const DepthMap& d) {
  if (d.height < 1 || d.width < 1 || d.values.empty()) throw DataError("empty depth map");
  if (static_cast<std::int64_t>(d.values.size()) != d.height * d.width) {
    throw DimensionError("numel", "depth map holds " + std::to_string(d.values.size()) +
                                      " values for " + std::to_string(d.height) + "x" +
                                      std::to_string(d.width));
  }
  const auto [lo, hi] = std::minmax_element(d.values.begin(), d.values.end());
  const double range = *hi - *lo;
  const std::size_t plane = d.values.size();
  std::vector<T> out(3 * plane, T(0));
  if (range > 0.0) {
    for (std::size_t i = 0; i < plane; ++i) {
      const T v = static_cast<T>((d.values[i] - *lo) / range * 255.0);
      out[i] = out[plane + i] = out[2 * plane + i] = v;
    }
  }
  return Tensor<T>({1, 3, d.height, d.width}, std::move(out));
}

/// Stacks RGB (row 0) and the 3-channel depth (row 1) along the batch axis.
template <class T>
Tensor<T> form_batch(const Tensor<T>& rgb, const Tensor<T>& depth3) {
  if (rgb.rank() != 4 || depth3.rank() != 4) throw DimensionError("rank", "form_batch expects NCHW");
  if (rgb.dim(0) != 1 || depth3.dim(0) != 1) {
    throw DimensionError("batch", "form_batch expects single images");
  }
  if (rgb.dim(1) != 3 || depth3.dim(1) != 3) {
    throw DimensionError("channels", "form_batch expects 3-channel inputs");
  }
  if (rgb.dim(2) != depth3.dim(2)) throw DimensionError("height", "form_batch size mismatch");
  if (rgb.dim(3) != depth3.dim(3)) throw DimensionError("width", "form_batch size mismatch");
  return concat_batch(rgb, depth3);
}

/// Six 3x3 conv + ReLU compressors, each mapping a hierarchy to k channels.
template <class T>
class CpModules {
 public:
  CpModules() = default;

  CpModules(const std::array<std::int64_t, kHierarchies>& in_channels, std::int64_t k,
            ParameterStore<T>& store, Rng& rng)
      : k_(k) {
    for (int i = 0; i < kHierarchies; ++i) {
      convs_[i] = ConvLayer<T>(store, "cp" + std::to_string(i + 1), in_channels[i], k, 3,
                               same_padding(3), rng);
    }
  }

  std::int64_t k() const { return k_; }

  std::array<Tensor<T>, kHierarchies> forward(const std::array<Tensor<T>, kHierarchies>& f) const {
    std::array<Tensor<T>, kHierarchies> out;
    for (int i = 0; i < kHierarchies; ++i) {
      if (f[i].rank() != 4 || f[i].dim(1) != convs_[i].in_channels()) {
        throw DimensionError("channels", "CP" + std::to_string(i + 1) + " expects " +
                                             std::to_string(convs_[i].in_channels()) +
                                             " channels, got " + shape_string(f[i].shape()));
      }
      out[i] = relu(convs_[i](f[i]));
    }
    return out;
  }

 private:
  std::int64_t k_ = 0;
  std::array<ConvLayer<T>, kHierarchies> convs_;
};

/// (1x1, 1) convolution + sigmoid on the CP6 batch: one coarse map per row.
template <class T>
class CoarseHead {
 public:
  CoarseHead() = default;
  CoarseHead(std::int64_t k, ParameterStore<T>& store, Rng& rng)
      : conv_(store, "coarse_head", k, 1, 1, {}, rng) {}

  /// Coarse maps for every batch row, shape rows x 1 x h x h.
  Tensor<T> forward(const Tensor<T>& cp6) const { return sigmoid(conv_(cp6)); }

  /// Two-row batch -> (S_c_rgb, S_c_d).
  std::pair<Tensor<T>, Tensor<T>> predict_pair(const Tensor<T>& cp6) const {
    if (cp6.rank() != 4 || cp6.dim(0) != 2) {
      throw DimensionError("batch", "coarse prediction expects a batch of 2, got " +
                                        shape_string(cp6.shape()));
    }
    return split_batch(forward(cp6));
  }

  const ConvLayer<T>& conv() const { return conv_; }

 private:
  ConvLayer<T> conv_;
};

}  // namespace jldcf
