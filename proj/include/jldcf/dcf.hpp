#pragma once

#include <array>
#include <string>
#include <vector>

#include "jldcf/config.hpp"
#include "jldcf/layers.hpp"

namespace jldcf {

/// Cross-modal fusion of a two-row batch: X_rgb + X_d + X_rgb * X_d.
template <class T>
Tensor<T> cm_fuse(const Tensor<T>& batch_feat) {
  if (batch_feat.rank() != 4 || batch_feat.dim(0) != 2) {
    throw DimensionError("batch", "cm_fuse expects a batch of 2, got " +
                                      shape_string(batch_feat.shape()));
  }
  auto [rgb, depth] = split_batch(batch_feat);
  return add(add(rgb, depth), mul(rgb, depth));
}

/// Branch widths of the Inception-style FA block.
struct FaConfig {
  std::int64_t in_channels = 64;
  std::array<std::int64_t, 4> branch_width{16, 16, 16, 16};

  std::int64_t out_channels() const {
    return branch_width[0] + branch_width[1] + branch_width[2] + branch_width[3];
  }

  static FaConfig uniform(std::int64_t in_channels, std::int64_t k) {
    return {in_channels, {k / 4, k / 4, k / 4, k / 4}};
  }
};

/// Four parallel stride-1 branches, concatenated along channels:
/// 1x1 | 1x1 -> 3x3 | 1x1 -> 5x5 | maxpool 3x3 -> 1x1. ReLU after each conv.
template <class T>
class FaBlock {
 public:
  FaBlock() = default;

  FaBlock(const FaConfig& cfg, std::int64_t k, ParameterStore<T>& store, const std::string& name,
          Rng& rng)
      : cfg_(cfg) {
    if (cfg.out_channels() != k) {
      throw ConfigError(name + ": branch widths sum to " + std::to_string(cfg.out_channels()) +
                        ", expected k = " + std::to_string(k));
    }
    const auto in = cfg.in_channels;
    const auto& bw = cfg.branch_width;
    b1_ = ConvLayer<T>(store, name + ".b1_1x1", in, bw[0], 1, {}, rng);
    b2_reduce_ = ConvLayer<T>(store, name + ".b2_1x1", in, bw[1], 1, {}, rng);
    b2_ = ConvLayer<T>(store, name + ".b2_3x3", bw[1], bw[1], 3, same_padding(3), rng);
    b3_reduce_ = ConvLayer<T>(store, name + ".b3_1x1", in, bw[2], 1, {}, rng);
    b3_ = ConvLayer<T>(store, name + ".b3_5x5", bw[2], bw[2], 5, same_padding(5), rng);
    b4_ = ConvLayer<T>(store, name + ".b4_pool_1x1", in, bw[3], 1, {}, rng);
  }

  const FaConfig& config() const { return cfg_; }

  Tensor<T> forward(const Tensor<T>& x) const {
    if (x.rank() != 4 || x.dim(1) != cfg_.in_channels) {
      throw DimensionError("channels", "FA expects " + std::to_string(cfg_.in_channels) +
                                           " channels, got " + shape_string(x.shape()));
    }
    return concat_channels<T>({
        relu(b1_(x)),
        relu(b2_(relu(b2_reduce_(x)))),
        relu(b3_(relu(b3_reduce_(x)))),
        relu(b4_(maxpool2d(x, 3, 1, 1))),
    });
  }

 private:
  FaConfig cfg_{};
  ConvLayer<T> b1_, b2_reduce_, b2_, b3_reduce_, b3_, b4_;
};

/// Deeper FA outputs feeding each FA level (0 = FA1, shallowest).
inline std::array<std::vector<int>, kHierarchies> skip_sources(DecoderWiring wiring) {
  std::array<std::vector<int>, kHierarchies> src;
  for (int i = 0; i < kHierarchies - 1; ++i) {
    if (wiring == DecoderWiring::dense) {
      for (int j = i + 1; j < kHierarchies; ++j) src[i].push_back(j);
    } else {
      src[i].push_back(i + 1);
    }
  }
  if (wiring == DecoderWiring::residual) src[0].push_back(4);
  return src;
}

/// Incoming edges of each FA: its CM input plus one per skip source.
inline std::array<int, kHierarchies> incoming_edge_counts(DecoderWiring wiring) {
  const auto src = skip_sources(wiring);
  std::array<int, kHierarchies> counts{};
  for (int i = 0; i < kHierarchies; ++i) counts[i] = 1 + static_cast<int>(src[i].size());
  return counts;
}

/// One realized decoder edge, recorded during a forward pass.
struct DecoderEdge {
  int source = -1;  // FA level feeding the edge; -1 for the CM input
  std::int64_t upsample = 1;
};

using DecoderTrace = std::array<std::vector<DecoderEdge>, kHierarchies>;

/// Top-down decoder: FA_i consumes CM_i plus the upsampled outputs of its
/// skip sources, summed at FA_i's resolution.
template <class T>
class DenseDecoder {
 public:
  DenseDecoder() = default;

  DenseDecoder(std::int64_t k, std::int64_t fused_channels, DecoderWiring wiring, bool fa_enabled,
               ParameterStore<T>& store, Rng& rng)
      : k_(k), fused_channels_(fused_channels), wiring_(wiring), fa_enabled_(fa_enabled) {
    if (fused_channels != k && fused_channels != 2 * k) {
      throw ConfigError("fused features must have k or 2k channels");
    }
    if (!fa_enabled && fused_channels != k) {
      throw ConfigError("identity FA needs k-channel fused features");
    }
    if (fa_enabled) {
      for (int i = 0; i < kHierarchies; ++i) {
        fa_[i] = FaBlock<T>(FaConfig::uniform(fused_channels, k), k, store,
                            "fa" + std::to_string(i + 1), rng);
      }
    }
  }

  DecoderWiring wiring() const { return wiring_; }
  bool fa_enabled() const { return fa_enabled_; }

  /// `fused[i]` has the stage-i spatial size; returns FA1's k-channel output.
  Tensor<T> forward(const std::array<Tensor<T>, kHierarchies>& fused,
                    DecoderTrace* trace = nullptr) const {
    const auto sources = skip_sources(wiring_);
    std::array<Tensor<T>, kHierarchies> out;
    for (int i = kHierarchies - 1; i >= 0; --i) {
      const Tensor<T>& cm = fused[i];
      if (cm.rank() != 4 || cm.dim(1) != fused_channels_) {
        throw DimensionError("channels", "decoder level " + std::to_string(i + 1) +
                                             " expects " + std::to_string(fused_channels_) +
                                             " channels, got " + shape_string(cm.shape()));
      }
      if (i < kHierarchies - 1 && cm.dim(2) < fused[i + 1].dim(2)) {
        throw DimensionError("height", "decoder inputs must be ordered shallow to deep");
      }
      Tensor<T> x = cm;
      if (trace) (*trace)[i] = {DecoderEdge{-1, 1}};
      for (int j : sources[i]) {
        const auto factor = cm.dim(2) / out[j].dim(2);
        if (factor * out[j].dim(2) != cm.dim(2) || cm.dim(3) != factor * out[j].dim(3)) {
          throw DimensionError("height", "decoder size schedule violated between FA" +
                                             std::to_string(j + 1) + " and FA" +
                                             std::to_string(i + 1));
        }
        Tensor<T> up = factor == 1 ? out[j] : bilinear_upsample(out[j], factor);
        if (fused_channels_ == 2 * k_) up = concat_channels<T>({up, up});
        x = add(x, up);
        if (trace) (*trace)[i].push_back({j, factor});
      }
      out[i] = fa_enabled_ ? fa_[i].forward(x) : x;
    }
    return out[0];
  }

 private:
  std::int64_t k_ = 0;
  std::int64_t fused_channels_ = 0;
  DecoderWiring wiring_ = DecoderWiring::dense;
  bool fa_enabled_ = true;
  std::array<FaBlock<T>, kHierarchies> fa_;
};

/// (1x1, C) convolution on FA1's output: sigmoid for C = 1, per-pixel
/// softmax over classes otherwise.
template <class T>
class FinalHead {
 public:
  FinalHead() = default;
  FinalHead(std::int64_t k, std::int64_t classes, ParameterStore<T>& store, Rng& rng)
      : classes_(classes) {
    if (classes < 1) throw ConfigError("class count must be >= 1");
    conv_ = ConvLayer<T>(store, "final_head", k, classes, 1, {}, rng);
  }

  std::int64_t classes() const { return classes_; }
  const ConvLayer<T>& conv() const { return conv_; }

  Tensor<T> forward(const Tensor<T>& fa1) const {
    Tensor<T> logits = conv_(fa1);
    return classes_ == 1 ? sigmoid(logits) : softmax_channels(logits);
  }

 private:
  std::int64_t classes_ = 1;
  ConvLayer<T> conv_;
};

}  // namespace jldcf
