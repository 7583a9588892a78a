#pragma once

#include <array>
#include <optional>
#include <string>

#include "jldcf/dcf.hpp"
#include "jldcf/jl.hpp"

namespace jldcf {

/// Outputs of one forward pass. Coarse maps are 1 x 1 x h x h; the ones a
/// variant does not produce are left undefined.
template <class T>
struct Prediction {
  Tensor<T> final_map;  // 1 x classes x H x H
  Tensor<T> coarse_rgb;
  Tensor<T> coarse_depth;
  Tensor<T> coarse_rgb_star;
  std::array<Tensor<T>, kHierarchies> hierarchies;  // backbone side outputs
  std::array<Tensor<T>, kHierarchies> compressed;   // CP outputs
  std::array<Tensor<T>, kHierarchies> fused;        // decoder inputs
  DecoderTrace trace;
};

/// Maps 8-bit-scale inputs ([0, 255]) to [-1, 1]; applied to every modality.
template <class T>
Tensor<T> normalize_input(const Tensor<T>& x) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = v / T(127.5) - T(1);
  return Tensor<T>(x.shape(), std::move(out));
}

/// The full Siamese RGB-D network: shared backbone, CP compression, coarse
/// heads, cross-modal fusion, dense FA decoder and the final head.
template <class T>
class JlDcfNet {
 public:
  JlDcfNet(const NetworkConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    validate(cfg);
    Rng rng(seed);
    backbone_ = Backbone<T>(cfg.backbone, store_, rng, "backbone");
    if (cfg.separate_backbones) {
      depth_backbone_ = Backbone<T>(cfg.backbone, store_, rng, "backbone_depth");
    }
    std::array<std::int64_t, kHierarchies> side_channels{};
    for (int i = 0; i < kHierarchies; ++i) side_channels[i] = backbone_.output_channels(i);
    cp_ = CpModules<T>(side_channels, cfg.k, store_, rng);
    coarse_ = CoarseHead<T>(cfg.k, store_, rng);
    const auto fused = cfg.fusion == FusionVariant::concat ? 2 * cfg.k : cfg.k;
    decoder_ = DenseDecoder<T>(cfg.k, fused, cfg.wiring, cfg.fa_enabled, store_, rng);
    head_ = FinalHead<T>(cfg.k, cfg.classes, store_, rng);
  }

  JlDcfNet(const JlDcfNet&) = delete;
  JlDcfNet& operator=(const JlDcfNet&) = delete;
  JlDcfNet(JlDcfNet&&) noexcept = default;
  JlDcfNet& operator=(JlDcfNet&&) noexcept = default;

  const NetworkConfig& config() const { return cfg_; }
  ParameterStore<T>& parameters() { return store_; }
  const ParameterStore<T>& parameters() const { return store_; }
  const Backbone<T>& backbone() const { return backbone_; }
  const CpModules<T>& cp() const { return cp_; }
  const CoarseHead<T>& coarse_head() const { return coarse_; }
  const DenseDecoder<T>& decoder() const { return decoder_; }
  const FinalHead<T>& final_head() const { return head_; }

  /// Number of backbone rows a forward pass uses (2 paired, 3 multitask,
  /// 1 single modality).
  std::int64_t batch_rows() const {
    if (!is_paired(cfg_.fusion)) return 1;
    return cfg_.multitask ? 3 : 2;
  }

  /// `rgb`, `depth3`: 1 x 3 x H x H on the [0, 255] scale. `rgb_star` is
  /// the extra RGB-task image, required exactly when multitask is on.
  Prediction<T> forward(const Tensor<T>& rgb, const Tensor<T>& depth3,
                        const Tensor<T>* rgb_star = nullptr) const {
    if (cfg_.multitask && rgb_star == nullptr) {
      throw DimensionError("batch", "multitask mode needs the third (RGB task) batch row");
    }
    if (!cfg_.multitask && rgb_star != nullptr) {
      throw DimensionError("batch", "an RGB task row was given but multitask mode is off");
    }
    Prediction<T> p;
    Tensor<T> batch;
    switch (cfg_.fusion) {
      case FusionVariant::identity_rgb:
        batch = normalize_input(rgb);
        break;
      case FusionVariant::identity_depth:
        batch = normalize_input(depth3);
        break;
      default: {
        std::vector<Tensor<T>> rows{normalize_input(rgb), normalize_input(depth3)};
        if (rgb_star) rows.push_back(normalize_input(*rgb_star));
        for (const auto& r : rows) {
          if (r.rank() != 4 || r.dim(0) != 1) throw DimensionError("batch", "inputs must be single images");
        }
        batch = rows.size() == 2 ? form_batch(rows[0], rows[1]) : concat_batch(rows);
      }
    }
    if (batch.dim(0) != batch_rows()) {
      throw DimensionError("batch", "expected " + std::to_string(batch_rows()) + " batch rows");
    }

    p.hierarchies = run_backbones(batch);
    p.compressed = cp_.forward(p.hierarchies);

    Tensor<T> coarse = coarse_.forward(p.compressed[kHierarchies - 1]);
    switch (cfg_.fusion) {
      case FusionVariant::identity_rgb:
        p.coarse_rgb = coarse;
        break;
      case FusionVariant::identity_depth:
        p.coarse_depth = coarse;
        break;
      default:
        p.coarse_rgb = slice_batch(coarse, 0, 1);
        p.coarse_depth = slice_batch(coarse, 1, 1);
        if (cfg_.multitask) p.coarse_rgb_star = slice_batch(coarse, 2, 1);
    }

    for (int i = 0; i < kHierarchies; ++i) p.fused[i] = fuse(p.compressed[i]);
    Tensor<T> fa1 = decoder_.forward(p.fused, &p.trace);
    p.final_map = head_.forward(fa1);
    return p;
  }

 private:
  std::array<Tensor<T>, kHierarchies> run_backbones(const Tensor<T>& batch) const {
    if (!cfg_.separate_backbones) return backbone_.forward(batch);
    // row 1 is depth; every other row is RGB
    const auto rgb_part = backbone_.forward(slice_batch(batch, 0, 1));
    const auto depth_part = depth_backbone_.forward(slice_batch(batch, 1, 1));
    std::array<Tensor<T>, kHierarchies> star_part;
    if (batch.dim(0) == 3) star_part = backbone_.forward(slice_batch(batch, 2, 1));
    std::array<Tensor<T>, kHierarchies> out;
    for (int i = 0; i < kHierarchies; ++i) {
      std::vector<Tensor<T>> rows{rgb_part[i], depth_part[i]};
      if (batch.dim(0) == 3) rows.push_back(star_part[i]);
      out[i] = concat_batch(rows);
    }
    return out;
  }

  Tensor<T> fuse(const Tensor<T>& cp_out) const {
    switch (cfg_.fusion) {
      case FusionVariant::cm:
        return cm_fuse(cp_out.dim(0) == 2 ? cp_out : slice_batch(cp_out, 0, 2));
      case FusionVariant::concat:
        return concat_channels<T>({slice_batch(cp_out, 0, 1), slice_batch(cp_out, 1, 1)});
      default:
        return cp_out;
    }
  }

  NetworkConfig cfg_;
  ParameterStore<T> store_;
  Backbone<T> backbone_;
  Backbone<T> depth_backbone_;
  CpModules<T> cp_;
  CoarseHead<T> coarse_;
  DenseDecoder<T> decoder_;
  FinalHead<T> head_;
};

}  // namespace jldcf
