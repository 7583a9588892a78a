#pragma once

#include <array>
#include <string>
#include <vector>

#include "jldcf/config.hpp"
#include "jldcf/layers.hpp"

namespace jldcf {

/// Spatial extent of every hierarchy output: [H, H/2, H/4, H/8, H/16, H/16].
inline std::array<std::int64_t, kHierarchies> hierarchy_sizes(std::int64_t input_size) {
  if (input_size < 16 || input_size % 16 != 0) {
    throw ConfigError("input size must be a positive multiple of 16, got " +
                      std::to_string(input_size));
  }
  return {input_size,     input_size / 2,  input_size / 4,
          input_size / 8, input_size / 16, input_size / 16};
}

/// Receptive field (in input pixels) of one unit of each hierarchy output,
/// with and without its side path.
struct ReceptiveFields {
  std::array<std::int64_t, kHierarchies> stage{};
  std::array<std::int64_t, kHierarchies> side_output{};
};

inline ReceptiveFields receptive_fields(const BackboneConfig& cfg) {
  ReceptiveFields rf;
  std::int64_t field = 1;
  std::int64_t jump = 1;
  auto apply = [](std::int64_t& f, std::int64_t& j, std::int64_t k, std::int64_t stride,
                  std::int64_t dilation) {
    f += dilation * (k - 1) * j;
    j *= stride;
  };
  for (int s = 0; s < kHierarchies; ++s) {
    if (s < 5) {
      if (cfg.downsample[s]) apply(field, jump, 2, 2, 1);
      for (int c = 0; c < cfg.convs_per_stage[s]; ++c) apply(field, jump, 3, 1, 1);
    } else {
      apply(field, jump, 3, 1, 1);
    }
    rf.stage[s] = field;
    std::int64_t side = field, side_jump = jump;
    for (const auto& conv : cfg.side[s]) apply(side, side_jump, conv.kernel, 1, conv.dilation);
    rf.side_output[s] = side;
  }
  return rf;
}

/// VGG-style encoder with six hierarchies and two side convolutions per
/// hierarchy. One parameter set serves every batch row.
template <class T>
class Backbone {
 public:
  Backbone() = default;

  Backbone(const BackboneConfig& cfg, ParameterStore<T>& store, Rng& rng,
           const std::string& prefix = "backbone")
      : cfg_(cfg) {
    std::int64_t in = 3;
    for (int s = 0; s < 5; ++s) {
      std::vector<ConvLayer<T>> convs;
      for (int c = 0; c < cfg.convs_per_stage[s]; ++c) {
        convs.emplace_back(store,
                           prefix + ".conv" + std::to_string(s + 1) + "_" + std::to_string(c + 1),
                           in, cfg.stage_channels[s], 3, same_padding(3), rng);
        in = cfg.stage_channels[s];
      }
      stages_[s] = std::move(convs);
    }
    for (int s = 0; s < kHierarchies; ++s) {
      std::int64_t side_in = cfg.stage_channels[s];
      for (int c = 0; c < 2; ++c) {
        const auto& spec = cfg.side[s][c];
        side_[s][c] = ConvLayer<T>(
            store, prefix + ".side" + std::to_string(s + 1) + "_" + std::to_string(c + 1),
            side_in, spec.channels, spec.kernel, {1, spec.dilation, spec.padding}, rng);
        side_in = spec.channels;
      }
    }
  }

  const BackboneConfig& config() const { return cfg_; }

  std::int64_t output_channels(int hierarchy) const { return cfg_.side[hierarchy][1].channels; }

  /// Runs a (rows x 3 x H x H) batch; returns the six side-path outputs.
  std::array<Tensor<T>, kHierarchies> forward(const Tensor<T>& batch) const {
    if (batch.rank() != 4) throw DimensionError("rank", "backbone expects an NCHW batch");
    if (batch.dim(1) != 3) {
      throw DimensionError("channels", "backbone expects 3 input channels, got " +
                                           std::to_string(batch.dim(1)));
    }
    if (batch.dim(2) != cfg_.input_size || batch.dim(3) != cfg_.input_size) {
      throw DimensionError("height", "backbone expects " + std::to_string(cfg_.input_size) +
                                         "x" + std::to_string(cfg_.input_size) + " inputs, got " +
                                         shape_string(batch.shape()));
    }
    std::array<Tensor<T>, kHierarchies> out;
    Tensor<T> x = batch;
    for (int s = 0; s < kHierarchies; ++s) {
      if (s < 5) {
        if (cfg_.downsample[s]) x = maxpool2d(x, 2, 2, 0);
        for (const auto& conv : stages_[s]) x = relu(conv(x));
      } else {
        x = maxpool2d(x, 3, 1, 1);  // pool5 with stride 1
      }
      Tensor<T> y = relu(side_[s][0](x));
      out[s] = relu(side_[s][1](y));
    }
    return out;
  }

 private:
  BackboneConfig cfg_{};
  std::array<std::vector<ConvLayer<T>>, 5> stages_;
  std::array<std::array<ConvLayer<T>, 2>, kHierarchies> side_;
};

}  // namespace jldcf
