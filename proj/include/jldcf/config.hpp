#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>

#include "jldcf/errors.hpp"
#include "jldcf/optim.hpp"

namespace jldcf {

inline constexpr int kHierarchies = 6;

/// How the two modality rows of each CP output are merged.
enum class FusionVariant {
  cm,              // X_rgb + X_d + X_rgb * X_d
  concat,          // channel concatenation, 2k wide
  identity_rgb,    // RGB row only, no batch pairing
  identity_depth,  // depth row only, no batch pairing
};

/// Skip topology of the decoder.
enum class DecoderWiring {
  dense,     // every FA takes all deeper FA outputs
  chain,     // only the next-deeper FA output
  residual,  // chain plus the FA5 -> FA1 skip
};

NLOHMANN_JSON_SERIALIZE_ENUM(FusionVariant, {
                                                {FusionVariant::cm, "cm"},
                                                {FusionVariant::concat, "concat"},
                                                {FusionVariant::identity_rgb, "identity_rgb"},
                                                {FusionVariant::identity_depth, "identity_depth"},
                                            })

NLOHMANN_JSON_SERIALIZE_ENUM(DecoderWiring, {
                                                {DecoderWiring::dense, "dense"},
                                                {DecoderWiring::chain, "chain"},
                                                {DecoderWiring::residual, "residual"},
                                            })

inline bool uses_depth(FusionVariant v) { return v != FusionVariant::identity_rgb; }
inline bool uses_rgb(FusionVariant v) { return v != FusionVariant::identity_depth; }
inline bool is_paired(FusionVariant v) {
  return v == FusionVariant::cm || v == FusionVariant::concat;
}

struct ConvSpec {
  std::int64_t kernel = 3;
  std::int64_t channels = 16;
  std::int64_t stride = 1;
  std::int64_t dilation = 1;
  std::int64_t padding = 1;

  bool operator==(const ConvSpec&) const = default;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ConvSpec, kernel, channels, stride, dilation, padding)

/// Two extra convolutions per side path, one row per hierarchy.
using SidePathConfig = std::array<std::array<ConvSpec, 2>, kHierarchies>;

/// Table 1 side-path rows with channel counts scaled by width/64
/// (width 64 reproduces the published channel column).
inline SidePathConfig scaled_side_paths(std::int64_t width, std::int64_t stage6_dilation = 2) {
  constexpr std::array<std::int64_t, kHierarchies> kernel{3, 3, 5, 5, 5, 7};
  constexpr std::array<std::int64_t, kHierarchies> channels{128, 128, 256, 256, 512, 512};
  SidePathConfig side{};
  for (int i = 0; i < kHierarchies; ++i) {
    const std::int64_t dil = i == kHierarchies - 1 ? stage6_dilation : 1;
    const ConvSpec spec{kernel[i], std::max<std::int64_t>(1, channels[i] * width / 64), 1, dil,
                        dil * (kernel[i] - 1) / 2};
    side[i] = {spec, spec};
  }
  return side;
}

struct BackboneConfig {
  std::int64_t input_size = 64;
  std::array<std::int64_t, kHierarchies> stage_channels{8, 16, 32, 64, 64, 64};
  std::array<std::int64_t, 5> convs_per_stage{2, 2, 3, 3, 3};
  std::array<bool, kHierarchies> downsample{false, true, true, true, true, false};
  std::int64_t stage6_dilation = 2;
  SidePathConfig side = scaled_side_paths(8);

  bool operator==(const BackboneConfig&) const = default;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(BackboneConfig, input_size, stage_channels, convs_per_stage,
                                   downsample, stage6_dilation, side)

struct NetworkConfig {
  BackboneConfig backbone{};
  std::int64_t k = 64;
  FusionVariant fusion = FusionVariant::cm;
  DecoderWiring wiring = DecoderWiring::dense;
  bool fa_enabled = true;
  bool separate_backbones = false;
  bool multitask = false;
  std::int64_t classes = 1;

  bool operator==(const NetworkConfig&) const = default;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(NetworkConfig, backbone, k, fusion, wiring, fa_enabled,
                                   separate_backbones, multitask, classes)

struct LossConfig {
  double lambda = 256.0;
  double epsilon = 1e-7;

  bool operator==(const LossConfig&) const = default;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LossConfig, lambda, epsilon)

inline void to_json(nlohmann::json& j, const SgdOptions& o) {
  j = {{"lr", o.lr}, {"momentum", o.momentum}, {"weight_decay", o.weight_decay}};
}
inline void from_json(const nlohmann::json& j, SgdOptions& o) {
  j.at("lr").get_to(o.lr);
  j.at("momentum").get_to(o.momentum);
  j.at("weight_decay").get_to(o.weight_decay);
}

struct RunConfig {
  NetworkConfig network{};
  LossConfig loss{};
  SgdOptions optimizer{};
  std::uint64_t seed = 1;
  std::int64_t epochs = 10;
  bool mirror = true;
  std::string data_dir;
  std::string rgb_data_dir;  // extra RGB-only samples for multitask training
  std::string out_dir = "out";

  bool operator==(const RunConfig& o) const {
    return network == o.network && loss == o.loss && optimizer.lr == o.optimizer.lr &&
           optimizer.momentum == o.optimizer.momentum &&
           optimizer.weight_decay == o.optimizer.weight_decay && seed == o.seed &&
           epochs == o.epochs && mirror == o.mirror && data_dir == o.data_dir &&
           rgb_data_dir == o.rgb_data_dir && out_dir == o.out_dir;
  }
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RunConfig, network, loss, optimizer, seed, epochs, mirror,
                                   data_dir, rgb_data_dir, out_dir)

/// VGG-style network whose stage widths are width x {1,2,4,8,8,8}.
/// width = 64 is the published VGG-16 layout; the desk default is 8.
inline NetworkConfig vgg_network(std::int64_t input_size, std::int64_t width, std::int64_t k) {
  NetworkConfig cfg;
  cfg.backbone.input_size = input_size;
  cfg.backbone.stage_channels = {width, 2 * width, 4 * width, 8 * width, 8 * width, 8 * width};
  cfg.backbone.side = scaled_side_paths(width, cfg.backbone.stage6_dilation);
  cfg.k = k;
  return cfg;
}

/// Spatial extent of the coarsest hierarchy.
inline std::int64_t coarse_size(const NetworkConfig& cfg) { return cfg.backbone.input_size / 16; }

inline void validate(const NetworkConfig& cfg) {
  const auto& b = cfg.backbone;
  if (b.input_size < 16 || b.input_size % 16 != 0) {
    throw ConfigError("input size must be a positive multiple of 16, got " +
                      std::to_string(b.input_size));
  }
  for (auto c : b.stage_channels) {
    if (c < 1) throw ConfigError("stage channel counts must be positive");
  }
  if (b.stage_channels[5] != b.stage_channels[4]) {
    throw ConfigError("stage 6 is a pooling stage and keeps stage 5's channel count");
  }
  for (auto n : b.convs_per_stage) {
    if (n < 1) throw ConfigError("every stage needs at least one convolution");
  }
  const std::array<bool, kHierarchies> schedule{false, true, true, true, true, false};
  if (b.downsample != schedule) {
    throw ConfigError("downsample flags must produce the H, H/2, H/4, H/8, H/16, H/16 schedule");
  }
  if (b.stage6_dilation < 1) throw ConfigError("stage-6 dilation must be >= 1");
  for (int i = 0; i < kHierarchies; ++i) {
    for (const auto& s : b.side[i]) {
      if (s.kernel < 1 || s.channels < 1 || s.stride != 1 || s.dilation < 1 ||
          s.padding != s.dilation * (s.kernel - 1) / 2 || s.kernel % 2 == 0) {
        throw ConfigError("side path " + std::to_string(i + 1) +
                          " must be an odd, stride-1, size-preserving convolution");
      }
    }
  }
  if (cfg.k < 4 || cfg.k % 4 != 0) {
    throw ConfigError("k must be a positive multiple of 4 (four equal FA branches)");
  }
  if (cfg.classes < 1) throw ConfigError("class count must be >= 1");
  if (cfg.multitask && !is_paired(cfg.fusion)) {
    throw ConfigError("multitask mode needs a paired RGB-D fusion variant");
  }
  if (cfg.separate_backbones && !is_paired(cfg.fusion)) {
    throw ConfigError("separate backbones need both modalities");
  }
  if (!cfg.fa_enabled && cfg.fusion == FusionVariant::concat) {
    throw ConfigError("concat fusion needs FA modules to map 2k channels back to k");
  }
}

inline void validate(const LossConfig& cfg) {
  if (!(cfg.lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (!(cfg.epsilon > 0.0 && cfg.epsilon < 0.01)) throw ConfigError("epsilon must lie in (0, 0.01)");
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
    // keys left out of the file keep their defaults
    nlohmann::json merged = RunConfig{};
    merged.merge_patch(j);
    const auto cfg = merged.get<RunConfig>();
    // unknown enum names would otherwise decode silently as the first value
    const auto& net = merged.at("network");
    if (nlohmann::json(cfg.network.fusion) != net.at("fusion")) {
      throw ConfigError(path + ": unknown fusion " + net.at("fusion").dump());
    }
    if (nlohmann::json(cfg.network.wiring) != net.at("wiring")) {
      throw ConfigError(path + ": unknown wiring " + net.at("wiring").dump());
    }
    validate(cfg.network);
    validate(cfg.loss);
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline void save_run_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file " + path);
  out << nlohmann::json(cfg).dump(2) << '\n';
}

}  // namespace jldcf
