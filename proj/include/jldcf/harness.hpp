#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "jldcf/checkpoint.hpp"
#include "jldcf/dataset.hpp"
#include "jldcf/metrics.hpp"
#include "jldcf/train.hpp"

namespace jldcf {

// ---------------------------------------------------------------- presets

struct AblationPreset {
  std::string name;
  std::string description;
};

inline const std::vector<AblationPreset>& ablation_presets() {
  static const std::vector<AblationPreset> presets{
      {"A", "full model: shared backbone, CM fusion, dense FA decoder"},
      {"B-vgg-width", "half-width backbone"},
      {"C", "concatenation instead of CM fusion"},
      {"D", "RGB only"},
      {"E", "depth only"},
      {"F", "separate RGB and depth backbones"},
      {"G", "FA modules removed"},
      {"H", "dense decoder connections removed"},
      {"I", "FA5 to FA1 skip only"},
  };
  return presets;
}

/// The preset as a delta on top of `base`.
inline RunConfig apply_preset(RunConfig base, const std::string& preset) {
  auto& net = base.network;
  if (preset == "A") return base;
  if (preset == "B-vgg-width") {
    const auto width = net.backbone.stage_channels[0];
    if (width < 2) throw ConfigError("backbone is too narrow to halve");
    const auto halved = vgg_network(net.backbone.input_size, width / 2, net.k);
    net.backbone = halved.backbone;
  } else if (preset == "C") {
    net.fusion = FusionVariant::concat;
  } else if (preset == "D") {
    net.fusion = FusionVariant::identity_rgb;
  } else if (preset == "E") {
    net.fusion = FusionVariant::identity_depth;
  } else if (preset == "F") {
    net.separate_backbones = true;
  } else if (preset == "G") {
    net.fa_enabled = false;
  } else if (preset == "H") {
    net.wiring = DecoderWiring::chain;
  } else if (preset == "I") {
    net.wiring = DecoderWiring::residual;
  } else {
    std::string known;
    for (const auto& p : ablation_presets()) known += " " + p.name;
    throw ConfigError("unknown ablation preset '" + preset + "' (known:" + known + ")");
  }
  return base;
}

/// Fusion variant named on the command line.
inline FusionVariant parse_variant(const std::string& name) {
  nlohmann::json j = name;
  const auto v = j.get<FusionVariant>();
  if (nlohmann::json(v).get<std::string>() != name) {
    throw ConfigError("unknown variant '" + name + "' (cm, concat, identity_rgb, identity_depth)");
  }
  return v;
}

template <class T>
std::int64_t backbone_parameter_count(const JlDcfNet<T>& net) {
  return net.parameters().count("backbone.") + net.parameters().count("backbone_depth.");
}

template <class T>
std::int64_t parameter_count(const JlDcfNet<T>& net) {
  return net.parameters().count();
}

// --------------------------------------------------------------- maps

/// Network output resized back to the native resolution, on 8-bit levels.
template <class T>
std::vector<std::uint8_t> native_saliency_u8(const Tensor<T>& map, std::int64_t height,
                                             std::int64_t width) {
  if (map.rank() != 4 || map.dim(0) != 1 || map.dim(1) != 1) {
    throw DimensionError("channels", "expected a 1 x 1 x H x W saliency map");
  }
  const std::vector<double> v(map.data().begin(), map.data().end());
  const auto resized = resize_planes(v, 1, map.dim(2), map.dim(3), height, width);
  std::vector<std::uint8_t> out(resized.size());
  for (std::size_t i = 0; i < resized.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(metrics::quantize(std::clamp(resized[i], 0.0, 1.0)));
  }
  return out;
}

/// 8-bit grayscale view of a stored saliency map (first channel, full range).
inline std::vector<std::uint8_t> gray_u8(const Image& img) {
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(img.height * img.width));
  for (std::int64_t r = 0; r < img.height; ++r) {
    for (std::int64_t c = 0; c < img.width; ++c) {
      const double v = static_cast<double>(img.at(r, c, 0)) / img.max_value;
      out.push_back(static_cast<std::uint8_t>(metrics::quantize(v)));
    }
  }
  return out;
}

/// Writes <out_dir>/<stem>.png for every sample at its native size.
template <class T>
std::vector<std::filesystem::path> infer_to_directory(const JlDcfNet<T>& net,
                                                      const std::vector<PreparedSample<T>>& samples,
                                                      const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (const auto& s : samples) {
    const auto px = native_saliency_u8(predict(net, s), s.native_height, s.native_width);
    auto path = out_dir / (s.stem + ".png");
    write_png(path.string(), s.native_height, s.native_width, 1, px);
    written.push_back(std::move(path));
  }
  return written;
}

// ------------------------------------------------------------ evaluation

struct Evaluation {
  metrics::MetricReport report;
  std::vector<std::string> warnings;
};

namespace detail {

inline void add_image(std::vector<metrics::ImageReport>& reports, std::vector<std::string>& warnings,
                      const std::string& stem, std::int64_t h, std::int64_t w,
                      const std::vector<std::uint8_t>& saliency_u8,
                      const std::vector<std::uint8_t>& gt01) {
  metrics::EvalPair pair{h, w, {}, gt01};
  if (std::none_of(gt01.begin(), gt01.end(), [](auto g) { return g != 0; })) {
    warnings.push_back("stem '" + stem + "' skipped: ground truth has no foreground");
    return;
  }
  pair.saliency.reserve(saliency_u8.size());
  for (auto v : saliency_u8) pair.saliency.push_back(v / 255.0);
  reports.push_back(metrics::evaluate(pair, stem));
}

inline Evaluation finish(std::vector<metrics::ImageReport> reports, std::vector<std::string> warnings) {
  if (reports.empty()) throw DataError("no image could be evaluated");
  return {metrics::aggregate(std::move(reports)), std::move(warnings)};
}

}  // namespace detail

/// Scores the stored maps in `pred_dir` against `gt_dir`, paired by stem.
/// Predictions are resized to the GT size when they differ; GT without
/// foreground is skipped with a warning.
inline Evaluation evaluate_directory(const std::filesystem::path& pred_dir,
                                     const std::filesystem::path& gt_dir) {
  std::vector<std::string> warnings;
  const auto preds = detail::images_by_stem(pred_dir, warnings);
  const auto gts = detail::images_by_stem(gt_dir, warnings);
  std::vector<metrics::ImageReport> reports;
  for (const auto& [stem, gt_path] : gts) {
    auto it = preds.find(stem);
    if (it == preds.end()) {
      warnings.push_back("stem '" + stem + "' skipped: no prediction");
      continue;
    }
    const auto gt = read_image(gt_path.string());
    const auto pred = read_image(it->second.string());
    auto px = gray_u8(pred);
    if (pred.height != gt.height || pred.width != gt.width) {
      const std::vector<double> v(px.begin(), px.end());
      const auto r = resize_planes(v, 1, pred.height, pred.width, gt.height, gt.width);
      px.resize(r.size());
      for (std::size_t i = 0; i < r.size(); ++i) {
        px[i] = static_cast<std::uint8_t>(std::clamp(std::lround(r[i]), 0L, 255L));
      }
    }
    detail::add_image(reports, warnings, stem, gt.height, gt.width, px, binary_gt(gt));
  }
  for (const auto& [stem, path] : preds) {
    if (!gts.count(stem)) warnings.push_back("stem '" + stem + "' skipped: no ground truth");
  }
  return detail::finish(std::move(reports), std::move(warnings));
}

/// Same scores as inferring to PNGs and calling evaluate_directory, without
/// touching the disk.
template <class T>
Evaluation evaluate_samples(const JlDcfNet<T>& net, const std::vector<PreparedSample<T>>& samples) {
  std::vector<metrics::ImageReport> reports;
  std::vector<std::string> warnings;
  for (const auto& s : samples) {
    const auto px = native_saliency_u8(predict(net, s), s.native_height, s.native_width);
    detail::add_image(reports, warnings, s.stem, s.native_height, s.native_width, px, s.gt_native);
  }
  return detail::finish(std::move(reports), std::move(warnings));
}

inline nlohmann::json report_json(const metrics::MetricReport& r) {
  nlohmann::json j;
  j["dataset"] = {{"S_alpha", r.s_alpha},         {"F_max", r.f_max},
                  {"mean_image_F_max", r.mean_image_f_max},
                  {"E_max", r.e_max},             {"MAE", r.mae},
                  {"images", r.images.size()}};
  j["thresholds"] = r.thresholds;
  j["precision"] = r.pr.precision;
  j["recall"] = r.pr.recall;
  auto& images = j["images"] = nlohmann::json::array();
  for (const auto& im : r.images) {
    images.push_back({{"name", im.name},
                      {"S_alpha", im.s_alpha},
                      {"F_max", im.f_max},
                      {"E_max", im.e_max},
                      {"MAE", im.mae}});
  }
  return j;
}

/// report.json (everything), report.csv (one dataset row) and
/// pr_curve.csv (256 threshold rows).
inline void write_reports(const std::filesystem::path& dir, const metrics::MetricReport& r) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "report.json");
    out << report_json(r).dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "report.csv");
    out << "S_alpha,F_max,E_max,MAE\n"
        << format_double(r.s_alpha) << ',' << format_double(r.f_max) << ','
        << format_double(r.e_max) << ',' << format_double(r.mae) << '\n';
  }
  std::ofstream out(dir / "pr_curve.csv");
  out << "threshold,precision,recall\n";
  for (int t = 0; t < metrics::kThresholds; ++t) {
    out << t << ',' << format_double(r.pr.precision[t]) << ',' << format_double(r.pr.recall[t])
        << '\n';
  }
}

// ------------------------------------------------------------ persistence

template <class T>
nlohmann::json checkpoint_manifest(const RunConfig& cfg, std::int64_t iterations) {
  return {{"format", "jldcf-checkpoint"},
          {"version", 1},
          {"dtype", sizeof(T) == 4 ? "float32" : "float64"},
          {"iterations", iterations},
          {"config", cfg}};
}

/// Rebuilds a trained network from a checkpoint file.
template <class T>
JlDcfNet<T> load_network(const std::string& path, RunConfig* cfg_out = nullptr) {
  const auto ck = read_checkpoint(path);
  RunConfig cfg;
  try {
    cfg = ck.manifest.at("config").get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint manifest has no usable config: " + std::string(e.what()));
  }
  JlDcfNet<T> net(cfg.network, cfg.seed);
  load_parameters(ck, net.parameters());
  if (cfg_out) *cfg_out = cfg;
  return net;
}

/// Prepared samples for a dataset root laid out as RGB/, depth/, GT/.
template <class T>
std::vector<PreparedSample<T>> load_dataset(const std::string& root, std::int64_t input_size,
                                            std::vector<std::string>* warnings = nullptr) {
  auto ing = ingest({root});
  if (warnings) warnings->insert(warnings->end(), ing.warnings.begin(), ing.warnings.end());
  return prepare_all<T>(ing.samples, input_size);
}

/// RGB-only samples (RGB/ and GT/) for the multitask RGB row; their depth
/// slot is left blank.
template <class T>
std::vector<PreparedSample<T>> load_rgb_task(const std::string& root, std::int64_t input_size) {
  std::vector<std::string> warnings;
  const auto rgb = detail::images_by_stem(std::filesystem::path(root) / "RGB", warnings);
  const auto gt = detail::images_by_stem(std::filesystem::path(root) / "GT", warnings);
  std::vector<PreparedSample<T>> out;
  for (const auto& [stem, path] : rgb) {
    auto it = gt.find(stem);
    if (it == gt.end()) continue;
    const auto rgb_img = read_image(path.string());
    const auto gt_img = read_image(it->second.string());
    Image blank{gt_img.height, gt_img.width, 1, 255,
                std::vector<std::uint16_t>(static_cast<std::size_t>(gt_img.height * gt_img.width), 0)};
    out.push_back(prepare_images<T>(stem, rgb_img, blank, gt_img, input_size));
  }
  if (out.empty()) throw DataError("no RGB/GT pairs under " + root);
  return out;
}

// ------------------------------------------------------------ training run

struct TrainArtifacts {
  std::filesystem::path checkpoint;
  std::filesystem::path trace;
  std::filesystem::path config;
  std::vector<LossRecord> records;
};

/// Trains from `cfg.data_dir` and writes checkpoint.bin, loss_trace.csv and
/// config.json into `cfg.out_dir`.
template <class T>
TrainArtifacts run_training(const RunConfig& cfg, std::vector<std::string>* warnings = nullptr,
                            const TrainOptions& options = {}) {
  if (cfg.data_dir.empty()) throw ConfigError("data_dir is not set");
  const auto h = cfg.network.backbone.input_size;
  const auto data = load_dataset<T>(cfg.data_dir, h, warnings);
  std::vector<PreparedSample<T>> rgb_task;
  if (cfg.network.multitask) {
    if (cfg.rgb_data_dir.empty()) throw ConfigError("multitask training needs rgb_data_dir");
    rgb_task = load_rgb_task<T>(cfg.rgb_data_dir, h);
  }
  JlDcfNet<T> net(cfg.network, cfg.seed);
  TrainArtifacts a;
  a.records = train(net, data, cfg, options, cfg.network.multitask ? &rgb_task : nullptr);
  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);
  a.checkpoint = out / "checkpoint.bin";
  a.trace = out / "loss_trace.csv";
  a.config = out / "config.json";
  save_checkpoint(a.checkpoint.string(), net.parameters(),
                  checkpoint_manifest<T>(cfg, static_cast<std::int64_t>(a.records.size())));
  write_loss_trace(a.trace.string(), a.records);
  save_run_config(cfg, a.config.string());
  return a;
}

// ------------------------------------------------------------- ablation

struct AblationRow {
  std::string preset;
  std::string description;
  metrics::MetricReport report;
  std::int64_t parameters = 0;
  std::int64_t iterations = 0;
  double seconds = 0.0;
};

/// Trains one preset on `train_set` and scores it on `test_set`; every
/// preset sees the same seed and data.
template <class T>
AblationRow run_ablation(const std::string& preset, const RunConfig& base,
                         const std::vector<PreparedSample<T>>& train_set,
                         const std::vector<PreparedSample<T>>& test_set) {
  const auto cfg = apply_preset(base, preset);
  const auto start = std::chrono::steady_clock::now();
  JlDcfNet<T> net(cfg.network, cfg.seed);
  const auto trace = train(net, train_set, cfg);
  AblationRow row;
  row.preset = preset;
  for (const auto& p : ablation_presets()) {
    if (p.name == preset) row.description = p.description;
  }
  row.report = evaluate_samples(net, test_set).report;
  row.parameters = parameter_count(net);
  row.iterations = static_cast<std::int64_t>(trace.size());
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return row;
}

/// Metrics as rows and presets as columns.
inline std::string format_comparison(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  auto cell = [](double v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return std::string(buf);
  };
  out << "| metric |";
  for (const auto& r : rows) out << ' ' << r.preset << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < rows.size(); ++i) out << "---|";
  out << '\n';
  const std::vector<std::pair<std::string, double metrics::MetricReport::*>> lines{
      {"S_alpha", &metrics::MetricReport::s_alpha},
      {"F_max", &metrics::MetricReport::f_max},
      {"E_max", &metrics::MetricReport::e_max},
      {"MAE", &metrics::MetricReport::mae},
  };
  for (const auto& [label, field] : lines) {
    out << "| " << label << " |";
    for (const auto& r : rows) out << ' ' << cell(r.report.*field) << " |";
    out << '\n';
  }
  out << "| params |";
  for (const auto& r : rows) out << ' ' << r.parameters << " |";
  out << '\n';
  return out.str();
}

inline void write_comparison_csv(const std::string& path, const std::vector<AblationRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "preset,S_alpha,F_max,E_max,MAE,parameters,iterations,seconds\n";
  for (const auto& r : rows) {
    out << r.preset << ',' << format_double(r.report.s_alpha) << ','
        << format_double(r.report.f_max) << ',' << format_double(r.report.e_max) << ','
        << format_double(r.report.mae) << ',' << r.parameters << ',' << r.iterations << ','
        << format_double(r.seconds) << '\n';
  }
}

}  // namespace jldcf
