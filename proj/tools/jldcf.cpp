// Command-line front end: synth, train, infer, eval, gradcheck, ablate.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

#include "jldcf/gradcheck.hpp"
#include "jldcf/harness.hpp"

namespace {

using namespace jldcf;

struct Overrides {
  std::string config;
  std::optional<std::int64_t> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<std::int64_t> input_size;
  std::optional<std::string> out;
  std::optional<std::string> data;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "RunConfig JSON file (defaults to the desk configuration)");
    cmd->add_option("--epochs", epochs);
    cmd->add_option("--seed", seed);
    cmd->add_option("--variant", variant, "cm, concat, identity_rgb or identity_depth");
    cmd->add_option("--input-size", input_size, "network input size, a multiple of 16");
    cmd->add_option("--out", out, "output directory");
    cmd->add_option("--data", data, "dataset root with RGB/, depth/, GT/");
  }

  RunConfig resolve() const {
    RunConfig cfg = config.empty() ? desk_run_config() : load_run_config(config);
    if (input_size) {
      // keep the width and k, rebuild the geometry
      const auto width = cfg.network.backbone.stage_channels[0];
      auto net = vgg_network(*input_size, width, cfg.network.k);
      net.fusion = cfg.network.fusion;
      net.wiring = cfg.network.wiring;
      net.fa_enabled = cfg.network.fa_enabled;
      net.separate_backbones = cfg.network.separate_backbones;
      net.multitask = cfg.network.multitask;
      net.classes = cfg.network.classes;
      cfg.network = net;
      if (config.empty()) cfg.optimizer.lr = desk_learning_rate(*input_size);
    }
    if (epochs) cfg.epochs = *epochs;
    if (seed) cfg.seed = *seed;
    if (variant) cfg.network.fusion = parse_variant(*variant);
    if (out) cfg.out_dir = *out;
    if (data) cfg.data_dir = *data;
    validate(cfg.network);
    validate(cfg.loss);
    if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
    return cfg;
  }
};

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

void print_report(const metrics::MetricReport& r) {
  std::printf("images %zu  S_alpha %.4f  F_max %.4f  E_max %.4f  MAE %.4f\n", r.images.size(),
              r.s_alpha, r.f_max, r.e_max, r.mae);
}

int run_synth(const std::string& out, const SyntheticOptions& opt) {
  const auto stems = generate_synthetic(out, opt);
  std::printf("wrote %zu samples to %s\n", stems.size(), out.c_str());
  return 0;
}

int run_train(const Overrides& o, std::int64_t max_iterations, std::int64_t log_every) {
  const auto cfg = o.resolve();
  std::vector<std::string> warnings;
  TrainOptions opt;
  opt.max_iterations = max_iterations;
  opt.on_iteration = [log_every](const LossRecord& r) {
    if (log_every > 0 && r.iteration % log_every == 0) {
      std::printf("iter %lld  total %.4f  L_f %.4f\n", static_cast<long long>(r.iteration),
                  r.total, r.final_term);
      std::fflush(stdout);
    }
  };
  const auto a = run_training<float>(cfg, &warnings, opt);
  print_warnings(warnings);
  std::printf("trained %zu iterations; wrote %s, %s, %s\n", a.records.size(),
              a.checkpoint.string().c_str(), a.trace.string().c_str(), a.config.string().c_str());
  return 0;
}

int run_infer(const std::string& checkpoint, const std::string& data, const std::string& out) {
  RunConfig cfg;
  const auto net = load_network<float>(checkpoint, &cfg);
  std::vector<std::string> warnings;
  const auto samples = load_dataset<float>(data, cfg.network.backbone.input_size, &warnings);
  print_warnings(warnings);
  const auto written = infer_to_directory(net, samples, out);
  std::printf("wrote %zu saliency maps to %s\n", written.size(), out.c_str());
  return 0;
}

int run_eval(const std::string& pred, const std::string& gt, const std::string& out) {
  const auto e = evaluate_directory(pred, gt);
  print_warnings(e.warnings);
  write_reports(out, e.report);
  print_report(e.report);
  return 0;
}

int run_gradcheck(double tolerance, double network_tolerance, std::int64_t entries) {
  bool ok = true;
  std::printf("%-28s %12s %8s %s\n", "op", "max_rel_err", "entries", "result");
  auto row = [&](const GradcheckResult& r) {
    ok = ok && r.passed();
    std::printf("%-28s %12.3e %8lld %s\n", r.name.c_str(), r.max_rel_error,
                static_cast<long long>(r.entries), r.passed() ? "PASS" : "FAIL");
  };
  for (const auto& r : op_gradcheck_suite(tolerance)) row(r);
  row(network_gradcheck(network_tolerance, entries));
  return ok ? 0 : 1;
}

int run_ablate(Overrides o, const std::vector<std::string>& presets, double test_fraction) {
  const auto base = o.resolve();
  if (base.data_dir.empty()) throw ConfigError("--data is required");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("--test-fraction must lie in (0, 1)");
  }
  std::vector<std::string> warnings;
  const auto all = load_dataset<float>(base.data_dir, base.network.backbone.input_size, &warnings);
  print_warnings(warnings);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * all.size()));
  if (n_test == 0 || n_test >= all.size()) throw DataError("dataset too small to split");
  // the split is the tail of the stem order, identical for every preset
  const std::vector<PreparedSample<float>> train_set(all.begin(), all.end() - n_test);
  const std::vector<PreparedSample<float>> test_set(all.end() - n_test, all.end());
  std::vector<AblationRow> rows;
  for (const auto& p : presets) {
    rows.push_back(run_ablation(p, base, train_set, test_set));
    std::printf("%s: MAE %.4f  S_alpha %.4f  (%.0f s)\n", p.c_str(), rows.back().report.mae,
                rows.back().report.s_alpha, rows.back().seconds);
    std::fflush(stdout);
  }
  std::filesystem::create_directories(base.out_dir);
  const auto table = format_comparison(rows);
  std::ofstream((std::filesystem::path(base.out_dir) / "comparison.md").string()) << table;
  write_comparison_csv((std::filesystem::path(base.out_dir) / "comparison.csv").string(), rows);
  std::cout << table;
  return 0;
}

std::string error_type(const std::exception& e) {
  if (dynamic_cast<const DimensionError*>(&e)) return "DimensionError";
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const DataError*>(&e)) return "DataError";
  if (dynamic_cast<const DivergenceError*>(&e)) return "DivergenceError";
  return "Error";
}

int report_error(const std::string& type, const std::string& message) {
  std::cerr << nlohmann::json{{"error", message}, {"type", type}}.dump() << '\n';
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RGB-D salient object detection: training, inference and evaluation"};
  app.require_subcommand(1);

  SyntheticOptions synth_opt;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "write a synthetic RGB-D corpus");
  synth->add_option("--out", synth_out)->required();
  synth->add_option("--count", synth_opt.count);
  synth->add_option("--size", synth_opt.size);
  synth->add_option("--seed", synth_opt.seed);
  synth->add_flag("--depth16", synth_opt.depth16, "store depth as 16-bit PNG");

  Overrides train_o;
  std::int64_t max_iterations = -1, log_every = 0;
  auto* train = app.add_subcommand("train", "train a network; writes checkpoint and loss trace");
  train_o.attach(train);
  train->add_option("--max-iterations", max_iterations);
  train->add_option("--log-every", log_every);

  std::string ckpt, infer_data, infer_out;
  auto* infer = app.add_subcommand("infer", "write 8-bit saliency PNGs at native size");
  infer->add_option("--checkpoint", ckpt)->required();
  infer->add_option("--data", infer_data)->required();
  infer->add_option("--out", infer_out)->required();

  std::string pred_dir, gt_dir, eval_out;
  auto* eval = app.add_subcommand("eval", "score saliency maps against ground truth");
  eval->add_option("--pred", pred_dir)->required();
  eval->add_option("--gt", gt_dir)->required();
  eval->add_option("--out", eval_out)->required();

  double tolerance = 1e-4, network_tolerance = 1e-3;
  std::int64_t entries = 8;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every op");
  gradcheck->add_option("--tolerance", tolerance);
  gradcheck->add_option("--network-tolerance", network_tolerance);
  gradcheck->add_option("--entries", entries, "sampled entries per parameter tensor");

  Overrides ablate_o;
  std::vector<std::string> presets{"A", "C", "D", "E"};
  double test_fraction = 0.2;
  auto* ablate = app.add_subcommand("ablate", "train and compare ablation presets");
  ablate_o.attach(ablate);
  ablate->add_option("--presets", presets)->delimiter(',');
  ablate->add_option("--test-fraction", test_fraction);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("UsageError", e.what());
  }

  try {
    if (*synth) return run_synth(synth_out, synth_opt);
    if (*train) return run_train(train_o, max_iterations, log_every);
    if (*infer) return run_infer(ckpt, infer_data, infer_out);
    if (*eval) return run_eval(pred_dir, gt_dir, eval_out);
    if (*gradcheck) return run_gradcheck(tolerance, network_tolerance, entries);
    if (*ablate) return run_ablate(ablate_o, presets, test_fraction);
  } catch (const Error& e) {
    return report_error(error_type(e), e.what());
  } catch (const std::exception& e) {
    return report_error("InternalError", e.what());
  }
  return 0;
}
