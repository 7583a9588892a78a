#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "jldcf/gradcheck.hpp"
#include "jldcf/harness.hpp"

using namespace jldcf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("jldcf_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST(RunConfigFile, RoundTripsEveryField) {
  const auto dir = scratch("config");
  RunConfig cfg = desk_run_config(32, 4, 8);
  cfg.network.fusion = FusionVariant::concat;
  cfg.network.wiring = DecoderWiring::residual;
  cfg.seed = 77;
  cfg.epochs = 3;
  cfg.mirror = false;
  cfg.data_dir = "somewhere";
  save_run_config(cfg, (dir / "c.json").string());
  EXPECT_EQ(load_run_config((dir / "c.json").string()), cfg);
}

TEST(RunConfigFile, MissingKeysKeepDefaultsAndBadValuesAreRejected) {
  const auto dir = scratch("partial");
  write_text(dir / "p.json", R"({"epochs": 2, "network": {"k": 8}})");
  const auto cfg = load_run_config((dir / "p.json").string());
  EXPECT_EQ(cfg.epochs, 2);
  EXPECT_EQ(cfg.network.k, 8);
  EXPECT_EQ(cfg.loss.lambda, RunConfig{}.loss.lambda);
  write_text(dir / "bad.json", R"({"network": {"fusion": "sum"}})");
  EXPECT_THROW(load_run_config((dir / "bad.json").string()), ConfigError);
  write_text(dir / "broken.json", "{epochs");
  EXPECT_THROW(load_run_config((dir / "broken.json").string()), ConfigError);
  EXPECT_THROW(load_run_config((dir / "absent.json").string()), ConfigError);
}

TEST(Ingest, PairsByStemAndWarnsAboutStrays) {
  const auto root = scratch("ingest");
  SyntheticOptions opt;
  opt.count = 3;
  opt.size = 24;
  const auto stems = generate_synthetic(root, opt);
  fs::copy_file(root / "GT" / (stems[0] + ".png"), root / "GT" / "zzz_extra.png");
  const auto r = ingest({root});
  ASSERT_EQ(r.samples.size(), 3u);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("zzz_extra"), std::string::npos);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(r.samples[i].stem, stems[i]);
  EXPECT_EQ(ingest({root}).samples[2].gt, r.samples[2].gt);
  fs::remove_all(root / "depth");
  EXPECT_THROW(ingest({root}), DataError);
}

TEST(Ingest, SixteenBitDepthMatchesItsEightBitTwin) {
  const auto a = scratch("d8"), b = scratch("d16");
  SyntheticOptions opt;
  opt.count = 1;
  opt.size = 32;
  generate_synthetic(a, opt);
  opt.depth16 = true;
  generate_synthetic(b, opt);
  const auto s8 = load_dataset<double>(a.string(), 32);
  const auto s16 = load_dataset<double>(b.string(), 32);
  EXPECT_EQ(read_image((b / "depth" / "syn_00000.png").string()).max_value, 65535);
  EXPECT_EQ(s8[0].gt.vec(), s16[0].gt.vec());
  // same scene, quantized on different grids
  for (std::size_t i = 0; i < s8[0].depth3.vec().size(); ++i) {
    EXPECT_NEAR(s8[0].depth3.vec()[i], s16[0].depth3.vec()[i], 4.0);
  }
}

TEST(Checkpoint, EncodeDecodeRoundTrip) {
  JlDcfNet<float> net(vgg_network(16, 4, 8), 3);
  const auto manifest = checkpoint_manifest<float>(desk_run_config(16, 4, 8), 5);
  const auto bytes = encode_checkpoint(net.parameters(), manifest);
  const auto ck = decode_checkpoint(bytes);
  EXPECT_EQ(ck.manifest, manifest);
  EXPECT_EQ(ck.manifest.at("iterations"), 5);
  JlDcfNet<float> other(vgg_network(16, 4, 8), 9);
  load_parameters(ck, other.parameters());
  EXPECT_EQ(encode_checkpoint(other.parameters(), manifest), bytes);
}

TEST(Checkpoint, CorruptOrMismatchedFilesAreRejected) {
  JlDcfNet<float> net(vgg_network(16, 4, 8), 3);
  const auto bytes = encode_checkpoint(net.parameters(), nlohmann::json::object());
  EXPECT_THROW(decode_checkpoint("NOTACKPT"), DataError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), DataError);
  EXPECT_THROW(decode_checkpoint(bytes + "x"), DataError);
  JlDcfNet<float> wider(vgg_network(16, 8, 8), 3);
  EXPECT_THROW(load_parameters(decode_checkpoint(bytes), wider.parameters()), DimensionError);
  auto cfg = vgg_network(16, 4, 8);
  cfg.separate_backbones = true;
  JlDcfNet<float> twin(cfg, 3);
  EXPECT_THROW(load_parameters(decode_checkpoint(bytes), twin.parameters()), DataError);
  EXPECT_THROW(read_checkpoint("/nonexistent/ckpt.bin"), DataError);
}

TEST(Presets, EveryPresetBuildsAndRuns) {
  const auto base = desk_run_config(32, 4, 8);
  for (const auto& p : ablation_presets()) {
    const auto cfg = apply_preset(base, p.name);
    JlDcfNet<float> net(cfg.network, 1);
    NoGradGuard g;
    const auto x = Tensor<float>::zeros({1, 3, 32, 32});
    EXPECT_EQ(net.forward(x, x).final_map.shape(), (Shape{1, 1, 32, 32})) << p.name;
  }
  EXPECT_THROW(apply_preset(base, "Z"), ConfigError);
}

TEST(Presets, SeparateBackbonesDoubleTheBackbone) {
  const auto base = desk_run_config(32, 4, 8);
  JlDcfNet<float> a(apply_preset(base, "A").network, 1);
  JlDcfNet<float> f(apply_preset(base, "F").network, 1);
  EXPECT_EQ(backbone_parameter_count(f), 2 * backbone_parameter_count(a));
  EXPECT_EQ(parameter_count(f) - parameter_count(a), backbone_parameter_count(a));
  JlDcfNet<float> b(apply_preset(base, "B-vgg-width").network, 1);
  EXPECT_LT(backbone_parameter_count(b), backbone_parameter_count(a) / 3);
}

TEST(Presets, RgbOnlyIgnoresDepth) {
  JlDcfNet<double> net(apply_preset(desk_run_config(16, 4, 8), "D").network, 2);
  Rng rng(3);
  const auto rgb = detail::random_tensor(rng, {1, 3, 16, 16}, 0, 255);
  NoGradGuard g;
  const auto a = net.forward(rgb, detail::random_tensor(rng, {1, 3, 16, 16}, 0, 255));
  const auto b = net.forward(rgb, detail::random_tensor(rng, {1, 3, 16, 16}, 0, 255));
  EXPECT_EQ(a.final_map.vec(), b.final_map.vec());
  EXPECT_FALSE(a.coarse_depth.defined());
}

TEST(Presets, VariantNames) {
  EXPECT_EQ(parse_variant("cm"), FusionVariant::cm);
  EXPECT_EQ(parse_variant("identity_depth"), FusionVariant::identity_depth);
  EXPECT_THROW(parse_variant("sum"), ConfigError);
}

TEST(Evaluate, GroundTruthAsPredictionIsPerfect) {
  const auto root = scratch("eval_perfect");
  SyntheticOptions opt;
  opt.count = 3;
  opt.size = 20;
  generate_synthetic(root, opt);
  const auto e = evaluate_directory(root / "GT", root / "GT");
  EXPECT_TRUE(e.warnings.empty());
  EXPECT_NEAR(e.report.s_alpha, 1.0, 1e-10);
  EXPECT_EQ(e.report.f_max, 1.0);
  EXPECT_EQ(e.report.e_max, 1.0);
  EXPECT_EQ(e.report.mae, 0.0);
}

TEST(Evaluate, MissingFilesAndEmptyGroundTruthAreWarnings) {
  const auto root = scratch("eval_warn");
  SyntheticOptions opt;
  opt.count = 3;
  opt.size = 20;
  const auto stems = generate_synthetic(root, opt);
  const auto pred = root / "pred";
  fs::create_directories(pred);
  fs::copy_file(root / "GT" / (stems[0] + ".png"), pred / (stems[0] + ".png"));
  fs::copy_file(root / "GT" / (stems[1] + ".png"), pred / (stems[1] + ".png"));
  write_png((root / "GT" / "blank.png").string(), 20, 20, 1, std::vector<std::uint8_t>(400, 0));
  write_png((pred / "blank.png").string(), 20, 20, 1, std::vector<std::uint8_t>(400, 9));
  const auto e = evaluate_directory(pred, root / "GT");
  EXPECT_EQ(e.report.images.size(), 2u);
  EXPECT_EQ(e.warnings.size(), 2u);
  EXPECT_EQ(e.report.mae, 0.0);
}

TEST(Evaluate, ReportFilesAreWritten) {
  const auto root = scratch("reports");
  SyntheticOptions opt;
  opt.count = 2;
  opt.size = 20;
  generate_synthetic(root, opt);
  write_reports(root / "out", evaluate_directory(root / "GT", root / "GT").report);
  std::ifstream csv(root / "out" / "report.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "S_alpha,F_max,E_max,MAE");
  std::ifstream pr(root / "out" / "pr_curve.csv");
  int lines = 0;
  for (std::string l; std::getline(pr, l);) ++lines;
  EXPECT_EQ(lines, 257);
  std::ifstream js(root / "out" / "report.json");
  const auto j = nlohmann::json::parse(js);
  EXPECT_EQ(j.at("dataset").at("MAE"), 0.0);
  EXPECT_EQ(j.at("images").size(), 2u);
}

TEST(Infer, WritesMapsAtNativeSize) {
  const auto root = scratch("infer");
  SyntheticOptions opt;
  opt.count = 2;
  opt.size = 40;
  generate_synthetic(root, opt);
  const auto samples = load_dataset<float>(root.string(), 32);
  JlDcfNet<float> net(vgg_network(32, 4, 8), 1);
  const auto written = infer_to_directory(net, samples, root / "pred");
  ASSERT_EQ(written.size(), 2u);
  const auto img = read_image(written[0].string());
  EXPECT_EQ(img.height, 40);
  EXPECT_EQ(img.width, 40);
  EXPECT_EQ(img.channels, 1);
  const auto e = evaluate_directory(root / "pred", root / "GT");
  EXPECT_EQ(e.report.images.size(), 2u);
  const auto mem = evaluate_samples(net, samples);
  EXPECT_EQ(mem.report.mae, e.report.mae);
}

TEST(Comparison, TableHasMetricRowsAndPresetColumns) {
  AblationRow a{"A", "full", {}, 100, 1, 0.0};
  AblationRow d{"D", "rgb", {}, 50, 1, 0.0};
  a.report.mae = 0.05;
  d.report.mae = 0.25;
  const auto table = format_comparison({a, d});
  EXPECT_NE(table.find("| metric | A | D |"), std::string::npos);
  EXPECT_NE(table.find("| MAE | 0.0500 | 0.2500 |"), std::string::npos);
  EXPECT_NE(table.find("| params | 100 | 50 |"), std::string::npos);
}
