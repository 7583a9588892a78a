#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "jldcf/harness.hpp"
#include "jldcf/train.hpp"

using namespace jldcf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("jldcf_training_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<PreparedSample<float>> synthetic(const std::string& name, std::int64_t count,
                                             std::int64_t size) {
  const auto root = scratch(name);
  SyntheticOptions opt;
  opt.count = count;
  opt.size = size;
  generate_synthetic(root, opt);
  return load_dataset<float>(root.string(), size);
}

RunConfig small_config() {
  auto cfg = desk_run_config(32, 4, 8);
  cfg.epochs = 1;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(DeskSchedule, LearningRateScalesWithInversePixelCount) {
  EXPECT_EQ(desk_learning_rate(64), kDeskBaseLearningRate);
  EXPECT_DOUBLE_EQ(desk_learning_rate(32), 4 * kDeskBaseLearningRate);
  EXPECT_DOUBLE_EQ(desk_learning_rate(320) * 25, kDeskBaseLearningRate);
  const auto cfg = desk_run_config();
  EXPECT_EQ(cfg.loss.lambda, 256.0);
  EXPECT_EQ(cfg.optimizer.momentum, 0.99);
  EXPECT_EQ(cfg.optimizer.weight_decay, 0.0005);
  EXPECT_TRUE(cfg.mirror);
}

TEST(Train, MirroringDoublesTheEpoch) {
  const auto data = synthetic("mirror", 3, 32);
  auto cfg = small_config();
  cfg.epochs = 2;
  JlDcfNet<float> a(cfg.network, cfg.seed);
  EXPECT_EQ(train(a, data, cfg).size(), 12u);
  cfg.mirror = false;
  JlDcfNet<float> b(cfg.network, cfg.seed);
  EXPECT_EQ(train(b, data, cfg).size(), 6u);
}

TEST(Train, MirroredSampleFlipsEveryMap) {
  const auto data = synthetic("flip", 1, 32);
  const auto& s = data[0];
  const auto m = mirrored(s);
  EXPECT_EQ(mirrored(m).rgb.vec(), s.rgb.vec());
  EXPECT_EQ(m.gt.vec()[31], s.gt.vec()[0]);
  EXPECT_EQ(m.gt_native[31], s.gt_native[0]);
  EXPECT_EQ(m.depth3.vec()[0], s.depth3.vec()[31]);
}

TEST(Train, SameSeedGivesIdenticalTracesAndWeights) {
  const auto data = synthetic("determinism", 2, 32);
  const auto cfg = small_config();
  JlDcfNet<float> a(cfg.network, cfg.seed), b(cfg.network, cfg.seed);
  const auto ta = train(a, data, cfg);
  const auto tb = train(b, data, cfg);
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_EQ(ta[i].total, tb[i].total);
  const auto manifest = checkpoint_manifest<float>(cfg, 4);
  EXPECT_EQ(encode_checkpoint(a.parameters(), manifest), encode_checkpoint(b.parameters(), manifest));

  auto other = cfg;
  other.seed = 2;
  JlDcfNet<float> c(other.network, other.seed);
  EXPECT_NE(train(c, data, other)[0].total, ta[0].total);
}

TEST(Train, LossFallsOnATinySet) {
  const auto data = synthetic("descent", 2, 32);
  auto cfg = small_config();
  cfg.epochs = 40;
  JlDcfNet<float> net(cfg.network, cfg.seed);
  const auto trace = train(net, data, cfg);
  double first = 0, last = 0;
  for (int i = 0; i < 8; ++i) {
    first += trace[i].total;
    last += trace[trace.size() - 1 - i].total;
  }
  EXPECT_LT(last, 0.5 * first);
}

TEST(Train, MaxIterationsAndCallback) {
  const auto data = synthetic("cap", 3, 32);
  const auto cfg = small_config();
  JlDcfNet<float> net(cfg.network, cfg.seed);
  std::int64_t seen = 0;
  TrainOptions opt;
  opt.max_iterations = 4;
  opt.on_iteration = [&](const LossRecord& r) { EXPECT_EQ(r.iteration, seen++); };
  EXPECT_EQ(train(net, data, cfg, opt).size(), 4u);
  EXPECT_EQ(seen, 4);
  TrainOptions stop;
  stop.stop = [](const LossRecord& r) { return r.iteration == 2; };
  EXPECT_EQ(train(net, data, cfg, stop).size(), 3u);
}

TEST(Train, HugeLearningRateIsReportedAsDivergence) {
  const auto data = synthetic("diverge", 2, 32);
  auto cfg = small_config();
  cfg.epochs = 20;
  cfg.optimizer.lr = 1e3;
  JlDcfNet<float> net(cfg.network, cfg.seed);
  EXPECT_THROW(train(net, data, cfg), DivergenceError);
}

TEST(Train, RejectsBadInputs) {
  const auto cfg = small_config();
  JlDcfNet<float> net(cfg.network, cfg.seed);
  EXPECT_THROW(train(net, std::vector<PreparedSample<float>>{}, cfg), DataError);
  const auto data = synthetic("bad", 1, 32);
  auto zero = cfg;
  zero.epochs = 0;
  EXPECT_THROW(train(net, data, zero), ConfigError);
  auto mt = cfg;
  mt.network.multitask = true;
  JlDcfNet<float> mt_net(mt.network, mt.seed);
  EXPECT_THROW(train(mt_net, data, mt), DataError);
}

TEST(Train, MultitaskRunsWithAnRgbTaskSet) {
  const auto data = synthetic("multitask", 2, 32);
  const auto root = scratch("multitask_rgb");
  SyntheticOptions opt;
  opt.count = 2;
  opt.size = 48;
  opt.seed = 99;
  generate_synthetic(root, opt);
  fs::remove_all(root / "depth");
  const auto rgb_task = load_rgb_task<float>(root.string(), 32);
  ASSERT_EQ(rgb_task.size(), 2u);
  EXPECT_EQ(rgb_task[0].native_height, 48);

  auto cfg = small_config();
  cfg.network.multitask = true;
  JlDcfNet<float> net(cfg.network, cfg.seed);
  const auto trace = train(net, data, cfg, {}, &rgb_task);
  EXPECT_EQ(trace.size(), 4u);
  EXPECT_EQ(predict(net, data[0]).shape(), (Shape{1, 1, 32, 32}));
}

TEST(LossTrace, CsvRoundTripsEveryDigit) {
  const auto dir = scratch("trace");
  const std::vector<LossRecord> trace{{0, 0.1, 1.0 / 3.0, 2e-300, 12345.678901234567},
                                      {1, 1.0, 2.0, 3.0, 4.0}};
  write_loss_trace((dir / "t.csv").string(), trace);
  std::ifstream in(dir / "t.csv");
  std::string header, row;
  std::getline(in, header);
  EXPECT_EQ(header, "iteration,L_f,L_g_rgb,L_g_d,total");
  std::getline(in, row);
  std::stringstream ss(row);
  std::string cell;
  std::vector<double> values;
  while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
  EXPECT_EQ(values, (std::vector<double>{0, 0.1, 1.0 / 3.0, 2e-300, 12345.678901234567}));
}

TEST(RunTraining, WritesReproducibleArtifacts) {
  const auto data_root = scratch("run_data");
  SyntheticOptions opt;
  opt.count = 2;
  opt.size = 40;
  generate_synthetic(data_root, opt);
  auto cfg = small_config();
  cfg.data_dir = data_root.string();
  cfg.out_dir = scratch("run_out").string();
  const auto a = run_training<float>(cfg);
  const auto first_checkpoint = slurp(a.checkpoint), first_trace = slurp(a.trace);
  // the manifest records out_dir, so the rerun writes to the same place
  const auto b = run_training<float>(cfg);
  EXPECT_EQ(slurp(b.checkpoint), first_checkpoint);
  EXPECT_EQ(slurp(b.trace), first_trace);
  EXPECT_EQ(load_run_config(a.config.string()).epochs, 1);

  RunConfig stored;
  const auto net = load_network<float>(a.checkpoint.string(), &stored);
  EXPECT_EQ(stored.network, cfg.network);
  EXPECT_EQ(net.parameters().count(), JlDcfNet<float>(cfg.network, 1).parameters().count());
}
