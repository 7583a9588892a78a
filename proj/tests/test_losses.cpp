#include <gtest/gtest.h>

#include <cmath>

#include "jldcf/gradcheck.hpp"
#include "jldcf/losses.hpp"

using namespace jldcf;

namespace {

Tensor<double> half(std::int64_t n) { return Tensor<double>::full({1, 1, n, n}, 0.5); }

Tensor<double> binary_target(Rng& rng, std::int64_t n) {
  std::vector<double> v(static_cast<std::size_t>(n * n));
  for (auto& x : v) x = rng.uniform() < 0.4 ? 1.0 : 0.0;
  return Tensor<double>({1, 1, n, n}, v);
}

LossConfig with_lambda(double lambda) {
  LossConfig c;
  c.lambda = lambda;
  return c;
}

}  // namespace

TEST(CrossEntropy, HalfMapCostsLog2PerPixel) {
  Rng rng(1);
  for (std::int64_t n : {1, 4, 9}) {
    EXPECT_NEAR(cross_entropy(half(n), binary_target(rng, n)).item(), n * n * std::log(2.0), 1e-12);
  }
}

TEST(CrossEntropy, PerfectPredictionLimitIsNearZero) {
  Rng rng(2);
  const auto g = binary_target(rng, 6);
  const double loss = cross_entropy(g.clone(), g).item();
  const double eps = 1e-7;
  EXPECT_NEAR(loss, 36 * -std::log(1 - eps), 1e-9);
  EXPECT_LT(loss, 1e-4);
}

TEST(CrossEntropy, GradientMatchesClosedFormAndFiniteDifferences) {
  Rng rng(3);
  auto s = detail::random_tensor(rng, {1, 1, 4, 4}, 0.05, 0.95);
  const auto g = binary_target(rng, 4);
  s.set_requires_grad(true);
  backward(cross_entropy(s, g));
  for (std::size_t i = 0; i < s.vec().size(); ++i) {
    const double p = s.vec()[i];
    EXPECT_NEAR(s.grad()[i], (p - g.vec()[i]) / (p * (1 - p)), 1e-12);
  }
  const auto r = check_gradients(
      "ce", [&](const std::vector<Tensor<double>>& in) { return cross_entropy(in[0], g); }, {s},
      1e-6);
  EXPECT_TRUE(r.passed()) << r.max_rel_error;
}

TEST(CrossEntropy, RejectsShapeMismatch) {
  EXPECT_THROW(cross_entropy(half(4), half(2)), DimensionError);
}

TEST(TotalLoss, ZeroLambdaIsTheFinalLossAlone) {
  Rng rng(4);
  const auto sf = detail::random_tensor(rng, {1, 1, 16, 16}, 0.01, 0.99);
  const auto sr = detail::random_tensor(rng, {1, 1, 1, 1}, 0.01, 0.99);
  const auto sd = detail::random_tensor(rng, {1, 1, 1, 1}, 0.01, 0.99);
  const auto g = binary_target(rng, 16);
  const auto terms = total_loss(sf, sr, sd, g, with_lambda(0.0));
  EXPECT_EQ(terms.total.item(), cross_entropy(sf, g).item());
}

TEST(TotalLoss, DeskScaleHalfMapsSumThreeTerms) {
  Rng rng(5);
  const auto g = binary_target(rng, 64);
  const auto terms = total_loss(half(64), half(4), half(4), g, with_lambda(256.0));
  const double expect = 64.0 * 64.0 * std::log(2.0) + 256.0 * 2.0 * 16.0 * std::log(2.0);
  EXPECT_NEAR(terms.total.item(), expect, 1e-9 * expect);
  // lambda = (64 / 4)^2 gives each coarse term the weight of the final one
  EXPECT_NEAR(256.0 * terms.guidance_rgb, terms.final_term, 1e-9 * terms.final_term);
  EXPECT_NEAR(256.0 * terms.guidance_depth, terms.final_term, 1e-9 * terms.final_term);
}

TEST(TotalLoss, PublishedScaleArithmetic) {
  Rng rng(6);
  const auto g = binary_target(rng, 320);
  const auto terms = total_loss(half(320), half(20), half(20), g, with_lambda(256.0));
  // 320^2 log2 + 256 * 2 * 20^2 log2 = 3 * 320^2 log2, since 256 = (320 / 20)^2
  const double expect = 3.0 * 320.0 * 320.0 * std::log(2.0);
  EXPECT_NEAR(terms.total.item(), expect, 1e-9 * expect);
  EXPECT_EQ(320.0 * 320.0 / (20.0 * 20.0), 256.0);
}

TEST(TotalLoss, SwappingCoarseMapsLeavesTheLossUnchanged) {
  Rng rng(7);
  const auto sf = detail::random_tensor(rng, {1, 1, 32, 32}, 0.01, 0.99);
  const auto a = detail::random_tensor(rng, {1, 1, 2, 2}, 0.01, 0.99);
  const auto b = detail::random_tensor(rng, {1, 1, 2, 2}, 0.01, 0.99);
  const auto g = binary_target(rng, 32);
  EXPECT_DOUBLE_EQ(total_loss(sf, a, b, g, LossConfig{}).total.item(),
                   total_loss(sf, b, a, g, LossConfig{}).total.item());
}

TEST(TotalLoss, NonNegativeAndShapeChecked) {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = binary_target(rng, 16);
    const auto t = total_loss(detail::random_tensor(rng, {1, 1, 16, 16}, 0, 1),
                              detail::random_tensor(rng, {1, 1, 1, 1}, 0, 1),
                              detail::random_tensor(rng, {1, 1, 1, 1}, 0, 1), g, LossConfig{});
    EXPECT_GE(t.total.item(), 0.0);
  }
  const auto g = binary_target(rng, 16);
  EXPECT_THROW(total_loss(half(8), half(1), half(1), g, LossConfig{}), DimensionError);
  EXPECT_THROW(total_loss(half(16), half(3), half(3), g, LossConfig{}), DimensionError);
  EXPECT_THROW(total_loss(half(16), half(1), half(1), g, with_lambda(-1)), ConfigError);
}

TEST(TotalLoss, GuidanceTargetIsTheSoftDownsample) {
  // a 2x2 target with one foreground pixel resized to 1x1 (aligned corners)
  // picks the top-left corner value
  const Tensor<double> g({1, 1, 2, 2}, {1.0, 0.0, 0.0, 0.0});
  EXPECT_EQ(downsample_target(g, 1, 1).vec(), (std::vector<double>{1.0}));
  const Tensor<double> g4({1, 1, 4, 4}, std::vector<double>(16, 1.0));
  EXPECT_EQ(downsample_target(g4, 2, 2).vec(), (std::vector<double>(4, 1.0)));
}

TEST(MultitaskLoss, WithoutTheRgbTaskItEqualsTheTotalLoss) {
  Rng rng(9);
  const auto sf = detail::random_tensor(rng, {1, 1, 32, 32}, 0.01, 0.99);
  const auto sr = detail::random_tensor(rng, {1, 1, 2, 2}, 0.01, 0.99);
  const auto sd = detail::random_tensor(rng, {1, 1, 2, 2}, 0.01, 0.99);
  const auto g = binary_target(rng, 32);
  const auto a = multitask_loss(sf, sr, sd, Tensor<double>{}, g,
                                static_cast<const Tensor<double>*>(nullptr), LossConfig{});
  const auto b = total_loss(sf, sr, sd, g, LossConfig{});
  EXPECT_EQ(a.total.item(), b.total.item());
}

TEST(MultitaskLoss, AddsTheRgbTaskGuidanceTerm) {
  Rng rng(10);
  const auto sf = detail::random_tensor(rng, {1, 1, 32, 32}, 0.01, 0.99);
  const auto sr = detail::random_tensor(rng, {1, 1, 2, 2}, 0.01, 0.99);
  const auto sd = detail::random_tensor(rng, {1, 1, 2, 2}, 0.01, 0.99);
  const auto ss = detail::random_tensor(rng, {1, 1, 2, 2}, 0.01, 0.99);
  const auto g = binary_target(rng, 32);
  const auto g_rgb = binary_target(rng, 32);
  const LossConfig cfg = with_lambda(3.0);
  const auto m = multitask_loss(sf, sr, sd, ss, g, &g_rgb, cfg);
  const double expect = cross_entropy(sf, g).item() +
                        3.0 * (cross_entropy(sr, downsample_target(g, 2, 2)).item() +
                               cross_entropy(sd, downsample_target(g, 2, 2)).item() +
                               cross_entropy(ss, downsample_target(g_rgb, 2, 2)).item());
  EXPECT_NEAR(m.total.item(), expect, 1e-10 * expect);
  const Tensor<double>* none = nullptr;
  EXPECT_THROW(multitask_loss(sf, sr, sd, ss, g, none, cfg), DataError);
}

TEST(MultitaskLoss, RgbTaskRowSendsGradientIntoTheSharedBackbone) {
  auto cfg = vgg_network(16, 4, 8);
  cfg.multitask = true;
  JlDcfNet<double> net(cfg, 4);
  Rng rng(11);
  const auto rgb = detail::random_tensor(rng, {1, 3, 16, 16}, 0, 255);
  const auto depth = detail::random_tensor(rng, {1, 3, 16, 16}, 0, 255);
  const auto star = detail::random_tensor(rng, {1, 3, 16, 16}, 0, 255);
  const auto g = binary_target(rng, 16);
  const auto g_star = binary_target(rng, 16);

  // gradient of the rgb* guidance term alone
  const auto p = net.forward(rgb, depth, &star);
  auto only_star = scale(cross_entropy(p.coarse_rgb_star, downsample_target(g_star, 1, 1)), 256.0);
  backward(only_star);
  double norm = 0;
  for (const auto& e : net.parameters().entries()) {
    if (e.name.rfind("backbone.", 0) != 0) continue;
    for (double v : e.tensor.grad()) norm += v * v;
  }
  EXPECT_GT(norm, 0.0);
  net.parameters().zero_grad();

  // the full loss needs the rgb* target
  const auto q = net.forward(rgb, depth, &star);
  EXPECT_THROW(prediction_loss(q, g, LossConfig{}), DataError);
  EXPECT_GT(prediction_loss(q, g, LossConfig{}, &g_star).guidance_rgb_star, 0.0);
}

TEST(PredictionLoss, SingleModalityVariantsSuperviseTheirOwnCoarseMap) {
  auto cfg = vgg_network(16, 4, 8);
  cfg.fusion = FusionVariant::identity_depth;
  JlDcfNet<double> net(cfg, 4);
  Rng rng(12);
  const auto x = detail::random_tensor(rng, {1, 3, 16, 16}, 0, 255);
  const auto p = net.forward(x, x);
  const auto t = prediction_loss(p, binary_target(rng, 16), LossConfig{});
  EXPECT_EQ(t.guidance_rgb, 0.0);
  EXPECT_GT(t.guidance_depth, 0.0);
}
