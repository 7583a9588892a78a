#include <gtest/gtest.h>

#include <numeric>

#include "jldcf/metrics.hpp"
#include "oracles.hpp"

using namespace jldcf;
using namespace jldcf::metrics;

namespace {

EvalPair two_by_two() {
  // S = [[1,0],[0,1]], G = [[1,1],[0,0]]
  return {2, 2, {1.0, 0.0, 0.0, 1.0}, {1, 1, 0, 0}};
}

EvalPair perfect(jldcf::Rng& rng, std::int64_t h, std::int64_t w) {
  auto p = oracle::random_pair(rng, h, w);
  for (std::size_t i = 0; i < p.gt.size(); ++i) p.saliency[i] = p.gt[i];
  return p;
}

}  // namespace

TEST(EvalPair, RejectsInvalidInputs) {
  EvalPair p{2, 2, {0.0, 0.5, 1.0}, {0, 1, 0, 1}};
  EXPECT_THROW(validate(p), DimensionError);
  p.saliency.push_back(1.5);
  EXPECT_THROW(validate(p), DataError);
  p.saliency.back() = 0.2;
  p.gt[0] = 2;
  EXPECT_THROW(validate(p), DataError);
}

TEST(PrCurve, HandEnumeratedTwoByTwo) {
  const auto c = pr_curve(two_by_two());
  EXPECT_EQ(c.precision[128], 0.5);
  EXPECT_EQ(c.recall[128], 0.5);
}

TEST(PrCurve, AllZeroGroundTruthIsRejected) {
  EXPECT_THROW(pr_curve(EvalPair{1, 2, {0.3, 0.4}, {0, 0}}), DataError);
}

TEST(PrCurve, EmptyMaskHasPrecisionOne) {
  const auto c = pr_curve(EvalPair{1, 2, {0.0, 0.1}, {1, 0}});
  EXPECT_EQ(c.precision[255], 1.0);
  EXPECT_EQ(c.recall[255], 0.0);
}

TEST(PrCurve, PerfectMapIsPerfectAtEveryPositiveThreshold) {
  jldcf::Rng rng(3);
  const auto c = pr_curve(perfect(rng, 9, 7));
  for (int t = 1; t < 256; ++t) {
    EXPECT_EQ(c.precision[t], 1.0);
    EXPECT_EQ(c.recall[t], 1.0);
  }
}

TEST(PrCurve, MatchesPerThresholdBruteForceExactly) {
  jldcf::Rng rng(20);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = oracle::random_pair(rng, 16, 16);
    const auto c = pr_curve(p);
    for (int t = 0; t < 256; ++t) {
      ASSERT_EQ(c.precision[t], oracle::precision_at(p, t)) << "trial " << trial << " T " << t;
      ASSERT_EQ(c.recall[t], oracle::recall_at(p, t)) << "trial " << trial << " T " << t;
    }
  }
}

TEST(PrCurve, MaskSizeIsNonIncreasingInThreshold) {
  jldcf::Rng rng(21);
  const auto p = oracle::random_pair(rng, 16, 16);
  std::int64_t prev = p.size() + 1;
  for (int t = 0; t < 256; ++t) {
    std::int64_t m = 0;
    for (double s : p.saliency) m += quantize(s) >= t;
    EXPECT_LE(m, prev);
    prev = m;
  }
}

TEST(FMeasure, HandValues) {
  EXPECT_EQ(f_measure(1.0, 1.0), 1.0);
  // (1 + 0.3) * 0.25 / (0.3 * 0.5 + 0.5) = 0.325 / 0.65
  EXPECT_DOUBLE_EQ(f_measure(0.5, 0.5), 0.5);
  EXPECT_EQ(f_measure(0.0, 0.0), 0.0);
  // precision weighs more than recall
  EXPECT_GT(f_measure(0.9, 0.5), f_measure(0.5, 0.9));
}

TEST(FMeasure, MaxMatchesBruteForceExactly) {
  jldcf::Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = oracle::random_pair(rng, 16, 16);
    EXPECT_EQ(f_measure_max(pr_curve(p)), oracle::f_max(p));
  }
}

TEST(SMeasure, MatchesReferenceImplementation) {
  jldcf::Rng rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const auto p = oracle::random_pair(rng, 8 + trial % 9, 8 + (trial * 5) % 11);
    EXPECT_NEAR(s_measure(p), oracle::s_measure(p), 1e-10);
  }
}

TEST(SMeasure, PerfectAndInvertedMaps) {
  jldcf::Rng rng(24);
  auto p = perfect(rng, 8, 8);
  // the reference's eps regularizers (e.g. alpha / (beta + eps) on sparse
  // quadrants) leave S(G, G) slightly below 1
  EXPECT_NEAR(s_measure(p), 1.0, 1e-10);
  EXPECT_NEAR(s_measure(p), oracle::s_measure(p), 1e-10);
  auto inv = p;
  for (auto& s : inv.saliency) s = 1.0 - s;
  EXPECT_LT(s_measure(inv), s_measure(p));
  EXPECT_NEAR(s_measure(inv), oracle::s_measure(inv), 1e-10);
}

TEST(SMeasure, DegenerateGroundTruth) {
  EvalPair black{1, 4, {0.0, 0.2, 0.4, 0.2}, {0, 0, 0, 0}};
  EXPECT_DOUBLE_EQ(s_measure(black), 1.0 - 0.2);
  EvalPair white{1, 4, {1.0, 0.5, 0.5, 1.0}, {1, 1, 1, 1}};
  EXPECT_DOUBLE_EQ(s_measure(white), 0.75);
}

TEST(EMeasure, CurveMatchesBruteForceExactly) {
  jldcf::Rng rng(25);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = oracle::random_pair(rng, 8, 8);
    const auto e = e_measure_curve(p);
    for (int t = 0; t < 256; ++t) ASSERT_EQ(e[t], oracle::e_at(p, t)) << "trial " << trial;
  }
}

TEST(EMeasure, RangeAndPerfectMap) {
  jldcf::Rng rng(26);
  for (int trial = 0; trial < 10; ++trial) {
    for (double v : e_measure_curve(oracle::random_pair(rng, 12, 10))) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  EXPECT_EQ(e_measure_max(perfect(rng, 12, 10)), 1.0);
}

TEST(Mae, HandValuesAndSymmetry) {
  EXPECT_EQ(mae(two_by_two()), 0.5);
  jldcf::Rng rng(27);
  auto p = oracle::random_pair(rng, 10, 10);
  for (auto& s : p.saliency) s = 0.5;
  EXPECT_EQ(mae(p), 0.5);
  auto q = oracle::random_pair(rng, 10, 10);
  EXPECT_NEAR(mae(q), oracle::mae(q), 1e-10);
  // |S - G| summed either way
  double fwd = 0, rev = 0;
  for (std::size_t i = 0; i < q.gt.size(); ++i) {
    fwd += std::abs(q.saliency[i] - q.gt[i]);
    rev += std::abs(q.gt[i] - q.saliency[i]);
  }
  EXPECT_EQ(fwd, rev);
}

TEST(Metrics, AllValuesInUnitInterval) {
  jldcf::Rng rng(28);
  for (int trial = 0; trial < 20; ++trial) {
    const auto r = evaluate(oracle::random_pair(rng, 11, 13));
    for (double v : {r.s_alpha, r.f_max, r.e_max, r.mae}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Aggregate, SingleImageEqualsItsReport) {
  jldcf::Rng rng(29);
  const auto r = evaluate(oracle::random_pair(rng, 9, 9));
  const auto m = aggregate({r});
  EXPECT_EQ(m.s_alpha, r.s_alpha);
  EXPECT_EQ(m.f_max, r.f_max);
  EXPECT_EQ(m.mean_image_f_max, r.f_max);
  EXPECT_EQ(m.e_max, r.e_max);
  EXPECT_EQ(m.mae, r.mae);
  EXPECT_EQ(m.pr.precision, r.pr.precision);
}

TEST(Aggregate, TwoIdenticalImages) {
  jldcf::Rng rng(30);
  const auto r = evaluate(oracle::random_pair(rng, 9, 9));
  const auto m = aggregate({r, r});
  EXPECT_DOUBLE_EQ(m.s_alpha, r.s_alpha);
  EXPECT_DOUBLE_EQ(m.f_max, r.f_max);
  EXPECT_DOUBLE_EQ(m.mae, r.mae);
  EXPECT_EQ(m.thresholds[255], 255);
}

TEST(Aggregate, OrderInsensitiveWithinSummationTolerance) {
  jldcf::Rng rng(31);
  std::vector<ImageReport> reports;
  for (int i = 0; i < 12; ++i) reports.push_back(evaluate(oracle::random_pair(rng, 10, 10)));
  const auto a = aggregate(reports);
  std::reverse(reports.begin(), reports.end());
  rng.shuffle(reports);
  const auto b = aggregate(reports);
  EXPECT_NEAR(a.s_alpha, b.s_alpha, 1e-12);
  EXPECT_NEAR(a.f_max, b.f_max, 1e-12);
  EXPECT_NEAR(a.e_max, b.e_max, 1e-12);
  EXPECT_NEAR(a.mae, b.mae, 1e-12);
  EXPECT_THROW(aggregate({}), DataError);
}

TEST(Metrics, PerfectMapIdentities) {
  jldcf::Rng rng(32);
  const auto r = evaluate(perfect(rng, 16, 16));
  EXPECT_NEAR(r.s_alpha, 1.0, 1e-10);
  EXPECT_EQ(r.f_max, 1.0);
  EXPECT_EQ(r.e_max, 1.0);
  EXPECT_EQ(r.mae, 0.0);
}
