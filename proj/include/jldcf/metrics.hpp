#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "jldcf/errors.hpp"

namespace jldcf::metrics {

inline constexpr int kThresholds = 256;
inline constexpr double kBetaSquared = 0.3;
inline constexpr double kAlpha = 0.5;
// MATLAB's eps, used by the structure-measure reference formulas.
inline constexpr double kEps = std::numeric_limits<double>::epsilon();

using Curve = std::array<double, kThresholds>;

/// A saliency map in [0, 1] and a binary ground truth of equal size,
/// both row-major.
struct EvalPair {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<double> saliency;
  std::vector<std::uint8_t> gt;  // 0 or 1

  std::int64_t size() const { return height * width; }
};

inline void validate(const EvalPair& p) {
  if (p.height < 1 || p.width < 1) throw DataError("empty evaluation pair");
  const auto n = static_cast<std::size_t>(p.size());
  if (p.saliency.size() != n || p.gt.size() != n) {
    throw DimensionError("shape", "saliency map and ground truth sizes differ");
  }
  for (auto g : p.gt) {
    if (g > 1) throw DataError("ground truth must be binary {0, 1}");
  }
  for (double s : p.saliency) {
    if (!(s >= 0.0 && s <= 1.0)) throw DataError("saliency values must lie in [0, 1]");
  }
}

/// Real map from 8-bit values (v / 255); GT from 8-bit by >= 128.
inline EvalPair pair_from_u8(std::int64_t height, std::int64_t width,
                             const std::vector<std::uint8_t>& saliency,
                             const std::vector<std::uint8_t>& gt) {
  EvalPair p{height, width, {}, {}};
  p.saliency.reserve(saliency.size());
  for (auto v : saliency) p.saliency.push_back(v / 255.0);
  p.gt.reserve(gt.size());
  for (auto v : gt) p.gt.push_back(v >= 128 ? 1 : 0);
  validate(p);
  return p;
}

/// 8-bit level of a saliency value, round(s * 255).
inline int quantize(double s) { return static_cast<int>(std::lround(s * 255.0)); }

inline std::int64_t foreground_count(const EvalPair& p) {
  std::int64_t n = 0;
  for (auto g : p.gt) n += g;
  return n;
}

struct PrCurve {
  Curve precision{};
  Curve recall{};
};

/// Precision/recall of the masks M(T) = {quantize(S) >= T}, T = 0..255.
/// An empty mask has precision 1 (and recall 0).
inline PrCurve pr_curve(const EvalPair& p) {
  validate(p);
  const auto positives = foreground_count(p);
  if (positives == 0) throw DataError("pr_curve: ground truth has no foreground");
  std::array<std::int64_t, kThresholds> fg{}, bg{};
  for (std::size_t i = 0; i < p.saliency.size(); ++i) {
    (p.gt[i] ? fg : bg)[quantize(p.saliency[i])] += 1;
  }
  PrCurve c;
  std::int64_t tp = 0, fp = 0;
  for (int t = kThresholds - 1; t >= 0; --t) {
    tp += fg[t];
    fp += bg[t];
    const auto mask = tp + fp;
    c.precision[t] = mask == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(mask);
    c.recall[t] = static_cast<double>(tp) / static_cast<double>(positives);
  }
  return c;
}

/// Weighted harmonic mean with beta^2 = 0.3; 0/0 counts as 0.
inline double f_measure(double precision, double recall) {
  const double num = (1.0 + kBetaSquared) * precision * recall;
  const double den = kBetaSquared * precision + recall;
  return den == 0.0 ? 0.0 : num / den;
}

inline Curve f_measure_curve(const PrCurve& c) {
  Curve f{};
  for (int t = 0; t < kThresholds; ++t) f[t] = f_measure(c.precision[t], c.recall[t]);
  return f;
}

inline double f_measure_max(const PrCurve& c) {
  const auto f = f_measure_curve(c);
  return *std::max_element(f.begin(), f.end());
}

namespace detail {

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Sample standard deviation (N - 1); 0 for a single value.
inline double stddev(const std::vector<double>& v, double mu) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline double object_score(const std::vector<double>& values) {
  const double x = mean(values);
  const double sigma = stddev(values, x);
  return 2.0 * x / (x * x + 1.0 + sigma + kEps);
}

inline double object_similarity(const EvalPair& p) {
  std::vector<double> fg, bg;
  for (std::size_t i = 0; i < p.gt.size(); ++i) {
    if (p.gt[i]) {
      fg.push_back(p.saliency[i]);
    } else {
      bg.push_back(1.0 - p.saliency[i]);
    }
  }
  const double u = static_cast<double>(fg.size()) / static_cast<double>(p.gt.size());
  return u * object_score(fg) + (1.0 - u) * object_score(bg);
}

/// SSIM-style structural score of one rectangular block.
inline double block_ssim(const EvalPair& p, std::int64_t r0, std::int64_t r1, std::int64_t c0,
                         std::int64_t c1) {
  const double n = static_cast<double>((r1 - r0) * (c1 - c0));
  double sx = 0.0, sy = 0.0;
  for (auto r = r0; r < r1; ++r) {
    for (auto c = c0; c < c1; ++c) {
      sx += p.saliency[r * p.width + c];
      sy += p.gt[r * p.width + c];
    }
  }
  const double x = sx / n, y = sy / n;
  double vx = 0.0, vy = 0.0, cxy = 0.0;
  for (auto r = r0; r < r1; ++r) {
    for (auto c = c0; c < c1; ++c) {
      const double dx = p.saliency[r * p.width + c] - x;
      const double dy = p.gt[r * p.width + c] - y;
      vx += dx * dx;
      vy += dy * dy;
      cxy += dx * dy;
    }
  }
  vx /= (n - 1.0 + kEps);
  vy /= (n - 1.0 + kEps);
  cxy /= (n - 1.0 + kEps);
  const double alpha = 4.0 * x * y * cxy;
  const double beta = (x * x + y * y) * (vx + vy);
  if (alpha != 0.0) return alpha / (beta + kEps);
  return beta == 0.0 ? 1.0 : 0.0;
}

inline double region_similarity(const EvalPair& p) {
  // GT centroid in 1-based coordinates, rounded half away from zero
  double total = 0.0, sum_x = 0.0, sum_y = 0.0;
  for (std::int64_t r = 0; r < p.height; ++r) {
    for (std::int64_t c = 0; c < p.width; ++c) {
      if (p.gt[r * p.width + c]) {
        total += 1.0;
        sum_x += static_cast<double>(c + 1);
        sum_y += static_cast<double>(r + 1);
      }
    }
  }
  std::int64_t cx, cy;
  if (total == 0.0) {
    cx = std::llround(p.width / 2.0);
    cy = std::llround(p.height / 2.0);
  } else {
    cx = std::llround(sum_x / total);
    cy = std::llround(sum_y / total);
  }
  const double area = static_cast<double>(p.width * p.height);
  const double w1 = static_cast<double>(cx * cy) / area;
  const double w2 = static_cast<double>((p.width - cx) * cy) / area;
  const double w3 = static_cast<double>(cx * (p.height - cy)) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  auto score = [&](double w, std::int64_t r0, std::int64_t r1, std::int64_t c0, std::int64_t c1) {
    if (r1 <= r0 || c1 <= c0) return 0.0;  // empty quadrant carries zero weight
    return w * block_ssim(p, r0, r1, c0, c1);
  };
  return score(w1, 0, cy, 0, cx) + score(w2, 0, cy, cx, p.width) +
         score(w3, cy, p.height, 0, cx) + score(w4, cy, p.height, cx, p.width);
}

}  // namespace detail

/// Structure measure: alpha * object-aware + (1 - alpha) * region-aware
/// similarity, alpha = 0.5, with the reference's all-black/all-white cases.
inline double s_measure(const EvalPair& p) {
  validate(p);
  const double y = static_cast<double>(foreground_count(p)) / static_cast<double>(p.size());
  if (y == 0.0) return 1.0 - detail::mean(p.saliency);
  if (y == 1.0) return detail::mean(p.saliency);
  const double q =
      kAlpha * detail::object_similarity(p) + (1.0 - kAlpha) * detail::region_similarity(p);
  return std::max(q, 0.0);
}

namespace detail {

/// Enhanced alignment value for a pixel with binarized prediction `fm` and
/// ground truth `g`, given the two map means.
inline double enhanced_alignment(double fm, double g, double mu_fm, double mu_g) {
  const double a_fm = fm - mu_fm;
  const double a_g = g - mu_g;
  const double den = a_g * a_g + a_fm * a_fm;
  const double align = den == 0.0 ? 0.0 : 2.0 * (a_g * a_fm) / den;
  return (align + 1.0) * (align + 1.0) / 4.0;
}

}  // namespace detail

/// Enhanced-alignment score of the binarized map at every threshold.
inline Curve e_measure_curve(const EvalPair& p) {
  validate(p);
  const auto n = p.size();
  const auto positives = foreground_count(p);
  std::vector<int> level(static_cast<std::size_t>(n));
  std::array<std::int64_t, kThresholds> hist{};
  for (std::size_t i = 0; i < level.size(); ++i) {
    level[i] = quantize(p.saliency[i]);
    hist[level[i]] += 1;
  }
  const double nd = static_cast<double>(n);
  const double mu_g = static_cast<double>(positives) / nd;
  Curve e{};
  std::int64_t mask = 0;
  for (int t = kThresholds - 1; t >= 0; --t) {
    mask += hist[t];
    const double mu_fm = static_cast<double>(mask) / nd;
    // table[fm][g] of per-pixel enhanced values
    double table[2][2];
    for (int fm = 0; fm < 2; ++fm) {
      for (int g = 0; g < 2; ++g) {
        if (positives == 0) {
          table[fm][g] = 1.0 - fm;
        } else if (positives == n) {
          table[fm][g] = fm;
        } else {
          table[fm][g] = detail::enhanced_alignment(fm, g, mu_fm, mu_g);
        }
      }
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < level.size(); ++i) sum += table[level[i] >= t ? 1 : 0][p.gt[i]];
    e[t] = sum / nd;
  }
  return e;
}

inline double e_measure_max(const EvalPair& p) {
  const auto e = e_measure_curve(p);
  return *std::max_element(e.begin(), e.end());
}

/// Mean absolute error between the real map and the binary ground truth.
inline double mae(const EvalPair& p) {
  validate(p);
  double s = 0.0;
  for (std::size_t i = 0; i < p.saliency.size(); ++i) s += std::abs(p.saliency[i] - p.gt[i]);
  return s / static_cast<double>(p.size());
}

struct ImageReport {
  std::string name;
  double s_alpha = 0.0;
  double f_max = 0.0;
  double e_max = 0.0;
  double mae = 0.0;
  PrCurve pr;
};

inline ImageReport evaluate(const EvalPair& p, std::string name = {}) {
  ImageReport r;
  r.name = std::move(name);
  r.pr = pr_curve(p);
  r.f_max = f_measure_max(r.pr);
  r.s_alpha = s_measure(p);
  r.e_max = e_measure_max(p);
  r.mae = mae(p);
  return r;
}

/// Dataset-level summary. F_max comes from the mean precision/recall curves;
/// the mean of per-image F_max is kept alongside.
struct MetricReport {
  std::vector<ImageReport> images;
  double s_alpha = 0.0;
  double f_max = 0.0;
  double mean_image_f_max = 0.0;
  double e_max = 0.0;
  double mae = 0.0;
  PrCurve pr;
  std::array<int, kThresholds> thresholds{};
};

inline MetricReport aggregate(std::vector<ImageReport> images) {
  if (images.empty()) throw DataError("cannot aggregate an empty dataset");
  MetricReport m;
  const double n = static_cast<double>(images.size());
  for (const auto& r : images) {
    m.s_alpha += r.s_alpha;
    m.e_max += r.e_max;
    m.mae += r.mae;
    m.mean_image_f_max += r.f_max;
    for (int t = 0; t < kThresholds; ++t) {
      m.pr.precision[t] += r.pr.precision[t];
      m.pr.recall[t] += r.pr.recall[t];
    }
  }
  m.s_alpha /= n;
  m.e_max /= n;
  m.mae /= n;
  m.mean_image_f_max /= n;
  for (int t = 0; t < kThresholds; ++t) {
    m.pr.precision[t] /= n;
    m.pr.recall[t] /= n;
    m.thresholds[t] = t;
  }
  m.f_max = f_measure_max(m.pr);
  m.images = std::move(images);
  return m;
}

}  // namespace jldcf::metrics
