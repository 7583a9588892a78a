#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "jldcf/config.hpp"
#include "jldcf/network.hpp"

namespace jldcf {

/// Pixel-summed binary cross-entropy between a prediction S in (0,1) and a
/// (possibly soft) target G in [0,1]. S is clamped to [eps, 1-eps]; the
/// gradient is (S - G) / (S (1 - S)) evaluated at the clamped S.
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& s, const Tensor<T>& g, double eps = 1e-7) {
  if (s.shape() != g.shape()) {
    throw DimensionError("shape", "cross_entropy: prediction " + shape_string(s.shape()) +
                                      " vs target " + shape_string(g.shape()));
  }
  const T lo = static_cast<T>(eps);
  const T hi = T(1) - static_cast<T>(eps);
  T total = T(0);
  for (std::size_t i = 0; i < s.vec().size(); ++i) {
    const T p = std::clamp(s.vec()[i], lo, hi);
    const T t = g.vec()[i];
    total -= t * std::log(p) + (T(1) - t) * std::log(T(1) - p);
  }
  return make_result<T>("cross_entropy", {1}, {total}, {s, g}, [lo, hi](Node<T>& self) {
    Node<T>& pred = *self.inputs[0];
    Node<T>& target = *self.inputs[1];
    const T go = self.grad[0];
    if (pred.requires_grad) {
      auto& gp = pred.grad_buffer();
      for (std::size_t i = 0; i < gp.size(); ++i) {
        const T p = std::clamp(pred.data[i], lo, hi);
        gp[i] += go * (p - target.data[i]) / (p * (T(1) - p));
      }
    }
    if (target.requires_grad) {
      auto& gt = target.grad_buffer();
      for (std::size_t i = 0; i < gt.size(); ++i) {
        const T p = std::clamp(pred.data[i], lo, hi);
        gt[i] += go * (std::log(T(1) - p) - std::log(p));
      }
    }
  });
}

/// Pixel-summed multi-class cross-entropy on a 1 x C x H x W probability
/// map against integer labels (row-major H x W).
template <class T>
Tensor<T> multiclass_cross_entropy(const Tensor<T>& probs, const std::vector<std::int64_t>& labels,
                                   double eps = 1e-7) {
  if (probs.rank() != 4 || probs.dim(0) != 1) {
    throw DimensionError("batch", "multiclass_cross_entropy expects 1 x C x H x W");
  }
  const auto c = probs.dim(1), plane = probs.dim(2) * probs.dim(3);
  if (static_cast<std::int64_t>(labels.size()) != plane) {
    throw DimensionError("shape", "label map has " + std::to_string(labels.size()) +
                                      " entries for " + std::to_string(plane) + " pixels");
  }
  for (auto l : labels) {
    if (l < 0 || l >= c) throw DataError("label " + std::to_string(l) + " outside [0, C)");
  }
  const T lo = static_cast<T>(eps);
  T total = T(0);
  for (std::int64_t p = 0; p < plane; ++p) {
    total -= std::log(std::max(probs.vec()[labels[p] * plane + p], lo));
  }
  return make_result<T>("multiclass_cross_entropy", {1}, {total}, {probs},
                        [labels, plane, lo](Node<T>& self) {
                          Node<T>& in = *self.inputs[0];
                          if (!in.requires_grad) return;
                          auto& g = in.grad_buffer();
                          for (std::int64_t p = 0; p < plane; ++p) {
                            const auto idx = labels[p] * plane + p;
                            const T v = in.data[idx];
                            if (v > lo) g[idx] -= self.grad[0] / v;
                          }
                        });
}

/// Soft guidance target: G resized (aligned-corners bilinear) to h x w.
template <class T>
Tensor<T> downsample_target(const Tensor<T>& g, std::int64_t h, std::int64_t w) {
  NoGradGuard guard;
  return resize_bilinear(g.clone(), h, w);
}

/// Individual terms of a (multi-task) loss evaluation.
template <class T>
struct LossTerms {
  Tensor<T> total;
  double final_term = 0.0;
  double guidance_rgb = 0.0;
  double guidance_depth = 0.0;
  double guidance_rgb_star = 0.0;
};

namespace detail {

template <class T>
Tensor<T> guidance_term(const Tensor<T>& coarse, const Tensor<T>& g, const LossConfig& cfg) {
  if (coarse.rank() != 4 || g.rank() != 4) throw DimensionError("rank", "loss maps must be NCHW");
  const auto h = coarse.dim(2), w = coarse.dim(3);
  if (h > g.dim(2) || w > g.dim(3) || g.dim(2) % h != 0 || g.dim(3) % w != 0) {
    throw DimensionError("height", "coarse map " + shape_string(coarse.shape()) +
                                       " does not divide the target " + shape_string(g.shape()));
  }
  return cross_entropy(coarse, downsample_target(g, h, w), cfg.epsilon);
}

}  // namespace detail

/// L* = CE(S_f, G) + lambda * sum_x CE(S_c_x, G_x downsampled) over the coarse
/// maps that are defined (rgb, depth, rgb*). The rgb* term is supervised by
/// its own target `g_rgb`.
template <class T>
LossTerms<T> multitask_loss(const Tensor<T>& s_final, const Tensor<T>& s_coarse_rgb,
                            const Tensor<T>& s_coarse_depth, const Tensor<T>& s_coarse_rgb_star,
                            const Tensor<T>& g_rgbd, const Tensor<T>* g_rgb,
                            const LossConfig& cfg) {
  validate(cfg);
  if (s_final.shape() != g_rgbd.shape()) {
    throw DimensionError("height", "final map " + shape_string(s_final.shape()) +
                                       " does not match the target " + shape_string(g_rgbd.shape()));
  }
  LossTerms<T> out;
  Tensor<T> final_ce = cross_entropy(s_final, g_rgbd, cfg.epsilon);
  out.final_term = static_cast<double>(final_ce.item());

  std::vector<Tensor<T>> guidance;
  if (s_coarse_rgb.defined()) {
    guidance.push_back(detail::guidance_term(s_coarse_rgb, g_rgbd, cfg));
    out.guidance_rgb = static_cast<double>(guidance.back().item());
  }
  if (s_coarse_depth.defined()) {
    guidance.push_back(detail::guidance_term(s_coarse_depth, g_rgbd, cfg));
    out.guidance_depth = static_cast<double>(guidance.back().item());
  }
  if (s_coarse_rgb_star.defined()) {
    if (g_rgb == nullptr) throw DataError("the RGB task coarse map needs its own target");
    guidance.push_back(detail::guidance_term(s_coarse_rgb_star, *g_rgb, cfg));
    out.guidance_rgb_star = static_cast<double>(guidance.back().item());
  }
  if (guidance.empty()) {
    out.total = final_ce;
    return out;
  }
  Tensor<T> g_sum = guidance.front();
  for (std::size_t i = 1; i < guidance.size(); ++i) g_sum = add(g_sum, guidance[i]);
  out.total = add(final_ce, scale(g_sum, static_cast<T>(cfg.lambda)));
  return out;
}

/// L = CE(S_f, G) + lambda * [CE(S_c_rgb, G down) + CE(S_c_d, G down)].
template <class T>
LossTerms<T> total_loss(const Tensor<T>& s_final, const Tensor<T>& s_coarse_rgb,
                        const Tensor<T>& s_coarse_depth, const Tensor<T>& g,
                        const LossConfig& cfg) {
  return multitask_loss(s_final, s_coarse_rgb, s_coarse_depth, Tensor<T>{}, g,
                        static_cast<const Tensor<T>*>(nullptr), cfg);
}

/// Loss of a full forward pass; single-modality variants supervise only the
/// coarse map they produce.
template <class T>
LossTerms<T> prediction_loss(const Prediction<T>& p, const Tensor<T>& g, const LossConfig& cfg,
                             const Tensor<T>* g_rgb_star = nullptr) {
  if (p.final_map.dim(1) != 1) {
    throw ConfigError("binary saliency loss needs a single-class head");
  }
  return multitask_loss(p.final_map, p.coarse_rgb, p.coarse_depth, p.coarse_rgb_star, g,
                        g_rgb_star, cfg);
}

}  // namespace jldcf
