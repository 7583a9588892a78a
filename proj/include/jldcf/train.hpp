#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <fstream>
#include <string>
#include <vector>

#include "jldcf/config.hpp"
#include "jldcf/dataset.hpp"
#include "jldcf/losses.hpp"
#include "jldcf/network.hpp"
#include "jldcf/optim.hpp"

namespace jldcf {

/// Learning rate that reaches the overfit target at 64 x 64 input.
inline constexpr double kDeskBaseLearningRate = 5e-7;

/// Sum-reduced losses grow with the pixel count, so the step size shrinks
/// with it: lr(H) = base * (64 / H)^2.
inline double desk_learning_rate(std::int64_t input_size) {
  const double r = 64.0 / static_cast<double>(input_size);
  return kDeskBaseLearningRate * r * r;
}

/// Run configuration at desk scale: VGG-style width-8 backbone, mirror
/// augmentation, momentum 0.99, decay 0.0005, lambda = (H / h)^2.
inline RunConfig desk_run_config(std::int64_t input_size = 64, std::int64_t width = 8,
                                 std::int64_t k = 16) {
  RunConfig cfg;
  cfg.network = vgg_network(input_size, width, k);
  cfg.loss.lambda = 256.0;
  cfg.optimizer = {desk_learning_rate(input_size), 0.99, 0.0005};
  return cfg;
}

struct LossRecord {
  std::int64_t iteration = 0;
  double final_term = 0.0;
  double guidance_rgb = 0.0;
  double guidance_depth = 0.0;
  double total = 0.0;
};

struct TrainOptions {
  std::int64_t max_iterations = -1;  // stop early after this many steps (< 0: no cap)
  std::function<void(const LossRecord&)> on_iteration;
  std::function<bool(const LossRecord&)> stop;  // checked after every step
};

/// Per-sample SGD over `epochs` passes of the (mirror-doubled) data in a
/// seeded order. `rgb_task` supplies the extra RGB row in multitask mode.
template <class T>
std::vector<LossRecord> train(JlDcfNet<T>& net, const std::vector<PreparedSample<T>>& data,
                              const RunConfig& cfg, const TrainOptions& options = {},
                              const std::vector<PreparedSample<T>>* rgb_task = nullptr) {
  if (data.empty()) throw DataError("training set is empty");
  if (net.config().multitask && (rgb_task == nullptr || rgb_task->empty())) {
    throw DataError("multitask training needs RGB task samples");
  }
  validate(cfg.loss);
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");

  std::vector<PreparedSample<T>> pool = data;
  if (cfg.mirror) {
    for (const auto& s : data) pool.push_back(mirrored(s));
  }
  std::vector<PreparedSample<T>> task_pool;
  if (rgb_task) {
    task_pool = *rgb_task;
    if (cfg.mirror) {
      for (const auto& s : *rgb_task) task_pool.push_back(mirrored(s));
    }
  }

  SgdMomentum<T> sgd(net.parameters().tensors(), cfg.optimizer);
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(pool.size());
  std::vector<LossRecord> trace;
  std::int64_t iteration = 0;
  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t idx : order) {
      if (options.max_iterations >= 0 && iteration >= options.max_iterations) return trace;
      const auto& s = pool[idx];
      const PreparedSample<T>* star =
          task_pool.empty() ? nullptr : &task_pool[iteration % task_pool.size()];
      auto pred = net.forward(s.rgb, s.depth3, star ? &star->rgb : nullptr);
      auto loss = prediction_loss(pred, s.gt, cfg.loss, star ? &star->gt : nullptr);
      const double total = static_cast<double>(loss.total.item());
      if (!std::isfinite(total)) {
        throw DivergenceError("loss became " + std::to_string(total) + " at iteration " +
                              std::to_string(iteration) + " (sample '" + s.stem +
                              "'); lower the learning rate");
      }
      backward(loss.total);
      sgd.step();
      sgd.zero_grad();
      LossRecord rec{iteration, loss.final_term, loss.guidance_rgb, loss.guidance_depth, total};
      trace.push_back(rec);
      if (options.on_iteration) options.on_iteration(rec);
      ++iteration;
      if (options.stop && options.stop(rec)) return trace;
    }
  }
  return trace;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_loss_trace(const std::string& path, const std::vector<LossRecord>& trace) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "iteration,L_f,L_g_rgb,L_g_d,total\n";
  for (const auto& r : trace) {
    out << r.iteration << ',' << format_double(r.final_term) << ','
        << format_double(r.guidance_rgb) << ',' << format_double(r.guidance_depth) << ','
        << format_double(r.total) << '\n';
  }
}

/// Saliency map of one sample at network resolution (1 x 1 x H x H).
template <class T>
Tensor<T> predict(const JlDcfNet<T>& net, const PreparedSample<T>& s) {
  NoGradGuard guard;
  if (net.config().multitask) {
    // the RGB task row does not influence the RGB-D prediction; reuse RGB
    return net.forward(s.rgb, s.depth3, &s.rgb).final_map;
  }
  return net.forward(s.rgb, s.depth3).final_map;
}

}  // namespace jldcf
