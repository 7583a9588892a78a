#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "jldcf/dcf.hpp"
#include "jldcf/losses.hpp"
#include "jldcf/network.hpp"

namespace jldcf {

/// Per-entry error |a - n| / max(|a|, |n|, floor). The floor keeps entries
/// whose true gradient is ~0 from dividing finite-difference noise by ~0.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

struct GradcheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::int64_t entries = 0;
  double tolerance = 1e-4;
  bool passed() const { return std::isfinite(max_rel_error) && max_rel_error <= tolerance; }
};

struct GradcheckOptions {
  double step = 1e-5;
  double floor = 1e-6;
  std::int64_t max_entries_per_tensor = -1;  // < 0: every entry
  std::uint64_t seed = 11;
};

using ScalarFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

/// Central finite differences of a scalar function against reverse mode,
/// perturbing (a sample of) the entries of every input tensor.
inline GradcheckResult check_gradients(const std::string& name, const ScalarFn& fn,
                                       std::vector<Tensor<double>> inputs, double tolerance,
                                       const GradcheckOptions& opt = {}) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor<double> out = fn(inputs);
  backward(out);
  GradcheckResult res{name, 0.0, 0, tolerance};
  Rng rng(opt.seed);
  NoGradGuard guard;
  for (auto& t : inputs) {
    const std::vector<double> analytic = t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                                      : std::vector<double>(t.numel(), 0.0);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(t.numel()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::int64_t>(i);
    if (opt.max_entries_per_tensor >= 0 &&
        static_cast<std::int64_t>(idx.size()) > opt.max_entries_per_tensor) {
      rng.shuffle(idx);
      idx.resize(static_cast<std::size_t>(opt.max_entries_per_tensor));
    }
    auto data = t.mutable_data();
    for (auto i : idx) {
      const double orig = data[i];
      data[i] = orig + opt.step;
      const double up = fn(inputs).item();
      data[i] = orig - opt.step;
      const double down = fn(inputs).item();
      data[i] = orig;
      const double numeric = (up - down) / (2.0 * opt.step);
      res.max_rel_error = std::max(res.max_rel_error, relative_error(analytic[i], numeric, opt.floor));
      ++res.entries;
    }
  }
  return res;
}

namespace detail {

inline Tensor<double> random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor<double>(std::move(shape), std::move(v));
}

/// Values at least `gap` away from zero, so ReLU kinks sit outside the FD stencil.
inline Tensor<double> kink_free(Rng& rng, Shape shape, double gap = 0.05) {
  auto t = random_tensor(rng, std::move(shape));
  for (auto& x : t.mutable_data()) x = x < 0 ? x - gap : x + gap;
  return t;
}

/// Distinct values spaced well beyond the FD step, so pooling argmaxes are stable.
inline Tensor<double> distinct_values(Rng& rng, Shape shape) {
  const auto n = shape_numel(shape);
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) v[order[i]] = -1.0 + 2.0 * static_cast<double>(i) / n;
  return Tensor<double>(std::move(shape), std::move(v));
}

/// Scalarizes a tensor with fixed random weights: sum(w * x).
inline Tensor<double> project(const Tensor<double>& x, std::uint64_t seed = 5) {
  Rng rng(seed + static_cast<std::uint64_t>(x.numel()));
  return sum(mul(x, random_tensor(rng, x.shape())));
}

}  // namespace detail

/// Finite-difference checks of every differentiable op, in double precision.
inline std::vector<GradcheckResult> op_gradcheck_suite(double tolerance = 1e-4) {
  using detail::distinct_values;
  using detail::kink_free;
  using detail::project;
  using detail::random_tensor;
  using V = std::vector<Tensor<double>>;
  Rng rng(2024);
  std::vector<GradcheckResult> out;
  auto run = [&](const std::string& name, const ScalarFn& fn, V inputs) {
    out.push_back(check_gradients(name, fn, std::move(inputs), tolerance));
  };

  run("conv2d_3x3", [](const V& v) { return project(conv2d(v[0], v[1], v[2], {1, 1, 1})); },
      {random_tensor(rng, {2, 3, 6, 6}), random_tensor(rng, {4, 3, 3, 3}), random_tensor(rng, {4})});
  run("conv2d_1x1", [](const V& v) { return project(conv2d(v[0], v[1], v[2], {})); },
      {random_tensor(rng, {2, 5, 4, 4}), random_tensor(rng, {3, 5, 1, 1}), random_tensor(rng, {3})});
  run("conv2d_stride2", [](const V& v) { return project(conv2d(v[0], v[1], v[2], {2, 1, 1})); },
      {random_tensor(rng, {1, 2, 7, 7}), random_tensor(rng, {3, 2, 3, 3}), random_tensor(rng, {3})});
  run("conv2d_dilated", [](const V& v) { return project(conv2d(v[0], v[1], v[2], {1, 2, 2})); },
      {random_tensor(rng, {1, 2, 6, 6}), random_tensor(rng, {2, 2, 3, 3}), random_tensor(rng, {2})});
  run("conv2d_5x5_pad2", [](const V& v) { return project(conv2d(v[0], v[1], v[2], {1, 1, 2})); },
      {random_tensor(rng, {1, 2, 5, 5}), random_tensor(rng, {2, 2, 5, 5}), random_tensor(rng, {2})});
  run("relu", [](const V& v) { return project(relu(v[0])); }, {kink_free(rng, {2, 3, 4, 4})});
  run("sigmoid", [](const V& v) { return project(sigmoid(v[0])); },
      {random_tensor(rng, {1, 2, 4, 4}, -4, 4)});
  run("add", [](const V& v) { return project(add(v[0], v[1])); },
      {random_tensor(rng, {1, 2, 3, 3}), random_tensor(rng, {1, 2, 3, 3})});
  run("mul", [](const V& v) { return project(mul(v[0], v[1])); },
      {random_tensor(rng, {1, 2, 3, 3}), random_tensor(rng, {1, 2, 3, 3})});
  run("scale", [](const V& v) { return project(scale(v[0], 2.5)); }, {random_tensor(rng, {1, 2, 3, 3})});
  run("sum", [](const V& v) { return sum(v[0]); }, {random_tensor(rng, {2, 2, 3, 3})});
  run("maxpool2x2_s2", [](const V& v) { return project(maxpool2d(v[0], 2, 2, 0)); },
      {distinct_values(rng, {2, 2, 6, 6})});
  run("maxpool3x3_s1_p1", [](const V& v) { return project(maxpool2d(v[0], 3, 1, 1)); },
      {distinct_values(rng, {1, 3, 5, 5})});
  run("resize_bilinear", [](const V& v) { return project(resize_bilinear(v[0], 7, 5)); },
      {random_tensor(rng, {1, 2, 3, 4})});
  for (std::int64_t f : {2, 4, 8, 16}) {
    run("bilinear_upsample_x" + std::to_string(f),
        [f](const V& v) { return project(bilinear_upsample(v[0], f)); },
        {random_tensor(rng, {1, 2, 2, 2})});
  }
  run("concat_batch", [](const V& v) { return project(concat_batch(v[0], v[1])); },
      {random_tensor(rng, {1, 2, 3, 3}), random_tensor(rng, {2, 2, 3, 3})});
  run("slice_batch", [](const V& v) { return project(slice_batch(v[0], 1, 2)); },
      {random_tensor(rng, {3, 2, 3, 3})});
  run("split_batch",
      [](const V& v) {
        auto [a, b] = split_batch(v[0]);
        return add(project(a, 1), project(b, 2));
      },
      {random_tensor(rng, {2, 2, 3, 3})});
  run("concat_channels", [](const V& v) { return project(concat_channels<double>({v[0], v[1]})); },
      {random_tensor(rng, {2, 2, 3, 3}), random_tensor(rng, {2, 3, 3, 3})});
  run("softmax_channels", [](const V& v) { return project(softmax_channels(v[0])); },
      {random_tensor(rng, {1, 4, 3, 3}, -3, 3)});
  run("cm_fuse", [](const V& v) { return project(cm_fuse(v[0])); }, {random_tensor(rng, {2, 3, 4, 4})});
  run("cross_entropy",
      [](const V& v) { return cross_entropy(sigmoid(v[0]), v[1], 1e-7); },
      {random_tensor(rng, {1, 1, 4, 4}, -3, 3), random_tensor(rng, {1, 1, 4, 4}, 0, 1)});
  {
    std::vector<std::int64_t> labels(9);
    for (auto& l : labels) l = static_cast<std::int64_t>(rng.below(3));
    run("multiclass_cross_entropy",
        [labels](const V& v) { return multiclass_cross_entropy(softmax_channels(v[0]), labels, 1e-7); },
        {random_tensor(rng, {1, 3, 3, 3}, -2, 2)});
  }
  return out;
}

/// Toy configuration for the end-to-end check: 16 x 16 input, width-4 backbone.
inline NetworkConfig toy_network_config() { return vgg_network(16, 4, 8); }

/// End-to-end check of the full loss over every parameter tensor of a toy
/// network. Reverse mode runs in double; the finite differences run on an
/// identical long double copy, whose roundoff (~1e-19 * |loss| / step) stays
/// far below the smallest deep-layer gradients. A fixed sample of entries per
/// tensor keeps the runtime short.
inline GradcheckResult network_gradcheck(double tolerance = 1e-3,
                                         std::int64_t entries_per_tensor = 8,
                                         const NetworkConfig& cfg = toy_network_config()) {
  using Ext = long double;
  JlDcfNet<double> net(cfg, 3);
  JlDcfNet<Ext> ref(cfg, 3);
  const auto n = cfg.backbone.input_size;
  Rng rng(99);
  // zero biases put every pre-activation fed by a dead ReLU exactly on the
  // kink, where central differences see half a slope
  for (const auto& p : net.parameters().entries()) {
    if (p.name.ends_with(".bias")) {
      Tensor<double> b = p.tensor;
      for (auto& v : b.mutable_data()) v = rng.uniform(-0.1, 0.1);
    }
  }
  auto to_ext = [](const Tensor<double>& t) {
    return Tensor<Ext>(t.shape(), std::vector<Ext>(t.data().begin(), t.data().end()));
  };
  const auto& src = net.parameters().entries();
  const auto& dst = ref.parameters().entries();
  for (std::size_t i = 0; i < src.size(); ++i) {
    Tensor<Ext> d = dst[i].tensor;
    std::copy(src[i].tensor.data().begin(), src[i].tensor.data().end(), d.mutable_data().begin());
  }
  const auto rgb = detail::random_tensor(rng, {1, 3, n, n}, 0, 255);
  const auto depth = detail::random_tensor(rng, {1, 3, n, n}, 0, 255);
  const auto gt = detail::random_tensor(rng, {1, 1, n, n}, 0, 1);
  const auto rgb_x = to_ext(rgb), depth_x = to_ext(depth), gt_x = to_ext(gt);
  LossConfig loss;
  loss.lambda = 4.0;

  net.parameters().zero_grad();
  backward(prediction_loss(net.forward(rgb, depth), gt, loss).total);

  // a smaller step than the per-op checks: every bias shifts hundreds of
  // pre-activations, and a wider stencil straddles ReLU and pooling kinks
  const Ext step = 1e-6L;
  GradcheckResult res{"network_end_to_end", 0.0, 0, tolerance};
  NoGradGuard guard;
  Rng pick(11);
  for (std::size_t t = 0; t < src.size(); ++t) {
    const auto& p = src[t].tensor;
    std::vector<std::int64_t> idx(static_cast<std::size_t>(p.numel()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::int64_t>(i);
    if (static_cast<std::int64_t>(idx.size()) > entries_per_tensor) {
      pick.shuffle(idx);
      idx.resize(static_cast<std::size_t>(entries_per_tensor));
    }
    Tensor<Ext> q = dst[t].tensor;
    auto data = q.mutable_data();
    for (auto i : idx) {
      const Ext orig = data[i];
      data[i] = orig + step;
      const Ext up = prediction_loss(ref.forward(rgb_x, depth_x), gt_x, loss).total.item();
      data[i] = orig - step;
      const Ext down = prediction_loss(ref.forward(rgb_x, depth_x), gt_x, loss).total.item();
      data[i] = orig;
      const double numeric = static_cast<double>((up - down) / (2 * step));
      const double analytic = p.has_grad() ? p.grad()[i] : 0.0;
      res.max_rel_error = std::max(res.max_rel_error, relative_error(analytic, numeric));
      ++res.entries;
    }
  }
  return res;
}

}  // namespace jldcf
