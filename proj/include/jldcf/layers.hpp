#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "jldcf/ops.hpp"
#include "jldcf/random.hpp"

namespace jldcf {

template <class T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
};

/// Ordered registry of every trainable tensor of a model. Registration order
/// is the checkpoint order and the optimizer order.
template <class T>
class ParameterStore {
 public:
  Tensor<T> add(std::string name, Shape shape, std::vector<T> values) {
    for (const auto& p : params_) {
      if (p.name == name) throw ConfigError("duplicate parameter name " + name);
    }
    auto t = Tensor<T>::parameter(std::move(shape), std::move(values));
    params_.push_back({std::move(name), t});
    return t;
  }

  const std::vector<NamedParameter<T>>& entries() const { return params_; }

  std::vector<Tensor<T>> tensors() const {
    std::vector<Tensor<T>> out;
    for (const auto& p : params_) out.push_back(p.tensor);
    return out;
  }

  std::int64_t count(const std::string& prefix = "") const {
    std::int64_t n = 0;
    for (const auto& p : params_) {
      if (p.name.rfind(prefix, 0) == 0) n += p.tensor.numel();
    }
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

 private:
  std::vector<NamedParameter<T>> params_;
};

/// Convolution with its own weight and bias. Weights are Glorot-uniform in
/// [-s, s], s = sqrt(6 / (fan_in + fan_out)); biases start at zero.
template <class T>
struct ConvLayer {
  Tensor<T> weight;
  Tensor<T> bias;
  ConvOptions options;

  ConvLayer() = default;

  ConvLayer(ParameterStore<T>& store, const std::string& name, std::int64_t in_channels,
            std::int64_t out_channels, std::int64_t kernel, ConvOptions opt, Rng& rng)
      : options(opt) {
    const double fan_in = static_cast<double>(in_channels * kernel * kernel);
    const double fan_out = static_cast<double>(out_channels * kernel * kernel);
    const double s = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<T> w(static_cast<std::size_t>(out_channels * in_channels * kernel * kernel));
    for (auto& v : w) v = static_cast<T>(rng.uniform(-s, s));
    weight = store.add(name + ".weight", {out_channels, in_channels, kernel, kernel}, std::move(w));
    bias = store.add(name + ".bias", {out_channels},
                     std::vector<T>(static_cast<std::size_t>(out_channels), T(0)));
  }

  std::int64_t in_channels() const { return weight.dim(1); }
  std::int64_t out_channels() const { return weight.dim(0); }
  std::int64_t kernel() const { return weight.dim(2); }

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, options); }
};

/// "Same" padding for an odd kernel at stride 1.
inline ConvOptions same_padding(std::int64_t kernel, std::int64_t dilation = 1) {
  return {1, dilation, dilation * (kernel - 1) / 2};
}

}  // namespace jldcf
