#pragma once

#include <string>
#include <vector>

#include "jldcf/tensor.hpp"

namespace jldcf {

struct SgdOptions {
  double lr = 1e-3;
  double momentum = 0.99;
  double weight_decay = 0.0005;
};

/// Classic momentum SGD with L2 decay folded into the gradient:
///   v <- momentum * v + grad + weight_decay * param
///   param <- param - lr * v
template <class T>
class SgdMomentum {
 public:
  SgdMomentum(std::vector<Tensor<T>> params, SgdOptions options)
      : params_(std::move(params)), options_(options) {
    if (!(options_.lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (options_.momentum < 0.0 || options_.momentum >= 1.0) {
      throw ConfigError("momentum must lie in [0, 1)");
    }
    if (options_.weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
    velocity_.reserve(params_.size());
    for (const auto& p : params_) velocity_.emplace_back(p.data().size(), T(0));
  }

  void step() {
    const T lr = static_cast<T>(options_.lr);
    const T mu = static_cast<T>(options_.momentum);
    const T decay = static_cast<T>(options_.weight_decay);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.has_grad()) {
        throw Error("sgd_step: parameter " + std::to_string(i) + " " + shape_string(p.shape()) +
                    " has no gradient");
      }
      auto values = p.mutable_data();
      auto grad = p.grad();
      auto& v = velocity_[i];
      for (std::size_t j = 0; j < v.size(); ++j) {
        v[j] = mu * v[j] + grad[j] + decay * values[j];
        values[j] -= lr * v[j];
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  const std::vector<std::vector<T>>& velocity() const { return velocity_; }
  const SgdOptions& options() const { return options_; }

 private:
  std::vector<Tensor<T>> params_;
  SgdOptions options_;
  std::vector<std::vector<T>> velocity_;
};

}  // namespace jldcf
