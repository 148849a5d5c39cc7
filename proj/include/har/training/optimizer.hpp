// SPDX-License-Identifier: Apache-2.0
//
// First-order optimisers over a ParameterSet's accumulated gradients.
//
//   sgd-momentum: v ← m·v − lr_t·g,  θ ← θ + v,  lr_t = LR / (1 + decay·t)
//   adagrad:      G ← G + g²,        θ ← θ − lr_t·g / (√G + ε)
//
// t counts the updates already taken, so the first update uses LR.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "har/errors.hpp"
#include "har/models/parameters.hpp"

namespace har {

enum class OptimizerKind { sgd_momentum, adagrad };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd_momentum;
  double learning_rate = 0.01;
  double decay = 0;
  double momentum = 0;
  double epsilon = 1e-8;
};

template <typename T>
class Optimizer {
 public:
  Optimizer(const OptimizerConfig& config, const ParameterSet<T>& params)
      : config_(config) {
    if (!(config.learning_rate > 0) || !std::isfinite(config.learning_rate)) {
      throw ConfigError("optimizer: learning rate must be positive");
    }
    if (!(config.decay >= 0)) throw ConfigError("optimizer: decay must be >= 0");
    if (!(config.momentum >= 0 && config.momentum < 1)) {
      throw ConfigError("optimizer: momentum must lie in [0, 1)");
    }
    for (const auto& p : params) state_.emplace_back(p.value.size(), 0.0);
  }

  const OptimizerConfig& config() const noexcept { return config_; }
  std::size_t steps() const noexcept { return steps_; }

  double current_rate() const {
    return config_.learning_rate / (1.0 + config_.decay * static_cast<double>(steps_));
  }

  /// Velocity (sgd) or squared-gradient sum (adagrad) of parameter i.
  const std::vector<double>& state(std::size_t i) const { return state_.at(i); }

  /// Applies one update from the gradients currently stored in `params`.
  /// Non-finite gradients abort before any parameter is modified.
  void step(ParameterSet<T>& params) {
    if (params.count() != state_.size()) {
      throw InvalidInput("optimizer: parameter set changed shape");
    }
    if (!params.grads_finite()) {
      throw NumericError("optimizer: non-finite gradient at update " +
                         std::to_string(steps_ + 1));
    }
    const double lr = current_rate();
    for (std::size_t i = 0; i < params.count(); ++i) {
      auto& p = params[i];
      auto& s = state_[i];
      if (s.size() != p.value.size()) {
        throw InvalidInput("optimizer: shape mismatch for " + p.name);
      }
      for (std::size_t k = 0; k < s.size(); ++k) {
        const double g = static_cast<double>(p.grad[k]);
        double v = static_cast<double>(p.value[k]);
        if (config_.kind == OptimizerKind::sgd_momentum) {
          s[k] = config_.momentum * s[k] - lr * g;
          v += s[k];
        } else {
          s[k] += g * g;
          v -= lr * g / (std::sqrt(s[k]) + config_.epsilon);
        }
        p.value[k] = static_cast<T>(v);
      }
    }
    ++steps_;
  }

 private:
  OptimizerConfig config_;
  std::vector<std::vector<double>> state_;
  std::size_t steps_ = 0;
};

}  // namespace har
