// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "har/errors.hpp"
#include "har/tensor.hpp"

namespace har {

using Rng = std::mt19937_64;

enum class Mode { train, infer };

/// A named trainable tensor with its gradient accumulator.
///
/// For weight tensors the leading axis enumerates units: slice i holds the
/// incoming weights of unit i, which is what max-in norm constrains.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool is_weight = false;
};

template <typename T>
class ParameterSet {
 public:
  std::size_t add(std::string name, std::vector<std::size_t> shape,
                  bool is_weight) {
    Tensor<T> v(shape);
    Tensor<T> g(std::move(shape));
    items_.push_back({std::move(name), std::move(v), std::move(g), is_weight});
    return items_.size() - 1;
  }

  std::size_t count() const noexcept { return items_.size(); }

  /// Total number of scalars over all parameters.
  std::size_t scalar_count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : items_) n += p.value.size();
    return n;
  }

  Parameter<T>& operator[](std::size_t i) { return items_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return items_[i]; }

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  const Parameter<T>* find(const std::string& name) const {
    for (const auto& p : items_)
      if (p.name == name) return &p;
    return nullptr;
  }

  void zero_grad() {
    for (auto& p : items_) p.grad.fill(T(0));
  }

  std::vector<Tensor<T>> snapshot() const {
    std::vector<Tensor<T>> out;
    out.reserve(items_.size());
    for (const auto& p : items_) out.push_back(p.value);
    return out;
  }

  void restore(const std::vector<Tensor<T>>& values) {
    if (values.size() != items_.size()) {
      throw InvalidInput("restore: snapshot has wrong parameter count");
    }
    for (std::size_t i = 0; i < items_.size(); ++i) {
      if (values[i].shape() != items_[i].value.shape()) {
        throw InvalidInput("restore: shape mismatch for " + items_[i].name);
      }
      items_[i].value = values[i];
    }
  }

  bool grads_finite() const {
    for (const auto& p : items_)
      if (!p.grad.all_finite()) return false;
    return true;
  }

 private:
  std::vector<Parameter<T>> items_;
};

/// Uniform ±√(6/(fan_in+fan_out)) for weights; biases stay zero.
template <typename T>
void glorot_uniform(Parameter<T>& p, Rng& rng) {
  const double fan_out = static_cast<double>(p.value.extent(0));
  const double fan_in = static_cast<double>(p.value.row_size());
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (T& v : p.value.values()) v = static_cast<T>(u(rng));
}

/// Rescales every unit whose incoming weight vector is longer than
/// `max_norm` back onto the ball of that radius. Biases are untouched.
template <typename T>
void maxin_norm(ParameterSet<T>& params, double max_norm) {
  if (!(max_norm > 0.0)) {
    throw ConfigError("max-in norm must be positive, got " +
                      std::to_string(max_norm));
  }
  // A rescaled row may land a few ulps above the limit; the slack keeps a
  // second application from touching it again.
  const double limit =
      max_norm * (1.0 + 64.0 * std::numeric_limits<T>::epsilon());
  for (auto& p : params) {
    if (!p.is_weight) continue;
    for (std::size_t u = 0; u < p.value.extent(0); ++u) {
      auto w = p.value.row(u);
      double sq = 0;
      for (T v : w) sq += static_cast<double>(v) * static_cast<double>(v);
      const double norm = std::sqrt(sq);
      if (norm > limit) {
        const double scale = max_norm / norm;
        for (T& v : w) v = static_cast<T>(static_cast<double>(v) * scale);
      }
    }
  }
}

/// Largest incoming-weight norm over all units of all weight tensors.
template <typename T>
double max_incoming_norm(const ParameterSet<T>& params) {
  double best = 0;
  for (const auto& p : params) {
    if (!p.is_weight) continue;
    for (std::size_t u = 0; u < p.value.extent(0); ++u) {
      double sq = 0;
      for (T v : p.value.row(u))
        sq += static_cast<double>(v) * static_cast<double>(v);
      best = std::max(best, std::sqrt(sq));
    }
  }
  return best;
}

/// Per-layer drop probabilities.
struct DropoutSpec {
  std::vector<double> rates;

  double rate(std::size_t layer) const {
    return layer < rates.size() ? rates[layer] : 0.0;
  }

  /// Fully connected stacks drop half of every hidden layer.
  static DropoutSpec dense(std::size_t layers) {
    return {std::vector<double>(layers, 0.5)};
  }

  /// Convolution blocks: 0.1 after the first pool, 0.25 after the second,
  /// 0.5 deeper.
  static DropoutSpec pooled(std::size_t blocks) {
    DropoutSpec s;
    for (std::size_t i = 0; i < blocks; ++i)
      s.rates.push_back(i == 0 ? 0.1 : i == 1 ? 0.25 : 0.5);
    return s;
  }

  static DropoutSpec none(std::size_t layers) {
    return {std::vector<double>(layers, 0.0)};
  }
};

/// Inverted dropout: survivors are scaled by 1/(1−p) while training so the
/// expected activation matches inference, where the layer is the identity.
/// `mask` receives the multiplier applied to each unit.
template <typename T>
void apply_dropout(std::span<T> x, double p, Rng& rng, std::vector<T>& mask) {
  mask.assign(x.size(), T(1));
  if (p <= 0.0) return;
  if (p >= 1.0) {
    std::fill(mask.begin(), mask.end(), T(0));
  } else {
    std::bernoulli_distribution keep(1.0 - p);
    const T scale = static_cast<T>(1.0 / (1.0 - p));
    for (T& m : mask) m = keep(rng) ? scale : T(0);
  }
  for (std::size_t i = 0; i < x.size(); ++i) x[i] *= mask[i];
}

}  // namespace har
