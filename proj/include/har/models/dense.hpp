// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "har/models/parameters.hpp"
#include "har/tensor.hpp"

namespace har {

/// Intermediates of one DenseStack forward pass.
template <typename T>
struct DenseTrace {
  std::vector<std::vector<T>> inputs;  // input of every affine map
  std::vector<std::vector<T>> pre;     // hidden pre-activations
  std::vector<std::vector<T>> masks;   // dropout multipliers
  std::vector<T> probabilities;
};

/// Hidden ReLU layers of equal width followed by a softmax group. Used
/// directly as the DNN and as the fully connected part of the CNN.
template <typename T>
class DenseStack {
 public:
  DenseStack() = default;

  DenseStack(ParameterSet<T>& params, const std::string& prefix,
             std::size_t inputs, std::size_t hidden_layers, std::size_t units,
             std::size_t classes, DropoutSpec dropout)
      : inputs_(inputs),
        units_(units),
        classes_(classes),
        dropout_(std::move(dropout)) {
    std::size_t fan_in = inputs;
    for (std::size_t l = 0; l < hidden_layers; ++l) {
      const std::string n = prefix + "hidden" + std::to_string(l);
      weights_.push_back(params.add(n + ".weight", {units, fan_in}, true));
      biases_.push_back(params.add(n + ".bias", {units}, false));
      fan_in = units;
    }
    weights_.push_back(
        params.add(prefix + "softmax.weight", {classes, fan_in}, true));
    biases_.push_back(params.add(prefix + "softmax.bias", {classes}, false));
  }

  std::size_t input_size() const noexcept { return inputs_; }
  std::size_t hidden_layers() const noexcept { return weights_.size() - 1; }
  std::size_t units() const noexcept { return units_; }
  std::size_t classes() const noexcept { return classes_; }
  const DropoutSpec& dropout() const noexcept { return dropout_; }

  void initialise(ParameterSet<T>& params, Rng& rng) const {
    for (std::size_t w : weights_) glorot_uniform(params[w], rng);
  }

  std::vector<T> forward(const ParameterSet<T>& params, std::span<const T> x,
                         Mode mode, Rng& rng, DenseTrace<T>* trace) const {
    if (x.size() != inputs_) {
      throw InvalidInput("dense: expected " + std::to_string(inputs_) +
                         " inputs, got " + std::to_string(x.size()));
    }
    std::vector<T> h(x.begin(), x.end());
    std::vector<T> mask;
    if (trace) {
      trace->inputs.clear();
      trace->pre.clear();
      trace->masks.clear();
    }
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      const auto& w = params[weights_[l]].value;
      std::vector<T> y(w.extent(0));
      kernels::affine(w, params[biases_[l]].value.values(),
                      std::span<const T>(h), std::span<T>(y));
      if (trace) trace->inputs.push_back(h);
      if (l + 1 == weights_.size()) {
        softmax_inplace(std::span<T>(y));
        if (trace) trace->probabilities = y;
        return y;
      }
      if (trace) trace->pre.push_back(y);
      for (T& v : y) v = std::max(v, T(0));
      if (mode == Mode::train) {
        apply_dropout(std::span<T>(y), dropout_.rate(l), rng, mask);
      } else {
        mask.assign(y.size(), T(1));
      }
      if (trace) trace->masks.push_back(mask);
      h = std::move(y);
    }
    return h;  // unreachable: the softmax layer always exists
  }

  /// Accumulates scale·∂NLL/∂θ into the gradients and, if `dx` is
  /// non-empty, writes the gradient with respect to the stack input.
  void backward(ParameterSet<T>& params, const DenseTrace<T>& trace,
                std::size_t label, T scale, std::span<T> dx) const {
    std::vector<T> dy(trace.probabilities);
    dy[label] -= T(1);
    for (T& v : dy) v *= scale;
    for (std::size_t l = weights_.size(); l-- > 0;) {
      auto& w = params[weights_[l]];
      auto& b = params[biases_[l]];
      const bool first = l == 0;
      std::vector<T> dh(first ? 0 : w.value.extent(1));
      std::span<T> target = first ? dx : std::span<T>(dh);
      kernels::affine_backward(w.value, std::span<const T>(trace.inputs[l]),
                               std::span<const T>(dy), w.grad,
                               b.grad.values(), target);
      if (first) break;
      const auto& pre = trace.pre[l - 1];
      const auto& mask = trace.masks[l - 1];
      for (std::size_t i = 0; i < dh.size(); ++i)
        dh[i] = pre[i] > T(0) ? dh[i] * mask[i] : T(0);
      dy = std::move(dh);
    }
  }

 private:
  std::size_t inputs_ = 0;
  std::size_t units_ = 0;
  std::size_t classes_ = 0;
  DropoutSpec dropout_;
  std::vector<std::size_t> weights_;
  std::vector<std::size_t> biases_;
};

}  // namespace har
