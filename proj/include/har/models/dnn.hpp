// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "har/models/dense.hpp"

namespace har {

/// Feed-forward network over a frame flattened to s·d values: N hidden ReLU
/// layers of U units each, then a softmax group.
template <typename T>
class DnnModel {
 public:
  using Trace = DenseTrace<T>;

  static constexpr std::size_t kMaxLayers = 5;

  DnnModel(std::size_t frame_size, std::size_t classes, std::size_t layers,
           std::size_t units, Rng& init_rng,
           std::optional<DropoutSpec> dropout = std::nullopt) {
    if (layers < 1 || layers > kMaxLayers) {
      throw ConfigError("dnn: layer count must be in [1, 5]");
    }
    if (frame_size == 0 || classes < 2 || units == 0) {
      throw ConfigError("dnn: empty input, unit count or class set");
    }
    stack_ = DenseStack<T>(params_, "", frame_size, layers, units, classes,
                           dropout.value_or(DropoutSpec::dense(layers)));
    stack_.initialise(params_, init_rng);
  }

  std::size_t input_size() const noexcept { return stack_.input_size(); }
  std::size_t classes() const noexcept { return stack_.classes(); }
  std::size_t layers() const noexcept { return stack_.hidden_layers(); }

  ParameterSet<T>& parameters() noexcept { return params_; }
  const ParameterSet<T>& parameters() const noexcept { return params_; }

  std::vector<T> forward(std::span<const T> frame, Mode mode, Rng& rng,
                         Trace* trace = nullptr) const {
    return stack_.forward(params_, frame, mode, rng, trace);
  }

  void backward(const Trace& trace, std::size_t label, T scale) {
    stack_.backward(params_, trace, label, scale, {});
  }

 private:
  ParameterSet<T> params_;
  DenseStack<T> stack_;
};

}  // namespace har
