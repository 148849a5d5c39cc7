// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "har/models/dense.hpp"

namespace har {

struct ConvBlockSpec {
  std::size_t kernel_width = 3;
  std::size_t filters = 16;
};

/// Length of the time axis after each conv (valid) + pool(2) block.
/// Throws FrameTooShort when some stage has nothing left to convolve or pool.
inline std::vector<std::size_t> conv_stack_lengths(
    std::size_t frame_length, const std::vector<ConvBlockSpec>& blocks,
    std::size_t pool_width = 2) {
  std::vector<std::size_t> lengths;
  std::size_t len = frame_length;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (len < blocks[i].kernel_width ||
        len - blocks[i].kernel_width + 1 < pool_width) {
      throw FrameTooShort("cnn: block " + std::to_string(i + 1) + " receives " +
                          std::to_string(len) + " samples, too few for kernel " +
                          std::to_string(blocks[i].kernel_width) +
                          " and pool " + std::to_string(pool_width));
    }
    len = (len - blocks[i].kernel_width + 1) / pool_width;
    lengths.push_back(len);
  }
  return lengths;
}

template <typename T>
struct CnnTrace {
  std::vector<Tensor<T>> inputs;  // input of every conv block
  std::vector<std::vector<std::size_t>> argmax;
  std::vector<std::size_t> conv_sizes;
  std::vector<Tensor<T>> pooled;  // before ReLU
  std::vector<std::vector<T>> masks;
  DenseTrace<T> dense;
};

/// Temporal convolution network: blocks of conv → max-pool(2) → ReLU →
/// dropout, then a fully connected DenseStack over the flattened features.
template <typename T>
class CnnModel {
 public:
  using Trace = CnnTrace<T>;

  CnnModel(std::size_t frame_length, std::size_t channels, std::size_t classes,
           std::vector<ConvBlockSpec> blocks, std::size_t fc_layers,
           std::size_t fc_units, Rng& init_rng,
           std::optional<DropoutSpec> pool_dropout = std::nullopt,
           std::optional<DropoutSpec> fc_dropout = std::nullopt)
      : frame_length_(frame_length),
        channels_(channels),
        blocks_(std::move(blocks)) {
    if (blocks_.empty() || fc_layers < 1) {
      throw ConfigError(
          "cnn: needs at least one conv block and one fully connected layer");
    }
    if (channels == 0 || classes < 2) {
      throw ConfigError("cnn: empty channel or class set");
    }
    for (const auto& b : blocks_) {
      if (b.kernel_width == 0 || b.filters == 0)
        throw ConfigError("cnn: kernel width and filter count must be positive");
    }
    lengths_ = conv_stack_lengths(frame_length, blocks_);
    pool_dropout_ = pool_dropout.value_or(DropoutSpec::pooled(blocks_.size()));
    std::size_t depth = channels;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const std::string n = "conv" + std::to_string(i);
      kernels_.push_back(params_.add(
          n + ".kernel", {blocks_[i].filters, blocks_[i].kernel_width, depth},
          true));
      biases_.push_back(params_.add(n + ".bias", {blocks_[i].filters}, false));
      depth = blocks_[i].filters;
    }
    for (std::size_t k : kernels_) glorot_uniform(params_[k], init_rng);
    const std::size_t flat = lengths_.back() * blocks_.back().filters;
    fc_ = DenseStack<T>(params_, "fc.", flat, fc_layers, fc_units, classes,
                        fc_dropout.value_or(DropoutSpec::dense(fc_layers)));
    fc_.initialise(params_, init_rng);
  }

  std::size_t input_size() const noexcept { return frame_length_ * channels_; }
  std::size_t frame_length() const noexcept { return frame_length_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t classes() const noexcept { return fc_.classes(); }
  const std::vector<std::size_t>& block_lengths() const noexcept {
    return lengths_;
  }

  ParameterSet<T>& parameters() noexcept { return params_; }
  const ParameterSet<T>& parameters() const noexcept { return params_; }

  /// `frame` holds s samples of d channels in row-major (time-major) order.
  std::vector<T> forward(std::span<const T> frame, Mode mode, Rng& rng,
                         Trace* trace = nullptr) const {
    if (frame.size() != input_size()) {
      throw InvalidInput("cnn: expected " + std::to_string(input_size()) +
                         " values per frame, got " +
                         std::to_string(frame.size()));
    }
    Tensor<T> x({frame_length_, channels_},
                std::vector<T>(frame.begin(), frame.end()));
    if (trace) {
      trace->inputs.clear();
      trace->argmax.clear();
      trace->conv_sizes.clear();
      trace->pooled.clear();
      trace->masks.clear();
    }
    std::vector<T> mask;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      Tensor<T> conv = conv1d_temporal(x, params_[kernels_[i]].value,
                                       params_[biases_[i]].value.values());
      auto pool = maxpool1d_indexed(conv, 2);
      Tensor<T> act = pool.output;
      for (T& v : act.values()) v = std::max(v, T(0));
      if (mode == Mode::train) {
        apply_dropout(act.values(), pool_dropout_.rate(i), rng, mask);
      } else {
        mask.assign(act.size(), T(1));
      }
      if (trace) {
        trace->inputs.push_back(std::move(x));
        trace->argmax.push_back(std::move(pool.argmax));
        trace->conv_sizes.push_back(conv.size());
        trace->pooled.push_back(std::move(pool.output));
        trace->masks.push_back(mask);
      }
      x = std::move(act);
    }
    return fc_.forward(params_, x.values(), mode, rng,
                       trace ? &trace->dense : nullptr);
  }

  void backward(const Trace& trace, std::size_t label, T scale) {
    std::vector<T> grad(fc_.input_size());
    fc_.backward(params_, trace.dense, label, scale, std::span<T>(grad));
    for (std::size_t i = blocks_.size(); i-- > 0;) {
      const auto& pooled = trace.pooled[i];
      const auto& mask = trace.masks[i];
      std::vector<T> dconv(trace.conv_sizes[i], T(0));
      for (std::size_t j = 0; j < grad.size(); ++j) {
        if (pooled[j] > T(0)) dconv[trace.argmax[i][j]] += grad[j] * mask[j];
      }
      const Tensor<T>& in = trace.inputs[i];
      auto& kernel = params_[kernels_[i]];
      auto& bias = params_[biases_[i]];
      const std::size_t filters = blocks_[i].filters;
      const std::size_t span_len = blocks_[i].kernel_width * in.extent(1);
      const std::size_t steps = dconv.size() / filters;
      std::vector<T> dinput(i == 0 ? 0 : in.size(), T(0));
      for (std::size_t t = 0; t < steps; ++t) {
        const T* window = in.data() + t * in.extent(1);
        for (std::size_t f = 0; f < filters; ++f) {
          const T g = dconv[t * filters + f];
          if (g == T(0)) continue;
          bias.grad[f] += g;
          T* dk = kernel.grad.data() + f * span_len;
          for (std::size_t q = 0; q < span_len; ++q) dk[q] += g * window[q];
          if (i == 0) continue;
          const T* k = kernel.value.data() + f * span_len;
          T* dwin = dinput.data() + t * in.extent(1);
          for (std::size_t q = 0; q < span_len; ++q) dwin[q] += g * k[q];
        }
      }
      grad = std::move(dinput);
    }
  }

 private:
  std::size_t frame_length_;
  std::size_t channels_;
  std::vector<ConvBlockSpec> blocks_;
  std::vector<std::size_t> lengths_;
  DropoutSpec pool_dropout_;
  ParameterSet<T> params_;
  std::vector<std::size_t> kernels_;
  std::vector<std::size_t> biases_;
  DenseStack<T> fc_;
};

}  // namespace har
