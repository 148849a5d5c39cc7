// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors and the handful of kernels the model families are
// built from: matrix product, valid temporal convolution, width-2 max pooling
// and a max-shifted softmax with negative log likelihood.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "har/errors.hpp"

namespace har {

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape, T fill = T(0))
      : shape_(std::move(shape)) {
    data_.assign(checked_size(shape_), fill);
  }

  Tensor(std::vector<std::size_t> shape, std::vector<T> values)
      : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != checked_size(shape_)) {
      throw InvalidInput("tensor: " + std::to_string(data_.size()) +
                         " values do not fill shape " + shape_string());
    }
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t extent(std::size_t axis) const {
    if (axis >= shape_.size()) {
      throw InvalidInput("tensor: axis " + std::to_string(axis) +
                         " out of range for shape " + shape_string());
    }
    return shape_[axis];
  }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& operator()(std::size_t i, std::size_t j) {
    return data_[i * shape_[1] + j];
  }
  const T& operator()(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  T& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const T& operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  /// Number of scalars in one slice along the leading axis.
  std::size_t row_size() const noexcept {
    return shape_.empty() || shape_[0] == 0 ? 0 : data_.size() / shape_[0];
  }

  /// Slice `i` along the leading axis.
  std::span<T> row(std::size_t i) {
    const std::size_t n = row_size();
    return std::span<T>(data_).subspan(i * n, n);
  }
  std::span<const T> row(std::size_t i) const {
    const std::size_t n = row_size();
    return std::span<const T>(data_).subspan(i * n, n);
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](T v) { return std::isfinite(v); });
  }

  Tensor reshaped(std::vector<std::size_t> shape) const {
    return Tensor(std::move(shape), data_);
  }

  std::string shape_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static std::size_t checked_size(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) {
      if (e == 0) throw InvalidInput("tensor: extents must be positive");
      n *= e;
    }
    return shape.empty() ? 0 : n;
  }

  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

/// Standard matrix product of an m×k and a k×n matrix.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
    throw InvalidInput("matmul: cannot multiply " + a.shape_string() + " by " +
                       b.shape_string());
  }
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Tensor<T> out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    T* o = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a(i, p);
      const T* br = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += av * br[j];
    }
  }
  return out;
}

/// Valid (unpadded), stride-1 convolution along time.
///
/// `input` is s×d, `kernels` is nF×kW×d and `bias` has nF entries (or is
/// empty for zero bias). Output is (s−kW+1)×nF with
/// out[t,f] = Σ_{τ,c} input[t+τ,c]·kernels[f,τ,c] + bias[f].
template <typename T>
Tensor<T> conv1d_temporal(const Tensor<T>& input, const Tensor<T>& kernels,
                          std::span<const T> bias = {}) {
  if (input.rank() != 2 || kernels.rank() != 3 ||
      kernels.extent(2) != input.extent(1)) {
    throw InvalidInput("conv1d_temporal: input " + input.shape_string() +
                       " incompatible with kernels " + kernels.shape_string());
  }
  const std::size_t s = input.extent(0), d = input.extent(1);
  const std::size_t filters = kernels.extent(0), width = kernels.extent(1);
  if (!bias.empty() && bias.size() != filters) {
    throw InvalidInput("conv1d_temporal: bias length mismatch");
  }
  if (s < width) {
    throw FrameTooShort("conv1d_temporal: " + std::to_string(s) +
                        " samples < kernel width " + std::to_string(width));
  }
  const std::size_t steps = s - width + 1;
  const std::size_t span_len = width * d;
  Tensor<T> out({steps, filters});
  for (std::size_t t = 0; t < steps; ++t) {
    // The receptive field of step t is a contiguous block of the input.
    const T* window = input.data() + t * d;
    for (std::size_t f = 0; f < filters; ++f) {
      const T* k = kernels.data() + f * span_len;
      T acc = bias.empty() ? T(0) : bias[f];
      for (std::size_t i = 0; i < span_len; ++i) acc += window[i] * k[i];
      out(t, f) = acc;
    }
  }
  return out;
}

/// Result of max pooling together with the flat input index of each maximum.
template <typename T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::size_t> argmax;
};

/// Non-overlapping max pooling along time; a trailing partial window is
/// dropped.
template <typename T>
PoolResult<T> maxpool1d_indexed(const Tensor<T>& input, std::size_t width = 2) {
  if (input.rank() != 2 || width == 0) {
    throw InvalidInput("maxpool1d: expected a 2-d input and positive width");
  }
  const std::size_t s = input.extent(0), channels = input.extent(1);
  if (s < width) {
    throw FrameTooShort("maxpool1d: " + std::to_string(s) +
                        " samples < pool width " + std::to_string(width));
  }
  const std::size_t steps = s / width;
  PoolResult<T> r{Tensor<T>({steps, channels}),
                  std::vector<std::size_t>(steps * channels)};
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      std::size_t best = t * width * channels + c;
      for (std::size_t w = 1; w < width; ++w) {
        const std::size_t idx = (t * width + w) * channels + c;
        if (input[idx] > input[best]) best = idx;
      }
      r.output(t, c) = input[best];
      r.argmax[t * channels + c] = best;
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool1d(const Tensor<T>& input, std::size_t width = 2) {
  return maxpool1d_indexed(input, width).output;
}

/// In-place softmax, stabilised by subtracting the maximum logit.
template <typename T>
void softmax_inplace(std::span<T> v) {
  if (v.empty()) return;
  const T top = *std::max_element(v.begin(), v.end());
  T sum = 0;
  for (T& x : v) {
    x = std::exp(x - top);
    sum += x;
  }
  for (T& x : v) x /= sum;
}

template <typename T>
struct SoftmaxNll {
  std::vector<T> probabilities;
  T nll;
};

template <typename T>
SoftmaxNll<T> softmax_nll(std::span<const T> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw InvalidInput("softmax_nll: label " + std::to_string(label) +
                       " out of range for " + std::to_string(logits.size()) +
                       " classes");
  }
  const T top = *std::max_element(logits.begin(), logits.end());
  T sum = 0;
  for (T x : logits) sum += std::exp(x - top);
  const T log_z = top + std::log(sum);
  SoftmaxNll<T> r{std::vector<T>(logits.size()), log_z - logits[label]};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    r.probabilities[i] = std::exp(logits[i] - log_z);
  }
  return r;
}

namespace kernels {

// y = W·x + b for a row-major out×in matrix.
template <typename T>
void affine(const Tensor<T>& w, std::span<const T> b, std::span<const T> x,
            std::span<T> y) {
  const std::size_t out = w.extent(0), in = w.extent(1);
  for (std::size_t i = 0; i < out; ++i) {
    const T* wr = w.data() + i * in;
    T acc = b[i];
    for (std::size_t j = 0; j < in; ++j) acc += wr[j] * x[j];
    y[i] = acc;
  }
}

// dW += dy⊗x, db += dy and, when dx is non-empty, dx = Wᵀ·dy.
template <typename T>
void affine_backward(const Tensor<T>& w, std::span<const T> x,
                     std::span<const T> dy, Tensor<T>& dw, std::span<T> db,
                     std::span<T> dx) {
  const std::size_t out = w.extent(0), in = w.extent(1);
  if (!dx.empty()) std::fill(dx.begin(), dx.end(), T(0));
  for (std::size_t i = 0; i < out; ++i) {
    const T g = dy[i];
    if (g == T(0)) continue;
    db[i] += g;
    T* dwr = dw.data() + i * in;
    for (std::size_t j = 0; j < in; ++j) dwr[j] += g * x[j];
    if (!dx.empty()) {
      const T* wr = w.data() + i * in;
      for (std::size_t j = 0; j < in; ++j) dx[j] += g * wr[j];
    }
  }
}

}  // namespace kernels

}  // namespace har
