// SPDX-License-Identifier: Apache-2.0
//
// Confusion matrices and the two F1 summaries used throughout the harness.
//
// Rows index the true class, columns the predicted class. Precision and
// recall with an empty denominator are 0, and a class whose precision and
// recall are both 0 contributes an F1 of 0.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "har/errors.hpp"

namespace har {

class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t classes)
      : classes_(classes), counts_(classes * classes, 0) {
    if (classes == 0) throw InvalidInput("confusion matrix: zero classes");
  }

  std::size_t classes() const noexcept { return classes_; }

  void accumulate(std::size_t truth, std::size_t predicted,
                  std::uint64_t times = 1) {
    if (truth >= classes_ || predicted >= classes_) {
      throw InvalidInput("confusion matrix: label (" + std::to_string(truth) +
                         ", " + std::to_string(predicted) +
                         ") outside " + std::to_string(classes_) + " classes");
    }
    counts_[truth * classes_ + predicted] += times;
    total_ += times;
  }

  void accumulate(std::span<const std::size_t> truth,
                  std::span<const std::size_t> predicted) {
    if (truth.size() != predicted.size()) {
      throw InvalidInput("confusion matrix: label/prediction count mismatch");
    }
    for (std::size_t i = 0; i < truth.size(); ++i)
      accumulate(truth[i], predicted[i]);
  }

  /// Element-wise sum, so partial matrices can be scored in parallel.
  ConfusionMatrix& operator+=(const ConfusionMatrix& other) {
    if (other.classes_ != classes_) {
      throw InvalidInput("confusion matrix: merging different class counts");
    }
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    total_ += other.total_;
    return *this;
  }

  std::uint64_t count(std::size_t truth, std::size_t predicted) const {
    return counts_.at(truth * classes_ + predicted);
  }
  std::uint64_t total() const noexcept { return total_; }

  /// Number of items whose true class is c.
  std::uint64_t support(std::size_t c) const {
    std::uint64_t n = 0;
    for (std::size_t p = 0; p < classes_; ++p) n += count(c, p);
    return n;
  }
  std::uint64_t predicted_count(std::size_t c) const {
    std::uint64_t n = 0;
    for (std::size_t t = 0; t < classes_; ++t) n += count(t, c);
    return n;
  }

  double precision(std::size_t c) const {
    const auto d = predicted_count(c);
    return d == 0 ? 0.0 : static_cast<double>(count(c, c)) / static_cast<double>(d);
  }
  double recall(std::size_t c) const {
    const auto d = support(c);
    return d == 0 ? 0.0 : static_cast<double>(count(c, c)) / static_cast<double>(d);
  }
  double f1(std::size_t c) const {
    const double p = precision(c), r = recall(c);
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }
  double accuracy() const {
    if (total_ == 0) throw MetricUndefined("accuracy of an empty matrix");
    std::uint64_t hit = 0;
    for (std::size_t c = 0; c < classes_; ++c) hit += count(c, c);
    return static_cast<double>(hit) / static_cast<double>(total_);
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t classes_ = 0;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

struct F1Options {
  /// Evaluate the unsimplified summation, 2·Σ prec·recall/(prec+recall),
  /// rather than through per-class F1 values.
  bool literal = false;
  /// Class left out of both summaries (e.g. a background class).
  std::optional<std::size_t> excluded;
};

namespace detail {

inline double half_harmonic(const ConfusionMatrix& cm, std::size_t c) {
  const double p = cm.precision(c), r = cm.recall(c);
  return p + r == 0.0 ? 0.0 : p * r / (p + r);
}

inline void require_scored(const ConfusionMatrix& cm, const F1Options& o) {
  if (cm.total() == 0) throw MetricUndefined("F1 of an empty confusion matrix");
  if (o.excluded && *o.excluded >= cm.classes()) {
    throw InvalidInput("F1: excluded class out of range");
  }
}

}  // namespace detail

/// Unweighted mean of per-class F1 scores.
inline double mean_f1(const ConfusionMatrix& cm, const F1Options& o = {}) {
  detail::require_scored(cm, o);
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    if (o.excluded == c) continue;
    sum += o.literal ? detail::half_harmonic(cm, c) : cm.f1(c);
    ++n;
  }
  if (n == 0) throw MetricUndefined("F1: no classes left to score");
  return o.literal ? 2.0 / static_cast<double>(n) * sum
                   : sum / static_cast<double>(n);
}

/// Per-class F1 weighted by the share of true items in each class.
inline double weighted_f1(const ConfusionMatrix& cm, const F1Options& o = {}) {
  detail::require_scored(cm, o);
  std::uint64_t total = 0;
  for (std::size_t c = 0; c < cm.classes(); ++c)
    if (o.excluded != c) total += cm.support(c);
  if (total == 0) throw MetricUndefined("F1: no items left to score");
  double sum = 0;
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    if (o.excluded == c) continue;
    const double w = static_cast<double>(cm.support(c)) / static_cast<double>(total);
    sum += w * (o.literal ? detail::half_harmonic(cm, c) : cm.f1(c));
  }
  return o.literal ? 2.0 * sum : sum;
}

}  // namespace har
