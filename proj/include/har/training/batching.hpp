// SPDX-License-Identifier: Apache-2.0
//
// Mini-batch construction.
//
// StratifiedSampler hands out class-stratified batches of frame indices.
// Each batch gives class c either ⌊n·π_c⌋ or ⌈n·π_c⌉ slots: the floors
// first, then the leftover slots to the classes furthest behind their
// cumulative share. An epoch covers exactly N frames, so every class
// receives exactly N_c draws and each frame is visited once.
//
// SequenceBatcher keeps b read positions in a sample stream. Every batch
// reads the next L samples after each position (wrapping at the end),
// advances the positions by L, and decides per stream whether the
// recurrent state from the previous batch is kept (probability p_carry)
// or cleared.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "har/data/datasets.hpp"
#include "har/errors.hpp"
#include "har/models/parameters.hpp"
#include "har/tensor.hpp"

namespace har {

inline constexpr std::size_t kFrameBatchSize = 64;
inline constexpr std::size_t kSequenceStreams = 64;

class StratifiedSampler {
 public:
  StratifiedSampler(std::span<const std::size_t> labels, std::size_t classes,
                    std::size_t batch_size = kFrameBatchSize)
      : batch_size_(batch_size), members_(classes) {
    if (labels.empty()) throw DataError("stratified sampler: no frames");
    if (batch_size == 0) throw ConfigError("stratified sampler: batch size 0");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] >= classes) throw DataError("stratified sampler: label out of range");
      members_[labels[i]].push_back(i);
    }
    total_ = labels.size();
    for (std::size_t c = 0; c < classes; ++c) {
      prior_.push_back(static_cast<double>(members_[c].size()) /
                       static_cast<double>(total_));
      if (members_[c].empty()) excluded_.push_back(c);
    }
  }

  std::size_t classes() const noexcept { return members_.size(); }
  std::size_t frames() const noexcept { return total_; }
  const std::vector<double>& priors() const noexcept { return prior_; }
  /// Classes without any training frame; they never appear in a batch.
  const std::vector<std::size_t>& excluded_classes() const noexcept {
    return excluded_;
  }
  std::size_t batches_per_epoch() const noexcept {
    return (total_ + batch_size_ - 1) / batch_size_;
  }

  /// Reshuffles every class and restarts the quota bookkeeping.
  void begin_epoch(Rng& rng) {
    order_ = members_;
    for (auto& m : order_) std::shuffle(m.begin(), m.end(), rng);
    taken_.assign(classes(), 0);
    served_ = 0;
  }

  /// Fills `batch` with the frame indices of the next batch. Returns false
  /// once the epoch's N frames have been served.
  bool next(std::vector<std::size_t>& batch) {
    batch.clear();
    if (order_.empty() || served_ >= total_) return false;
    const std::size_t n = std::min(batch_size_, total_ - served_);
    const std::size_t after = served_ + n;
    std::vector<std::size_t> count(classes(), 0);
    if (after == total_) {
      for (std::size_t c = 0; c < classes(); ++c) {
        if (taken_[c] > members_[c].size()) {
          throw InvalidInput("stratified sampler: class quota overran its frames");
        }
        count[c] = members_[c].size() - taken_[c];
      }
    } else {
      std::size_t assigned = 0;
      std::vector<std::pair<double, std::size_t>> deficit;
      for (std::size_t c = 0; c < classes(); ++c) {
        count[c] = static_cast<std::size_t>(std::floor(static_cast<double>(n) * prior_[c]));
        assigned += count[c];
        if (!members_[c].empty()) {
          const double target = static_cast<double>(after) * prior_[c];
          deficit.emplace_back(target - static_cast<double>(taken_[c] + count[c]), c);
        }
      }
      std::stable_sort(deficit.begin(), deficit.end(),
                       [](const auto& a, const auto& b) { return a.first > b.first; });
      for (std::size_t k = 0; assigned < n; ++k, ++assigned)
        ++count[deficit[k % deficit.size()].second];
    }
    for (std::size_t c = 0; c < classes(); ++c) {
      for (std::size_t k = 0; k < count[c]; ++k) {
        const auto& m = order_[c];
        batch.push_back(m[(taken_[c] + k) % m.size()]);
      }
      taken_[c] += count[c];
    }
    served_ = after;
    return true;
  }

 private:
  std::size_t batch_size_;
  std::size_t total_ = 0;
  std::vector<std::vector<std::size_t>> members_;
  std::vector<std::vector<std::size_t>> order_;
  std::vector<double> prior_;
  std::vector<std::size_t> excluded_;
  std::vector<std::size_t> taken_;
  std::size_t served_ = 0;
};

template <typename T>
struct SequenceBatch {
  Tensor<T> inputs;                                // streams × L × channels
  std::vector<std::vector<std::size_t>> targets;   // [stream][step]
  std::vector<std::vector<std::uint8_t>> boundaries;  // [stream][step]
  std::vector<std::vector<std::size_t>> sources;   // stream sample indices
  std::vector<std::uint8_t> retain;                // keep previous state?

  std::size_t streams() const noexcept { return targets.size(); }

  /// Inputs of one stream as an L × channels tensor.
  Tensor<T> stream_inputs(std::size_t i) const {
    const std::size_t steps = inputs.extent(1), d = inputs.extent(2);
    const auto row = inputs.row(i);
    return Tensor<T>({steps, d}, std::vector<T>(row.begin(), row.end()));
  }
};

class SequenceBatcher {
 public:
  SequenceBatcher(std::size_t sequence_length, std::size_t unroll, double p_carry,
                  Rng& rng, std::size_t streams = kSequenceStreams)
      : length_(sequence_length), unroll_(unroll), p_carry_(p_carry) {
    if (unroll == 0) throw ConfigError("sequence batcher: unroll length must be >= 1");
    if (unroll >= sequence_length) {
      throw ConfigError("sequence batcher: unroll length " + std::to_string(unroll) +
                        " must be shorter than the sequence (" +
                        std::to_string(sequence_length) + ")");
    }
    if (!(p_carry >= 0 && p_carry <= 1)) {
      throw ConfigError("sequence batcher: p_carry must lie in [0, 1]");
    }
    if (streams == 0) throw ConfigError("sequence batcher: no streams");
    std::uniform_int_distribution<std::size_t> start(0, sequence_length - 1);
    for (std::size_t i = 0; i < streams; ++i) positions_.push_back(start(rng));
  }

  std::size_t streams() const noexcept { return positions_.size(); }
  std::size_t unroll() const noexcept { return unroll_; }
  double p_carry() const noexcept { return p_carry_; }
  const std::vector<std::size_t>& positions() const noexcept { return positions_; }

  /// Batches needed for the streams to cover the sequence once.
  std::size_t batches_per_epoch() const noexcept {
    const std::size_t per = streams() * unroll_;
    return (length_ + per - 1) / per;
  }

  template <typename T>
  SequenceBatch<T> next(const SequenceDataset<T>& data, Rng& rng) {
    if (data.length() != length_) {
      throw InvalidInput("sequence batcher: dataset length changed");
    }
    const std::size_t b = streams(), d = data.channels();
    SequenceBatch<T> batch;
    batch.inputs = Tensor<T>({b, unroll_, d});
    batch.targets.assign(b, std::vector<std::size_t>(unroll_));
    batch.boundaries.assign(b, std::vector<std::uint8_t>(unroll_));
    batch.sources.assign(b, std::vector<std::size_t>(unroll_));
    batch.retain.assign(b, 0);
    std::bernoulli_distribution keep(p_carry_);
    T* out = batch.inputs.data();
    for (std::size_t i = 0; i < b; ++i) {
      batch.retain[i] = keep(rng) ? 1 : 0;
      for (std::size_t k = 0; k < unroll_; ++k) {
        const std::size_t t = (positions_[i] + k) % length_;
        const auto s = data.sample(t);
        std::copy(s.begin(), s.end(), out + (i * unroll_ + k) * d);
        batch.targets[i][k] = data.labels()[t];
        batch.boundaries[i][k] = data.boundaries()[t];
        batch.sources[i][k] = t;
      }
      positions_[i] = (positions_[i] + unroll_) % length_;
    }
    return batch;
  }

 private:
  std::size_t length_;
  std::size_t unroll_;
  double p_carry_;
  std::vector<std::size_t> positions_;
};

}  // namespace har
