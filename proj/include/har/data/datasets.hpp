// SPDX-License-Identifier: Apache-2.0
//
// Model-facing views of a split: a continuous labelled sample stream that
// remembers where recordings start, and a set of sliding-window frames.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "har/data/recording.hpp"
#include "har/errors.hpp"
#include "har/tensor.hpp"

namespace har {

enum class LabelRule { majority, last };

inline std::vector<std::size_t> class_counts(std::span<const std::size_t> labels,
                                             std::size_t classes) {
  std::vector<std::size_t> n(classes, 0);
  for (std::size_t l : labels) {
    if (l >= classes) throw DataError("label " + std::to_string(l) + " out of range");
    ++n[l];
  }
  return n;
}

/// Recordings of one split laid end to end. boundaries()[t] is 1 exactly
/// when sample t opens a recording, so recurrent state must be cleared
/// before it.
template <typename T>
class SequenceDataset {
 public:
  SequenceDataset() = default;

  SequenceDataset(std::size_t channels, std::size_t classes)
      : channels_(channels), classes_(classes) {}

  static SequenceDataset from_recordings(const std::vector<RawRecording>& recs,
                                         std::size_t classes) {
    if (recs.empty()) throw DataError("sequence dataset: no recordings");
    SequenceDataset d(recs.front().channels, classes);
    for (const auto& r : recs) {
      r.validate();
      if (r.channels != d.channels_) {
        throw DataError("sequence dataset: channel count differs in " + r.describe());
      }
      if (r.length() == 0) continue;
      std::vector<T> values(r.samples.begin(), r.samples.end());
      d.append(values, r.labels);
    }
    return d;
  }

  /// Adds one recording: `values` holds labels.size() rows of channels().
  void append(std::span<const T> values, std::span<const std::size_t> labels) {
    if (values.size() != labels.size() * channels_) {
      throw DataError("sequence dataset: value/label size mismatch");
    }
    if (labels.empty()) return;
    for (std::size_t l : labels) {
      if (l >= classes_) throw DataError("sequence dataset: label out of range");
    }
    starts_.push_back(labels_.size());
    boundaries_.push_back(1);
    boundaries_.insert(boundaries_.end(), labels.size() - 1, 0);
    data_.insert(data_.end(), values.begin(), values.end());
    labels_.insert(labels_.end(), labels.begin(), labels.end());
  }

  std::size_t length() const noexcept { return labels_.size(); }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t classes() const noexcept { return classes_; }
  std::size_t recordings() const noexcept { return starts_.size(); }

  std::span<const T> sample(std::size_t t) const {
    return {data_.data() + t * channels_, channels_};
  }
  std::span<const std::size_t> labels() const noexcept { return labels_; }
  std::span<const std::uint8_t> boundaries() const noexcept { return boundaries_; }

  /// [begin, end) sample range of recording r.
  std::pair<std::size_t, std::size_t> recording_range(std::size_t r) const {
    const std::size_t end = r + 1 < starts_.size() ? starts_[r + 1] : length();
    return {starts_.at(r), end};
  }

  /// Copies samples [begin, begin+count) into a count×channels tensor.
  /// Indices wrap around the end of the stream.
  Tensor<T> window(std::size_t begin, std::size_t count) const {
    Tensor<T> out({count, channels_});
    for (std::size_t k = 0; k < count; ++k) {
      const auto s = sample((begin + k) % length());
      std::copy(s.begin(), s.end(), out.row(k).begin());
    }
    return out;
  }

 private:
  std::size_t channels_ = 0;
  std::size_t classes_ = 0;
  std::vector<T> data_;
  std::vector<std::size_t> labels_;
  std::vector<std::uint8_t> boundaries_;
  std::vector<std::size_t> starts_;
};

/// Fixed-length windows cut from each recording separately, stored
/// row-major as window × channels per frame.
template <typename T>
class FrameDataset {
 public:
  FrameDataset() = default;
  FrameDataset(std::size_t window, std::size_t step, std::size_t channels,
               std::size_t classes)
      : window_(window), step_(step), channels_(channels), classes_(classes) {
    if (window == 0 || step == 0) {
      throw ConfigError("frames: window and step must be at least 1");
    }
  }

  /// Number of windows the count formula predicts for a recording.
  static std::size_t frame_count(std::size_t length, std::size_t window,
                                 std::size_t step) {
    return length < window ? 0 : (length - window) / step + 1;
  }

  /// Appends every window of `rec` at offsets 0, step, 2·step, ...
  /// Returns the number of frames added (zero if the recording is too short).
  std::size_t add_recording(const RawRecording& rec,
                            LabelRule rule = LabelRule::majority) {
    rec.validate();
    if (rec.channels != channels_) {
      throw DataError("frames: channel count differs in " + rec.describe());
    }
    const std::size_t n = frame_count(rec.length(), window_, step_);
    const std::size_t recording = recording_count_++;
    for (std::size_t f = 0; f < n; ++f) {
      const std::size_t off = f * step_;
      data_.insert(data_.end(),
                   rec.samples.begin() + static_cast<std::ptrdiff_t>(off * channels_),
                   rec.samples.begin() +
                       static_cast<std::ptrdiff_t>((off + window_) * channels_));
      const auto win = std::span<const std::size_t>(rec.labels).subspan(off, window_);
      const std::size_t label =
          rule == LabelRule::majority ? majority_label(win) : win.back();
      if (label >= classes_) throw DataError("frames: label out of range");
      labels_.push_back(label);
      recording_.push_back(recording);
      offset_.push_back(off);
    }
    return n;
  }

  static FrameDataset from_recordings(const std::vector<RawRecording>& recs,
                                      std::size_t classes, std::size_t window,
                                      std::size_t step,
                                      LabelRule rule = LabelRule::majority) {
    if (recs.empty()) throw DataError("frames: no recordings");
    FrameDataset d(window, step, recs.front().channels, classes);
    for (const auto& r : recs) d.add_recording(r, rule);
    return d;
  }

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  std::size_t window() const noexcept { return window_; }
  std::size_t step() const noexcept { return step_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t classes() const noexcept { return classes_; }
  std::size_t frame_size() const noexcept { return window_ * channels_; }

  std::span<const T> frame(std::size_t i) const {
    return {data_.data() + i * frame_size(), frame_size()};
  }
  std::size_t label(std::size_t i) const { return labels_.at(i); }
  std::span<const std::size_t> labels() const noexcept { return labels_; }
  std::size_t recording_of(std::size_t i) const { return recording_.at(i); }
  std::size_t offset_of(std::size_t i) const { return offset_.at(i); }

  /// The frames in temporal order as a stream of flattened vectors, with a
  /// boundary wherever a new recording starts.
  SequenceDataset<T> as_sequence() const {
    SequenceDataset<T> s(frame_size(), classes_);
    std::size_t i = 0;
    while (i < size()) {
      std::size_t j = i;
      while (j < size() && recording_[j] == recording_[i]) ++j;
      s.append(std::span<const T>(data_).subspan(i * frame_size(), (j - i) * frame_size()),
               std::span<const std::size_t>(labels_).subspan(i, j - i));
      i = j;
    }
    return s;
  }

 private:
  std::size_t window_ = 0;
  std::size_t step_ = 0;
  std::size_t channels_ = 0;
  std::size_t classes_ = 0;
  std::size_t recording_count_ = 0;
  std::vector<T> data_;
  std::vector<std::size_t> labels_;
  std::vector<std::size_t> recording_;
  std::vector<std::size_t> offset_;
};

/// Sliding-window segmentation of a single recording.
template <typename T = double>
FrameDataset<T> sliding_window(const RawRecording& rec, std::size_t classes,
                               std::size_t window, std::size_t step,
                               LabelRule rule = LabelRule::majority) {
  FrameDataset<T> d(window, step, rec.channels, classes);
  d.add_recording(rec, rule);
  return d;
}

}  // namespace har
