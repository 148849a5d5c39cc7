// SPDX-License-Identifier: Apache-2.0
//
// Raw labelled recordings and the per-recording preprocessing steps:
// gap interpolation, bin-average downsampling, train-statistics
// standardisation and window labelling.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "har/errors.hpp"

namespace har {

struct RawRecording {
  std::string subject;
  std::string run;
  double rate = 0;  // Hz
  std::size_t channels = 0;
  std::vector<double> samples;      // length × channels, row-major
  std::vector<std::size_t> labels;  // class index per sample
  std::string provenance;

  std::size_t length() const noexcept { return labels.size(); }
  std::span<const double> sample(std::size_t t) const {
    return {samples.data() + t * channels, channels};
  }
  double& at(std::size_t t, std::size_t c) { return samples[t * channels + c]; }
  double at(std::size_t t, std::size_t c) const {
    return samples[t * channels + c];
  }

  void validate() const {
    if (!(rate > 0)) throw DataError(describe() + ": non-positive sample rate");
    if (channels == 0) throw DataError(describe() + ": no channels");
    if (samples.size() != labels.size() * channels) {
      throw DataError(describe() + ": sample matrix does not match label count");
    }
  }

  std::string describe() const { return "recording " + subject + "/" + run; }
};

/// One dataset cut into its three subject/run-disjoint splits.
struct DatasetSplits {
  std::string id;
  double rate = 0;
  std::size_t channels = 0;
  std::vector<std::string> class_names;
  std::size_t window = 0;  // frame length in samples
  std::size_t step = 0;    // frame stride in samples
  /// Background class that a metric may leave out; -1 when there is none.
  int null_class = -1;
  std::vector<RawRecording> train;
  std::vector<RawRecording> validation;
  std::vector<RawRecording> test;

  std::size_t classes() const noexcept { return class_names.size(); }

  template <typename F>
  void for_each_split(F&& f) {
    f("train", train);
    f("validation", validation);
    f("test", test);
  }
  template <typename F>
  void for_each_split(F&& f) const {
    f("train", train);
    f("validation", validation);
    f("test", test);
  }
};

inline std::size_t total_samples(const std::vector<RawRecording>& recs) {
  std::size_t n = 0;
  for (const auto& r : recs) n += r.length();
  return n;
}

/// Replaces non-finite values channel by channel: interior gaps are linearly
/// interpolated between the neighbouring valid samples, leading and trailing
/// gaps take the nearest valid value. A channel with no valid sample at all
/// becomes zero. Returns the number of values filled.
inline std::size_t interpolate_missing(RawRecording& rec) {
  std::size_t filled = 0;
  const std::size_t n = rec.length();
  for (std::size_t c = 0; c < rec.channels; ++c) {
    std::size_t prev = n;  // index of last valid sample, n if none yet
    for (std::size_t t = 0; t <= n; ++t) {
      const bool valid = t < n && std::isfinite(rec.at(t, c));
      if (t < n && !valid) continue;
      const std::size_t gap_begin = prev == n ? 0 : prev + 1;
      for (std::size_t g = gap_begin; g < t; ++g) {
        double v = 0;
        if (prev == n && t == n) {
          v = 0;
        } else if (prev == n) {
          v = rec.at(t, c);
        } else if (t == n) {
          v = rec.at(prev, c);
        } else {
          const double a = static_cast<double>(g - prev) /
                           static_cast<double>(t - prev);
          v = rec.at(prev, c) + a * (rec.at(t, c) - rec.at(prev, c));
        }
        rec.at(g, c) = v;
        ++filled;
      }
      prev = t;
    }
  }
  return filled;
}

/// Most frequent label of a window. Ties go to whichever tied label occurs
/// latest in the window.
inline std::size_t majority_label(std::span<const std::size_t> labels) {
  if (labels.empty()) throw InvalidInput("majority_label: empty window");
  std::map<std::size_t, std::size_t> votes;
  for (std::size_t l : labels) ++votes[l];
  std::size_t top = 0;
  for (const auto& [label, n] : votes) top = std::max(top, n);
  for (auto it = labels.rbegin(); it != labels.rend(); ++it) {
    if (votes[*it] == top) return *it;
  }
  return labels.back();
}

/// Averages contiguous bins of round(rate/target) samples. The trailing
/// partial bin is dropped; bin labels follow majority_label.
inline RawRecording downsample(const RawRecording& rec, double target_rate) {
  if (!(target_rate > 0)) {
    throw ConfigError("downsample: target rate must be positive");
  }
  if (target_rate > rec.rate * (1 + 1e-9)) {
    throw ConfigError("downsample: target rate above source rate");
  }
  const auto bin =
      static_cast<std::size_t>(std::max(1.0, std::round(rec.rate / target_rate)));
  RawRecording out;
  out.subject = rec.subject;
  out.run = rec.run;
  out.channels = rec.channels;
  out.provenance = rec.provenance;
  out.rate = rec.rate / static_cast<double>(bin);
  const std::size_t bins = rec.length() / bin;
  out.samples.assign(bins * rec.channels, 0.0);
  out.labels.resize(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    for (std::size_t k = 0; k < bin; ++k) {
      for (std::size_t c = 0; c < rec.channels; ++c)
        out.at(b, c) += rec.at(b * bin + k, c);
    }
    for (std::size_t c = 0; c < rec.channels; ++c)
      out.at(b, c) /= static_cast<double>(bin);
    out.labels[b] = majority_label(
        std::span<const std::size_t>(rec.labels).subspan(b * bin, bin));
  }
  return out;
}

/// Per-channel zero-mean, unit-variance scaling.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;  // 1 / standard deviation

  static Standardizer fit(const std::vector<RawRecording>& train) {
    if (train.empty()) throw DataError("standardizer: empty training split");
    const std::size_t d = train.front().channels;
    std::vector<double> sum(d, 0), sq(d, 0);
    double n = 0;
    for (const auto& r : train) {
      for (std::size_t t = 0; t < r.length(); ++t) {
        for (std::size_t c = 0; c < d; ++c) {
          const double v = r.at(t, c);
          sum[c] += v;
          sq[c] += v * v;
        }
      }
      n += static_cast<double>(r.length());
    }
    if (n == 0) throw DataError("standardizer: training split has no samples");
    Standardizer s;
    s.mean.resize(d);
    s.scale.resize(d);
    for (std::size_t c = 0; c < d; ++c) {
      s.mean[c] = sum[c] / n;
      const double var = std::max(0.0, sq[c] / n - s.mean[c] * s.mean[c]);
      s.scale[c] = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;
    }
    return s;
  }

  void apply(RawRecording& r) const {
    if (r.channels != mean.size()) {
      throw DataError("standardizer: channel count mismatch");
    }
    for (std::size_t t = 0; t < r.length(); ++t)
      for (std::size_t c = 0; c < r.channels; ++c)
        r.at(t, c) = (r.at(t, c) - mean[c]) * scale[c];
  }

  void apply(DatasetSplits& splits) const {
    splits.for_each_split([&](const char*, std::vector<RawRecording>& recs) {
      for (auto& r : recs) apply(r);
    });
  }
};

/// Splits a recording wherever `keep(label)` is false, returning the
/// maximal kept runs (each at least `min_length` samples long) with labels
/// passed through `relabel`.
template <typename Keep, typename Relabel>
std::vector<RawRecording> split_on_labels(const RawRecording& rec, Keep keep,
                                          Relabel relabel,
                                          std::size_t min_length = 1) {
  std::vector<RawRecording> pieces;
  std::size_t t = 0;
  const std::size_t n = rec.length();
  while (t < n) {
    while (t < n && !keep(rec.labels[t])) ++t;
    const std::size_t begin = t;
    while (t < n && keep(rec.labels[t])) ++t;
    if (t - begin < std::max<std::size_t>(min_length, 1)) continue;
    RawRecording p;
    p.subject = rec.subject;
    p.run = rec.run + "#" + std::to_string(pieces.size());
    p.rate = rec.rate;
    p.channels = rec.channels;
    p.provenance = rec.provenance;
    p.samples.assign(rec.samples.begin() + static_cast<std::ptrdiff_t>(begin * rec.channels),
                     rec.samples.begin() + static_cast<std::ptrdiff_t>(t * rec.channels));
    for (std::size_t k = begin; k < t; ++k) p.labels.push_back(relabel(rec.labels[k]));
    pieces.push_back(std::move(p));
  }
  return pieces;
}

}  // namespace har
