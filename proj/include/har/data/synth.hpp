// SPDX-License-Identifier: Apache-2.0
//
// Synthetic piecewise recordings for desk-scale experiments.
//
// Every class owns, on each channel, a constant offset plus a sinusoid of
// its own frequency and phase. Offsets are evenly spaced levels in [-1, 1]
// permuted independently per channel, and the sinusoid amplitude stays well
// inside half the level spacing, so with zero noise each sample lies closer
// to its class's offset than to any other.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "har/data/recording.hpp"
#include "har/errors.hpp"

namespace har {

struct SynthSpec {
  std::size_t classes = 4;
  std::size_t channels = 3;
  double rate = 32.0;
  std::size_t samples = 100000;  // total over all splits
  std::size_t min_segment = 48;
  std::size_t max_segment = 160;
  /// Relative frequency with which each class opens a segment; empty means
  /// uniform.
  std::vector<double> class_weights;
  double noise = 0.05;
  std::uint64_t seed = 1;
  /// Fractions of `samples` for train / validation / test.
  double train_fraction = 0.70;
  double validation_fraction = 0.15;
  std::size_t recordings_per_split = 2;
};

/// Per-class, per-channel generator parameters.
struct SynthTemplate {
  std::vector<double> offset;     // classes × channels
  std::vector<double> amplitude;  // classes × channels
  std::vector<double> frequency;  // classes × channels, Hz
  std::vector<double> phase;      // classes × channels
  std::size_t classes = 0;
  std::size_t channels = 0;

  double offset_of(std::size_t c, std::size_t ch) const {
    return offset[c * channels + ch];
  }
  double value(std::size_t c, std::size_t ch, double seconds) const {
    const std::size_t k = c * channels + ch;
    return offset[k] + amplitude[k] * std::sin(2 * std::numbers::pi *
                                                   frequency[k] * seconds +
                                               phase[k]);
  }
};

inline void validate(const SynthSpec& s) {
  if (s.classes < 2) throw ConfigError("synth: need at least 2 classes");
  if (s.channels < 1) throw ConfigError("synth: need at least 1 channel");
  if (!(s.rate >= 4)) throw ConfigError("synth: rate must be at least 4 Hz");
  if (s.min_segment < 1 || s.max_segment < s.min_segment) {
    throw ConfigError("synth: bad segment length range");
  }
  if (!s.class_weights.empty()) {
    if (s.class_weights.size() != s.classes) {
      throw ConfigError("synth: one weight per class required");
    }
    for (double w : s.class_weights)
      if (!(w > 0)) throw ConfigError("synth: class weights must be positive");
  }
  if (!(s.noise >= 0)) throw ConfigError("synth: noise must be non-negative");
  if (!(s.train_fraction > 0) || !(s.validation_fraction > 0) ||
      s.train_fraction + s.validation_fraction >= 1) {
    throw ConfigError("synth: split fractions must be positive and sum below 1");
  }
  if (s.recordings_per_split < 1) {
    throw ConfigError("synth: need at least one recording per split");
  }
  const double smallest = std::min(s.train_fraction, std::min(s.validation_fraction,
                                   1 - s.train_fraction - s.validation_fraction));
  if (smallest * static_cast<double>(s.samples) <
      static_cast<double>(s.recordings_per_split * s.max_segment)) {
    throw ConfigError("synth: too few samples for the requested splits");
  }
}

inline SynthTemplate make_template(const SynthSpec& s, std::mt19937_64& rng) {
  SynthTemplate t;
  t.classes = s.classes;
  t.channels = s.channels;
  const std::size_t n = s.classes * s.channels;
  t.offset.resize(n);
  t.amplitude.resize(n);
  t.frequency.resize(n);
  t.phase.resize(n);
  const double spacing = 2.0 / static_cast<double>(s.classes - 1);
  // Distinct integer frequencies from 1 Hz up to a quarter of the rate.
  const auto top = static_cast<std::size_t>(std::max(1.0, std::floor(s.rate / 4)));
  std::uniform_real_distribution<double> angle(0, 2 * std::numbers::pi);
  for (std::size_t ch = 0; ch < s.channels; ++ch) {
    std::vector<std::size_t> level(s.classes);
    std::iota(level.begin(), level.end(), 0);
    std::shuffle(level.begin(), level.end(), rng);
    std::vector<double> freqs;
    for (std::size_t c = 0; c < s.classes; ++c)
      freqs.push_back(1.0 + static_cast<double>(c % top));
    std::shuffle(freqs.begin(), freqs.end(), rng);
    for (std::size_t c = 0; c < s.classes; ++c) {
      const std::size_t k = c * s.channels + ch;
      t.offset[k] = -1.0 + spacing * static_cast<double>(level[c]);
      t.amplitude[k] = 0.35 * spacing;
      t.frequency[k] = freqs[c];
      t.phase[k] = angle(rng);
    }
  }
  return t;
}

/// Expected share of samples carrying each class: segment starts are drawn
/// with the class weights and all classes share one length law.
inline std::vector<double> expected_priors(const SynthSpec& s) {
  std::vector<double> w = s.class_weights;
  if (w.empty()) w.assign(s.classes, 1.0);
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& v : w) v /= total;
  return w;
}

namespace detail {

inline RawRecording synth_recording(const SynthSpec& s, const SynthTemplate& tpl,
                                    std::size_t length, const std::string& subject,
                                    const std::string& run, std::mt19937_64& rng) {
  RawRecording r;
  r.subject = subject;
  r.run = run;
  r.rate = s.rate;
  r.channels = s.channels;
  r.provenance = "synth seed " + std::to_string(s.seed);
  r.samples.reserve(length * s.channels);
  r.labels.reserve(length);
  const auto w = expected_priors(s);
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  std::uniform_int_distribution<std::size_t> seg(s.min_segment, s.max_segment);
  std::normal_distribution<double> noise(0.0, 1.0);
  while (r.labels.size() < length) {
    const std::size_t c = pick(rng);
    const std::size_t n = std::min(seg(rng), length - r.labels.size());
    for (std::size_t k = 0; k < n; ++k) {
      const double seconds = static_cast<double>(r.labels.size()) / s.rate;
      for (std::size_t ch = 0; ch < s.channels; ++ch)
        r.samples.push_back(tpl.value(c, ch, seconds) + s.noise * noise(rng));
      r.labels.push_back(c);
    }
  }
  return r;
}

}  // namespace detail

/// Generates a three-way split; identical specs give identical data.
inline DatasetSplits synthesize(const SynthSpec& s) {
  validate(s);
  std::mt19937_64 rng(s.seed);
  const SynthTemplate tpl = make_template(s, rng);
  DatasetSplits d;
  d.id = "synth";
  d.rate = s.rate;
  d.channels = s.channels;
  d.window = static_cast<std::size_t>(std::round(s.rate));
  d.step = std::max<std::size_t>(1, d.window / 2);
  for (std::size_t c = 0; c < s.classes; ++c) d.class_names.push_back("class" + std::to_string(c));
  const auto total = static_cast<double>(s.samples);
  const auto n_train = static_cast<std::size_t>(std::round(total * s.train_fraction));
  const auto n_val = static_cast<std::size_t>(std::round(total * s.validation_fraction));
  const std::size_t sizes[3] = {n_train, n_val, s.samples - n_train - n_val};
  std::vector<RawRecording>* out[3] = {&d.train, &d.validation, &d.test};
  const char* names[3] = {"train", "validation", "test"};
  for (int k = 0; k < 3; ++k) {
    const std::size_t per = sizes[k] / s.recordings_per_split;
    for (std::size_t r = 0; r < s.recordings_per_split; ++r) {
      const std::size_t len =
          r + 1 == s.recordings_per_split ? sizes[k] - per * r : per;
      out[k]->push_back(detail::synth_recording(
          s, tpl, len, std::string(names[k]) + std::to_string(r + 1), "1", rng));
    }
  }
  return d;
}

/// Returns the generator parameters a spec produces, for oracle use.
inline SynthTemplate synth_template(const SynthSpec& s) {
  validate(s);
  std::mt19937_64 rng(s.seed);
  return make_template(s, rng);
}

}  // namespace har
