// SPDX-License-Identifier: Apache-2.0
//
// End-to-end training of one configuration: data preparation, the three
// learner kinds (stratified frames, carried-state streams, bidirectional
// segments), evaluation and the protocol loop.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "har/data/datasets.hpp"
#include "har/data/recording.hpp"
#include "har/errors.hpp"
#include "har/metrics.hpp"
#include "har/models/checkpoint.hpp"
#include "har/models/cnn.hpp"
#include "har/models/dnn.hpp"
#include "har/models/lstm.hpp"
#include "har/training/batching.hpp"
#include "har/training/hyperparameters.hpp"
#include "har/training/optimizer.hpp"
#include "har/training/protocol.hpp"

namespace har {

/// SplitMix64 finaliser, used to derive independent seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Split data in the representation a family consumes, standardised with
/// training statistics.
template <typename T>
struct PreparedData {
  std::string dataset;
  std::size_t classes = 0;
  std::size_t channels = 0;
  std::size_t window = 0;
  std::size_t step = 0;
  int null_class = -1;
  bool frames = false;
  FrameDataset<T> train_frames, validation_frames, test_frames;
  bool samples = false;
  SequenceDataset<T> train_samples, validation_samples, test_samples;
};

template <typename T>
PreparedData<T> prepare_data(const DatasetSplits& raw, Family family,
                             bool standardize = true) {
  if (raw.train.empty() || raw.validation.empty() || raw.test.empty()) {
    throw DataError("dataset " + raw.id + ": every split needs at least one recording");
  }
  if (raw.window == 0 || raw.step == 0) {
    throw DataError("dataset " + raw.id + ": window and step are not set");
  }
  DatasetSplits d = raw;
  if (standardize) Standardizer::fit(d.train).apply(d);
  PreparedData<T> p;
  p.dataset = d.id;
  p.classes = d.classes();
  p.channels = d.channels;
  p.window = d.window;
  p.step = d.step;
  p.null_class = d.null_class;
  if (is_sample_family(family)) {
    p.samples = true;
    p.train_samples = SequenceDataset<T>::from_recordings(d.train, p.classes);
    p.validation_samples = SequenceDataset<T>::from_recordings(d.validation, p.classes);
    p.test_samples = SequenceDataset<T>::from_recordings(d.test, p.classes);
  } else {
    p.frames = true;
    p.train_frames = FrameDataset<T>::from_recordings(d.train, p.classes, d.window, d.step);
    p.validation_frames =
        FrameDataset<T>::from_recordings(d.validation, p.classes, d.window, d.step);
    p.test_frames = FrameDataset<T>::from_recordings(d.test, p.classes, d.window, d.step);
    if (p.train_frames.empty() || p.validation_frames.empty() || p.test_frames.empty()) {
      throw DataError("dataset " + d.id + ": a split yields no frames");
    }
  }
  return p;
}

template <typename T>
struct TrainOptions {
  TrainProtocol protocol;
  F1Options f1;
  std::uint64_t seed = 1;
  std::optional<double> time_budget_seconds;
  /// Called after every parameter update (after the max-in constraint).
  std::function<void(const ParameterSet<T>&)> after_step;
  bool keep_checkpoint = false;
};

enum class Split { validation, test };

/// Scores of one split. `primary` is per frame for frame-input models and
/// per sample for sample-input models; the latter also get a per-frame
/// matrix by majority vote over each sliding window.
struct Evaluation {
  ConfusionMatrix primary;
  std::optional<ConfusionMatrix> frames;
};

namespace detail {

template <typename T>
std::size_t argmax(std::span<const T> p) {
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

template <typename T>
double nll(T p) {
  return -std::log(std::max(static_cast<double>(p), std::numeric_limits<double>::min()));
}

/// Frame-level matrix from per-sample predictions over each recording.
template <typename T>
ConfusionMatrix frame_votes(const SequenceDataset<T>& data,
                            const std::vector<std::size_t>& predicted,
                            std::size_t window, std::size_t step) {
  ConfusionMatrix cm(data.classes());
  for (std::size_t r = 0; r < data.recordings(); ++r) {
    const auto [begin, end] = data.recording_range(r);
    const std::size_t n = FrameDataset<T>::frame_count(end - begin, window, step);
    for (std::size_t f = 0; f < n; ++f) {
      const std::size_t off = begin + f * step;
      cm.accumulate(majority_label(data.labels().subspan(off, window)),
                    majority_label(std::span<const std::size_t>(predicted).subspan(off, window)));
    }
  }
  return cm;
}

template <typename T>
OptimizerConfig optimizer_for(const Hyperparameters& h) {
  OptimizerConfig c;
  c.learning_rate = h.learning_rate;
  if (is_frame_family(h.family)) {
    c.kind = OptimizerKind::sgd_momentum;
    c.decay = h.lr_decay;
    c.momentum = h.momentum;
  } else {
    c.kind = OptimizerKind::adagrad;
  }
  return c;
}

}  // namespace detail

/// Common state of every learner: parameters, optimiser, best snapshot.
template <typename T, typename Model>
class LearnerBase {
 public:
  LearnerBase(Model model, const PreparedData<T>& data, const Hyperparameters& h,
              const TrainOptions<T>& o)
      : model_(std::move(model)),
        data_(data),
        hyper_(h),
        options_(o),
        optimizer_(detail::optimizer_for<T>(h), model_.parameters()),
        rng_(mix_seed(o.seed, 1)) {
    if (!(h.max_in_norm > 0)) throw ConfigError("max-in norm must be positive");
  }

  Model& model() noexcept { return model_; }
  ParameterSet<T>& parameters() noexcept { return model_.parameters(); }

  void remember_best() { best_ = model_.parameters().snapshot(); }
  void restore_best() {
    if (!best_.empty()) model_.parameters().restore(best_);
  }

  double validate() { return mean_f1(evaluate_split(Split::validation).primary, options_.f1); }

  virtual Evaluation evaluate_split(Split s) = 0;
  virtual double train_epoch() = 0;
  virtual ~LearnerBase() = default;

 protected:
  void update() {
    optimizer_.step(model_.parameters());
    maxin_norm(model_.parameters(), hyper_.max_in_norm);
    if (options_.after_step) options_.after_step(model_.parameters());
  }

  Model model_;
  const PreparedData<T>& data_;
  Hyperparameters hyper_;
  TrainOptions<T> options_;
  Optimizer<T> optimizer_;
  Rng rng_;
  std::vector<Tensor<T>> best_;
};

/// DNN and CNN: stratified 64-frame batches, SGD with momentum.
template <typename T, typename Model>
class FrameLearner : public LearnerBase<T, Model> {
  using Base = LearnerBase<T, Model>;

 public:
  FrameLearner(Model model, const PreparedData<T>& data, const Hyperparameters& h,
               const TrainOptions<T>& o)
      : Base(std::move(model), data, h, o),
        sampler_(data.train_frames.labels(), data.classes) {}

  const StratifiedSampler& sampler() const noexcept { return sampler_; }

  double train_epoch() override {
    auto& frames = this->data_.train_frames;
    sampler_.begin_epoch(this->rng_);
    std::vector<std::size_t> batch;
    double loss = 0;
    std::size_t seen = 0;
    typename Model::Trace trace;
    while (sampler_.next(batch)) {
      this->parameters().zero_grad();
      const T scale = T(1) / static_cast<T>(batch.size());
      for (std::size_t i : batch) {
        const auto p = this->model_.forward(frames.frame(i), Mode::train, this->rng_, &trace);
        loss += detail::nll(p[frames.label(i)]);
        this->model_.backward(trace, frames.label(i), scale);
      }
      seen += batch.size();
      this->update();
    }
    return loss / static_cast<double>(seen);
  }

  Evaluation evaluate_split(Split s) override {
    const auto& frames =
        s == Split::validation ? this->data_.validation_frames : this->data_.test_frames;
    ConfusionMatrix cm(this->data_.classes);
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const auto p = this->model_.forward(frames.frame(i), Mode::infer, this->rng_);
      cm.accumulate(frames.label(i), detail::argmax(std::span<const T>(p)));
    }
    return {cm, std::nullopt};
  }

 private:
  StratifiedSampler sampler_;
};

/// Forward LSTMs over samples (LSTM-S) or over flattened frames (LSTM-F):
/// b parallel streams, state carried between batches with probability
/// p_carry and always cleared at recording starts.
template <typename T>
class StreamLearner : public LearnerBase<T, LstmModel<T>> {
  using Base = LearnerBase<T, LstmModel<T>>;

 public:
  StreamLearner(LstmModel<T> model, const PreparedData<T>& data, const Hyperparameters& h,
                const TrainOptions<T>& o)
      : Base(std::move(model), data, h, o),
        sequence_(h.family == Family::lstm_f ? data.train_frames.as_sequence()
                                             : data.train_samples),
        batcher_(sequence_.length(), h.unroll, h.p_carry, this->rng_) {
    states_.assign(batcher_.streams(), this->model_.zero_state());
    if (h.family == Family::lstm_f) {
      validation_frames_ = data.validation_frames.as_sequence();
      test_frames_ = data.test_frames.as_sequence();
    }
  }

  SequenceBatcher& batcher() noexcept { return batcher_; }
  const SequenceDataset<T>& training_sequence() const noexcept { return sequence_; }

  /// Observer called with each stream's state right before its forward
  /// pass, after the carry-over decision has been applied.
  std::function<void(std::size_t, const LstmState<T>&)> on_stream_start;

  double train_epoch() override {
    const std::size_t batches = batcher_.batches_per_epoch();
    double loss = 0;
    std::size_t seen = 0;
    LstmTrace<T> trace;
    for (std::size_t k = 0; k < batches; ++k) {
      const auto batch = batcher_.next(sequence_, this->rng_);
      this->parameters().zero_grad();
      const std::size_t steps = batch.streams() * batcher_.unroll();
      const T scale = T(1) / static_cast<T>(steps);
      for (std::size_t i = 0; i < batch.streams(); ++i) {
        if (!batch.retain[i]) states_[i].zero();
        if (on_stream_start) on_stream_start(i, states_[i]);
        const auto probs = this->model_.forward_sequence(batch.stream_inputs(i), states_[i],
                                                         batch.boundaries[i], &trace);
        for (std::size_t t = 0; t < batcher_.unroll(); ++t)
          loss += detail::nll(probs(t, batch.targets[i][t]));
        this->model_.backward(trace, batch.targets[i], scale);
      }
      seen += steps;
      this->update();
    }
    return loss / static_cast<double>(seen);
  }

  Evaluation evaluate_split(Split s) override {
    if (this->hyper_.family == Family::lstm_f) {
      return {score(s == Split::validation ? validation_frames_ : test_frames_), std::nullopt};
    }
    const auto& seq =
        s == Split::validation ? this->data_.validation_samples : this->data_.test_samples;
    std::vector<std::size_t> predicted;
    ConfusionMatrix cm = score(seq, &predicted);
    return {cm, detail::frame_votes(seq, predicted, this->data_.window, this->data_.step)};
  }

 private:
  ConfusionMatrix score(const SequenceDataset<T>& seq,
                        std::vector<std::size_t>* predicted = nullptr) {
    ConfusionMatrix cm(seq.classes());
    auto state = this->model_.zero_state();
    const auto probs = this->model_.forward_sequence(seq.window(0, seq.length()), state,
                                                     seq.boundaries());
    for (std::size_t t = 0; t < seq.length(); ++t) {
      const std::size_t p = detail::argmax(probs.row(t));
      cm.accumulate(seq.labels()[t], p);
      if (predicted) predicted->push_back(p);
    }
    return cm;
  }

  SequenceDataset<T> sequence_;
  SequenceDataset<T> validation_frames_, test_frames_;
  SequenceBatcher batcher_;
  std::vector<LstmState<T>> states_;
};

/// Bidirectional LSTM over samples. Training cuts the stream into
/// contiguous segments of L samples at a random phase each epoch, 64
/// segments per update, both tracks starting from zero. Evaluation runs
/// each recording in consecutive segments of L samples.
template <typename T>
class SegmentLearner : public LearnerBase<T, LstmModel<T>> {
  using Base = LearnerBase<T, LstmModel<T>>;

 public:
  SegmentLearner(LstmModel<T> model, const PreparedData<T>& data, const Hyperparameters& h,
                 const TrainOptions<T>& o)
      : Base(std::move(model), data, h, o) {
    if (h.unroll == 0 || h.unroll >= data.train_samples.length()) {
      throw ConfigError("blstm: segment length must be in [1, training length)");
    }
  }

  double train_epoch() override {
    const auto& seq = this->data_.train_samples;
    const std::size_t L = this->hyper_.unroll;
    std::uniform_int_distribution<std::size_t> phase(0, L - 1);
    const std::size_t offset = phase(this->rng_);
    std::vector<std::size_t> starts;
    for (std::size_t s = 0; s + L <= seq.length(); s += L) starts.push_back((offset + s) % seq.length());
    std::shuffle(starts.begin(), starts.end(), this->rng_);
    double loss = 0;
    std::size_t seen = 0;
    LstmTrace<T> trace;
    std::vector<std::size_t> targets(L);
    std::vector<std::uint8_t> bounds(L);
    for (std::size_t b = 0; b < starts.size(); b += kSequenceStreams) {
      const std::size_t end = std::min(starts.size(), b + kSequenceStreams);
      this->parameters().zero_grad();
      const T scale = T(1) / static_cast<T>((end - b) * L);
      for (std::size_t k = b; k < end; ++k) {
        for (std::size_t t = 0; t < L; ++t) {
          const std::size_t i = (starts[k] + t) % seq.length();
          targets[t] = seq.labels()[i];
          bounds[t] = seq.boundaries()[i];
        }
        const auto probs =
            this->model_.forward_bidirectional(seq.window(starts[k], L), bounds, &trace);
        for (std::size_t t = 0; t < L; ++t) loss += detail::nll(probs(t, targets[t]));
        this->model_.backward(trace, targets, scale);
      }
      seen += (end - b) * L;
      this->update();
    }
    return loss / static_cast<double>(seen);
  }

  Evaluation evaluate_split(Split s) override {
    const auto& seq =
        s == Split::validation ? this->data_.validation_samples : this->data_.test_samples;
    const std::size_t L = this->hyper_.unroll;
    ConfusionMatrix cm(seq.classes());
    std::vector<std::size_t> predicted;
    predicted.reserve(seq.length());
    for (std::size_t r = 0; r < seq.recordings(); ++r) {
      const auto [begin, end] = seq.recording_range(r);
      for (std::size_t s0 = begin; s0 < end; s0 += L) {
        const std::size_t n = std::min(L, end - s0);
        const auto probs = this->model_.forward_bidirectional(seq.window(s0, n));
        for (std::size_t t = 0; t < n; ++t) {
          const std::size_t p = detail::argmax(probs.row(t));
          cm.accumulate(seq.labels()[s0 + t], p);
          predicted.push_back(p);
        }
      }
    }
    return {cm, detail::frame_votes(seq, predicted, this->data_.window, this->data_.step)};
  }
};

struct TestScores {
  double mean_f1 = 0;
  double weighted_f1 = 0;
  std::optional<double> frame_mean_f1;
  std::optional<double> frame_weighted_f1;
};

struct TrainResult {
  Hyperparameters hyper;
  RunStatus status = RunStatus::ok;
  std::string message;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_validation = 0;
  TestScores test;
  nlohmann::json checkpoint;  // filled when requested

  /// Score used to rank runs: test mean F1, 0 for failed runs.
  double score() const { return status == RunStatus::ok ? test.mean_f1 : 0.0; }
};

/// Builds the model described by `h` for data of this shape.
template <typename T>
std::unique_ptr<LearnerBase<T, DnnModel<T>>> make_dnn_learner(const PreparedData<T>& d,
                                                              const Hyperparameters& h,
                                                              const TrainOptions<T>& o,
                                                              Rng& init) {
  DnnModel<T> m(d.train_frames.frame_size(), d.classes, h.layers, h.units, init);
  return std::make_unique<FrameLearner<T, DnnModel<T>>>(std::move(m), d, h, o);
}

template <typename T>
std::unique_ptr<LearnerBase<T, CnnModel<T>>> make_cnn_learner(const PreparedData<T>& d,
                                                              const Hyperparameters& h,
                                                              const TrainOptions<T>& o,
                                                              Rng& init) {
  if (h.conv_layers < 1 || h.conv_layers > 3) {
    throw ConfigError("cnn: conv layer count must be in [1, 3]");
  }
  std::vector<ConvBlockSpec> blocks;
  for (std::size_t i = 0; i < h.conv_layers; ++i)
    blocks.push_back({h.kernel_width[i], h.filters[i]});
  CnnModel<T> m(d.window, d.channels, d.classes, blocks, h.layers, h.units, init);
  return std::make_unique<FrameLearner<T, CnnModel<T>>>(std::move(m), d, h, o);
}

template <typename T>
std::unique_ptr<LearnerBase<T, LstmModel<T>>> make_lstm_learner(const PreparedData<T>& d,
                                                                const Hyperparameters& h,
                                                                const TrainOptions<T>& o,
                                                                Rng& init) {
  if (h.family == Family::blstm_s) {
    if (h.layers != 1) throw ConfigError("blstm-s: exactly one layer");
    LstmModel<T> m(d.channels, d.classes, 1, h.units, Direction::bidirectional, init);
    return std::make_unique<SegmentLearner<T>>(std::move(m), d, h, o);
  }
  const std::size_t input =
      h.family == Family::lstm_f ? d.train_frames.frame_size() : d.channels;
  LstmModel<T> m(input, d.classes, h.layers, h.units, Direction::forward, init);
  return std::make_unique<StreamLearner<T>>(std::move(m), d, h, o);
}

namespace detail {

template <typename T, typename Model>
void finish(LearnerBase<T, Model>& learner, const ProtocolOutcome& outcome,
            const TrainOptions<T>& o, TrainResult& r) {
  r.status = outcome.status;
  r.message = outcome.message;
  r.history = outcome.history;
  r.best_epoch = outcome.best_epoch;
  r.best_validation = outcome.best_score;
  if (o.keep_checkpoint) {
    r.checkpoint = checkpoint_to_json(learner.parameters(), to_json(r.hyper));
  }
  if (r.status == RunStatus::diverged || r.best_epoch == 0) return;
  const Evaluation e = learner.evaluate_split(Split::test);
  r.test.mean_f1 = mean_f1(e.primary, o.f1);
  r.test.weighted_f1 = weighted_f1(e.primary, o.f1);
  if (e.frames) {
    r.test.frame_mean_f1 = mean_f1(*e.frames, o.f1);
    r.test.frame_weighted_f1 = weighted_f1(*e.frames, o.f1);
  }
}

template <typename T, typename Model>
void run_learner(std::unique_ptr<LearnerBase<T, Model>> learner, const TrainOptions<T>& o,
                 TrainResult& r) {
  const ProtocolOutcome outcome = run_protocol(*learner, o.protocol, o.time_budget_seconds);
  finish(*learner, outcome, o, r);
}

}  // namespace detail

/// Trains one configuration under the protocol and scores the selected
/// epoch on the test split. Configurations that cannot be built for this
/// data end as `invalid`; numeric blow-ups end as `diverged`.
template <typename T>
TrainResult train_model(const PreparedData<T>& data, const Hyperparameters& h,
                        const TrainOptions<T>& o) {
  TrainResult r;
  r.hyper = h;
  Rng init(mix_seed(o.seed, 0));
  try {
    switch (h.family) {
      case Family::dnn:
        detail::run_learner(make_dnn_learner(data, h, o, init), o, r);
        break;
      case Family::cnn:
        detail::run_learner(make_cnn_learner(data, h, o, init), o, r);
        break;
      default:
        detail::run_learner(make_lstm_learner(data, h, o, init), o, r);
        break;
    }
  } catch (const FrameTooShort& e) {
    r.status = RunStatus::invalid;
    r.message = e.what();
  } catch (const ConfigError& e) {
    r.status = RunStatus::invalid;
    r.message = e.what();
  }
  return r;
}

}  // namespace har
