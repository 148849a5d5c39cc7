// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <map>
#include <set>
#include <numeric>
#include <random>
#include <vector>

#include "har/data/synth.hpp"
#include "har/training/batching.hpp"
#include "har/training/optimizer.hpp"
#include "har/training/protocol.hpp"
#include "har/training/trainer.hpp"

namespace {

using har::Family;
using har::Hyperparameters;

har::ParameterSet<double> scalar_param(double v) {
  har::ParameterSet<double> p;
  p.add("theta", {1}, false);
  p[0].value[0] = v;
  return p;
}

// ---------------------------------------------------------------- optimisers

TEST(Optimizer, MomentumHandTrace) {
  auto p = scalar_param(1.0);
  har::Optimizer<double> opt({har::OptimizerKind::sgd_momentum, 0.1, 0.0, 0.5}, p);
  p[0].grad[0] = p[0].value[0];  // f = θ²/2
  opt.step(p);
  EXPECT_NEAR(p[0].value[0], 0.9, 1e-15);
  p[0].grad[0] = p[0].value[0];
  opt.step(p);
  EXPECT_NEAR(opt.state(0)[0], -0.14, 1e-15);
  EXPECT_NEAR(p[0].value[0], 0.76, 1e-15);
}

TEST(Optimizer, PlainSgdAndZeroGradient) {
  auto p = scalar_param(2.0);
  har::Optimizer<double> opt({har::OptimizerKind::sgd_momentum, 0.25, 0.0, 0.0}, p);
  p[0].grad[0] = 4.0;
  opt.step(p);
  EXPECT_DOUBLE_EQ(p[0].value[0], 1.0);

  auto q = scalar_param(3.0);
  har::Optimizer<double> o2({har::OptimizerKind::sgd_momentum, 0.1, 0.0, 0.9}, q);
  q[0].grad[0] = 0;
  for (int i = 0; i < 5; ++i) o2.step(q);
  EXPECT_EQ(q[0].value[0], 3.0);
}

TEST(Optimizer, InverseTimeDecay) {
  auto p = scalar_param(0.0);
  har::Optimizer<double> opt({har::OptimizerKind::sgd_momentum, 0.1, 0.5, 0.0}, p);
  EXPECT_DOUBLE_EQ(opt.current_rate(), 0.1);
  p[0].grad[0] = 1.0;
  opt.step(p);
  EXPECT_DOUBLE_EQ(p[0].value[0], -0.1);
  EXPECT_DOUBLE_EQ(opt.current_rate(), 0.1 / 1.5);
  opt.step(p);
  EXPECT_DOUBLE_EQ(p[0].value[0], -0.1 - 0.1 / 1.5);
}

TEST(Optimizer, AdagradFirstStepAndZero) {
  auto p = scalar_param(1.0);
  har::Optimizer<double> opt({har::OptimizerKind::adagrad, 0.1}, p);
  p[0].grad[0] = 1.0;
  opt.step(p);
  EXPECT_NEAR(1.0 - p[0].value[0], 0.1 / (1 + 1e-8), 1e-15);
  EXPECT_DOUBLE_EQ(opt.state(0)[0], 1.0);
  p[0].grad[0] = 0.0;
  const double before = p[0].value[0];
  opt.step(p);
  EXPECT_EQ(p[0].value[0], before);
  EXPECT_DOUBLE_EQ(opt.state(0)[0], 1.0);
}

TEST(Optimizer, AdagradInverseSqrtSteps) {
  auto p = scalar_param(0.0);
  har::Optimizer<double> opt({har::OptimizerKind::adagrad, 0.1}, p);
  for (int t = 1; t <= 400; ++t) {
    const double before = p[0].value[0];
    p[0].grad[0] = 2.0;
    opt.step(p);
    const double step = before - p[0].value[0];
    // Closed form: 0.1·2/(√(4t) + ε) = 0.1/√t up to ε.
    EXPECT_NEAR(step * std::sqrt(static_cast<double>(t)), 0.1, 1e-9) << t;
  }
}

TEST(Optimizer, RejectsBadConfigAndNonFiniteGradients) {
  auto p = scalar_param(1.0);
  EXPECT_THROW(har::Optimizer<double>({har::OptimizerKind::adagrad, 0.0}, p), har::ConfigError);
  EXPECT_THROW(har::Optimizer<double>({har::OptimizerKind::sgd_momentum, 0.1, 0, 1.0}, p),
               har::ConfigError);
  har::Optimizer<double> opt({har::OptimizerKind::sgd_momentum, 0.1, 0, 0.5}, p);
  p[0].grad[0] = std::nan("");
  EXPECT_THROW(opt.step(p), har::NumericError);
  EXPECT_EQ(p[0].value[0], 1.0);
  EXPECT_EQ(opt.steps(), 0u);
}

// ----------------------------------------------------------- stratification

std::vector<std::size_t> labels_with_counts(const std::vector<std::size_t>& counts,
                                            std::mt19937_64& rng) {
  std::vector<std::size_t> labels;
  for (std::size_t c = 0; c < counts.size(); ++c) labels.insert(labels.end(), counts[c], c);
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

// Checks one epoch: full batches stay within floor/ceil of 64·π_c, and the
// epoch visits every frame exactly once.
void check_epoch(const std::vector<std::size_t>& labels, std::size_t classes,
                 std::mt19937_64& rng) {
  har::StratifiedSampler s(labels, classes);
  s.begin_epoch(rng);
  std::vector<std::size_t> batch, visits(labels.size(), 0);
  std::size_t batches = 0;
  while (s.next(batch)) {
    ++batches;
    std::vector<std::size_t> count(classes, 0);
    for (std::size_t i : batch) {
      ++count[labels[i]];
      ++visits[i];
    }
    if (batch.size() == har::kFrameBatchSize) {
      for (std::size_t c = 0; c < classes; ++c) {
        const double ideal = 64.0 * s.priors()[c];
        EXPECT_GE(static_cast<double>(count[c]), std::floor(ideal) - 1e-9);
        EXPECT_LE(static_cast<double>(count[c]), std::ceil(ideal) + 1e-9);
        EXPECT_LE(std::abs(static_cast<double>(count[c]) - ideal), 1.0);
      }
    }
  }
  EXPECT_EQ(batches, s.batches_per_epoch());
  for (std::size_t v : visits) ASSERT_EQ(v, 1u);
}

TEST(Stratified, EvenSplitGivesHalfAndHalf) {
  std::mt19937_64 rng(1);
  const auto labels = labels_with_counts({640, 640}, rng);
  har::StratifiedSampler s(labels, 2);
  s.begin_epoch(rng);
  std::vector<std::size_t> batch;
  while (s.next(batch)) {
    std::size_t ones = 0;
    for (std::size_t i : batch) ones += labels[i];
    EXPECT_EQ(ones, 32u);
    EXPECT_EQ(batch.size(), 64u);
  }
}

TEST(Stratified, SkewedPriorsRoundingEnumeration) {
  std::mt19937_64 rng(2);
  const auto labels = labels_with_counts({7000, 2000, 1000}, rng);
  har::StratifiedSampler s(labels, 3);
  s.begin_epoch(rng);
  std::vector<std::size_t> batch;
  std::map<std::size_t, std::set<std::size_t>> seen;
  while (s.next(batch)) {
    if (batch.size() != 64) continue;
    std::vector<std::size_t> n(3, 0);
    for (std::size_t i : batch) ++n[labels[i]];
    for (std::size_t c = 0; c < 3; ++c) seen[c].insert(n[c]);
  }
  EXPECT_TRUE(std::includes(std::set<std::size_t>{44, 45}.begin(),
                            std::set<std::size_t>{44, 45}.end(), seen[0].begin(),
                            seen[0].end()));
  for (std::size_t v : seen[0]) EXPECT_TRUE(v == 44 || v == 45);
  for (std::size_t v : seen[1]) EXPECT_TRUE(v == 12 || v == 13);
  for (std::size_t v : seen[2]) EXPECT_TRUE(v == 6 || v == 7);
}

TEST(Stratified, SingleClassAndExcludedClass) {
  std::mt19937_64 rng(3);
  std::vector<std::size_t> labels(200, 1);
  har::StratifiedSampler s(labels, 3);
  EXPECT_EQ(s.excluded_classes(), (std::vector<std::size_t>{0, 2}));
  s.begin_epoch(rng);
  std::vector<std::size_t> batch;
  ASSERT_TRUE(s.next(batch));
  EXPECT_EQ(batch.size(), 64u);
  for (std::size_t i : batch) EXPECT_EQ(labels[i], 1u);
  check_epoch(labels, 3, rng);
}

TEST(Stratified, RandomPriorsStayWithinOneOfIdeal) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> k(2, 8), n(1, 3000);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t classes = k(rng);
    std::vector<std::size_t> counts(classes);
    for (auto& c : counts) c = n(rng) * (rng() % 5 == 0 ? 0 : 1);
    if (std::accumulate(counts.begin(), counts.end(), std::size_t{0}) == 0) counts[0] = 10;
    const auto labels = labels_with_counts(counts, rng);
    check_epoch(labels, classes, rng);
    if (HasFailure()) FAIL() << "trial " << trial;
  }
}

TEST(Stratified, ReshufflesBetweenEpochs) {
  std::mt19937_64 rng(5);
  const auto labels = labels_with_counts({300, 300}, rng);
  har::StratifiedSampler s(labels, 2);
  std::vector<std::size_t> a, b;
  s.begin_epoch(rng);
  s.next(a);
  s.begin_epoch(rng);
  s.next(b);
  EXPECT_NE(a, b);
}

// ------------------------------------------------------------ sequences

har::SequenceDataset<double> counting_sequence(std::size_t n, std::size_t recordings) {
  har::SequenceDataset<double> d(1, 2);
  const std::size_t per = n / recordings;
  std::size_t t = 0;
  for (std::size_t r = 0; r < recordings; ++r) {
    const std::size_t len = r + 1 == recordings ? n - t : per;
    std::vector<double> v(len);
    std::vector<std::size_t> l(len);
    for (std::size_t k = 0; k < len; ++k, ++t) {
      v[k] = static_cast<double>(t);
      l[k] = t % 2;
    }
    d.append(v, l);
  }
  return d;
}

TEST(SequenceBatcher, StreamsReadContiguousWrappedSlices) {
  const auto data = counting_sequence(5003, 3);
  har::Rng rng(6);
  har::SequenceBatcher batcher(data.length(), 17, 0.5, rng, 8);
  const auto start = batcher.positions();
  std::vector<std::vector<std::size_t>> seen(8);
  const std::size_t batches = batcher.batches_per_epoch();
  EXPECT_EQ(batches, (5003 + 8 * 17 - 1) / (8 * 17));
  for (std::size_t k = 0; k < batches; ++k) {
    const auto before = batcher.positions();
    const auto batch = batcher.next(data, rng);
    for (std::size_t i = 0; i < 8; ++i) {
      EXPECT_EQ(batcher.positions()[i], (before[i] + 17) % 5003);
      for (std::size_t t = 0; t < 17; ++t) {
        const std::size_t src = batch.sources[i][t];
        EXPECT_EQ(batch.inputs(i, t, 0), static_cast<double>(src));
        EXPECT_EQ(batch.targets[i][t], data.labels()[src]);
        EXPECT_EQ(batch.boundaries[i][t], data.boundaries()[src]);
        seen[i].push_back(src);
      }
    }
  }
  for (std::size_t i = 0; i < 8; ++i) {
    ASSERT_EQ(seen[i].size(), batches * 17);
    for (std::size_t k = 0; k < seen[i].size(); ++k)
      ASSERT_EQ(seen[i][k], (start[i] + k) % 5003) << "stream " << i;
  }
}

TEST(SequenceBatcher, RejectsUnrollNotShorterThanSequence) {
  har::Rng rng(7);
  EXPECT_THROW(har::SequenceBatcher(100, 100, 0.5, rng), har::ConfigError);
  EXPECT_THROW(har::SequenceBatcher(100, 0, 0.5, rng), har::ConfigError);
  EXPECT_THROW(har::SequenceBatcher(100, 10, 1.5, rng), har::ConfigError);
}

TEST(SequenceBatcher, RetainFrequencyMatchesCarryProbability) {
  const auto data = counting_sequence(2000, 1);
  for (double p : {0.0, 0.3, 0.8, 1.0}) {
    har::Rng rng(8);
    har::SequenceBatcher batcher(data.length(), 5, p, rng, 16);
    std::size_t kept = 0, total = 0;
    for (int k = 0; k < 1500; ++k) {
      const auto b = batcher.next(data, rng);
      for (auto r : b.retain) kept += r;
      total += b.retain.size();
    }
    const double f = static_cast<double>(kept) / static_cast<double>(total);
    const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(total));
    EXPECT_LE(std::abs(f - p), 4 * sigma + 1e-15) << "p_carry " << p;
  }
}

// With every state carried, running the streams chunk by chunk gives the
// same outputs as one pass over the whole contiguous slice.
TEST(CarryOver, ChunkedEqualsUnchunkedWhenAlwaysCarried) {
  har::Rng rng(9);
  har::SequenceDataset<double> data(3, 4);
  for (int r = 0; r < 3; ++r) {
    std::normal_distribution<double> g;
    const std::size_t len = 150 + 37 * r;
    std::vector<double> v(len * 3);
    std::vector<std::size_t> l(len);
    for (auto& x : v) x = g(rng);
    for (auto& y : l) y = rng() % 4;
    data.append(v, l);
  }
  har::LstmModel<double> model(3, 4, 2, 6, har::Direction::forward, rng);
  har::SequenceBatcher batcher(data.length(), 13, 1.0, rng, 4);
  const auto start = batcher.positions();
  std::vector<har::LstmState<double>> states(4, model.zero_state());
  std::vector<std::vector<double>> chunked(4);
  const std::size_t batches = 9;
  for (std::size_t k = 0; k < batches; ++k) {
    const auto b = batcher.next(data, rng);
    for (std::size_t i = 0; i < 4; ++i) {
      ASSERT_EQ(b.retain[i], 1);
      const auto p = model.forward_sequence(b.stream_inputs(i), states[i], b.boundaries[i]);
      chunked[i].insert(chunked[i].end(), p.values().begin(), p.values().end());
    }
  }
  double worst = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t n = batches * 13;
    har::Tensor<double> x({n, 3});
    std::vector<std::uint8_t> bounds(n);
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t src = (start[i] + t) % data.length();
      const auto s = data.sample(src);
      std::copy(s.begin(), s.end(), x.row(t).begin());
      bounds[t] = data.boundaries()[src];
    }
    auto state = model.zero_state();
    const auto whole = model.forward_sequence(x, state, bounds);
    for (std::size_t k = 0; k < whole.size(); ++k)
      worst = std::max(worst, std::abs(whole.values()[k] - chunked[i][k]));
  }
  EXPECT_LT(worst, 1e-10);
}

// ------------------------------------------------------------- protocol

struct ScriptedLearner {
  std::function<double(std::size_t)> curve;
  std::size_t epoch = 0;
  std::size_t remembered = 0;
  std::size_t restored = 0;
  double train_epoch() { return 1.0 / static_cast<double>(++epoch); }
  double validate() { return curve(epoch); }
  void remember_best() { remembered = epoch; }
  void restore_best() { restored = remembered; }
};

TEST(Protocol, ScriptedCurvesStopAtExpectedEpochs) {
  const har::TrainProtocol p;
  {
    ScriptedLearner l{[](std::size_t) { return 0.5; }};
    const auto out = har::run_protocol(l, p);
    EXPECT_EQ(out.epochs_run(), 40u);
    EXPECT_EQ(out.best_epoch, 1u);
  }
  {
    ScriptedLearner l{[](std::size_t e) { return static_cast<double>(std::min<std::size_t>(e, 40)); }};
    const auto out = har::run_protocol(l, p);
    EXPECT_EQ(out.epochs_run(), 50u);
    EXPECT_EQ(out.best_epoch, 40u);
    EXPECT_EQ(l.restored, 40u);
  }
  {
    ScriptedLearner l{[](std::size_t e) { return static_cast<double>(e); }};
    const auto out = har::run_protocol(l, p);
    EXPECT_EQ(out.epochs_run(), 300u);
    EXPECT_EQ(out.best_epoch, 300u);
    EXPECT_EQ(out.status, har::RunStatus::ok);
  }
}

TEST(Protocol, EpochCountAlwaysWithinBounds) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0, 1);
  const har::TrainProtocol p;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> curve(301);
    for (auto& v : curve) v = u(rng);
    ScriptedLearner l{[&](std::size_t e) { return curve[e]; }};
    const auto out = har::run_protocol(l, p);
    EXPECT_GE(out.epochs_run(), 40u);
    EXPECT_LE(out.epochs_run(), 300u);
  }
}

TEST(Protocol, NonFiniteLossMarksRunDiverged) {
  struct Exploding : ScriptedLearner {
    double train_epoch() { return ++epoch == 3 ? std::nan("") : 1.0; }
  } l;
  l.curve = [](std::size_t e) { return static_cast<double>(e); };
  const auto out = har::run_protocol(l, har::TrainProtocol{});
  EXPECT_EQ(out.status, har::RunStatus::diverged);
  EXPECT_EQ(out.history.size(), 2u);
}

// -------------------------------------------------------------- trainer

har::DatasetSplits small_synth(std::size_t samples = 12000, std::uint64_t seed = 3) {
  har::SynthSpec s;
  s.samples = samples;
  s.seed = seed;
  return har::synthesize(s);
}

har::TrainOptions<double> quick(std::size_t epochs) {
  har::TrainOptions<double> o;
  o.protocol.min_epochs = epochs;
  o.protocol.max_epochs = epochs;
  o.protocol.patience = 1;
  o.seed = 11;
  return o;
}

TEST(Trainer, DeterministicHistory) {
  const auto raw = small_synth();
  for (Family f : {Family::dnn, Family::lstm_s}) {
    const auto data = har::prepare_data<double>(raw, f);
    auto h = har::default_hyperparameters(f);
    if (f == Family::lstm_s) h.unroll = 16;
    const auto a = har::train_model(data, h, quick(2));
    const auto b = har::train_model(data, h, quick(2));
    ASSERT_EQ(a.status, har::RunStatus::ok) << a.message;
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t e = 0; e < a.history.size(); ++e) {
      EXPECT_EQ(a.history[e].train_loss, b.history[e].train_loss);
      EXPECT_EQ(a.history[e].validation_score, b.history[e].validation_score);
    }
    EXPECT_EQ(a.test.mean_f1, b.test.mean_f1);
  }
}

TEST(Trainer, MaxInNormHoldsAfterEveryStep) {
  const auto raw = small_synth();
  for (Family f : {Family::dnn, Family::cnn, Family::lstm_f}) {
    const auto data = har::prepare_data<double>(raw, f);
    auto h = har::default_hyperparameters(f);
    h.max_in_norm = 0.5;
    h.learning_rate = 0.2;
    auto o = quick(2);
    std::size_t steps = 0;
    double worst = 0;
    o.after_step = [&](const har::ParameterSet<double>& p) {
      ++steps;
      worst = std::max(worst, har::max_incoming_norm(p));
    };
    const auto r = har::train_model(data, h, o);
    ASSERT_EQ(r.status, har::RunStatus::ok) << r.message;
    EXPECT_GT(steps, 0u);
    EXPECT_LE(worst, 0.5 + 1e-12) << har::to_string(f);
  }
}

TEST(Trainer, ZeroCarryClearsEveryStreamState) {
  const auto raw = small_synth();
  const auto data = har::prepare_data<double>(raw, Family::lstm_s);
  auto h = har::default_hyperparameters(Family::lstm_s);
  h.p_carry = 0.0;
  h.unroll = 8;
  har::Rng init(1);
  har::LstmModel<double> m(data.channels, data.classes, 1, 8, har::Direction::forward, init);
  har::StreamLearner<double> learner(std::move(m), data, h, quick(1));
  std::size_t checked = 0, nonzero = 0;
  learner.on_stream_start = [&](std::size_t, const har::LstmState<double>& s) {
    ++checked;
    nonzero += s.is_zero() ? 0 : 1;
  };
  learner.train_epoch();
  EXPECT_EQ(checked, learner.batcher().batches_per_epoch() * har::kSequenceStreams);
  EXPECT_EQ(nonzero, 0u);

  // With p_carry = 1 the states are kept after the first batch.
  h.p_carry = 1.0;
  har::LstmModel<double> m2(data.channels, data.classes, 1, 8, har::Direction::forward, init);
  har::StreamLearner<double> carried(std::move(m2), data, h, quick(1));
  std::size_t calls = 0, zero_later = 0;
  carried.on_stream_start = [&](std::size_t, const har::LstmState<double>& s) {
    if (++calls > har::kSequenceStreams && s.is_zero()) ++zero_later;
  };
  carried.train_epoch();
  EXPECT_EQ(zero_later, 0u);
}

TEST(Trainer, UnbuildableConfigurationsAreInvalid) {
  const auto raw = small_synth();
  {
    const auto data = har::prepare_data<double>(raw, Family::cnn);
    auto h = har::default_hyperparameters(Family::cnn);
    h.conv_layers = 3;
    h.kernel_width = {9, 9, 9};
    h.filters = {4, 4, 4};
    const auto r = har::train_model(data, h, quick(1));
    EXPECT_EQ(r.status, har::RunStatus::invalid);
    EXPECT_NE(r.message.find("cnn"), std::string::npos);
    EXPECT_EQ(r.score(), 0.0);
  }
  {
    const auto data = har::prepare_data<double>(raw, Family::lstm_f);
    auto h = har::default_hyperparameters(Family::lstm_f);
    h.unroll = data.train_frames.size() + 1;
    EXPECT_EQ(har::train_model(data, h, quick(1)).status, har::RunStatus::invalid);
  }
}

TEST(Trainer, SampleModelsReportFrameLevelScores) {
  const auto raw = small_synth();
  const auto data = har::prepare_data<double>(raw, Family::blstm_s);
  auto h = har::default_hyperparameters(Family::blstm_s);
  h.units = 8;
  h.unroll = 32;
  auto o = quick(1);
  o.keep_checkpoint = true;
  const auto r = har::train_model(data, h, o);
  ASSERT_EQ(r.status, har::RunStatus::ok) << r.message;
  ASSERT_TRUE(r.test.frame_mean_f1.has_value());
  EXPECT_GE(*r.test.frame_mean_f1, 0.0);
  EXPECT_LE(*r.test.frame_mean_f1, 1.0);
  EXPECT_EQ(r.checkpoint.at("format"), har::kCheckpointFormat);
}

TEST(Trainer, DnnLearnsSyntheticData) {
  const auto raw = small_synth(20000);
  const auto data = har::prepare_data<double>(raw, Family::dnn);
  const auto r = har::train_model(data, har::default_hyperparameters(Family::dnn), quick(5));
  ASSERT_EQ(r.status, har::RunStatus::ok) << r.message;
  EXPECT_GE(r.best_validation, 0.9);
  EXPECT_GE(r.test.mean_f1, 0.85);
}

TEST(Trainer, FrameVotesFollowSlidingWindows) {
  har::SequenceDataset<double> d(1, 2);
  std::vector<double> v(10, 0.0);
  std::vector<std::size_t> l = {0, 0, 0, 0, 1, 1, 1, 1, 1, 1};
  d.append(v, l);
  std::vector<std::size_t> pred = {0, 0, 1, 1, 1, 1, 1, 1, 1, 1};
  const auto cm = har::detail::frame_votes(d, pred, 4, 2);
  // Windows start at 0, 2, 4, 6. Ties go to the label seen last, so the
  // truths are 0, 1, 1, 1 and the votes 1, 1, 1, 1.
  EXPECT_EQ(cm.total(), 4u);
  EXPECT_EQ(cm.count(0, 1), 1u);
  EXPECT_EQ(cm.count(1, 1), 3u);
}

}  // namespace
