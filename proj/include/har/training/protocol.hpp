// SPDX-License-Identifier: Apache-2.0
//
// Epoch loop with validation-based model selection and early stopping.
//
// Training runs for at least `min_epochs` and at most `max_epochs`. The
// patience window only starts counting once the minimum is reached: after
// epoch e the run stops if e ≥ min_epochs and the last strict improvement
// happened at least `patience` epochs before max(best epoch, min_epochs).
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "har/errors.hpp"

namespace har {

struct TrainProtocol {
  std::size_t min_epochs = 30;
  std::size_t max_epochs = 300;
  std::size_t patience = 10;

  void validate() const {
    if (min_epochs < 1 || max_epochs < min_epochs) {
      throw ConfigError("protocol: need 1 <= min_epochs <= max_epochs");
    }
  }
};

class EarlyStopper {
 public:
  explicit EarlyStopper(TrainProtocol p) : p_(p) { p_.validate(); }

  /// Records the validation score of `epoch` (1-based, consecutive).
  /// Returns true when this score is a new strict best.
  bool observe(std::size_t epoch, double score) {
    epoch_ = epoch;
    if (!best_epoch_ || score > best_score_) {
      best_epoch_ = epoch;
      best_score_ = score;
      return true;
    }
    return false;
  }

  bool should_stop() const {
    if (epoch_ >= p_.max_epochs) return true;
    if (epoch_ < p_.min_epochs || !best_epoch_) return false;
    const std::size_t anchor = std::max(*best_epoch_, p_.min_epochs);
    return epoch_ - anchor >= p_.patience;
  }

  std::size_t best_epoch() const { return best_epoch_.value_or(0); }
  double best_score() const { return best_score_; }

 private:
  TrainProtocol p_;
  std::size_t epoch_ = 0;
  std::optional<std::size_t> best_epoch_;
  double best_score_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  double validation_score = 0;
  double seconds = 0;
};

enum class RunStatus { ok, diverged, invalid, timeout };

inline std::string to_string(RunStatus s) {
  switch (s) {
    case RunStatus::ok: return "ok";
    case RunStatus::diverged: return "diverged";
    case RunStatus::invalid: return "invalid";
    case RunStatus::timeout: return "timeout";
  }
  return "?";
}

struct ProtocolOutcome {
  RunStatus status = RunStatus::ok;
  std::string message;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_score = 0;
  std::size_t epochs_run() const noexcept { return history.size(); }
};

/// Drives a learner through the protocol. The learner provides
///   double train_epoch()   mean training loss of one epoch
///   double validate()      validation score (higher is better)
///   void   remember_best() store the current parameters as the best
///   void   restore_best()  load the stored parameters back
/// A non-finite loss or score, or a NumericError, ends the run as
/// diverged; the best parameters seen so far are still restored.
template <typename Learner>
ProtocolOutcome run_protocol(Learner& learner, const TrainProtocol& protocol,
                             std::optional<double> time_budget_seconds = std::nullopt) {
  EarlyStopper stopper(protocol);
  ProtocolOutcome out;
  using clock = std::chrono::steady_clock;
  const auto started = clock::now();
  for (std::size_t epoch = 1;; ++epoch) {
    const auto t0 = clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    try {
      rec.train_loss = learner.train_epoch();
      if (!std::isfinite(rec.train_loss)) {
        throw NumericError("non-finite training loss in epoch " + std::to_string(epoch));
      }
      rec.validation_score = learner.validate();
      if (!std::isfinite(rec.validation_score)) {
        throw NumericError("non-finite validation score in epoch " + std::to_string(epoch));
      }
    } catch (const NumericError& e) {
      out.status = RunStatus::diverged;
      out.message = e.what();
      break;
    }
    rec.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    out.history.push_back(rec);
    if (stopper.observe(epoch, rec.validation_score)) learner.remember_best();
    if (stopper.should_stop()) break;
    if (time_budget_seconds &&
        std::chrono::duration<double>(clock::now() - started).count() >
            *time_budget_seconds) {
      out.status = RunStatus::timeout;
      out.message = "time budget exhausted after epoch " + std::to_string(epoch);
      break;
    }
  }
  out.best_epoch = stopper.best_epoch();
  out.best_score = stopper.best_score();
  if (out.best_epoch > 0) learner.restore_best();
  return out;
}

}  // namespace har
