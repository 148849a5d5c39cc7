// SPDX-License-Identifier: Apache-2.0
//
// Randomised search runner and its append-only record file.
//
// Records are stored one JSON object per line after a schema header line.
// Each record is keyed by "family:config-hash:seed". Reopening a file keeps
// the complete records, cuts off a trailing partial line left by an
// interrupted write, and lets the runner skip every key already present.
//
// Experiments run on worker threads and hand finished records to the
// calling thread over a bounded queue; only the calling thread writes.
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "har/errors.hpp"
#include "har/hypersearch/space.hpp"
#include "har/metrics.hpp"
#include "har/training/trainer.hpp"

namespace har {

inline constexpr const char* kRecordSchema = "har.search-records";
inline constexpr int kRecordSchemaVersion = 1;

/// Field names of a record, listed in the header line.
inline const std::vector<std::string>& record_fields() {
  static const std::vector<std::string> f = {
      "key",         "family",        "dataset",         "index",
      "seed",        "config",        "point",           "status",
      "message",     "history",       "best_epoch",      "validation_f1",
      "test_mean_f1", "test_weighted_f1", "test_frame_mean_f1",
      "test_frame_weighted_f1", "score", "wall_seconds"};
  return f;
}

inline nlohmann::json record_header() {
  return {{"schema", kRecordSchema}, {"version", kRecordSchemaVersion},
          {"fields", record_fields()}};
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream o;
  o << std::hex;
  o.width(16);
  o.fill('0');
  o << v;
  return o.str();
}

inline std::string experiment_key(const Hyperparameters& h, std::uint64_t seed) {
  return to_string(h.family) + ":" + hex64(fnv1a(to_json(h).dump())) + ":" + hex64(seed);
}

/// Seed of experiment `index` under a master seed.
inline std::uint64_t experiment_seed(std::uint64_t master, std::size_t index) {
  return mix_seed(master, index);
}

/// Reads a record file. A final line without its newline, or one that is
/// not valid JSON, counts as an interrupted write and is reported through
/// `valid_bytes` (the length of the intact prefix).
inline std::vector<nlohmann::json> read_records(const std::string& path,
                                                std::uintmax_t* valid_bytes = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("records: cannot read " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<nlohmann::json> out;
  std::size_t pos = 0, line_no = 0;
  std::uintmax_t good = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) break;  // partial tail
    const std::string line = text.substr(pos, nl - pos);
    ++line_no;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      const bool last = text.find('\n', nl + 1) == std::string::npos &&
                        nl + 1 == text.size();
      if (last) break;
      throw DataError("records: " + path + ":" + std::to_string(line_no) + ": malformed line");
    }
    if (line_no == 1) {
      if (j.value("schema", "") != kRecordSchema) {
        throw DataError("records: " + path + " lacks the schema header");
      }
      if (j.value("version", 0) != kRecordSchemaVersion) {
        throw DataError("records: " + path + " has unsupported schema version");
      }
    } else {
      out.push_back(std::move(j));
    }
    pos = nl + 1;
    good = pos;
  }
  if (line_no == 0 && !text.empty() && valid_bytes == nullptr) {
    throw DataError("records: " + path + " lacks the schema header");
  }
  if (valid_bytes) *valid_bytes = good;
  return out;
}

/// Append-only record file with a key index.
class RecordSink {
 public:
  explicit RecordSink(std::string path) : path_(std::move(path)) {
    namespace fs = std::filesystem;
    std::uintmax_t good = 0;
    const bool exists = fs::exists(path_) && fs::file_size(path_) > 0;
    if (exists) {
      auto recs = read_records(path_, &good);
      if (good == 0) throw DataError("records: " + path_ + " lacks the schema header");
      if (good < fs::file_size(path_)) {
        fs::resize_file(path_, good);
        truncated_ = true;
      }
      for (auto& r : recs) {
        const std::string k = r.value("key", "");
        if (k.empty() || keys_.count(k)) continue;
        keys_.insert(k);
        records_.push_back(std::move(r));
      }
    }
    out_.open(path_, std::ios::binary | std::ios::app);
    if (!out_) throw DataError("records: cannot open " + path_ + " for writing");
    if (!exists) write_line(record_header().dump());
  }

  const std::string& path() const noexcept { return path_; }
  bool contains(const std::string& key) const { return keys_.count(key) > 0; }
  std::size_t size() const noexcept { return records_.size(); }
  const std::vector<nlohmann::json>& records() const noexcept { return records_; }
  /// True when opening cut off an interrupted final line.
  bool recovered_partial_line() const noexcept { return truncated_; }

  /// Appends one record. Returns false if its key is already stored.
  bool append(const nlohmann::json& record) {
    const std::string k = record.at("key").get<std::string>();
    if (contains(k)) return false;
    write_line(record.dump());
    keys_.insert(k);
    records_.push_back(record);
    return true;
  }

 private:
  void write_line(const std::string& s) {
    out_ << s << '\n';
    out_.flush();
    if (!out_) throw DataError("records: write to " + path_ + " failed");
  }

  std::string path_;
  std::ofstream out_;
  std::set<std::string> keys_;
  std::vector<nlohmann::json> records_;
  bool truncated_ = false;
};

struct ExperimentTask {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  Hyperparameters hyper;
  std::vector<double> point;
  std::string key;
};

struct SearchOptions {
  std::size_t n = kDeskScaleCount;
  std::size_t parallelism = 1;
  std::uint64_t master_seed = 1;
};

/// Lists the n experiments of a search; identical for identical inputs.
inline std::vector<ExperimentTask> plan_search(const SearchSpace& space, std::size_t n,
                                               std::uint64_t master_seed) {
  if (n < 1) throw ConfigError("search: need at least one experiment");
  std::vector<ExperimentTask> tasks;
  for (std::size_t i = 0; i < n; ++i) {
    ExperimentTask t;
    t.index = i;
    t.seed = experiment_seed(master_seed, i);
    std::mt19937_64 rng(t.seed);
    t.point = space.sample_point(rng);
    t.hyper = space.decode(t.point);
    t.key = experiment_key(t.hyper, t.seed);
    tasks.push_back(std::move(t));
  }
  return tasks;
}

/// Builds the record of a finished training run.
inline nlohmann::json make_record(const SearchSpace& space, const ExperimentTask& task,
                                  const std::string& dataset, const TrainResult& r,
                                  double wall_seconds) {
  nlohmann::json j;
  j["key"] = task.key;
  j["family"] = to_string(space.family());
  j["dataset"] = dataset;
  j["index"] = task.index;
  j["seed"] = task.seed;
  j["config"] = to_json(task.hyper);
  j["point"] = space.point_to_json(task.point);
  j["status"] = to_string(r.status);
  j["message"] = r.message;
  auto& hist = j["history"] = nlohmann::json::array();
  for (const auto& e : r.history) {
    hist.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss},
                    {"validation_f1", e.validation_score}});
  }
  j["best_epoch"] = r.best_epoch;
  j["validation_f1"] = r.best_validation;
  j["test_mean_f1"] = r.test.mean_f1;
  j["test_weighted_f1"] = r.test.weighted_f1;
  j["test_frame_mean_f1"] =
      r.test.frame_mean_f1 ? nlohmann::json(*r.test.frame_mean_f1) : nlohmann::json();
  j["test_frame_weighted_f1"] =
      r.test.frame_weighted_f1 ? nlohmann::json(*r.test.frame_weighted_f1) : nlohmann::json();
  j["score"] = r.score();
  j["wall_seconds"] = wall_seconds;
  return j;
}

using ExperimentFn = std::function<nlohmann::json(const ExperimentTask&)>;

/// Experiment function that trains each task on prepared data.
template <typename T>
ExperimentFn training_experiment(const SearchSpace& space, const PreparedData<T>& data,
                                 TrainOptions<T> base) {
  return [space, &data, base](const ExperimentTask& task) {
    auto o = base;
    o.seed = task.seed;
    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult r = train_model(data, task.hyper, o);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return make_record(space, task, data.dataset, r, wall);
  };
}

struct SearchReport {
  std::size_t planned = 0;
  std::size_t skipped = 0;  // already in the sink
  std::size_t written = 0;
};

namespace detail {

/// Fixed-capacity blocking queue.
template <typename V>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(std::max<std::size_t>(1, capacity)) {}

  void push(V v) {
    std::unique_lock lock(m_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
    if (closed_) return;
    items_.push_back(std::move(v));
    not_empty_.notify_one();
  }

  std::optional<V> pop() {
    std::unique_lock lock(m_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    V v = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return v;
  }

  void close() {
    std::lock_guard lock(m_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::deque<V> items_;
  bool closed_ = false;
  std::mutex m_;
  std::condition_variable not_full_, not_empty_;
};

}  // namespace detail

/// Runs every planned experiment whose key is not yet in `sink`, with at
/// most `parallelism` experiments in flight. A failing sink write stops
/// the search after the running experiments finish; records already
/// written stay intact and the error is rethrown.
inline SearchReport run_search(const SearchSpace& space, const SearchOptions& options,
                               RecordSink& sink, const ExperimentFn& experiment) {
  if (options.parallelism < 1) throw ConfigError("search: parallelism must be >= 1");
  SearchReport report;
  std::vector<ExperimentTask> todo;
  for (auto& t : plan_search(space, options.n, options.master_seed)) {
    ++report.planned;
    if (sink.contains(t.key)) {
      ++report.skipped;
    } else {
      todo.push_back(std::move(t));
    }
  }
  if (todo.empty()) return report;

  struct Outcome {
    nlohmann::json record;
    std::exception_ptr error;
  };
  detail::BoundedQueue<Outcome> queue(options.parallelism);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  const std::size_t workers = std::min(options.parallelism, todo.size());
  std::atomic<std::size_t> active{workers};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (!stop) {
        const std::size_t i = next++;
        if (i >= todo.size()) break;
        Outcome o;
        try {
          o.record = experiment(todo[i]);
          if (o.record.value("key", "") != todo[i].key) {
            throw InvalidInput("search: experiment returned a record with the wrong key");
          }
        } catch (...) {
          o.error = std::current_exception();
        }
        queue.push(std::move(o));
      }
      if (--active == 0) queue.close();
    });
  }

  std::exception_ptr failure;
  while (auto o = queue.pop()) {
    if (failure) continue;
    if (o->error) {
      failure = o->error;
      stop = true;
      continue;
    }
    try {
      if (sink.append(o->record)) ++report.written;
    } catch (...) {
      failure = std::current_exception();
      stop = true;
    }
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return report;
}

// ---------------------------------------------------------------- summary

struct FamilySummary {
  std::string family;
  std::size_t records = 0;
  std::size_t ok = 0;
  double peak = 0;
  double median = 0;
  double delta = 0;  // peak - median
  double best_mean_f1 = 0;
  double best_weighted_f1 = 0;
  std::string best_key;
  /// Empirical CDF of the scores: (score, fraction of runs at or below).
  std::vector<std::pair<double, double>> cdf;
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) throw MetricUndefined("median of no values");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Per-family score distribution of a set of records, in family order.
inline std::vector<FamilySummary> summarize(const std::vector<nlohmann::json>& records) {
  if (records.empty()) throw MetricUndefined("summary of no records");
  std::map<std::string, std::vector<const nlohmann::json*>> by_family;
  for (const auto& r : records) by_family[r.at("family").get<std::string>()].push_back(&r);
  std::vector<FamilySummary> out;
  for (Family f : kFamilies) {
    const auto it = by_family.find(to_string(f));
    if (it == by_family.end()) continue;
    FamilySummary s;
    s.family = it->first;
    std::vector<double> scores;
    const nlohmann::json* best = nullptr;
    for (const auto* r : it->second) {
      const double v = r->at("score").get<double>();
      scores.push_back(v);
      if (r->value("status", "") == "ok") ++s.ok;
      if (!best || v > best->at("score").get<double>()) best = r;
    }
    s.records = scores.size();
    s.median = median_of(scores);
    std::sort(scores.begin(), scores.end());
    s.peak = scores.back();
    s.delta = s.peak - s.median;
    s.best_mean_f1 = best->value("test_mean_f1", 0.0);
    s.best_weighted_f1 = best->value("test_weighted_f1", 0.0);
    s.best_key = best->value("key", "");
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (i + 1 < scores.size() && scores[i + 1] == scores[i]) continue;
      s.cdf.emplace_back(scores[i], static_cast<double>(i + 1) /
                                        static_cast<double>(scores.size()));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace har
