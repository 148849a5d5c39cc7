// SPDX-License-Identifier: Apache-2.0
//
// Subcommands of the harlab tool. Each command takes a fully resolved
// option struct and writes plain files next to a manifest.json holding every
// resolved setting. Failures surface as exceptions, which run_guarded maps
// onto process exit codes.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "har/data/cache.hpp"
#include "har/data/datasets.hpp"
#include "har/data/loaders.hpp"
#include "har/data/synth.hpp"
#include "har/errors.hpp"
#include "har/fanova/analysis.hpp"
#include "har/hypersearch/search.hpp"
#include "har/hypersearch/space.hpp"
#include "har/models/checkpoint.hpp"
#include "har/training/trainer.hpp"

namespace har::cli {

inline constexpr const char* kToolName = "harlab";
inline constexpr const char* kToolVersion = "1.0.0";

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericError = 3 };

namespace fs = std::filesystem;

// ------------------------------------------------------------------ helpers

inline void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write " + file.string());
  out << text;
  if (!out) throw DataError("write failed for " + file.string());
}

inline void write_json(const fs::path& file, const nlohmann::json& j) {
  write_text(file, j.dump(2) + "\n");
}

inline nlohmann::json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot read " + file.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(file.string() + ": " + e.what());
  }
}

inline nlohmann::json manifest(const std::string& command, const nlohmann::json& config,
                               std::uint64_t seed, const std::vector<fs::path>& artifacts) {
  nlohmann::json j;
  j["tool"] = kToolName;
  j["version"] = kToolVersion;
  j["subcommand"] = command;
  j["config"] = config;
  j["seed"] = seed;
  auto& a = j["artifacts"] = nlohmann::json::array();
  for (const auto& p : artifacts) a.push_back(p.string());
  return j;
}

inline std::string fixed(double v, int digits = 4) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(digits) << v;
  return o.str();
}

// ------------------------------------------------------------ data sources

/// Dataset origin. A cache file wins over a raw directory; synthetic data
/// is generated when neither is given.
struct DataSource {
  std::string dataset = "synth";  // opp | pamap2 | dg | synth
  std::string cache;              // takes precedence when set
  std::string root;               // raw data directory for real datasets
  SynthSpec synth;

  nlohmann::json to_json() const {
    nlohmann::json j{{"dataset", dataset}, {"cache", cache}, {"root", root}};
    if (dataset == "synth" && cache.empty()) {
      j["synth"] = {{"classes", synth.classes},   {"channels", synth.channels},
                    {"rate", synth.rate},         {"samples", synth.samples},
                    {"noise", synth.noise},       {"seed", synth.seed},
                    {"min_segment", synth.min_segment},
                    {"max_segment", synth.max_segment}};
    }
    return j;
  }
};

inline void check_dataset_id(const std::string& id) {
  if (id != "opp" && id != "pamap2" && id != "dg" && id != "synth") {
    throw ConfigError("unknown dataset '" + id + "' (expected opp, pamap2, dg or synth)");
  }
}

inline DatasetSplits load_raw(const std::string& id, const fs::path& root) {
  if (id == "opp") return load_opportunity(root);
  if (id == "pamap2") return load_pamap2(root);
  if (id == "dg") return load_daphnet(root);
  throw ConfigError("dataset '" + id + "' has no raw loader");
}

inline DatasetSplits load_source(const DataSource& s) {
  check_dataset_id(s.dataset);
  if (!s.cache.empty()) {
    DatasetSplits d = load_cache(s.cache);
    if (d.id != s.dataset) {
      throw DataError("cache " + s.cache + " holds dataset '" + d.id + "', not '" + s.dataset + "'");
    }
    return d;
  }
  if (s.dataset == "synth") return synthesize(s.synth);
  if (s.root.empty()) throw ConfigError("dataset " + s.dataset + " needs --root or --cache");
  return load_raw(s.dataset, s.root);
}

/// Scoring options: the null class can be left out of both F1 summaries.
inline F1Options f1_options(const DatasetSplits& d, bool literal, bool include_null) {
  F1Options o;
  o.literal = literal;
  if (!include_null && d.null_class >= 0) o.excluded = static_cast<std::size_t>(d.null_class);
  return o;
}

// ---------------------------------------------------------------- summaries

struct SplitSummary {
  std::string split;
  std::size_t recordings = 0;
  std::size_t samples = 0;
  std::size_t frames = 0;
  std::vector<std::size_t> frame_classes;
};

inline std::vector<SplitSummary> summarize_splits(const DatasetSplits& d) {
  std::vector<SplitSummary> out;
  d.for_each_split([&](const char* name, const std::vector<RawRecording>& recs) {
    SplitSummary s;
    s.split = name;
    s.recordings = recs.size();
    s.samples = total_samples(recs);
    s.frame_classes.assign(d.classes(), 0);
    for (const auto& r : recs) {
      const auto f = sliding_window<double>(r, d.classes(), d.window, d.step);
      s.frames += f.size();
      for (std::size_t l : f.labels()) ++s.frame_classes[l];
    }
    out.push_back(std::move(s));
  });
  return out;
}

inline std::string summary_table(const DatasetSplits& d, const std::vector<SplitSummary>& s) {
  std::ostringstream o;
  o << "# dataset\t" << d.id << "\n# channels\t" << d.channels << "\n# classes\t"
    << d.classes() << "\n# rate_hz\t" << d.rate << "\n# window\t" << d.window
    << "\n# step\t" << d.step << "\n";
  o << "split\trecordings\tsamples\tframes";
  for (const auto& c : d.class_names) o << "\tframes[" << c << "]";
  o << "\n";
  for (const auto& x : s) {
    o << x.split << "\t" << x.recordings << "\t" << x.samples << "\t" << x.frames;
    for (auto n : x.frame_classes) o << "\t" << n;
    o << "\n";
  }
  return o.str();
}

/// Training-split totals against the published sizes (within 5%).
inline nlohmann::json reference_check(const DatasetSplits& d, const SplitSummary& train) {
  const auto ref = reference_train_size(d.id);
  auto within = [](double v, double r) { return std::abs(v - r) <= 0.05 * r; };
  return {{"reference_samples", ref.samples},
          {"reference_frames", ref.frames},
          {"samples", train.samples},
          {"frames", train.frames},
          {"samples_within_5pct", within(static_cast<double>(train.samples), ref.samples)},
          {"frames_within_5pct", within(static_cast<double>(train.frames), ref.frames)}};
}

// ------------------------------------------------------------------ ingest

struct IngestOptions {
  std::string dataset;
  std::string root;
  std::string out;
};

inline int cmd_ingest(const IngestOptions& o, std::ostream& log) {
  check_dataset_id(o.dataset);
  if (o.dataset == "synth") throw ConfigError("ingest reads real datasets; use synth instead");
  const DatasetSplits d = load_raw(o.dataset, o.root);
  const fs::path out(o.out);
  const fs::path cache = out / (o.dataset + ".harcache");
  const fs::path table = out / (o.dataset + "_summary.tsv");
  fs::create_directories(out);
  save_cache(cache, d);
  const auto s = summarize_splits(d);
  const std::string text = summary_table(d, s);
  write_text(table, text);
  const nlohmann::json check = reference_check(d, s.front());
  write_json(out / (o.dataset + "_reference.json"), check);
  write_json(out / "manifest.json",
             manifest("ingest", {{"dataset", o.dataset}, {"root", o.root}, {"out", o.out}}, 0,
                      {cache, table, out / (o.dataset + "_reference.json")}));
  log << text;
  log << "reference check: " << check.dump() << "\n";
  return kOk;
}

// ------------------------------------------------------------------- synth

struct SynthOptions {
  SynthSpec spec;
  std::string out;
};

inline int cmd_synth(const SynthOptions& o, std::ostream& log) {
  const DatasetSplits d = synthesize(o.spec);
  const fs::path out(o.out);
  const fs::path cache = out / "synth.harcache";
  const fs::path table = out / "synth_summary.tsv";
  fs::create_directories(out);
  save_cache(cache, d);
  const std::string text = summary_table(d, summarize_splits(d));
  write_text(table, text);
  DataSource src;
  src.synth = o.spec;
  write_json(out / "manifest.json",
             manifest("synth", {{"source", src.to_json()}, {"out", o.out}}, o.spec.seed,
                      {cache, table}));
  log << text;
  return kOk;
}

// ------------------------------------------------------------------- train

struct ProtocolOptions {
  std::size_t min_epochs = 30;
  std::size_t max_epochs = 300;
  std::size_t patience = 10;
  std::optional<double> time_budget_seconds;

  TrainProtocol protocol() const { return {min_epochs, max_epochs, patience}; }
  nlohmann::json to_json() const {
    nlohmann::json j{{"min_epochs", min_epochs}, {"max_epochs", max_epochs},
                     {"patience", patience}};
    j["time_budget_seconds"] =
        time_budget_seconds ? nlohmann::json(*time_budget_seconds) : nlohmann::json();
    return j;
  }
};

struct TrainCommandOptions {
  std::string family;
  DataSource source;
  std::string config_file;                // optional JSON hyperparameters
  std::vector<std::string> overrides;     // key=value
  std::uint64_t seed = 1;
  std::string out;
  ProtocolOptions protocol;
  bool literal_eq = false;
  bool include_null = true;
};

/// Parses "key=value"; the value is read as JSON when possible, else as a
/// string.
inline std::pair<std::string, nlohmann::json> parse_override(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("expected key=value, got '" + s + "'");
  const std::string key = s.substr(0, eq), text = s.substr(eq + 1);
  try {
    return {key, nlohmann::json::parse(text)};
  } catch (const nlohmann::json::exception&) {
    return {key, nlohmann::json(text)};
  }
}

/// Defaults, then the config file, then command-line overrides.
inline Hyperparameters resolve_hyperparameters(const TrainCommandOptions& o) {
  const Family f = parse_family(o.family);
  nlohmann::json merged = to_json(default_hyperparameters(f));
  if (!o.config_file.empty()) {
    const auto file = read_json(o.config_file);
    if (!file.is_object()) throw ConfigError(o.config_file + ": expected a JSON object");
    merged.update(file);
  }
  for (const auto& s : o.overrides) {
    auto [k, v] = parse_override(s);
    static const std::set<std::string> known = {
        "lr", "lr_decay", "unroll", "momentum", "max_in_norm", "p_carry", "layers", "units",
        "conv_layers", "kw1", "kw2", "kw3", "nf1", "nf2", "nf3"};
    if (!known.count(k)) throw ConfigError("unknown hyperparameter '" + k + "'");
    merged[k] = v;
  }
  merged["family"] = to_string(f);
  return hyperparameters_from_json(merged, default_hyperparameters(f));
}

inline std::string history_table(const std::vector<EpochRecord>& h) {
  std::ostringstream o;
  o << "epoch\ttrain_loss\tvalidation_mean_f1\n" << std::setprecision(17);
  for (const auto& e : h) o << e.epoch << "\t" << e.train_loss << "\t" << e.validation_score << "\n";
  return o.str();
}

inline std::string timing_table(const std::vector<EpochRecord>& h) {
  std::ostringstream o;
  o << "epoch\twall_seconds\n";
  for (const auto& e : h) o << e.epoch << "\t" << fixed(e.seconds, 6) << "\n";
  return o.str();
}

inline nlohmann::json result_json(const TrainResult& r) {
  nlohmann::json j;
  j["status"] = to_string(r.status);
  j["message"] = r.message;
  j["config"] = to_json(r.hyper);
  j["epochs"] = r.history.size();
  j["best_epoch"] = r.best_epoch;
  j["validation_mean_f1"] = r.best_validation;
  j["test_mean_f1"] = r.test.mean_f1;
  j["test_weighted_f1"] = r.test.weighted_f1;
  j["test_frame_mean_f1"] =
      r.test.frame_mean_f1 ? nlohmann::json(*r.test.frame_mean_f1) : nlohmann::json();
  j["test_frame_weighted_f1"] =
      r.test.frame_weighted_f1 ? nlohmann::json(*r.test.frame_weighted_f1) : nlohmann::json();
  return j;
}

inline int cmd_train(const TrainCommandOptions& o, std::ostream& log) {
  const Hyperparameters h = resolve_hyperparameters(o);
  const DatasetSplits raw = load_source(o.source);
  const auto data = prepare_data<double>(raw, h.family);
  TrainOptions<double> t;
  t.protocol = o.protocol.protocol();
  t.protocol.validate();
  t.f1 = f1_options(raw, o.literal_eq, o.include_null);
  t.seed = o.seed;
  t.time_budget_seconds = o.protocol.time_budget_seconds;
  t.keep_checkpoint = true;
  const TrainResult r = train_model(data, h, t);

  const fs::path out(o.out);
  fs::create_directories(out);
  std::vector<fs::path> files = {out / "history.tsv", out / "timing.tsv", out / "result.json"};
  write_text(files[0], history_table(r.history));
  write_text(files[1], timing_table(r.history));
  write_json(files[2], result_json(r));
  if (!r.checkpoint.is_null()) {
    files.push_back(out / "checkpoint.json");
    write_text(files.back(), r.checkpoint.dump() + "\n");
  }
  nlohmann::json config{{"family", to_string(h.family)},
                        {"hyperparameters", to_json(h)},
                        {"source", o.source.to_json()},
                        {"config_file", o.config_file},
                        {"overrides", o.overrides},
                        {"protocol", o.protocol.to_json()},
                        {"literal_eq", o.literal_eq},
                        {"include_null", o.include_null},
                        {"out", o.out}};
  write_json(out / "manifest.json", manifest("train", config, o.seed, files));

  log << "status " << to_string(r.status);
  if (!r.message.empty()) log << " (" << r.message << ")";
  log << "\nepochs " << r.history.size() << ", best epoch " << r.best_epoch
      << ", validation F_m " << fixed(r.best_validation) << "\n";
  log << "test F_m " << fixed(r.test.mean_f1) << "  F_w " << fixed(r.test.weighted_f1);
  if (r.test.frame_mean_f1) {
    log << "  (per frame: F_m " << fixed(*r.test.frame_mean_f1) << "  F_w "
        << fixed(*r.test.frame_weighted_f1) << ")";
  }
  log << "\n";
  switch (r.status) {
    case RunStatus::ok:
    case RunStatus::timeout: return kOk;
    case RunStatus::diverged: return kNumericError;
    case RunStatus::invalid: return kUsage;
  }
  return kOk;
}

// ------------------------------------------------------------------ search

struct SearchCommandOptions {
  std::string family;
  DataSource source;
  std::optional<std::size_t> n;
  bool full_scale = false;
  std::size_t parallelism = 1;
  std::uint64_t seed = 1;
  std::string out;  // record file
  ProtocolOptions protocol;
  bool literal_eq = false;
  bool include_null = true;
};

inline std::size_t search_count(const SearchCommandOptions& o, Family f) {
  if (o.n) return *o.n;
  return o.full_scale ? full_scale_count(f) : kDeskScaleCount;
}

inline int cmd_search(const SearchCommandOptions& o, std::ostream& log) {
  const Family f = parse_family(o.family);
  const SearchSpace space = SearchSpace::table(f);
  const DatasetSplits raw = load_source(o.source);
  const auto data = prepare_data<double>(raw, f);
  TrainOptions<double> t;
  t.protocol = o.protocol.protocol();
  t.protocol.validate();
  t.f1 = f1_options(raw, o.literal_eq, o.include_null);
  t.time_budget_seconds = o.protocol.time_budget_seconds;

  SearchOptions so;
  so.n = search_count(o, f);
  so.parallelism = o.parallelism;
  so.master_seed = o.seed;
  if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
  RecordSink sink(o.out);
  if (sink.recovered_partial_line()) log << "dropped an interrupted final record line\n";

  nlohmann::json config{{"family", to_string(f)},
                        {"source", o.source.to_json()},
                        {"n", so.n},
                        {"full_scale", o.full_scale},
                        {"parallelism", o.parallelism},
                        {"protocol", o.protocol.to_json()},
                        {"literal_eq", o.literal_eq},
                        {"include_null", o.include_null},
                        {"out", o.out}};
  write_json(o.out + ".manifest.json", manifest("search", config, o.seed, {o.out}));

  const auto rep = run_search(space, so, sink, training_experiment(space, data, t));
  log << "planned " << rep.planned << ", already recorded " << rep.skipped << ", written "
      << rep.written << " -> " << o.out << "\n";
  return kOk;
}

// ----------------------------------------------------------------- analyze

struct AnalyzeOptions {
  std::vector<std::string> records;
  std::string out;  // JSON file
  std::size_t trees = 30;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

inline std::vector<nlohmann::json> load_all_records(const std::vector<std::string>& files) {
  std::vector<nlohmann::json> all;
  std::set<std::string> keys;
  for (const auto& f : files) {
    for (auto& r : read_records(f)) {
      const std::string k = r.value("key", "");
      if (keys.insert(k).second) all.push_back(std::move(r));
    }
  }
  if (all.empty()) throw DataError("no experiment records found");
  return all;
}

inline int cmd_analyze(const AnalyzeOptions& o, std::ostream& log) {
  const auto all = load_all_records(o.records);
  std::map<std::pair<std::string, std::string>, std::vector<nlohmann::json>> groups;
  for (const auto& r : all) groups[{r.value("dataset", "?"), r.at("family").get<std::string>()}].push_back(r);

  fanova::ForestOptions fo;
  fo.trees = o.trees;
  fo.seed = o.seed;
  fo.threads = o.threads;
  nlohmann::json result = nlohmann::json::array();
  const fs::path out(o.out);
  std::vector<fs::path> files = {out};
  for (const auto& [key, recs] : groups) {
    const auto& [dataset, family] = key;
    const SearchSpace space = SearchSpace::table(parse_family(family));
    if (recs.size() < fo.min_records) {
      log << dataset << "/" << family << ": " << recs.size() << " records, need "
          << fo.min_records << "; skipped\n";
      continue;
    }
    auto j = fanova::analyze_records(space, recs, fo);
    j["dataset"] = dataset;
    // Plot data: one point per category plus the cross-category remainder.
    std::ostringstream dat;
    dat << "# x: 1 learning, 2 regularisation, 3 architecture, 4 interactions\n";
    dat << "1 " << j["categories"]["learning"].get<double>() << "\n";
    dat << "2 " << j["categories"]["regularisation"].get<double>() << "\n";
    dat << "3 " << j["categories"]["architecture"].get<double>() << "\n";
    dat << "4 " << j["interactions"].get<double>() << "\n";
    const fs::path plot = out.parent_path() /
                          (out.stem().string() + "_" + dataset + "_" + family + "_categories.dat");
    write_text(plot, dat.str());
    files.push_back(plot);
    log << dataset << "/" << family << " (" << recs.size() << " records): learning "
        << fixed(j["categories"]["learning"].get<double>(), 3) << ", regularisation "
        << fixed(j["categories"]["regularisation"].get<double>(), 3) << ", architecture "
        << fixed(j["categories"]["architecture"].get<double>(), 3) << ", interactions "
        << fixed(j["interactions"].get<double>(), 3) << "\n";
    result.push_back(std::move(j));
  }
  if (result.empty()) throw DataError("no family has enough records for the analysis");
  write_json(out, result);
  write_json(out.string() + ".manifest.json",
             manifest("analyze",
                      {{"records", o.records}, {"out", o.out}, {"trees", o.trees},
                       {"threads", o.threads}, {"min_leaf", fo.min_leaf}},
                      o.seed, files));
  return kOk;
}

// ------------------------------------------------------------------ report

struct ReportOptions {
  std::vector<std::string> records;
  std::string out;  // directory
};

inline int cmd_report(const ReportOptions& o, std::ostream& log) {
  const auto all = load_all_records(o.records);
  std::map<std::string, std::vector<nlohmann::json>> by_dataset;
  for (const auto& r : all) by_dataset[r.value("dataset", "?")].push_back(r);
  const fs::path out(o.out);
  fs::create_directories(out);
  std::vector<fs::path> files = {out / "best_results.tsv"};
  std::ostringstream table;
  table << "dataset\tfamily\trecords\tok\tF_m\tF_w\tpeak\tmedian\tdelta_from_median\n";
  for (const auto& [dataset, recs] : by_dataset) {
    for (const auto& s : summarize(recs)) {
      table << dataset << "\t" << s.family << "\t" << s.records << "\t" << s.ok << "\t"
            << fixed(s.best_mean_f1) << "\t" << fixed(s.best_weighted_f1) << "\t"
            << fixed(s.peak) << "\t" << fixed(s.median) << "\t" << fixed(s.delta) << "\n";
      std::ostringstream cdf;
      cdf << std::setprecision(17);
      for (const auto& [x, y] : s.cdf) cdf << x << " " << y << "\n";
      files.push_back(out / ("cdf_" + dataset + "_" + s.family + ".dat"));
      write_text(files.back(), cdf.str());
    }
  }
  write_text(files.front(), table.str());
  write_json(out / "manifest.json",
             manifest("report", {{"records", o.records}, {"out", o.out}}, 0, files));
  log << table.str();
  return kOk;
}

// ---------------------------------------------------------------- dispatch

/// Runs a command and maps failures onto exit codes, printing the reason.
template <typename Fn>
int run_guarded(Fn&& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const FrameTooShort& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumericError;
  } catch (const Error& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
}

}  // namespace har::cli
