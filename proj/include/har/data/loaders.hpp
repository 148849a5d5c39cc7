// SPDX-License-Identifier: Apache-2.0
//
// Readers for the Opportunity, PAMAP2 and Daphnet Gait distributions in
// their published whitespace-separated text formats. Missing readings
// ("NaN") are interpolated within each run before any other step.
//
// Column numbers below are 1-based, as in the datasets' own documentation.
#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "har/data/recording.hpp"
#include "har/errors.hpp"

namespace har {

namespace text {

/// Parses one numeric field; "NaN" (any case) yields a quiet NaN.
inline double parse_field(std::string_view f, const std::string& where) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (ec != std::errc() || ptr != f.data() + f.size()) {
    throw DataError(where + ": cannot parse '" + std::string(f) + "'");
  }
  return v;
}

/// Reads a table whose rows all have `columns` fields. Blank lines are
/// skipped.
inline std::vector<std::vector<double>> read_table(const std::filesystem::path& file,
                                                   std::size_t columns) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open " + file.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::vector<double> row;
    row.reserve(columns);
    std::size_t i = 0;
    const std::string where = file.filename().string() + ":" + std::to_string(number);
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      std::size_t j = i;
      while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
      if (j > i) row.push_back(parse_field(std::string_view(line).substr(i, j - i), where));
      i = j;
    }
    if (row.empty()) continue;
    if (row.size() != columns) {
      throw DataError(where + ": expected " + std::to_string(columns) +
                      " columns, found " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace text

/// Column layout and protocol constants of one distribution.
struct DatasetLayout {
  std::string id;
  std::size_t file_columns = 0;
  std::size_t label_column = 0;               // 1-based
  std::vector<std::size_t> channel_columns;   // 1-based
  std::vector<long> label_codes;              // raw code of each class
  std::vector<std::string> class_names;
  double source_rate = 0;
  double target_rate = 0;
  std::size_t window = 0;
  std::size_t step = 0;
  int null_class = -1;
};

namespace detail {

inline std::vector<std::size_t> column_range(std::size_t first, std::size_t last) {
  std::vector<std::size_t> v;
  for (std::size_t c = first; c <= last; ++c) v.push_back(c);
  return v;
}

inline void append_columns(std::vector<std::size_t>& v, std::size_t first,
                           std::size_t last) {
  const auto r = column_range(first, last);
  v.insert(v.end(), r.begin(), r.end());
}

}  // namespace detail

/// Opportunity: body-worn accelerometers on the upper limbs and the back,
/// the orientation quaternions of the five upper-body IMUs and every
/// channel of both shoe IMUs. Labels come from the mid-level gesture
/// column with Null as class 0.
inline DatasetLayout opportunity_layout() {
  DatasetLayout l;
  l.id = "opp";
  l.file_columns = 250;
  l.label_column = 250;
  using detail::append_columns;
  // Accelerometers LUA^, RUA_, LH, BACK, RWR, RUA^, LUA_, LWR, RH.
  for (std::size_t first : {8, 11, 14, 17, 23, 26, 29, 32, 35})
    append_columns(l.channel_columns, first, first + 2);
  // Quaternions of the IMUs BACK, RUA, RLA, LUA, LLA.
  for (std::size_t first : {47, 60, 73, 86, 99})
    append_columns(l.channel_columns, first, first + 3);
  // L-SHOE and R-SHOE, complete.
  append_columns(l.channel_columns, 103, 134);
  l.label_codes = {0,      406516, 406517, 404516, 404517, 406520,
                   404520, 406505, 404505, 406519, 404519, 406511,
                   404511, 406508, 404508, 408512, 407521, 405506};
  l.class_names = {"Null",           "Open Door 1",     "Open Door 2",
                   "Close Door 1",   "Close Door 2",    "Open Fridge",
                   "Close Fridge",   "Open Dishwasher", "Close Dishwasher",
                   "Open Drawer 1",  "Close Drawer 1",  "Open Drawer 2",
                   "Close Drawer 2", "Open Drawer 3",   "Close Drawer 3",
                   "Clean Table",    "Drink from Cup",  "Toggle Switch"};
  l.source_rate = 30;
  l.target_rate = 30;
  l.window = 30;
  l.step = 15;
  l.null_class = 0;
  return l;
}

/// PAMAP2: heart rate plus all 17 columns of the hand, chest and ankle IMUs;
/// the twelve protocol activities.
inline DatasetLayout pamap2_layout() {
  DatasetLayout l;
  l.id = "pamap2";
  l.file_columns = 54;
  l.label_column = 2;
  l.channel_columns = detail::column_range(3, 54);
  l.label_codes = {1, 2, 3, 4, 5, 6, 7, 12, 13, 16, 17, 24};
  l.class_names = {"lying",          "sitting",           "standing",
                   "walking",        "running",           "cycling",
                   "Nordic walking", "ascending stairs",  "descending stairs",
                   "vacuum cleaning", "ironing",          "rope jumping"};
  l.source_rate = 100;
  l.target_rate = 100.0 / 3.0;
  l.window = 170;
  l.step = 33;
  return l;
}

/// Daphnet Gait: shank, thigh and trunk accelerometers; annotation 0 marks
/// samples outside the experiment and is dropped.
inline DatasetLayout daphnet_layout() {
  DatasetLayout l;
  l.id = "dg";
  l.file_columns = 11;
  l.label_column = 11;
  l.channel_columns = detail::column_range(2, 10);
  l.label_codes = {1, 2};
  l.class_names = {"no freeze", "freeze"};
  l.source_rate = 64;
  l.target_rate = 32;
  l.window = 32;
  l.step = 16;
  return l;
}

/// Reads one run file into a recording. Rows whose label code is not in
/// the layout are kept with an out-of-range marker so callers can cut them.
inline constexpr std::size_t kUnlabelled = static_cast<std::size_t>(-1);

inline RawRecording read_run(const std::filesystem::path& file,
                             const DatasetLayout& layout,
                             const std::string& subject, const std::string& run) {
  const auto rows = text::read_table(file, layout.file_columns);
  std::map<long, std::size_t> code_to_class;
  for (std::size_t c = 0; c < layout.label_codes.size(); ++c)
    code_to_class[layout.label_codes[c]] = c;
  RawRecording r;
  r.subject = subject;
  r.run = run;
  r.rate = layout.source_rate;
  r.channels = layout.channel_columns.size();
  r.provenance = file.filename().string();
  r.samples.reserve(rows.size() * r.channels);
  r.labels.reserve(rows.size());
  for (const auto& row : rows) {
    for (std::size_t col : layout.channel_columns) r.samples.push_back(row[col - 1]);
    const double code = row[layout.label_column - 1];
    const auto it = std::isfinite(code)
                        ? code_to_class.find(static_cast<long>(code))
                        : code_to_class.end();
    r.labels.push_back(it == code_to_class.end() ? kUnlabelled : it->second);
  }
  interpolate_missing(r);
  return r;
}

/// One expected input file and the split it feeds.
struct RunFile {
  std::filesystem::path path;
  std::string subject;
  std::string run;
  enum class Split { train, validation, test } split = Split::train;
  bool required = true;
};

/// Loads the listed runs, cutting out unlabelled stretches, resampling and
/// sorting each piece into its split. Missing required files are reported
/// together in one error.
inline DatasetSplits load_runs(const std::vector<RunFile>& files,
                               const DatasetLayout& layout) {
  std::vector<std::string> absent;
  for (const auto& f : files)
    if (f.required && !std::filesystem::exists(f.path)) absent.push_back(f.path.string());
  if (!absent.empty()) {
    std::string msg = layout.id + ": missing " + std::to_string(absent.size()) + " run file(s):";
    for (const auto& a : absent) msg += "\n  " + a;
    throw DataError(msg);
  }
  DatasetSplits d;
  d.id = layout.id;
  d.channels = layout.channel_columns.size();
  d.class_names = layout.class_names;
  d.window = layout.window;
  d.step = layout.step;
  d.null_class = layout.null_class;
  d.rate = layout.target_rate;
  for (const auto& f : files) {
    if (!std::filesystem::exists(f.path)) continue;
    const RawRecording raw = read_run(f.path, layout, f.subject, f.run);
    auto pieces = split_on_labels(
        raw, [](std::size_t l) { return l != kUnlabelled; },
        [](std::size_t l) { return l; });
    auto& dest = f.split == RunFile::Split::train        ? d.train
                 : f.split == RunFile::Split::validation ? d.validation
                                                         : d.test;
    for (auto& p : pieces) {
      RawRecording q = layout.target_rate < layout.source_rate
                           ? downsample(p, layout.target_rate)
                           : std::move(p);
      if (q.length() > 0) {
        d.rate = q.rate;
        dest.push_back(std::move(q));
      }
    }
  }
  return d;
}

namespace detail {

/// First existing candidate, or the first candidate if none exists (so the
/// missing-file report names the canonical location).
inline std::filesystem::path locate(const std::filesystem::path& root,
                                    const std::vector<std::string>& candidates) {
  for (const auto& c : candidates)
    if (std::filesystem::exists(root / c)) return root / c;
  return root / candidates.front();
}

}  // namespace detail

/// Validation: subject 1 run 2. Test: runs 4 and 5 of subjects 2 and 3.
/// Training: every other ADL run and the drill runs of all four subjects.
inline std::vector<RunFile> opportunity_runs(const std::filesystem::path& root) {
  std::vector<RunFile> files;
  for (int s = 1; s <= 4; ++s) {
    const std::string subject = "S" + std::to_string(s);
    std::vector<std::string> runs;
    for (int r = 1; r <= 5; ++r) runs.push_back("ADL" + std::to_string(r));
    runs.push_back("Drill");
    for (const auto& run : runs) {
      const std::string name = subject + "-" + run + ".dat";
      RunFile f{detail::locate(root, {name, "dataset/" + name}), subject, run};
      if (s == 1 && run == "ADL2") f.split = RunFile::Split::validation;
      if ((s == 2 || s == 3) && (run == "ADL4" || run == "ADL5"))
        f.split = RunFile::Split::test;
      files.push_back(std::move(f));
    }
  }
  return files;
}

/// Runs 1 and 2 of a subject are its Protocol and Optional recordings.
/// Validation: subject 105. Test: subject 106.
inline std::vector<RunFile> pamap2_runs(const std::filesystem::path& root) {
  std::vector<RunFile> files;
  const std::vector<int> optional = {101, 105, 106, 108, 109};
  for (int s = 101; s <= 109; ++s) {
    const std::string subject = std::to_string(s);
    const std::string name = "subject" + subject + ".dat";
    const auto split = s == 105   ? RunFile::Split::validation
                       : s == 106 ? RunFile::Split::test
                                  : RunFile::Split::train;
    files.push_back({detail::locate(root, {"Protocol/" + name, "PAMAP2_Dataset/Protocol/" + name}),
                     subject, "1", split, true});
    if (std::find(optional.begin(), optional.end(), s) != optional.end()) {
      files.push_back({detail::locate(root, {"Optional/" + name, "PAMAP2_Dataset/Optional/" + name}),
                       subject, "2", split, true});
    }
  }
  return files;
}

/// Validation: subject 9 run 1. Test: subject 2 runs 1 and 2.
inline std::vector<RunFile> daphnet_runs(const std::filesystem::path& root) {
  const std::vector<std::pair<int, int>> runs = {
      {1, 1}, {1, 2}, {2, 1}, {2, 2}, {3, 1}, {3, 2}, {3, 3}, {4, 1}, {5, 1},
      {5, 2}, {6, 1}, {6, 2}, {7, 1}, {7, 2}, {8, 1}, {9, 1}, {10, 1}};
  std::vector<RunFile> files;
  for (const auto& [s, r] : runs) {
    char name[16];
    std::snprintf(name, sizeof name, "S%02dR%02d.txt", s, r);
    RunFile f{detail::locate(root, {name, std::string("dataset/") + name}),
              "S" + std::to_string(s), "R" + std::to_string(r)};
    if (s == 9 && r == 1) f.split = RunFile::Split::validation;
    if (s == 2) f.split = RunFile::Split::test;
    files.push_back(std::move(f));
  }
  return files;
}

inline DatasetSplits load_opportunity(const std::filesystem::path& root) {
  return load_runs(opportunity_runs(root), opportunity_layout());
}
inline DatasetSplits load_pamap2(const std::filesystem::path& root) {
  return load_runs(pamap2_runs(root), pamap2_layout());
}
inline DatasetSplits load_daphnet(const std::filesystem::path& root) {
  return load_runs(daphnet_runs(root), daphnet_layout());
}

/// Sample and frame totals quoted for each training split, used as ±5%
/// sanity bounds when the real data are present.
struct ReferenceSize {
  std::size_t samples;
  std::size_t frames;
};
inline ReferenceSize reference_train_size(const std::string& id) {
  if (id == "opp") return {650000, 43000};
  if (id == "pamap2") return {473000, 14000};
  if (id == "dg") return {470000, 30000};
  throw ConfigError("no reference size for dataset " + id);
}

}  // namespace har
