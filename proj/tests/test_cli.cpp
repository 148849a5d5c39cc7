// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "har/cli/commands.hpp"

using namespace har;
using namespace har::cli;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("har_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& f) {
  std::ifstream in(f, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string f; std::getline(in, f, '\t');) out.push_back(f);
  return out;
}

// Same layout as the data tests: `label_col` cycles through `codes`.
void write_fixture(const fs::path& file, std::size_t rows, std::size_t columns,
                   std::size_t label_col, const std::vector<long>& codes) {
  fs::create_directories(file.parent_path());
  std::ofstream out(file);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 1; c <= columns; ++c) {
      if (c > 1) out << ' ';
      if (c == label_col) out << codes[(r / 10) % codes.size()];
      else out << (static_cast<double>(r) * 0.25 + static_cast<double>(c));
    }
    out << '\n';
  }
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(HARLAB_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

DataSource small_synth() {
  DataSource s;
  s.dataset = "synth";
  s.synth.samples = 20000;
  s.synth.seed = 3;
  return s;
}

TrainCommandOptions quick_train(const fs::path& out) {
  TrainCommandOptions o;
  o.family = "dnn";
  o.source = small_synth();
  o.out = out.string();
  o.seed = 5;
  o.overrides = {"units=64"};
  o.protocol.min_epochs = 3;
  o.protocol.max_epochs = 3;
  return o;
}

}  // namespace

TEST(Cli, OverridesParseAsJsonOrString) {
  auto [k, v] = parse_override("lr=0.5");
  EXPECT_EQ(k, "lr");
  EXPECT_DOUBLE_EQ(v.get<double>(), 0.5);
  EXPECT_EQ(parse_override("layers=3").second.get<int>(), 3);
  EXPECT_EQ(parse_override("family=lstm-s").second.get<std::string>(), "lstm-s");
  EXPECT_THROW(parse_override("=3"), ConfigError);
  EXPECT_THROW(parse_override("lr"), ConfigError);
}

TEST(Cli, PrecedenceDefaultsThenFileThenFlags) {
  const auto dir = fresh_dir("precedence");
  write_json(dir / "h.json", {{"lr", 0.003}, {"units", 300}});
  TrainCommandOptions o;
  o.family = "dnn";
  o.config_file = (dir / "h.json").string();
  o.overrides = {"units=128"};
  const auto h = resolve_hyperparameters(o);
  const auto d = default_hyperparameters(Family::dnn);
  EXPECT_DOUBLE_EQ(h.learning_rate, 0.003);  // file over default
  EXPECT_EQ(h.units, 128u);                  // flag over file
  EXPECT_DOUBLE_EQ(h.momentum, d.momentum);  // default kept
  EXPECT_EQ(h.family, Family::dnn);

  o.overrides = {"learning_rate=1"};
  EXPECT_THROW(resolve_hyperparameters(o), ConfigError);
  o.overrides = {};
  o.family = "rnn";
  EXPECT_THROW(resolve_hyperparameters(o), ConfigError);
}

TEST(Cli, NullClassLeftOutOnlyWhenAsked) {
  DatasetSplits d;
  d.null_class = 0;
  EXPECT_FALSE(f1_options(d, false, true).excluded.has_value());
  EXPECT_EQ(f1_options(d, true, false).excluded, 0u);
  EXPECT_TRUE(f1_options(d, true, false).literal);
  d.null_class = -1;
  EXPECT_FALSE(f1_options(d, false, false).excluded.has_value());
}

TEST(Cli, IngestReportsChannelsClassesAndIsIdempotent) {
  const auto root = fresh_dir("opp_raw");
  for (const auto& f : opportunity_runs(root)) write_fixture(f.path, 80, 250, 250, {0, 406516});
  const auto out = fresh_dir("opp_out");
  std::ostringstream log;
  ASSERT_EQ(cmd_ingest({"opp", root.string(), (out / "a").string()}, log), kOk);
  ASSERT_EQ(cmd_ingest({"opp", root.string(), (out / "b").string()}, log), kOk);
  EXPECT_EQ(slurp(out / "a" / "opp.harcache"), slurp(out / "b" / "opp.harcache"));
  const auto table = slurp(out / "a" / "opp_summary.tsv");
  EXPECT_NE(table.find("# channels\t79\n"), std::string::npos);
  EXPECT_NE(table.find("# classes\t18\n"), std::string::npos);
  // Each 80-sample run gives 1 + (80 - 30) / 15 = 4 frames.
  const auto rows = lines(table);
  const auto train = std::find_if(rows.begin(), rows.end(),
                                  [](const std::string& l) { return l.rfind("train\t", 0) == 0; });
  ASSERT_NE(train, rows.end());
  const auto f = fields(*train);
  EXPECT_EQ(f[1], "19");
  EXPECT_EQ(f[2], std::to_string(19 * 80));
  EXPECT_EQ(f[3], std::to_string(19 * 4));
  const auto m = read_json(out / "a" / "manifest.json");
  EXPECT_EQ(m["subcommand"], "ingest");
  for (const auto& a : m["artifacts"]) EXPECT_TRUE(fs::exists(a.get<std::string>()));

  const auto dg_root = fresh_dir("dg_raw");
  for (const auto& f2 : daphnet_runs(dg_root)) write_fixture(f2.path, 60, 11, 11, {1, 2});
  ASSERT_EQ(cmd_ingest({"dg", dg_root.string(), (out / "dg").string()}, log), kOk);
  EXPECT_NE(slurp(out / "dg" / "dg_summary.tsv").find("# classes\t2\n"), std::string::npos);
}

TEST(Cli, IngestItemisesMissingFiles) {
  const auto root = fresh_dir("dg_missing");
  std::ostringstream err;
  const int rc = run_guarded(
      [&] {
        std::ostringstream log;
        return cmd_ingest({"dg", root.string(), fresh_dir("dg_missing_out").string()}, log);
      },
      err);
  EXPECT_EQ(rc, kDataError);
  EXPECT_NE(err.str().find("S01R01"), std::string::npos) << err.str();
}

TEST(Cli, SynthCacheRoundTrips) {
  const auto out = fresh_dir("synth");
  SynthOptions o;
  o.spec = small_synth().synth;
  o.out = out.string();
  std::ostringstream log;
  ASSERT_EQ(cmd_synth(o, log), kOk);
  const auto a = load_cache(out / "synth.harcache");
  const auto b = synthesize(o.spec);
  ASSERT_EQ(a.train.size(), b.train.size());
  EXPECT_EQ(a.train[0].samples, b.train[0].samples);
  EXPECT_EQ(a.test[1].labels, b.test[1].labels);
}

TEST(Cli, TrainLearnsSyntheticTaskAndWritesArtifacts) {
  const auto out = fresh_dir("train");
  std::ostringstream log;
  ASSERT_EQ(cmd_train(quick_train(out / "run"), log), kOk);
  for (const char* f : {"history.tsv", "timing.tsv", "result.json", "checkpoint.json", "manifest.json"})
    EXPECT_TRUE(fs::exists(out / "run" / f)) << f;
  const auto result = read_json(out / "run" / "result.json");
  EXPECT_EQ(result["status"], "ok");
  EXPECT_GE(result["test_mean_f1"].get<double>(), 0.9);
  const auto hist = lines(slurp(out / "run" / "history.tsv"));
  ASSERT_EQ(hist.size(), 4u);
  EXPECT_EQ(hist[0], "epoch\ttrain_loss\tvalidation_mean_f1");
  const auto m = read_json(out / "run" / "manifest.json");
  EXPECT_EQ(m["config"]["hyperparameters"]["units"], 64);
  EXPECT_EQ(m["config"]["hyperparameters"]["lr"], default_hyperparameters(Family::dnn).learning_rate);
  EXPECT_EQ(m["seed"], 5);
}

TEST(Cli, DnnDefaultsReachHighMacroF1UnderTheFullProtocol) {
  const auto out = fresh_dir("train_defaults");
  TrainCommandOptions o;
  o.family = "dnn";
  o.source = small_synth();
  o.out = (out / "run").string();
  std::ostringstream log;
  ASSERT_EQ(cmd_train(o, log), kOk);
  const auto result = read_json(out / "run" / "result.json");
  EXPECT_GE(result["test_mean_f1"].get<double>(), 0.9);
  EXPECT_GE(result["epochs"].get<std::size_t>(), 30u);
  EXPECT_EQ(result["config"], to_json(default_hyperparameters(Family::dnn)));
}

TEST(Cli, TrainIsDeterministicGivenTheSeed) {
  const auto out = fresh_dir("train_det");
  std::ostringstream log;
  ASSERT_EQ(cmd_train(quick_train(out / "a"), log), kOk);
  ASSERT_EQ(cmd_train(quick_train(out / "b"), log), kOk);
  EXPECT_EQ(slurp(out / "a" / "history.tsv"), slurp(out / "b" / "history.tsv"));
  EXPECT_EQ(slurp(out / "a" / "checkpoint.json"), slurp(out / "b" / "checkpoint.json"));
  auto other = quick_train(out / "c");
  other.seed = 6;
  ASSERT_EQ(cmd_train(other, log), kOk);
  EXPECT_NE(slurp(out / "a" / "history.tsv"), slurp(out / "c" / "history.tsv"));
}

TEST(Cli, DivergenceExitsWithNumericCodeAndKeepsHistory) {
  const auto out = fresh_dir("diverge");
  auto o = quick_train(out / "run");
  o.overrides = {"lr=1e200", "max_in_norm=1e300"};
  std::ostringstream log;
  EXPECT_EQ(cmd_train(o, log), kNumericError);
  EXPECT_TRUE(fs::exists(out / "run" / "history.tsv"));
  EXPECT_EQ(read_json(out / "run" / "result.json")["status"], "diverged");
}

TEST(Cli, InvalidConfigurationIsAUsageError) {
  const auto out = fresh_dir("invalid");
  auto o = quick_train(out / "run");
  o.family = "cnn";
  o.overrides = {"conv_layers=5"};
  std::ostringstream log;
  EXPECT_EQ(cmd_train(o, log), kUsage);
  EXPECT_EQ(read_json(out / "run" / "result.json")["status"], "invalid");

  std::ostringstream err;
  auto p = quick_train(out / "run2");
  p.source.dataset = "opp";  // no root, no cache
  EXPECT_EQ(run_guarded([&] { return cmd_train(p, log); }, err), kUsage);
  p.source.dataset = "mnist";
  EXPECT_EQ(run_guarded([&] { return cmd_train(p, log); }, err), kUsage);
}

TEST(Cli, SearchAppendsAndResumesThenReports) {
  const auto out = fresh_dir("search");
  SearchCommandOptions o;
  o.family = "dnn";
  o.source = small_synth();
  o.n = 2;
  o.seed = 9;
  o.out = (out / "records.jsonl").string();
  o.protocol.min_epochs = 1;
  o.protocol.max_epochs = 1;
  std::ostringstream log;
  ASSERT_EQ(cmd_search(o, log), kOk);
  ASSERT_EQ(read_records(o.out).size(), 2u);
  o.n = 3;
  ASSERT_EQ(cmd_search(o, log), kOk);
  const auto recs = read_records(o.out);
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_TRUE(fs::exists(o.out + ".manifest.json"));
  for (const auto& r : recs) EXPECT_EQ(r["dataset"], "synth");

  ReportOptions rep{{o.out}, (out / "report").string()};
  ASSERT_EQ(cmd_report(rep, log), kOk);
  const auto table = lines(slurp(out / "report" / "best_results.tsv"));
  ASSERT_EQ(table.size(), 2u);
  EXPECT_EQ(fields(table[0])[4], "F_m");
  EXPECT_EQ(fields(table[0])[5], "F_w");
  EXPECT_EQ(fields(table[1])[2], "3");
  EXPECT_EQ(lines(slurp(out / "report" / "cdf_synth_dnn.dat")).size(), 3u);
}

TEST(Cli, FullScaleCountsAndDeskDefault) {
  SearchCommandOptions o;
  EXPECT_EQ(search_count(o, Family::dnn), 20u);
  o.full_scale = true;
  EXPECT_EQ(search_count(o, Family::dnn), 1000u);
  EXPECT_EQ(search_count(o, Family::cnn), 256u);
  EXPECT_EQ(search_count(o, Family::blstm_s), 128u);
  o.n = 7;
  EXPECT_EQ(search_count(o, Family::cnn), 7u);
}

TEST(Cli, ReportMatchesSortOracleOnThreeRecords) {
  const auto dir = fresh_dir("report3");
  const std::string file = (dir / "r.jsonl").string();
  {
    RecordSink sink(file);
    const double scores[] = {0.6, 0.9, 0.7};
    for (int i = 0; i < 3; ++i) {
      sink.append({{"key", "cnn:" + std::to_string(i)}, {"family", "cnn"}, {"dataset", "pamap2"},
                   {"status", "ok"}, {"score", scores[i]}, {"test_mean_f1", scores[i]},
                   {"test_weighted_f1", scores[i] - 0.05}});
    }
  }
  std::ostringstream log;
  ASSERT_EQ(cmd_report({{file}, (dir / "out").string()}, log), kOk);
  const auto row = fields(lines(slurp(dir / "out" / "best_results.tsv"))[1]);
  EXPECT_EQ(row[0], "pamap2");
  EXPECT_EQ(row[1], "cnn");
  EXPECT_EQ(row[4], "0.9000");  // best F_m
  EXPECT_EQ(row[5], "0.8500");  // F_w of the same run
  EXPECT_EQ(row[6], "0.9000");  // peak
  EXPECT_EQ(row[7], "0.7000");  // median of {0.6, 0.7, 0.9}
  EXPECT_EQ(row[8], "0.2000");
  const auto cdf = lines(slurp(dir / "out" / "cdf_pamap2_cnn.dat"));
  ASSERT_EQ(cdf.size(), 3u);
  double x = 0, y = 0;
  std::istringstream(cdf[0]) >> x >> y;
  EXPECT_DOUBLE_EQ(x, 0.6);
  EXPECT_NEAR(y, 1.0 / 3.0, 1e-15);
  std::istringstream(cdf[2]) >> x >> y;
  EXPECT_DOUBLE_EQ(x, 0.9);
  EXPECT_DOUBLE_EQ(y, 1.0);
}

TEST(Cli, AnalyzeRanksTheDominantParameterFirst) {
  const auto dir = fresh_dir("analyze");
  const std::string file = (dir / "r.jsonl").string();
  const auto space = SearchSpace::table(Family::dnn);
  const std::size_t lr = space.index_of("lr");
  {
    RecordSink sink(file);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> noise(-0.005, 0.005);
    for (int i = 0; i < 60; ++i) {
      const auto p = space.sample_point(rng);
      const double u = space.dimensions()[lr].cdf(p[lr]);
      const double y = 0.3 + 0.6 * u + noise(rng);
      sink.append({{"key", "dnn:" + std::to_string(i)}, {"family", "dnn"}, {"dataset", "synth"},
                   {"status", "ok"}, {"point", space.point_to_json(p)}, {"score", y},
                   {"test_mean_f1", y}, {"test_weighted_f1", y}});
    }
  }
  AnalyzeOptions o;
  o.records = {file};
  o.out = (dir / "fanova.json").string();
  std::ostringstream log;
  ASSERT_EQ(cmd_analyze(o, log), kOk);
  const auto j = read_json(o.out)[0];
  const auto& params = j["parameters"];
  const auto top = std::max_element(params.begin(), params.end(), [](const auto& a, const auto& b) {
    return a["fraction"].template get<double>() < b["fraction"].template get<double>();
  });
  EXPECT_EQ((*top)["name"], "lr");
  EXPECT_GT(j["categories"]["learning"].get<double>(), 0.5);
  const auto dat = lines(slurp(dir / "fanova_synth_dnn_categories.dat"));
  ASSERT_EQ(dat.size(), 5u);
  EXPECT_EQ(dat[1].substr(0, 2), "1 ");
}

TEST(Cli, EmptyOrTooFewRecordsFail) {
  const auto dir = fresh_dir("empty");
  const std::string file = (dir / "r.jsonl").string();
  { RecordSink sink(file); }
  std::ostringstream err;
  EXPECT_EQ(run_guarded([&] {
              std::ostringstream log;
              return cmd_report({{file}, (dir / "out").string()}, log);
            }, err),
            kDataError);
  EXPECT_EQ(run_guarded([&] {
              std::ostringstream log;
              return cmd_analyze({{file}, (dir / "a.json").string()}, log);
            }, err),
            kDataError);
}

TEST(Cli, BinaryExitCodes) {
  const auto dir = fresh_dir("binary");
  EXPECT_EQ(run_binary("--version"), 0);
  EXPECT_EQ(run_binary("--help"), 0);
  EXPECT_EQ(run_binary(""), kUsage);
  EXPECT_EQ(run_binary("train --family dnn"), kUsage);
  EXPECT_EQ(run_binary("frobnicate"), kUsage);
  EXPECT_EQ(run_binary("report --records " + (dir / "none.jsonl").string() + " --out " +
                       (dir / "r").string()),
            kDataError);
  EXPECT_EQ(run_binary("train --family dnn --dataset synth --synth-samples 20000 --set lr=1e200"
                       " --set max_in_norm=1e300 --max-epochs 2 --min-epochs 2 --out " +
                       (dir / "t").string()),
            kNumericError);
  EXPECT_EQ(run_binary("synth --out " + (dir / "s").string() + " --samples 20000"), 0);
  EXPECT_TRUE(fs::exists(dir / "s" / "synth.harcache"));
}
