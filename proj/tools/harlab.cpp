// SPDX-License-Identifier: Apache-2.0
//
// harlab: command-line front end to the library. Subcommands share the data
// source and protocol flags defined below.

#include <iostream>

#include <CLI11.hpp>

#include "har/cli/commands.hpp"

namespace {

using namespace har::cli;

void add_source(CLI::App* app, DataSource& s) {
  app->add_option("--dataset", s.dataset, "opp, pamap2, dg or synth")->required();
  app->add_option("--cache", s.cache, "dataset cache written by ingest or synth");
  app->add_option("--root", s.root, "raw dataset directory");
  app->add_option("--synth-samples", s.synth.samples, "synthetic data: total samples");
  app->add_option("--synth-classes", s.synth.classes, "synthetic data: classes");
  app->add_option("--synth-channels", s.synth.channels, "synthetic data: channels");
  app->add_option("--synth-noise", s.synth.noise, "synthetic data: noise level");
  app->add_option("--synth-seed", s.synth.seed, "synthetic data: generator seed");
}

void add_protocol(CLI::App* app, ProtocolOptions& p, bool& literal, bool& include_null) {
  app->add_option("--min-epochs", p.min_epochs, "epochs before early stopping may trigger")
      ->capture_default_str();
  app->add_option("--max-epochs", p.max_epochs, "hard epoch limit")->capture_default_str();
  app->add_option("--patience", p.patience, "epochs without improvement before stopping")
      ->capture_default_str();
  app->add_option("--time-budget", p.time_budget_seconds, "wall-clock budget per run (s)");
  app->add_flag("--literal-eq", literal,
                "evaluate F1 through the unsimplified summation 2/|c| sum pr/(p+r)");
  app->add_option("--include-null", include_null, "score the null class (true/false)")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Activity recognition models, searches and variance analysis"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  IngestOptions ingest;
  auto* c_ingest = app.add_subcommand("ingest", "read a raw dataset into a cache file");
  c_ingest->add_option("--dataset", ingest.dataset, "opp, pamap2 or dg")->required();
  c_ingest->add_option("--root", ingest.root, "raw dataset directory")->required();
  c_ingest->add_option("--out", ingest.out, "output directory")->required();

  SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth", "generate a synthetic dataset cache");
  c_synth->add_option("--out", synth.out, "output directory")->required();
  c_synth->add_option("--samples", synth.spec.samples)->capture_default_str();
  c_synth->add_option("--classes", synth.spec.classes)->capture_default_str();
  c_synth->add_option("--channels", synth.spec.channels)->capture_default_str();
  c_synth->add_option("--noise", synth.spec.noise)->capture_default_str();
  c_synth->add_option("--seed", synth.spec.seed)->capture_default_str();

  TrainCommandOptions train;
  auto* c_train = app.add_subcommand("train", "train one model and evaluate it");
  c_train->add_option("--family", train.family, "dnn, cnn, lstm-f, lstm-s or blstm-s")->required();
  add_source(c_train, train.source);
  c_train->add_option("--config", train.config_file, "JSON file of hyperparameters");
  c_train->add_option("--set", train.overrides, "hyperparameter override key=value");
  c_train->add_option("--seed", train.seed)->capture_default_str();
  c_train->add_option("--out", train.out, "output directory")->required();
  add_protocol(c_train, train.protocol, train.literal_eq, train.include_null);

  SearchCommandOptions search;
  std::size_t n = 0;
  auto* c_search = app.add_subcommand("search", "random hyperparameter search");
  c_search->add_option("--family", search.family)->required();
  add_source(c_search, search.source);
  auto* n_opt = c_search->add_option("--n", n, "experiments (default 20, or the full count)");
  c_search->add_flag("--full-scale", search.full_scale, "use the full per-family count");
  c_search->add_option("--parallelism", search.parallelism)->capture_default_str();
  c_search->add_option("--seed", search.seed, "master seed")->capture_default_str();
  c_search->add_option("--out", search.out, "record file (JSON lines)")->required();
  add_protocol(c_search, search.protocol, search.literal_eq, search.include_null);

  AnalyzeOptions analyze;
  auto* c_analyze = app.add_subcommand("analyze", "variance decomposition of search records");
  c_analyze->add_option("--records", analyze.records)->required();
  c_analyze->add_option("--out", analyze.out, "output JSON file")->required();
  c_analyze->add_option("--trees", analyze.trees)->capture_default_str();
  c_analyze->add_option("--seed", analyze.seed)->capture_default_str();
  c_analyze->add_option("--threads", analyze.threads)->capture_default_str();

  ReportOptions report;
  auto* c_report = app.add_subcommand("report", "performance table and score distributions");
  c_report->add_option("--records", report.records)->required();
  c_report->add_option("--out", report.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  if (n_opt->count() > 0) search.n = n;

  return run_guarded(
      [&]() -> int {
        if (c_ingest->parsed()) return cmd_ingest(ingest, std::cout);
        if (c_synth->parsed()) return cmd_synth(synth, std::cout);
        if (c_train->parsed()) return cmd_train(train, std::cout);
        if (c_search->parsed()) return cmd_search(search, std::cout);
        if (c_analyze->parsed()) return cmd_analyze(analyze, std::cout);
        return cmd_report(report, std::cout);
      },
      std::cerr);
}
