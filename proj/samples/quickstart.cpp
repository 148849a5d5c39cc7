// SPDX-License-Identifier: Apache-2.0
//
// Library walkthrough on synthetic data. After a single training run, a
// small random search feeds the importance analysis.

#include <cstdio>
#include <iomanip>
#include <iostream>

#include "har/data/synth.hpp"
#include "har/fanova/analysis.hpp"
#include "har/hypersearch/search.hpp"
#include "har/training/trainer.hpp"

int main() {
  using namespace har;

  SynthSpec spec;
  spec.samples = 30000;
  const DatasetSplits raw = synthesize(spec);

  // A single DNN with the default settings.
  const auto frames = prepare_data<double>(raw, Family::dnn);
  TrainOptions<double> opts;
  opts.protocol.min_epochs = 5;
  opts.protocol.max_epochs = 20;
  opts.protocol.patience = 3;
  const TrainResult r = train_model(frames, default_hyperparameters(Family::dnn), opts);
  std::cout << std::fixed << std::setprecision(3) << "dnn: " << to_string(r.status) << " after "
            << r.history.size() << " epochs, test F_m " << r.test.mean_f1 << ", F_w "
            << r.test.weighted_f1 << "\n";

  // Random search over a narrowed DNN space, recorded to a JSONL file.
  // Small networks keep this sample fast.
  auto dims = SearchSpace::table(Family::dnn).dimensions();
  for (auto& d : dims) {
    if (d.name == "units") d.hi = 128;
    if (d.name == "layers") d.hi = 2;
  }
  const SearchSpace space(Family::dnn, dims);
  const std::string file = "quickstart_records.jsonl";
  std::remove(file.c_str());
  RecordSink sink(file);
  SearchOptions so;
  so.n = 24;
  so.master_seed = 7;
  opts.protocol = {3, 3, 1};
  const auto rep = run_search(space, so, sink, training_experiment(space, frames, opts));
  std::cout << "search: " << rep.written << " experiments written to " << file << "\n";

  for (const auto& s : summarize(sink.records())) {
    std::cout << s.family << ": peak " << s.peak << ", median " << s.median << ", best F_w "
              << s.best_weighted_f1 << "\n";
  }

  const auto j = fanova::analyze_records(space, sink.records());
  std::cout << "variance shares: learning " << j["categories"]["learning"].get<double>()
            << ", regularisation " << j["categories"]["regularisation"].get<double>()
            << ", architecture " << j["categories"]["architecture"].get<double>()
            << ", interactions " << j["interactions"].get<double>() << "\n";
  return 0;
}
