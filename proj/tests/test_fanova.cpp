// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "har/fanova/analysis.hpp"
#include "har/fanova/decomposition.hpp"
#include "har/fanova/forest.hpp"
#include "har/hypersearch/search.hpp"
#include "fanova_oracle.hpp"

using namespace har::fanova;
using har::testing::grid_oracle;
using har::testing::sample;

namespace {

TEST(Fanova, HandTreeSplitAtHalf) {
  Tree t({{0, 1}, {0, 1}}, {{0, 0.5, 1, 2, 0.5}, {-1, 0, 0, 0, 0.25}, {-1, 0, 0, 0, 0.75}});
  const auto d = decompose(t);
  EXPECT_NEAR(d.mean, 0.5, 1e-15);
  EXPECT_NEAR(d.total, 0.0625, 1e-15);
  EXPECT_NEAR(d.main[0] / d.total, 1.0, 1e-12);
  EXPECT_EQ(d.main[1], 0.0);
  EXPECT_EQ(d.pairs.at({0, 1}), 0.0);
}

TEST(Fanova, ConstantResponse) {
  const auto o = sample(60, 3, 1, [](const auto&) { return 0.42; });
  const auto forest = fit_forest(o);
  for (const auto& t : forest.trees()) {
    for (const auto& l : t.leaves()) EXPECT_DOUBLE_EQ(l.value, 0.42);
    EXPECT_EQ(decompose(t).total, 0.0);
  }
  const auto imp = importance(forest);
  for (double v : imp.main) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(imp.varying_trees, 0u);
}

TEST(Fanova, AnalyticMatchesGridOracle) {
  // Trees grown on data quantised to a lattice of 1/(g/2), so every
  // threshold (a midpoint) falls on an edge of the g-cell grid and the
  // grid of 10^6 cells evaluates each leaf over exactly its box.
  struct Case { std::size_t dims, grid; };
  for (const Case c : {Case{2, 1000}, Case{3, 100}}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      auto o = sample(200, c.dims, seed, [](const std::vector<double>& x) {
        return std::sin(6 * x[0]) * x[1] + (x.size() > 2 ? x[2] * x[2] : 0.0);
      });
      const double half = static_cast<double>(c.grid / 2);
      for (auto& row : o.x)
        for (auto& v : row) v = std::min(std::floor(v * half), half - 1) / half;
      ForestOptions opt;
      opt.trees = 1;
      opt.bootstrap = false;
      opt.seed = seed;
      const Forest forest = fit_forest(o, opt);
      const Tree& t = forest.trees()[0];
      ASSERT_GT(t.leaves().size(), 10u);
      const auto exact = decompose(t);
      const auto grid = grid_oracle(t, c.dims, c.grid);
      EXPECT_NEAR(exact.mean, grid.mean, 1e-3);
      EXPECT_NEAR(exact.total, grid.total, 1e-3);
      for (std::size_t k = 0; k < c.dims; ++k)
        EXPECT_NEAR(exact.main[k], grid.main[k], 1e-3) << "dim " << k;
      for (const auto& [key, v] : grid.pairs)
        EXPECT_NEAR(exact.pairs.at(key), std::max(v, 0.0), 1e-3) << key.first << "," << key.second;
    }
  }
}

TEST(Fanova, GridOracleExactOnAlignedSplits) {
  // Thresholds on multiples of 1/8 make the 1000-cell-per-axis grid exact
  // up to rounding.
  Tree t({{0, 1}, {0, 1}},
         {{0, 0.5, 1, 2, 0},
          {1, 0.25, 3, 4, 0},
          {1, 0.625, 5, 6, 0},
          {-1, 0, 0, 0, 0.1},
          {-1, 0, 0, 0, 0.7},
          {-1, 0, 0, 0, 0.4},
          {-1, 0, 0, 0, 0.9}});
  const auto exact = decompose(t);
  const auto grid = grid_oracle(t, 2, 1000);
  EXPECT_NEAR(exact.total, grid.total, 1e-9);
  EXPECT_NEAR(exact.main[0], grid.main[0], 1e-9);
  EXPECT_NEAR(exact.main[1], grid.main[1], 1e-9);
  EXPECT_NEAR(exact.pairs.at({0, 1}), grid.pairs.at({0, 1}), 1e-9);
  EXPECT_NEAR(exact.main[0] + exact.main[1] + exact.pairs.at({0, 1}), exact.total, 1e-12);
}

TEST(Fanova, ForestFitsAdditiveFunction) {
  const auto f = [](const std::vector<double>& x) { return x[0] + 0.5 * x[1] + 0.25 * x[2]; };
  const auto o = sample(300, 5, 4, f);
  const auto forest = fit_forest(o);
  double mean = 0;
  for (double v : o.y) mean += v;
  mean /= static_cast<double>(o.size());
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < o.size(); ++i) {
    ss_res += std::pow(o.y[i] - forest.predict(o.x[i]), 2);
    ss_tot += std::pow(o.y[i] - mean, 2);
  }
  EXPECT_GT(1 - ss_res / ss_tot, 0.5);
  const auto imp = importance(forest);
  EXPECT_GT(imp.main[0], imp.main[1]);
  EXPECT_GT(imp.main[1], imp.main[2]);
  double sum = 0;
  for (double v : imp.main) sum += v;
  for (const auto& [k, v] : imp.pairs) {
    EXPECT_GE(v, 0.0);
    sum += v;
  }
  EXPECT_LE(sum, 1 + 1e-9);
}

TEST(Fanova, DeterministicAndThreadInvariant) {
  const auto o = sample(80, 4, 5, [](const auto& x) { return x[0] * x[1] + x[3]; });
  ForestOptions a;
  a.seed = 3;
  ForestOptions b = a;
  b.threads = 4;
  const auto fa = fit_forest(o, a), fb = fit_forest(o, b), fc = fit_forest(o, a);
  const auto ia = importance(fa), ib = importance(fb), ic = importance(fc);
  EXPECT_EQ(ia.main, ib.main);
  EXPECT_EQ(ia.main, ic.main);
  EXPECT_EQ(ia.pairs, ib.pairs);
}

TEST(Fanova, UnusedDimensionHasZeroImportance) {
  Observations o = sample(100, 3, 6, [](const auto& x) { return x[0]; });
  for (auto& row : o.x) row[2] = 0.5;  // never separable
  const auto imp = importance(fit_forest(o));
  EXPECT_EQ(imp.main[2], 0.0);
  EXPECT_EQ(imp.pair(0, 2), 0.0);
  EXPECT_EQ(imp.pair(1, 2), 0.0);
}

TEST(Fanova, RejectsBadInput) {
  const auto few = sample(10, 2, 7, [](const auto& x) { return x[0]; });
  EXPECT_THROW(fit_forest(few), har::InvalidInput);
  Tree t({{0, 1}}, {{-1, 0, 0, 0, 1.0}});
  EXPECT_THROW(marginal(t, 3), har::InvalidInput);
  Importance imp;
  imp.main = {0.5, 0.5};
  EXPECT_THROW(category_importance(imp, {0}, {"a"}), har::InvalidInput);
  EXPECT_THROW(category_importance(imp, {0, 2}, {"a", "b"}), har::InvalidInput);
}

// f = x + 0.1 y + N(0, 0.01²), x in learning, y in architecture.
TEST(Fanova, LearningOutweighsArchitecture) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> noise(0, 0.01);
  auto o = sample(400, 2, 8, [&](const auto& x) { return x[0] + 0.1 * x[1] + noise(rng); });
  const auto imp = importance(fit_forest(o));
  const auto s = category_importance(imp, {0, 2}, {"learning", "regularisation", "architecture"});
  EXPECT_GT(s.shares[0], s.shares[2]);
  EXPECT_GT(s.shares[0], 0.8);
  EXPECT_EQ(s.shares[1], 0.0);
}

TEST(Fanova, CategorySharesOfAdditiveFunctions) {
  {
    const auto o = sample(300, 3, 9, [](const auto& x) { return x[0]; });
    const auto s = category_importance(importance(fit_forest(o)), {0, 1, 2},
                                       {"learning", "regularisation", "architecture"});
    EXPECT_GT(s.shares[0], 0.9);
    EXPECT_LT(s.shares[1], 0.05);
    EXPECT_LT(s.shares[2], 0.05);
  }
  {
    const auto o = sample(600, 3, 10, [](const auto& x) { return x[0] + x[1] + x[2]; });
    const auto s = category_importance(importance(fit_forest(o)), {0, 1, 2},
                                       {"learning", "regularisation", "architecture"});
    for (double v : s.shares) EXPECT_NEAR(v, 1.0 / 3, 0.1);
  }
}

TEST(Fanova, AnalyzeRanksDominantParameterFirst) {
  const auto space = har::SearchSpace::table(har::Family::dnn);
  const auto tasks = har::plan_search(space, 150, 4);
  const std::size_t lr = space.index_of("lr");
  std::vector<nlohmann::json> recs;
  for (const auto& t : tasks) {
    // Score rises with log10(lr) and barely depends on the unit count.
    const double score = 0.2 + 0.15 * (std::log10(t.point[lr]) + 4) +
                         0.01 * t.point[space.index_of("units")] / 2048;
    recs.push_back({{"key", t.key}, {"family", "dnn"}, {"score", score},
                    {"point", space.point_to_json(t.point)}});
  }
  const auto j = analyze_records(space, recs);
  std::string top;
  double best = -1;
  for (const auto& p : j.at("parameters")) {
    if (p.at("fraction").get<double>() > best) {
      best = p.at("fraction").get<double>();
      top = p.at("name").get<std::string>();
    }
  }
  EXPECT_EQ(top, "lr");
  EXPECT_GT(j.at("categories").at("learning").get<double>(),
            j.at("categories").at("architecture").get<double>());
  EXPECT_EQ(j.at("settings").at("trees"), 30);
}

}  // namespace
