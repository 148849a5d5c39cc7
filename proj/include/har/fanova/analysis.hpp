// SPDX-License-Identifier: Apache-2.0
//
// Importance analysis of search records: builds the observation box from
// the search space (log10 for log-scaled dimensions, unit-width cells for
// integers) and reports per-parameter and per-category variance shares.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "har/errors.hpp"
#include "har/fanova/decomposition.hpp"
#include "har/fanova/forest.hpp"
#include "har/hypersearch/space.hpp"

namespace har::fanova {

inline Interval analysis_interval(const Dimension& d) {
  if (d.integer) return {d.lo - 0.5, d.hi + 0.5};
  if (d.log_scale) {
    const double a = std::log10(d.lo), b = std::log10(d.hi);
    return a < b ? Interval{a, b} : Interval{a - 0.5, a + 0.5};
  }
  return d.lo < d.hi ? Interval{d.lo, d.hi} : Interval{d.lo - 0.5, d.lo + 0.5};
}

inline double analysis_coordinate(const Dimension& d, double v) {
  const Interval box = analysis_interval(d);
  const double x = d.log_scale && !d.integer ? std::log10(v) : v;
  return std::clamp(x, box.lo, box.hi);
}

/// Observations of one family's records; the response is the record score.
inline Observations observations_from_records(const SearchSpace& space,
                                              const std::vector<nlohmann::json>& records) {
  Observations obs;
  for (const auto& d : space.dimensions()) obs.domain.push_back(analysis_interval(d));
  const std::string family = to_string(space.family());
  for (const auto& r : records) {
    if (r.value("family", "") != family) continue;
    const auto p = space.point_from_json(r.at("point"));
    std::vector<double> row;
    for (std::size_t k = 0; k < p.size(); ++k)
      row.push_back(analysis_coordinate(space.dimensions()[k], p[k]));
    const double y = r.at("score").get<double>();
    if (!(y >= 0 && y <= 1)) throw DataError("fanova: score outside [0, 1] in " + r.value("key", "?"));
    obs.x.push_back(std::move(row));
    obs.y.push_back(y);
  }
  return obs;
}

/// Full analysis of one family as JSON, including the forest settings
/// behind the reported shares.
inline nlohmann::json analyze_records(const SearchSpace& space,
                                      const std::vector<nlohmann::json>& records,
                                      const ForestOptions& options = {}) {
  const Observations obs = observations_from_records(space, records);
  const Forest forest = fit_forest(obs, options);
  const Importance imp = importance(forest);
  std::vector<std::size_t> cat;
  for (const auto& d : space.dimensions()) cat.push_back(static_cast<std::size_t>(d.category));
  const auto shares = category_importance(
      imp, cat, {to_string(Category::learning), to_string(Category::regularisation),
                 to_string(Category::architecture)});

  nlohmann::json j;
  j["family"] = to_string(space.family());
  j["records"] = obs.size();
  j["settings"] = {{"trees", options.trees},
                   {"min_leaf", options.min_leaf},
                   {"bootstrap", options.bootstrap},
                   {"seed", options.seed},
                   {"interaction_order", 2},
                   {"fractions", "per-tree V_U/V averaged over trees with V > 0"},
                   {"scales", "log10 for log-uniform parameters, integers widened by 0.5"}};
  j["mean_total_variance"] = imp.mean_total_variance;
  auto& params = j["parameters"] = nlohmann::json::array();
  for (std::size_t k = 0; k < space.size(); ++k) {
    params.push_back({{"name", space.dimensions()[k].name},
                      {"category", to_string(space.dimensions()[k].category)},
                      {"fraction", imp.main[k]}});
  }
  auto& pairs = j["pairs"] = nlohmann::json::array();
  for (const auto& [key, v] : imp.pairs) {
    pairs.push_back({{"a", space.dimensions()[key.first].name},
                     {"b", space.dimensions()[key.second].name},
                     {"fraction", v}});
  }
  auto& cats = j["categories"] = nlohmann::json::object();
  for (std::size_t c = 0; c < shares.names.size(); ++c) cats[shares.names[c]] = shares.shares[c];
  j["interactions"] = shares.interactions;
  return j;
}

}  // namespace har::fanova
