// SPDX-License-Identifier: Apache-2.0
//
// Functional ANOVA of a tree-partition model, exact for main effects and
// pairwise interactions.
//
// For a tree with leaves l (box B_l, value v_l) over a domain D, let
// w_d(l) = |B_l,d| / |D_d|. The marginal of a subset U of dimensions is
// piecewise constant on the grid formed by all leaf edges along U:
//
//   a_U(cell) = sum over leaves l covering the cell of v_l * prod_{d not in U} w_d(l)
//
// and V_U = Var(a_U) - sum of V_W over the proper non-empty subsets W of U.
// Variances are taken under the uniform measure on D.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "har/errors.hpp"
#include "har/fanova/forest.hpp"

namespace har::fanova {

/// Variance terms of one tree.
struct TreeDecomposition {
  double mean = 0;
  double total = 0;                               // V
  std::vector<double> main;                       // V_{d}
  std::map<std::pair<std::size_t, std::size_t>, double> pairs;  // V_{i,j}, i < j
};

namespace detail {

inline std::vector<double> edges(const std::vector<Leaf>& leaves, std::size_t d,
                                 const Interval& dom) {
  std::vector<double> e = {dom.lo, dom.hi};
  for (const auto& l : leaves) {
    e.push_back(l.box[d].lo);
    e.push_back(l.box[d].hi);
  }
  std::sort(e.begin(), e.end());
  e.erase(std::unique(e.begin(), e.end()), e.end());
  return e;
}

inline std::size_t edge_index(const std::vector<double>& e, double v) {
  return static_cast<std::size_t>(std::lower_bound(e.begin(), e.end(), v) - e.begin());
}

}  // namespace detail

/// Piecewise-constant marginal of one dimension: cell edges and values.
struct Marginal1 {
  std::vector<double> edges;   // k+1 edges
  std::vector<double> values;  // k cells
};

inline Marginal1 marginal(const Tree& tree, std::size_t d) {
  const auto& dom = tree.domain();
  if (d >= dom.size()) throw InvalidInput("fanova: unknown dimension");
  const auto leaves = tree.leaves();
  Marginal1 m;
  m.edges = detail::edges(leaves, d, dom[d]);
  const std::size_t cells = m.edges.size() - 1;
  std::vector<double> diff(cells + 1, 0.0);
  for (const auto& l : leaves) {
    double w = l.value;
    for (std::size_t k = 0; k < dom.size(); ++k)
      if (k != d) w *= l.box[k].width() / dom[k].width();
    diff[detail::edge_index(m.edges, l.box[d].lo)] += w;
    diff[detail::edge_index(m.edges, l.box[d].hi)] -= w;
  }
  m.values.resize(cells);
  double run = 0;
  for (std::size_t c = 0; c < cells; ++c) m.values[c] = run += diff[c];
  return m;
}

/// Piecewise-constant marginal of two dimensions on their edge grid.
struct Marginal2 {
  std::vector<double> edges_i, edges_j;
  std::vector<double> values;  // row-major, (cells_i) x (cells_j)
};

inline Marginal2 marginal(const Tree& tree, std::size_t di, std::size_t dj) {
  const auto& dom = tree.domain();
  if (di >= dom.size() || dj >= dom.size() || di == dj) {
    throw InvalidInput("fanova: bad dimension pair");
  }
  const auto leaves = tree.leaves();
  Marginal2 m;
  m.edges_i = detail::edges(leaves, di, dom[di]);
  m.edges_j = detail::edges(leaves, dj, dom[dj]);
  const std::size_t ni = m.edges_i.size() - 1, nj = m.edges_j.size() - 1;
  std::vector<double> diff((ni + 1) * (nj + 1), 0.0);
  auto at = [&](std::size_t a, std::size_t b) -> double& { return diff[a * (nj + 1) + b]; };
  for (const auto& l : leaves) {
    double w = l.value;
    for (std::size_t k = 0; k < dom.size(); ++k)
      if (k != di && k != dj) w *= l.box[k].width() / dom[k].width();
    const std::size_t a0 = detail::edge_index(m.edges_i, l.box[di].lo);
    const std::size_t a1 = detail::edge_index(m.edges_i, l.box[di].hi);
    const std::size_t b0 = detail::edge_index(m.edges_j, l.box[dj].lo);
    const std::size_t b1 = detail::edge_index(m.edges_j, l.box[dj].hi);
    at(a0, b0) += w;
    at(a1, b0) -= w;
    at(a0, b1) -= w;
    at(a1, b1) += w;
  }
  m.values.assign(ni * nj, 0.0);
  for (std::size_t a = 0; a <= ni; ++a)
    for (std::size_t b = 0; b <= nj; ++b) {
      if (a > 0) at(a, b) += at(a - 1, b);
      if (b > 0) at(a, b) += at(a, b - 1);
      if (a > 0 && b > 0) at(a, b) -= at(a - 1, b - 1);
    }
  for (std::size_t a = 0; a < ni; ++a)
    for (std::size_t b = 0; b < nj; ++b) m.values[a * nj + b] = at(a, b);
  return m;
}

namespace detail {

inline double second_moment(const Marginal1& m, const Interval& dom) {
  double s = 0;
  for (std::size_t c = 0; c < m.values.size(); ++c)
    s += (m.edges[c + 1] - m.edges[c]) / dom.width() * m.values[c] * m.values[c];
  return s;
}

inline double second_moment(const Marginal2& m, const Interval& di, const Interval& dj) {
  const std::size_t nj = m.edges_j.size() - 1;
  double s = 0;
  for (std::size_t a = 0; a + 1 < m.edges_i.size(); ++a) {
    const double wa = (m.edges_i[a + 1] - m.edges_i[a]) / di.width();
    for (std::size_t b = 0; b < nj; ++b) {
      const double v = m.values[a * nj + b];
      s += wa * (m.edges_j[b + 1] - m.edges_j[b]) / dj.width() * v * v;
    }
  }
  return s;
}

}  // namespace detail

/// Variance terms of one tree. Pairwise interactions are optional.
inline TreeDecomposition decompose(const Tree& tree, bool with_pairs = true) {
  const auto& dom = tree.domain();
  const auto leaves = tree.leaves();
  TreeDecomposition r;
  double m2 = 0;
  for (const auto& l : leaves) {
    double vol = 1;
    for (std::size_t k = 0; k < dom.size(); ++k) vol *= l.box[k].width() / dom[k].width();
    r.mean += vol * l.value;
    m2 += vol * l.value * l.value;
  }
  r.total = std::max(0.0, m2 - r.mean * r.mean);
  const double f0sq = r.mean * r.mean;
  const double floor = 1e-12 * std::max(r.total, f0sq);
  auto clean = [&](double v) { return v < floor ? 0.0 : v; };

  std::vector<char> used(dom.size());
  for (std::size_t d = 0; d < dom.size(); ++d) used[d] = tree.splits_on(d) ? 1 : 0;
  r.main.assign(dom.size(), 0.0);
  for (std::size_t d = 0; d < dom.size(); ++d) {
    if (!used[d]) continue;
    r.main[d] = clean(detail::second_moment(marginal(tree, d), dom[d]) - f0sq);
  }
  if (!with_pairs) return r;
  for (std::size_t i = 0; i < dom.size(); ++i)
    for (std::size_t j = i + 1; j < dom.size(); ++j) {
      if (!used[i] || !used[j]) {
        r.pairs[{i, j}] = 0.0;
        continue;
      }
      const double var = detail::second_moment(marginal(tree, i, j), dom[i], dom[j]) - f0sq;
      r.pairs[{i, j}] = clean(var - r.main[i] - r.main[j]);
    }
  return r;
}

/// Importance fractions V_U / V averaged over the trees that vary.
struct Importance {
  std::vector<double> main;
  std::map<std::pair<std::size_t, std::size_t>, double> pairs;
  double mean_total_variance = 0;
  std::size_t varying_trees = 0;

  double pair(std::size_t i, std::size_t j) const {
    if (i > j) std::swap(i, j);
    const auto it = pairs.find({i, j});
    return it == pairs.end() ? 0.0 : it->second;
  }
};

inline Importance importance(const Forest& forest, bool with_pairs = true) {
  if (forest.trees().empty()) throw InvalidInput("fanova: empty forest");
  const std::size_t d = forest.trees().front().domain().size();
  Importance imp;
  imp.main.assign(d, 0.0);
  if (with_pairs)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i + 1; j < d; ++j) imp.pairs[{i, j}] = 0.0;
  for (const auto& t : forest.trees()) {
    const auto dec = decompose(t, with_pairs);
    imp.mean_total_variance += dec.total;
    if (!(dec.total > 0)) continue;
    ++imp.varying_trees;
    for (std::size_t k = 0; k < d; ++k) imp.main[k] += dec.main[k] / dec.total;
    for (const auto& [key, v] : dec.pairs) imp.pairs[key] += v / dec.total;
  }
  imp.mean_total_variance /= static_cast<double>(forest.trees().size());
  if (imp.varying_trees > 0) {
    const double n = static_cast<double>(imp.varying_trees);
    for (auto& v : imp.main) v /= n;
    for (auto& [key, v] : imp.pairs) v /= n;
  }
  return imp;
}

/// Shares of variance per category (main effects plus pairs inside the
/// category) and the remaining share of cross-category pairs.
struct CategoryShares {
  std::vector<std::string> names;
  std::vector<double> shares;
  double interactions = 0;
};

inline CategoryShares category_importance(const Importance& imp,
                                          const std::vector<std::size_t>& category_of,
                                          std::vector<std::string> category_names) {
  if (category_of.size() != imp.main.size()) {
    throw InvalidInput("fanova: every dimension needs exactly one category");
  }
  for (std::size_t c : category_of)
    if (c >= category_names.size()) throw InvalidInput("fanova: unmapped dimension");
  CategoryShares out;
  out.names = std::move(category_names);
  out.shares.assign(out.names.size(), 0.0);
  for (std::size_t k = 0; k < imp.main.size(); ++k) out.shares[category_of[k]] += imp.main[k];
  for (const auto& [key, v] : imp.pairs) {
    if (category_of[key.first] == category_of[key.second]) {
      out.shares[category_of[key.first]] += v;
    } else {
      out.interactions += v;
    }
  }
  return out;
}

}  // namespace har::fanova
