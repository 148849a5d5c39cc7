// SPDX-License-Identifier: Apache-2.0
//
// Regression forest over a bounded box of hyperparameters. Every tree is
// grown on a bootstrap sample, choosing each split among a random subset
// of dimensions, with at least `min_leaf` points per leaf. Thresholds are
// midpoints between neighbouring observed values, so every leaf box has
// positive volume.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <thread>
#include <vector>

#include "har/errors.hpp"

namespace har::fanova {

struct Interval {
  double lo = 0;
  double hi = 0;
  double width() const { return hi - lo; }
};

/// Observations on a box: x is n rows of d coordinates.
struct Observations {
  std::vector<Interval> domain;
  std::vector<std::vector<double>> x;
  std::vector<double> y;

  std::size_t dims() const noexcept { return domain.size(); }
  std::size_t size() const noexcept { return y.size(); }

  void validate() const {
    if (x.size() != y.size()) throw InvalidInput("fanova: x and y differ in length");
    for (const auto& d : domain)
      if (!(d.hi > d.lo)) throw InvalidInput("fanova: domain interval without width");
    for (const auto& row : x) {
      if (row.size() != dims()) throw InvalidInput("fanova: point of wrong dimension");
      for (std::size_t k = 0; k < row.size(); ++k)
        if (!(row[k] >= domain[k].lo && row[k] <= domain[k].hi))
          throw InvalidInput("fanova: point outside the domain");
    }
    for (double v : y)
      if (!std::isfinite(v)) throw InvalidInput("fanova: non-finite response");
  }
};

struct Node {
  int dim = -1;  // -1 for a leaf
  double threshold = 0;
  std::size_t left = 0;
  std::size_t right = 0;
  double value = 0;
};

struct Leaf {
  std::vector<Interval> box;
  double value = 0;
};

class Tree {
 public:
  Tree() = default;
  explicit Tree(std::vector<Interval> domain) : domain_(std::move(domain)) {}

  /// Builds a tree directly from nodes (node 0 is the root).
  Tree(std::vector<Interval> domain, std::vector<Node> nodes)
      : domain_(std::move(domain)), nodes_(std::move(nodes)) {
    if (nodes_.empty()) throw InvalidInput("tree: no nodes");
  }

  const std::vector<Interval>& domain() const noexcept { return domain_; }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  std::vector<Node>& nodes() noexcept { return nodes_; }

  double predict(const std::vector<double>& x) const {
    std::size_t i = 0;
    while (nodes_[i].dim >= 0) {
      const auto& n = nodes_[i];
      i = x[static_cast<std::size_t>(n.dim)] <= n.threshold ? n.left : n.right;
    }
    return nodes_[i].value;
  }

  /// Leaves with their boxes, clipped to the domain.
  std::vector<Leaf> leaves() const {
    std::vector<Leaf> out;
    collect(0, domain_, out);
    return out;
  }

  /// Whether any split uses dimension d.
  bool splits_on(std::size_t d) const {
    for (const auto& n : nodes_)
      if (n.dim == static_cast<int>(d)) return true;
    return false;
  }

 private:
  void collect(std::size_t i, std::vector<Interval> box, std::vector<Leaf>& out) const {
    const auto& n = nodes_[i];
    if (n.dim < 0) {
      out.push_back({std::move(box), n.value});
      return;
    }
    const auto d = static_cast<std::size_t>(n.dim);
    auto left = box;
    left[d].hi = std::min(left[d].hi, n.threshold);
    box[d].lo = std::max(box[d].lo, n.threshold);
    collect(n.left, std::move(left), out);
    collect(n.right, std::move(box), out);
  }

  std::vector<Interval> domain_;
  std::vector<Node> nodes_;
};

struct ForestOptions {
  std::size_t trees = 30;
  std::size_t min_leaf = 3;
  std::size_t min_records = 20;
  /// Dimensions tried per split; 0 means ceil(0.7 d).
  std::size_t features_per_split = 0;
  bool bootstrap = true;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

namespace detail {

class TreeBuilder {
 public:
  TreeBuilder(const Observations& obs, const ForestOptions& o, std::mt19937_64& rng)
      : obs_(obs), o_(o), rng_(rng) {
    const std::size_t d = obs.dims();
    features_ = o.features_per_split ? std::min(o.features_per_split, d)
                                     : std::max<std::size_t>(1, (7 * d + 9) / 10);
  }

  Tree build(std::vector<std::size_t> rows) {
    Tree t(obs_.domain);
    grow(t.nodes(), std::move(rows));
    return t;
  }

 private:
  // Mean taken relative to the first value, so constant responses are
  // reproduced exactly.
  double mean(const std::vector<std::size_t>& rows) const {
    const double base = obs_.y[rows.front()];
    double s = 0;
    for (auto r : rows) s += obs_.y[r] - base;
    return base + s / static_cast<double>(rows.size());
  }

  std::size_t grow(std::vector<Node>& nodes, std::vector<std::size_t> rows) {
    const std::size_t id = nodes.size();
    nodes.push_back({});
    nodes[id].value = mean(rows);
    if (rows.size() < 2 * o_.min_leaf) return id;

    std::vector<std::size_t> dims(obs_.dims());
    std::iota(dims.begin(), dims.end(), 0);
    std::shuffle(dims.begin(), dims.end(), rng_);

    double best_gain = 0;
    int best_dim = -1;
    double best_threshold = 0;
    double total = 0, total_sq = 0;
    for (auto r : rows) {
      total += obs_.y[r];
      total_sq += obs_.y[r] * obs_.y[r];
    }
    const double n = static_cast<double>(rows.size());
    const double parent_sse = total_sq - total * total / n;
    if (parent_sse <= 1e-14 * std::max(1.0, total_sq)) return id;

    std::vector<std::size_t> order = rows;
    // Dimensions beyond the random subset are tried only while no valid
    // split has been found, so a node splits whenever some dimension can.
    for (std::size_t k = 0; k < dims.size(); ++k) {
      if (k >= features_ && best_dim >= 0) break;
      const std::size_t d = dims[k];
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return obs_.x[a][d] < obs_.x[b][d];
      });
      double ls = 0, lsq = 0;
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        const double v = obs_.y[order[i]];
        ls += v;
        lsq += v * v;
        const std::size_t nl = i + 1, nr = order.size() - nl;
        if (nl < o_.min_leaf || nr < o_.min_leaf) continue;
        const double a = obs_.x[order[i]][d], b = obs_.x[order[i + 1]][d];
        if (!(b > a)) continue;
        const double rs = total - ls, rsq = total_sq - lsq;
        const double sse = (lsq - ls * ls / static_cast<double>(nl)) +
                           (rsq - rs * rs / static_cast<double>(nr));
        const double gain = parent_sse - sse;
        if (gain > best_gain + 1e-15) {
          best_gain = gain;
          best_dim = static_cast<int>(d);
          best_threshold = 0.5 * (a + b);
        }
      }
    }
    if (best_dim < 0) return id;

    std::vector<std::size_t> left, right;
    for (auto r : rows)
      (obs_.x[r][static_cast<std::size_t>(best_dim)] <= best_threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    nodes[id].dim = best_dim;
    nodes[id].threshold = best_threshold;
    const std::size_t l = grow(nodes, std::move(left));
    const std::size_t r = grow(nodes, std::move(right));
    nodes[id].left = l;
    nodes[id].right = r;
    return id;
  }

  const Observations& obs_;
  const ForestOptions& o_;
  std::mt19937_64& rng_;
  std::size_t features_ = 1;
};

inline std::uint64_t tree_seed(std::uint64_t seed, std::size_t t) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (t + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

class Forest {
 public:
  Forest() = default;
  explicit Forest(std::vector<Tree> trees) : trees_(std::move(trees)) {}

  const std::vector<Tree>& trees() const noexcept { return trees_; }

  double predict(const std::vector<double>& x) const {
    double s = 0;
    for (const auto& t : trees_) s += t.predict(x);
    return s / static_cast<double>(trees_.size());
  }

 private:
  std::vector<Tree> trees_;
};

/// Fits a forest; the result depends only on the data and the seed.
inline Forest fit_forest(const Observations& obs, const ForestOptions& o = {}) {
  obs.validate();
  if (obs.size() < o.min_records) {
    throw InvalidInput("fanova: need at least " + std::to_string(o.min_records) +
                       " records, got " + std::to_string(obs.size()));
  }
  if (o.trees == 0 || o.min_leaf == 0) throw ConfigError("fanova: trees and min_leaf must be >= 1");
  std::vector<Tree> trees(o.trees);
  auto fit_one = [&](std::size_t t) {
    std::mt19937_64 rng(detail::tree_seed(o.seed, t));
    std::vector<std::size_t> rows(obs.size());
    if (o.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, obs.size() - 1);
      for (auto& r : rows) r = pick(rng);
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }
    trees[t] = detail::TreeBuilder(obs, o, rng).build(std::move(rows));
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(o.threads, o.trees));
  if (threads == 1) {
    for (std::size_t t = 0; t < o.trees; ++t) fit_one(t);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t t = w; t < o.trees; t += threads) fit_one(t);
      });
    }
    for (auto& th : pool) th.join();
  }
  return Forest(std::move(trees));
}

}  // namespace har::fanova
