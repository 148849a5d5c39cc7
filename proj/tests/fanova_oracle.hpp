// SPDX-License-Identifier: Apache-2.0
//
// Dense-grid reference for the tree decomposition and a uniform sampler
// for synthetic responses on the unit cube.
#pragma once

#include <functional>
#include <map>
#include <random>
#include <vector>

#include "har/fanova/forest.hpp"

namespace har::testing {

using fanova::Observations;
using fanova::Tree;

inline Observations sample(std::size_t n, std::size_t dims, std::uint64_t seed,
                    const std::function<double(const std::vector<double>&)>& f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Observations o;
  o.domain.assign(dims, {0.0, 1.0});
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(dims);
    for (auto& v : x) v = u(rng);
    o.y.push_back(f(x));
    o.x.push_back(std::move(x));
  }
  return o;
}

// Dense-grid decomposition of a tree over [0,1]^d: each axis is cut into
// `g` equal cells and the tree is evaluated at cell centres.
struct GridTerms {
  double mean = 0, total = 0;
  std::vector<double> main;
  std::map<std::pair<std::size_t, std::size_t>, double> pairs;
};

inline GridTerms grid_oracle(const Tree& t, std::size_t d, std::size_t g) {
  std::size_t cells = 1;
  for (std::size_t k = 0; k < d; ++k) cells *= g;
  std::vector<double> f(cells);
  std::vector<double> x(d);
  for (std::size_t c = 0; c < cells; ++c) {
    std::size_t r = c;
    for (std::size_t k = 0; k < d; ++k) {
      x[k] = (static_cast<double>(r % g) + 0.5) / static_cast<double>(g);
      r /= g;
    }
    f[c] = t.predict(x);
  }
  auto coord = [&](std::size_t c, std::size_t k) {
    for (std::size_t i = 0; i < k; ++i) c /= g;
    return c % g;
  };
  GridTerms out;
  double m2 = 0;
  for (double v : f) {
    out.mean += v;
    m2 += v * v;
  }
  out.mean /= static_cast<double>(cells);
  out.total = m2 / static_cast<double>(cells) - out.mean * out.mean;
  out.main.assign(d, 0);
  for (std::size_t k = 0; k < d; ++k) {
    std::vector<double> a(g, 0);
    for (std::size_t c = 0; c < cells; ++c) a[coord(c, k)] += f[c];
    double s = 0;
    for (double v : a) {
      const double m = v / static_cast<double>(cells / g);
      s += m * m / static_cast<double>(g);
    }
    out.main[k] = s - out.mean * out.mean;
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) {
      std::vector<double> a(g * g, 0);
      for (std::size_t c = 0; c < cells; ++c) a[coord(c, i) * g + coord(c, j)] += f[c];
      double s = 0;
      for (double v : a) {
        const double m = v / static_cast<double>(cells / (g * g));
        s += m * m / static_cast<double>(g * g);
      }
      out.pairs[{i, j}] = s - out.mean * out.mean - out.main[i] - out.main[j];
    }
  return out;
}

}  // namespace har::testing
