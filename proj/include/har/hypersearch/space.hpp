// SPDX-License-Identifier: Apache-2.0
//
// Random-search space per model family. A sampled configuration is kept
// both as Hyperparameters and as a flat numeric point (one coordinate per
// searched dimension) for later importance analysis.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "har/errors.hpp"
#include "har/training/hyperparameters.hpp"

namespace har {

enum class Category { learning, regularisation, architecture };

inline std::string to_string(Category c) {
  switch (c) {
    case Category::learning: return "learning";
    case Category::regularisation: return "regularisation";
    case Category::architecture: return "architecture";
  }
  return "?";
}

struct Dimension {
  std::string name;
  Category category = Category::learning;
  double lo = 0;
  double hi = 0;
  bool log_scale = false;
  bool integer = false;

  bool fixed() const { return lo == hi; }

  /// Value at uniform quantile u in [0, 1]: 10^(log10 lo + u·(log10 hi −
  /// log10 lo)) for log dimensions, linear otherwise. Integer dimensions
  /// map u to one of the hi−lo+1 values with equal probability.
  double quantile(double u) const {
    if (fixed()) return lo;
    if (integer) {
      const double count = std::round(hi) - std::round(lo) + 1;
      return std::min(std::round(hi), std::round(lo) + std::floor(u * count));
    }
    if (log_scale) {
      const double a = std::log10(lo), b = std::log10(hi);
      return std::pow(10.0, a + (b - a) * u);
    }
    return lo + (hi - lo) * u;
  }

  double sample(std::mt19937_64& rng) const {
    if (fixed()) return lo;
    if (integer) {
      std::uniform_int_distribution<long long> d(std::llround(lo), std::llround(hi));
      return static_cast<double>(d(rng));
    }
    return quantile(std::uniform_real_distribution<double>(0.0, 1.0)(rng));
  }

  /// Target cumulative distribution of `sample`.
  double cdf(double x) const {
    if (x < lo) return 0;
    if (x >= hi) return 1;
    if (integer) {
      const double k = std::floor(x) - std::round(lo) + 1;
      return k / (std::round(hi) - std::round(lo) + 1);
    }
    if (log_scale) return (std::log10(x) - std::log10(lo)) / (std::log10(hi) - std::log10(lo));
    return (x - lo) / (hi - lo);
  }
};

class SearchSpace {
 public:
  SearchSpace(Family family, std::vector<Dimension> dims)
      : family_(family), dims_(std::move(dims)) {
    for (const auto& d : dims_) {
      if (!(d.lo <= d.hi) || (d.log_scale && !(d.lo > 0))) {
        throw ConfigError("search space: bad range for " + d.name);
      }
    }
  }

  /// Ranges explored per family in the reference study.
  static SearchSpace table(Family f) {
    using C = Category;
    std::vector<Dimension> d;
    if (is_frame_family(f)) {
      d.push_back({"lr", C::learning, 1e-4, 1e-1, true, false});
      d.push_back({"lr_decay", C::learning, 1e-5, 1e-3, true, false});
      d.push_back({"momentum", C::regularisation, 0.0, 0.99, false, false});
      d.push_back({"max_in_norm", C::regularisation, 0.5, 4.0, false, false});
      if (f == Family::dnn) {
        d.push_back({"layers", C::architecture, 1, 5, false, true});
      } else {
        d.push_back({"layers", C::architecture, 1, 3, false, true});
      }
      d.push_back({"units", C::architecture, 64, 2048, false, true});
      if (f == Family::cnn) {
        d.push_back({"conv_layers", C::architecture, 1, 3, false, true});
        d.push_back({"kw1", C::architecture, 3, 9, false, true});
        d.push_back({"kw2", C::architecture, 3, 5, false, true});
        d.push_back({"kw3", C::architecture, 3, 3, false, true});
        d.push_back({"nf1", C::architecture, 16, 128, false, true});
        d.push_back({"nf2", C::architecture, 16, 128, false, true});
        d.push_back({"nf3", C::architecture, 16, 128, false, true});
      }
    } else {
      d.push_back({"lr", C::learning, 1e-3, 1e-1, true, false});
      if (f == Family::lstm_f) {
        d.push_back({"unroll", C::learning, 8, 64, false, true});
      } else {
        d.push_back({"unroll", C::learning, 32, 196, false, true});
      }
      d.push_back({"max_in_norm", C::regularisation, 0.5, 4.0, false, false});
      d.push_back({"p_carry", C::regularisation, 0.0, 1.0, false, false});
      d.push_back({"layers", C::architecture, 1, f == Family::blstm_s ? 1.0 : 3.0, false, true});
      d.push_back({"units", C::architecture, 64, 384, false, true});
    }
    return SearchSpace(f, std::move(d));
  }

  Family family() const noexcept { return family_; }
  const std::vector<Dimension>& dimensions() const noexcept { return dims_; }
  std::size_t size() const noexcept { return dims_.size(); }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < dims_.size(); ++i)
      if (dims_[i].name == name) return i;
    throw ConfigError("search space: no dimension " + name);
  }

  std::vector<double> sample_point(std::mt19937_64& rng) const {
    std::vector<double> x;
    x.reserve(dims_.size());
    for (const auto& d : dims_) x.push_back(d.sample(rng));
    return x;
  }

  /// Turns a point into a full configuration. Values are clamped to their
  /// ranges and integers rounded.
  Hyperparameters decode(const std::vector<double>& x) const {
    if (x.size() != dims_.size()) throw ConfigError("search space: point has wrong size");
    nlohmann::json j;
    j["family"] = to_string(family_);
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      const double v = std::clamp(x[i], dims_[i].lo, dims_[i].hi);
      if (dims_[i].integer) {
        j[dims_[i].name] = static_cast<std::size_t>(std::llround(v));
      } else {
        j[dims_[i].name] = v;
      }
    }
    Hyperparameters h = hyperparameters_from_json(j, default_hyperparameters(family_));
    if (family_ == Family::blstm_s) h.p_carry = 0;  // carry-over does not apply
    return h;
  }

  nlohmann::json point_to_json(const std::vector<double>& x) const {
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t i = 0; i < dims_.size(); ++i) j[dims_[i].name] = x.at(i);
    return j;
  }

  std::vector<double> point_from_json(const nlohmann::json& j) const {
    std::vector<double> x;
    for (const auto& d : dims_) {
      if (!j.contains(d.name)) throw DataError("record point lacks " + d.name);
      x.push_back(j.at(d.name).get<double>());
    }
    return x;
  }

 private:
  Family family_;
  std::vector<Dimension> dims_;
};

/// Number of configurations sampled per family in the full-scale study.
inline std::size_t full_scale_count(Family f) {
  switch (f) {
    case Family::dnn: return 1000;
    case Family::cnn: return 256;
    default: return 128;
  }
}

inline constexpr std::size_t kDeskScaleCount = 20;

}  // namespace har
