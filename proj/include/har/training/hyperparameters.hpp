// SPDX-License-Identifier: Apache-2.0
//
// One model configuration. Fields that a family does not use keep their
// zero defaults and are omitted from its JSON form.
#pragma once

#include <array>
#include <cstddef>
#include <string>

#include <json.hpp>

#include "har/errors.hpp"

namespace har {

enum class Family { dnn, cnn, lstm_f, lstm_s, blstm_s };

inline constexpr std::array<Family, 5> kFamilies = {
    Family::dnn, Family::cnn, Family::lstm_f, Family::lstm_s, Family::blstm_s};

inline std::string to_string(Family f) {
  switch (f) {
    case Family::dnn: return "dnn";
    case Family::cnn: return "cnn";
    case Family::lstm_f: return "lstm-f";
    case Family::lstm_s: return "lstm-s";
    case Family::blstm_s: return "blstm-s";
  }
  return "?";
}

inline Family parse_family(const std::string& s) {
  for (Family f : kFamilies)
    if (to_string(f) == s) return f;
  throw ConfigError("unknown model family '" + s + "'");
}

/// True for families trained on frames with stratified mini-batches.
inline bool is_frame_family(Family f) { return f == Family::dnn || f == Family::cnn; }
/// True for families consuming one sample per time step.
inline bool is_sample_family(Family f) {
  return f == Family::lstm_s || f == Family::blstm_s;
}
inline bool is_recurrent(Family f) { return !is_frame_family(f); }

struct Hyperparameters {
  Family family = Family::dnn;
  // learning
  double learning_rate = 0.01;
  double lr_decay = 0;
  std::size_t unroll = 0;  // L, in samples (frames for lstm-f)
  // regularisation
  double momentum = 0;
  double max_in_norm = 4.0;
  double p_carry = 0;
  // architecture
  std::size_t layers = 1;  // hidden (dnn), fully connected (cnn) or recurrent
  std::size_t units = 64;
  std::size_t conv_layers = 0;
  std::array<std::size_t, 3> kernel_width{};
  std::array<std::size_t, 3> filters{};

  friend bool operator==(const Hyperparameters&, const Hyperparameters&) = default;
};

inline nlohmann::json to_json(const Hyperparameters& h) {
  nlohmann::json j;
  j["family"] = to_string(h.family);
  j["lr"] = h.learning_rate;
  j["max_in_norm"] = h.max_in_norm;
  j["layers"] = h.layers;
  j["units"] = h.units;
  if (is_frame_family(h.family)) {
    j["lr_decay"] = h.lr_decay;
    j["momentum"] = h.momentum;
  } else {
    j["unroll"] = h.unroll;
    j["p_carry"] = h.p_carry;
  }
  if (h.family == Family::cnn) {
    j["conv_layers"] = h.conv_layers;
    for (std::size_t i = 0; i < h.conv_layers && i < 3; ++i) {
      j["kw" + std::to_string(i + 1)] = h.kernel_width[i];
      j["nf" + std::to_string(i + 1)] = h.filters[i];
    }
  }
  return j;
}

/// Reads a configuration; keys absent from `j` keep the values of `base`.
inline Hyperparameters hyperparameters_from_json(const nlohmann::json& j,
                                                 Hyperparameters base = {}) {
  Hyperparameters h = base;
  try {
    if (j.contains("family")) h.family = parse_family(j.at("family").get<std::string>());
    h.learning_rate = j.value("lr", h.learning_rate);
    h.lr_decay = j.value("lr_decay", h.lr_decay);
    h.unroll = j.value("unroll", h.unroll);
    h.momentum = j.value("momentum", h.momentum);
    h.max_in_norm = j.value("max_in_norm", h.max_in_norm);
    h.p_carry = j.value("p_carry", h.p_carry);
    h.layers = j.value("layers", h.layers);
    h.units = j.value("units", h.units);
    h.conv_layers = j.value("conv_layers", h.conv_layers);
    for (std::size_t i = 0; i < 3; ++i) {
      h.kernel_width[i] = j.value("kw" + std::to_string(i + 1), h.kernel_width[i]);
      h.filters[i] = j.value("nf" + std::to_string(i + 1), h.filters[i]);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("hyperparameters: ") + e.what());
  }
  return h;
}

/// Moderate in-range settings used when a family is trained without a
/// search.
inline Hyperparameters default_hyperparameters(Family f) {
  Hyperparameters h;
  h.family = f;
  h.max_in_norm = 2.0;
  switch (f) {
    case Family::dnn:
      h.learning_rate = 0.01;
      h.momentum = 0.9;
      h.layers = 2;
      h.units = 128;
      break;
    case Family::cnn:
      h.learning_rate = 0.01;
      h.momentum = 0.9;
      h.layers = 1;
      h.units = 128;
      h.conv_layers = 1;
      h.kernel_width = {5, 0, 0};
      h.filters = {32, 0, 0};
      break;
    case Family::lstm_f:
      h.learning_rate = 0.05;
      h.layers = 1;
      h.units = 64;
      h.unroll = 16;
      h.p_carry = 0.5;
      break;
    case Family::lstm_s:
      h.learning_rate = 0.05;
      h.layers = 1;
      h.units = 64;
      h.unroll = 64;
      h.p_carry = 0.5;
      break;
    case Family::blstm_s:
      h.learning_rate = 0.05;
      h.layers = 1;
      h.units = 64;
      h.unroll = 64;
      break;
  }
  return h;
}

}  // namespace har
