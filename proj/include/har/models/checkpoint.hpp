// SPDX-License-Identifier: Apache-2.0
//
// Flat named-parameter checkpoints as JSON:
//   {"format": "har.checkpoint", "version": 1, "meta": {...},
//    "parameters": [{"name": ..., "shape": [...], "values": [...]}, ...]}
// Values are written with round-trip precision.
#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "har/errors.hpp"
#include "har/models/parameters.hpp"

namespace har {

inline constexpr const char* kCheckpointFormat = "har.checkpoint";
inline constexpr int kCheckpointVersion = 1;

template <typename T>
nlohmann::json checkpoint_to_json(const ParameterSet<T>& params,
                                  const nlohmann::json& meta = {}) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["meta"] = meta.is_null() ? nlohmann::json::object() : meta;
  auto& list = j["parameters"] = nlohmann::json::array();
  for (const auto& p : params) {
    nlohmann::json e;
    e["name"] = p.name;
    e["shape"] = p.value.shape();
    e["values"] = std::vector<double>(p.value.values().begin(),
                                      p.value.values().end());
    list.push_back(std::move(e));
  }
  return j;
}

/// Copies the values of a checkpoint into a model whose parameter names and
/// shapes must match exactly.
template <typename T>
void checkpoint_from_json(const nlohmann::json& j, ParameterSet<T>& params) {
  if (j.value("format", "") != kCheckpointFormat ||
      j.value("version", 0) != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported format or version");
  }
  const auto& list = j.at("parameters");
  if (list.size() != params.count()) {
    throw DataError("checkpoint: expected " + std::to_string(params.count()) +
                    " parameters, found " + std::to_string(list.size()));
  }
  for (std::size_t i = 0; i < params.count(); ++i) {
    auto& p = params[i];
    const auto& e = list[i];
    if (e.at("name").get<std::string>() != p.name ||
        e.at("shape").get<std::vector<std::size_t>>() != p.value.shape()) {
      throw DataError("checkpoint: parameter " + std::to_string(i) +
                      " does not match " + p.name + p.value.shape_string());
    }
    const auto values = e.at("values").get<std::vector<double>>();
    if (values.size() != p.value.size()) {
      throw DataError("checkpoint: value count mismatch for " + p.name);
    }
    for (std::size_t k = 0; k < values.size(); ++k)
      p.value[k] = static_cast<T>(values[k]);
  }
}

template <typename T>
void save_checkpoint(const std::string& path, const ParameterSet<T>& params,
                     const nlohmann::json& meta = {}) {
  std::ofstream out(path);
  if (!out) throw DataError("checkpoint: cannot write " + path);
  out << checkpoint_to_json(params, meta).dump() << '\n';
  if (!out) throw DataError("checkpoint: write failed for " + path);
}

template <typename T>
nlohmann::json load_checkpoint(const std::string& path,
                               ParameterSet<T>& params) {
  std::ifstream in(path);
  if (!in) throw DataError("checkpoint: cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint: " + std::string(e.what()));
  }
  checkpoint_from_json(j, params);
  return j.value("meta", nlohmann::json::object());
}

}  // namespace har
