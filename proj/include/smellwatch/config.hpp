// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "smellwatch/catalog.hpp"

namespace smellwatch {

/// Fully resolved service configuration.
struct Config {
  std::filesystem::path data_dir = "smellwatch-data";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string cors_origin;
  std::optional<std::filesystem::path> ui_dir;
  std::optional<std::filesystem::path> manifests_dir;
  std::optional<std::filesystem::path> catalog;

  std::int64_t lateness_s = 60;
  std::uint64_t segment_bytes = 8u << 20;
  std::int64_t window_s = 60;
  double reintegration_period_s = 10;
  double detection_period_s = 10;
  std::size_t history_depth = 10;
  /// detection.thresholds.<smell>.<param>
  std::map<std::string, ParamMap> thresholds;

  friend bool operator==(const Config&, const Config&) = default;
};

nlohmann::json to_json(const Config& c);

/// Sets one scalar key given in dotted form (`ingest.lateness_s`), parsing the
/// text as the key's type. Throws Error{configuration} for unknown keys and
/// malformed or out-of-range values.
void set_config_value(Config& config, std::string_view key, std::string_view value);

/// Applies a YAML (or JSON) document. Unknown keys anywhere are rejected.
void apply_config_text(Config& config, std::string_view text, std::string_view source);
void apply_config_file(Config& config, const std::filesystem::path& path);

/// Applies every `SMELLWATCH_*` variable in `env`; `SMELLWATCH_INGEST_LATENESS_S`
/// maps to `ingest.lateness_s`. Unknown `SMELLWATCH_*` names are rejected.
void apply_env(Config& config, const std::vector<std::pair<std::string, std::string>>& env);

/// The process environment as name/value pairs.
std::vector<std::pair<std::string, std::string>> process_environment();

/// Dotted keys accepted by set_config_value, sorted.
std::vector<std::string> config_keys();

}  // namespace smellwatch
