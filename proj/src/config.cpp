// SPDX-License-Identifier: Apache-2.0

#include "smellwatch/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "smellwatch/error.hpp"

extern char** environ;

namespace smellwatch {

namespace {

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  fail(ErrorCode::configuration,
       "config key '" + std::string(key) + "': '" + std::string(value) + "' is not " + std::string(expected));
}

std::int64_t parse_int(std::string_view key, std::string_view value, std::int64_t lo, std::int64_t hi) {
  std::int64_t v = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc{} || ptr != end) bad_value(key, value, "an integer");
  if (v < lo || v > hi) {
    bad_value(key, value, "within [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return v;
}

double parse_positive(std::string_view key, std::string_view value) {
  std::string text(value);
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    bad_value(key, value, "a number");
  }
  if (used != text.size() || !std::isfinite(v)) bad_value(key, value, "a number");
  if (v <= 0) bad_value(key, value, "positive");
  return v;
}

using Setter = std::function<void(Config&, std::string_view key, std::string_view value)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  constexpr auto i64max = std::numeric_limits<std::int64_t>::max();
  static const std::map<std::string, Setter, std::less<>> table = {
      {"data_dir", [](Config& c, auto, auto v) { c.data_dir = std::string(v); }},
      {"host", [](Config& c, auto, auto v) { c.host = std::string(v); }},
      {"port", [](Config& c, auto k, auto v) { c.port = static_cast<int>(parse_int(k, v, 0, 65535)); }},
      {"cors_origin", [](Config& c, auto, auto v) { c.cors_origin = std::string(v); }},
      {"ui_dir", [](Config& c, auto, auto v) { c.ui_dir = std::string(v); }},
      {"manifests_dir", [](Config& c, auto, auto v) { c.manifests_dir = std::string(v); }},
      {"catalog", [](Config& c, auto, auto v) { c.catalog = std::string(v); }},
      {"ingest.lateness_s", [](Config& c, auto k, auto v) { c.lateness_s = parse_int(k, v, 0, 86'400); }},
      {"ingest.segment_bytes",
       [](Config& c, auto k, auto v) { c.segment_bytes = static_cast<std::uint64_t>(parse_int(k, v, 1024, i64max)); }},
      {"reintegration.window_s", [](Config& c, auto k, auto v) { c.window_s = parse_int(k, v, 1, 86'400); }},
      {"reintegration.cycle_period_s", [](Config& c, auto k, auto v) { c.reintegration_period_s = parse_positive(k, v); }},
      {"detection.cycle_period_s", [](Config& c, auto k, auto v) { c.detection_period_s = parse_positive(k, v); }},
      {"detection.history_depth",
       [](Config& c, auto k, auto v) { c.history_depth = static_cast<std::size_t>(parse_int(k, v, 0, 1000)); }},
  };
  return table;
}

std::string env_name(std::string_view key) {
  std::string out = "SMELLWATCH_";
  for (char ch : key) out += ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return out;
}

void apply_node(Config& config, const YAML::Node& node, const std::string& prefix, std::string_view source) {
  if (!node.IsMap()) {
    fail(ErrorCode::configuration, std::string(source) + ": '" + (prefix.empty() ? "<root>" : prefix) + "' must be a mapping");
  }
  for (const auto& kv : node) {
    const auto name = kv.first.as<std::string>();
    const auto key = prefix.empty() ? name : prefix + "." + name;
    if (key == "detection.thresholds") {
      if (!kv.second.IsMap()) fail(ErrorCode::configuration, std::string(source) + ": '" + key + "' must be a mapping");
      for (const auto& smell : kv.second) {
        const auto id = smell.first.as<std::string>();
        if (!smell.second.IsMap()) {
          fail(ErrorCode::configuration, std::string(source) + ": '" + key + "." + id + "' must be a mapping");
        }
        for (const auto& p : smell.second) {
          const auto pkey = key + "." + id + "." + p.first.as<std::string>();
          if (!p.second.IsScalar()) fail(ErrorCode::configuration, std::string(source) + ": '" + pkey + "' must be a number");
          config.thresholds[id][p.first.as<std::string>()] = parse_positive(pkey, p.second.Scalar());
        }
      }
      continue;
    }
    if (kv.second.IsMap()) {
      apply_node(config, kv.second, key, source);
      continue;
    }
    if (!kv.second.IsScalar()) {
      fail(ErrorCode::configuration, std::string(source) + ": '" + key + "' must be a scalar");
    }
    if (!setters().contains(key)) fail(ErrorCode::configuration, std::string(source) + ": unknown config key '" + key + "'");
    set_config_value(config, key, kv.second.Scalar());
  }
}

}  // namespace

nlohmann::json to_json(const Config& c) {
  nlohmann::json thresholds = nlohmann::json::object();
  for (const auto& [id, params] : c.thresholds) {
    for (const auto& [k, v] : params) thresholds[id][k] = v;
  }
  auto opt = [](const std::optional<std::filesystem::path>& p) {
    return p ? nlohmann::json(p->string()) : nlohmann::json(nullptr);
  };
  return nlohmann::json{{"data_dir", c.data_dir.string()},
                        {"host", c.host},
                        {"port", c.port},
                        {"cors_origin", c.cors_origin},
                        {"ui_dir", opt(c.ui_dir)},
                        {"manifests_dir", opt(c.manifests_dir)},
                        {"catalog", opt(c.catalog)},
                        {"ingest", {{"lateness_s", c.lateness_s}, {"segment_bytes", c.segment_bytes}}},
                        {"reintegration", {{"window_s", c.window_s}, {"cycle_period_s", c.reintegration_period_s}}},
                        {"detection",
                         {{"cycle_period_s", c.detection_period_s},
                          {"history_depth", c.history_depth},
                          {"thresholds", thresholds}}}};
}

void set_config_value(Config& config, std::string_view key, std::string_view value) {
  const auto it = setters().find(key);
  if (it == setters().end()) fail(ErrorCode::configuration, "unknown config key '" + std::string(key) + "'");
  it->second(config, key, value);
}

void apply_config_text(Config& config, std::string_view text, std::string_view source) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    fail(ErrorCode::configuration, std::string(source) + ": " + e.what());
  }
  if (root.IsNull()) return;
  apply_node(config, root, "", source);
}

void apply_config_file(Config& config, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::not_found, "cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(config, ss.str(), path.string());
}

void apply_env(Config& config, const std::vector<std::pair<std::string, std::string>>& env) {
  std::map<std::string, std::string> by_env;
  for (const auto& [key, setter] : setters()) by_env.emplace(env_name(key), key);
  for (const auto& [name, value] : env) {
    if (!name.starts_with("SMELLWATCH_")) continue;
    const auto it = by_env.find(name);
    if (it == by_env.end()) fail(ErrorCode::configuration, "unknown environment variable '" + name + "'");
    set_config_value(config, it->second, value);
  }
}

std::vector<std::pair<std::string, std::string>> process_environment() {
  std::vector<std::pair<std::string, std::string>> out;
  for (char** e = environ; e && *e; ++e) {
    std::string_view entry(*e);
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    out.emplace_back(std::string(entry.substr(0, eq)), std::string(entry.substr(eq + 1)));
  }
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, s] : setters()) out.push_back(k);
  return out;
}

}  // namespace smellwatch
