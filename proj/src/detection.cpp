// SPDX-License-Identifier: Apache-2.0

#include "smellwatch/detection.hpp"

#include "smellwatch/error.hpp"

namespace smellwatch {

using nlohmann::json;

std::string_view to_string(Comparator c) noexcept {
  switch (c) {
    case Comparator::ge: return ">=";
    case Comparator::gt: return ">";
    case Comparator::le: return "<=";
    case Comparator::lt: return "<";
  }
  return "";
}

std::optional<Comparator> parse_comparator(std::string_view s) noexcept {
  if (s == ">=") return Comparator::ge;
  if (s == ">") return Comparator::gt;
  if (s == "<=") return Comparator::le;
  if (s == "<") return Comparator::lt;
  return std::nullopt;
}

bool compare(double value, Comparator c, double threshold) noexcept {
  switch (c) {
    case Comparator::ge: return value >= threshold;
    case Comparator::gt: return value > threshold;
    case Comparator::le: return value <= threshold;
    case Comparator::lt: return value < threshold;
  }
  return false;
}

json to_json(const Evidence& e) {
  json j = json::object();
  for (const auto& [k, v] : e) std::visit([&](const auto& x) { j[k] = x; }, v);
  return j;
}

json to_json(const DetectionRecord& r) {
  return json{{"run_id", r.run_id},
              {"window", to_json(r.window)},
              {"scope", r.scope},
              {"smell_id", r.smell_id},
              {"detected", r.detected},
              {"metric_value", r.metric_value},
              {"threshold", r.threshold},
              {"comparator", to_string(r.comparator)},
              {"evidence", to_json(r.evidence)},
              {"params_snapshot", r.params_snapshot},
              {"created_at_us", r.created_at_us}};
}

json to_json(const DetectionRunSummary& s) {
  return json{{"run_id", s.run_id},
              {"window", to_json(s.window)},
              {"executed", s.executed},
              {"positive", s.positive},
              {"record_count", s.record_count}};
}

DetectionRecord detection_record_from_json(const json& j) {
  DetectionRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.window = window_from_json(j.at("window"));
  r.scope = j.at("scope").get<std::string>();
  r.smell_id = j.at("smell_id").get<std::string>();
  r.detected = j.at("detected").get<bool>();
  r.metric_value = j.at("metric_value").get<double>();
  r.threshold = j.at("threshold").get<double>();
  auto cmp = parse_comparator(j.at("comparator").get<std::string>());
  if (!cmp) fail(ErrorCode::parse, "detection record: bad comparator");
  r.comparator = *cmp;
  for (const auto& [k, v] : j.at("evidence").items()) {
    if (v.is_string()) {
      r.evidence[k] = v.get<std::string>();
    } else {
      r.evidence[k] = v.get<double>();
    }
  }
  r.params_snapshot = j.at("params_snapshot").get<ParamMap>();
  r.created_at_us = j.at("created_at_us").get<TimestampUs>();
  return r;
}

DetectionRunSummary run_summary_from_json(const json& j) {
  DetectionRunSummary s;
  s.run_id = j.at("run_id").get<std::string>();
  s.window = window_from_json(j.at("window"));
  s.executed = j.at("executed").get<bool>();
  s.positive = j.at("positive").get<bool>();
  s.record_count = j.at("record_count").get<std::size_t>();
  return s;
}

DetectionRecord evaluate_rule(std::string_view smell_id, std::string_view scope, const RuleTerms& terms,
                              Evidence evidence, const ParamMap& params) {
  if (terms.empty() || terms.front().empty()) fail(ErrorCode::configuration, "rule without clauses");
  const Clause* binding = nullptr;
  bool detected = true;
  for (const auto& term : terms) {
    const Clause* satisfied = nullptr;
    for (const auto& c : term) {
      if (c.holds()) {
        satisfied = &c;
        break;
      }
    }
    if (!satisfied) {
      detected = false;
      binding = &term.front();
      break;
    }
    if (!binding) binding = satisfied;
  }
  for (const auto& term : terms) {
    for (const auto& c : term) evidence.emplace(c.stat, c.value);
  }
  evidence["decision_stat"] = binding->stat;

  DetectionRecord r;
  r.scope = std::string(scope);
  r.smell_id = std::string(smell_id);
  r.metric_value = binding->value;
  r.threshold = binding->threshold;
  r.comparator = binding->comparator;
  r.detected = detected;
  r.evidence = std::move(evidence);
  r.params_snapshot = params;
  return r;
}

DetectionParams DetectionParams::from_catalog(const Catalog& catalog,
                                              const std::map<std::string, ParamMap>& overrides) {
  DetectionParams p;
  for (const auto* e : catalog.bound_entries()) p.params_[e->id] = e->default_params;
  for (const auto& [smell, values] : overrides) {
    auto it = p.params_.find(smell);
    if (it == p.params_.end()) fail(ErrorCode::configuration, "override for unknown or unbound smell '" + smell + "'");
    for (const auto& [key, v] : values) {
      if (!it->second.contains(key)) {
        fail(ErrorCode::configuration, "override '" + smell + "." + key + "' names no parameter of that detector");
      }
      it->second[key] = v;
    }
  }
  for (const auto& [smell, values] : p.params_) {
    for (const auto& [key, v] : values) {
      if (!(v > 0)) fail(ErrorCode::configuration, "parameter '" + smell + "." + key + "' must be positive");
    }
  }
  return p;
}

const ParamMap& DetectionParams::for_smell(std::string_view smell_id) const {
  auto it = params_.find(smell_id);
  if (it == params_.end()) fail(ErrorCode::configuration, "no parameters for smell '" + std::string(smell_id) + "'");
  return it->second;
}

double DetectionParams::get(std::string_view smell_id, std::string_view key) const {
  const auto& m = for_smell(smell_id);
  auto it = m.find(std::string(key));
  if (it == m.end()) {
    fail(ErrorCode::configuration, "missing parameter '" + std::string(smell_id) + "." + std::string(key) + "'");
  }
  return it->second;
}

}  // namespace smellwatch
