// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "smellwatch/aggregate.hpp"
#include "smellwatch/catalog.hpp"

namespace smellwatch {

inline constexpr std::string_view kSystemScope = "system";

using EvidenceValue = std::variant<double, std::string>;
using Evidence = std::map<std::string, EvidenceValue>;

enum class Comparator { ge, gt, le, lt };

std::string_view to_string(Comparator c) noexcept;
std::optional<Comparator> parse_comparator(std::string_view s) noexcept;
bool compare(double value, Comparator c, double threshold) noexcept;

/// One smell verdict for one scope. `detected` always equals
/// compare(metric_value, comparator, threshold).
struct DetectionRecord {
  std::string run_id;
  WindowSpec window{0, 0};
  std::string scope;
  std::string smell_id;
  bool detected = false;
  double metric_value = 0;
  double threshold = 0;
  Comparator comparator = Comparator::ge;
  Evidence evidence;
  ParamMap params_snapshot;
  TimestampUs created_at_us = 0;

  friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

struct DetectionRunSummary {
  std::string run_id;
  WindowSpec window{0, 0};
  bool executed = false;
  bool positive = false;
  std::size_t record_count = 0;

  friend bool operator==(const DetectionRunSummary&, const DetectionRunSummary&) = default;
};

nlohmann::json to_json(const Evidence& e);
nlohmann::json to_json(const DetectionRecord& r);
nlohmann::json to_json(const DetectionRunSummary& s);
DetectionRecord detection_record_from_json(const nlohmann::json& j);
DetectionRunSummary run_summary_from_json(const nlohmann::json& j);

/// A single "statistic vs threshold" test inside a rule.
struct Clause {
  std::string stat;
  double value = 0;
  Comparator comparator = Comparator::ge;
  double threshold = 0;

  bool holds() const noexcept { return compare(value, comparator, threshold); }
};

/// A rule is a conjunction of terms; each term is a disjunction of clauses.
using RuleTerms = std::vector<std::vector<Clause>>;

/// Evaluates the rule and reports the clause that decides it: for a positive
/// verdict a satisfied clause of the first term, otherwise a failing clause of
/// the first failing term. The record's metric/threshold come from that clause,
/// so the verdict can be re-derived from the record alone.
DetectionRecord evaluate_rule(std::string_view smell_id, std::string_view scope, const RuleTerms& terms,
                              Evidence evidence, const ParamMap& params);

/// Per-smell parameters resolved from catalog defaults plus deployment overrides.
class DetectionParams {
 public:
  DetectionParams() = default;
  /// Throws Error{configuration} for overrides naming unknown smells or
  /// parameters, and for non-positive values.
  static DetectionParams from_catalog(const Catalog& catalog,
                                      const std::map<std::string, ParamMap>& overrides = {});

  const ParamMap& for_smell(std::string_view smell_id) const;
  double get(std::string_view smell_id, std::string_view key) const;
  bool has(std::string_view smell_id) const noexcept { return params_.find(smell_id) != params_.end(); }

 private:
  std::map<std::string, ParamMap, std::less<>> params_;
};

}  // namespace smellwatch
