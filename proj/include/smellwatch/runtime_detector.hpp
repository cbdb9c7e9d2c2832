// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "smellwatch/aggregate.hpp"
#include "smellwatch/catalog.hpp"
#include "smellwatch/detection.hpp"
#include "smellwatch/static_analyzer.hpp"

namespace smellwatch {

struct DetectionContext {
  WindowSpec window;
  std::vector<ServiceAggregate> current;
  /// Prior windows per service, oldest first.
  std::map<std::string, std::vector<ServiceAggregate>> history;
  std::optional<SystemModel> static_model;
  std::optional<std::vector<DetectionRecord>> static_results;
};

/// Throws Error{argument} when current entries disagree on the window or a
/// history entry does not strictly precede it.
void validate(const DetectionContext& ctx);

/// Online/offline switch per bound smell.
class AlgorithmRegistry {
 public:
  AlgorithmRegistry() = default;
  /// Every bound catalog entry, online.
  explicit AlgorithmRegistry(const Catalog& catalog);
  explicit AlgorithmRegistry(std::map<std::string, bool> status) : status_(status.begin(), status.end()) {}

  bool contains(std::string_view smell_id) const noexcept;
  bool online(std::string_view smell_id) const noexcept;
  /// Throws Error{not_found} for ids the registry does not hold.
  void set(std::string_view smell_id, bool online);
  const std::map<std::string, bool, std::less<>>& status() const noexcept { return status_; }

  friend bool operator==(const AlgorithmRegistry&, const AlgorithmRegistry&) = default;

 private:
  std::map<std::string, bool, std::less<>> status_;
};

nlohmann::json to_json(const AlgorithmRegistry& r);

/// Ids of the 12 runtime detectors this build provides, sorted.
const std::vector<std::string>& runtime_detector_ids();

/// One record per online runtime smell and service in ctx.current, ordered by
/// smell id then service. Throws Error{configuration} when the registry holds
/// a runtime smell with no detector here.
std::vector<DetectionRecord> detect_runtime(const DetectionContext& ctx, const AlgorithmRegistry& registry,
                                            const DetectionParams& params);

/// Median of an unsorted list; 0 for an empty list.
double median(std::vector<double> values);

}  // namespace smellwatch
