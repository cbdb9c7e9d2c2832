// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "smellwatch/result_store.hpp"
#include "smellwatch/runtime_detector.hpp"
#include "smellwatch/static_analyzer.hpp"
#include "smellwatch/store.hpp"

namespace smellwatch {

inline constexpr std::string_view kRegistryCategory = "state.registry";

struct EngineOptions {
  std::size_t history_depth = 10;
};

struct RegistryChange {
  std::string smell_id;
  bool online = true;
  TimestampUs at_us = 0;

  friend bool operator==(const RegistryChange&, const RegistryChange&) = default;
};

nlohmann::json to_json(const RegistryChange& c);

/// Builds a context for `window` from committed aggregates: the window's
/// service aggregates plus up to `history_depth` earlier ones per service.
DetectionContext build_context(const Store& store, const WindowSpec& window, std::size_t history_depth);

/// One detection run per committed window, in window order.
class DetectionEngine {
 public:
  DetectionEngine(Store& store, ResultStore& results, const Catalog& catalog, DetectionParams params,
                  EngineOptions options = {});

  /// Detects the earliest committed window that has no stored run yet.
  /// Returns executed=false when there is none. A store failure propagates as
  /// Error{store} and leaves the window for the next call.
  DetectionRunSummary run_detection_cycle(TimestampUs now_us);

  /// Registers (or clears) the static model. Static results are recomputed
  /// only when the model's content changes.
  void set_system_model(std::optional<SystemModel> model);
  std::optional<SystemModel> system_model() const;

  /// Throws Error{not_found} for ids that are not bound in the catalog.
  AlgorithmRegistry set_algorithm_status(std::string_view smell_id, bool online, TimestampUs now_us);
  AlgorithmRegistry registry() const;
  std::vector<RegistryChange> audit_log() const;

  const Catalog& catalog() const noexcept { return catalog_; }
  const DetectionParams& params() const noexcept { return params_; }

 private:
  std::optional<WindowSpec> next_window() const;
  std::vector<DetectionRecord> static_records();

  Store& store_;
  ResultStore& results_;
  const Catalog& catalog_;
  DetectionParams params_;
  EngineOptions options_;

  std::mutex cycle_mutex_;
  mutable std::mutex state_mutex_;
  AlgorithmRegistry registry_;
  std::optional<SystemModel> model_;
  std::string cached_fingerprint_;
  std::vector<DetectionRecord> cached_static_;
};

}  // namespace smellwatch
