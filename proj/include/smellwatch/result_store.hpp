// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "smellwatch/catalog.hpp"
#include "smellwatch/detection.hpp"
#include "smellwatch/store.hpp"

namespace smellwatch {

inline constexpr std::string_view kRunCategory = "det.run";
inline constexpr std::string_view kRecordCategory = "det.record";

/// Share of distinct smell types evaluated in range that fall in one taxonomy bucket.
struct InnerRingSlice {
  PrimaryType primary_type = PrimaryType::architecture;
  std::string secondary_type;
  std::int64_t types = 0;
  std::int64_t total_types = 0;
  double fraction = 0;

  friend bool operator==(const InnerRingSlice&, const InnerRingSlice&) = default;
};

struct OuterRingSlice {
  std::string smell_id;
  PrimaryType primary_type = PrimaryType::architecture;
  std::string secondary_type;
  std::int64_t detected = 0;
  std::int64_t evaluated = 0;
  double detected_fraction = 0;
  double not_detected_fraction = 0;

  friend bool operator==(const OuterRingSlice&, const OuterRingSlice&) = default;
};

struct DetectionCardSummary {
  std::int64_t executed = 0;
  std::int64_t positive = 0;
  std::vector<InnerRingSlice> inner_ring;
  std::vector<OuterRingSlice> outer_ring;

  friend bool operator==(const DetectionCardSummary&, const DetectionCardSummary&) = default;
};

struct HistoryEntry {
  WindowSpec window;
  std::string run_id;
  /// service -> detected smell ids (sorted). System-scope detections of the
  /// run are listed under every service the run evaluated.
  std::map<std::string, std::vector<std::string>> services;

  friend bool operator==(const HistoryEntry&, const HistoryEntry&) = default;
};

struct HistoryTimeline {
  std::vector<HistoryEntry> windows;

  friend bool operator==(const HistoryTimeline&, const HistoryTimeline&) = default;
};

nlohmann::json to_json(const DetectionCardSummary& s);
nlohmann::json to_json(const HistoryTimeline& t);

/// Detection runs and records on top of the segmented log. Ranges are
/// half-open over window start.
class ResultStore {
 public:
  explicit ResultStore(Store& store);

  /// Persists the summary and records in one frame. Throws Error{conflict} for
  /// a run id already stored and Error{argument} for records that disagree
  /// with the summary.
  std::string store_run(const DetectionRunSummary& summary, const std::vector<DetectionRecord>& records);

  bool has_run(std::string_view run_id) const;
  std::optional<TimestampUs> last_run_window_start() const;

  std::vector<DetectionRunSummary> runs(TimestampUs from_us, TimestampUs to_us) const;
  std::vector<DetectionRecord> records(TimestampUs from_us, TimestampUs to_us) const;

  DetectionCardSummary query_summary(TimestampUs from_us, TimestampUs to_us, const Catalog& catalog) const;
  HistoryTimeline query_history(const std::optional<std::string>& service, TimestampUs from_us,
                                TimestampUs to_us) const;
  /// Service-scoped records of `service`, ordered by window then smell id.
  std::vector<DetectionRecord> query_service_records(std::string_view service, TimestampUs from_us,
                                                     TimestampUs to_us) const;
  /// Stored record count per smell id in range.
  std::map<std::string, std::int64_t> record_counts(TimestampUs from_us, TimestampUs to_us) const;

 private:
  Store& store_;
  mutable std::mutex mutex_;
  std::set<std::string, std::less<>> run_ids_;
};

}  // namespace smellwatch
