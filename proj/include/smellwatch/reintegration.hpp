// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <mutex>
#include <optional>
#include <vector>

#include "smellwatch/aggregate.hpp"
#include "smellwatch/store.hpp"

namespace smellwatch {

inline constexpr std::string_view kAggInstanceCategory = "agg.instance";
inline constexpr std::string_view kAggServiceCategory = "agg.service";
inline constexpr std::string_view kAggWindowCategory = "agg.window";

struct ReintegrationOptions {
  std::int64_t window_us = 60'000'000;
  std::int64_t lateness_us = 60'000'000;
};

/// All raw records of the window, deduplicated, in category then arrival order.
std::vector<TelemetryRecord> read_window(const Store& store, const WindowSpec& spec);

/// read_window + aggregate_window: the one-shot path over a store.
std::vector<InstanceAggregate> aggregate_store_window(const Store& store, const WindowSpec& spec);

/// Periodically folds closed raw windows into instance and service aggregates.
class Reintegrator {
 public:
  Reintegrator(Store& store, ReintegrationOptions options = {});

  /// Processes every closed, not-yet-processed window whose end is at or before
  /// now - lateness. Each window commits atomically together with the progress
  /// marker, so re-running never emits a window twice.
  std::vector<ServiceAggregate> run_cycle(TimestampUs now_us);

  /// Start of the first window the next cycle would consider, if any data exists.
  std::optional<TimestampUs> next_window_start() const;
  const ReintegrationOptions& options() const noexcept { return options_; }

 private:
  std::optional<TimestampUs> persisted_next() const;
  std::optional<TimestampUs> first_raw_at_or_after(TimestampUs from) const;

  Store& store_;
  ReintegrationOptions options_;
  std::mutex cycle_mutex_;
};

std::vector<ServiceAggregate> load_service_aggregates(const Store& store, TimestampUs from_us, TimestampUs to_us);
std::vector<InstanceAggregate> load_instance_aggregates(const Store& store, TimestampUs from_us, TimestampUs to_us);
/// Committed window starts in [from, to), ascending.
std::vector<WindowSpec> committed_windows(const Store& store, TimestampUs from_us, TimestampUs to_us);

}  // namespace smellwatch
