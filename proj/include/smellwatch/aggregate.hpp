// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "smellwatch/telemetry.hpp"

namespace smellwatch {

/// Half-open interval [start_us, start_us + length_us).
struct WindowSpec {
  TimestampUs start_us = 0;
  std::int64_t length_us = 60'000'000;

  TimestampUs end_us() const noexcept { return start_us + length_us; }
  bool contains(TimestampUs ts) const noexcept { return ts >= start_us && ts < end_us(); }
  double seconds() const noexcept { return static_cast<double>(length_us) / 1e6; }

  friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
  friend auto operator<=>(const WindowSpec&, const WindowSpec&) = default;
};

/// Largest multiple of `length` that is <= ts.
TimestampUs align_down(TimestampUs ts, std::int64_t length) noexcept;

struct BusinessCounters {
  std::int64_t calls = 0;
  std::int64_t errors = 0;
  double latency_sum_ms = 0;

  friend bool operator==(const BusinessCounters&, const BusinessCounters&) = default;
};

/// Fields shared by instance- and service-level window rollups.
struct WindowMetrics {
  // external: traces, SQL, cross-service calls
  std::map<std::string, std::int64_t> out_calls;
  std::int64_t in_calls = 0;
  std::int64_t sql_calls = 0;
  std::int64_t server_requests = 0;
  std::int64_t error_requests = 0;
  double latency_p50_ms = 0;
  double latency_p95_ms = 0;
  double latency_mean_ms = 0;
  std::int64_t max_trace_depth = 0;
  double calls_per_request_mean = 0;
  // internal: process resources
  std::int64_t metric_samples = 0;
  double cpu_mean_frac = 0;
  double cpu_max_frac = 0;
  std::int64_t heap_used_start_bytes = 0;
  std::int64_t heap_used_end_bytes = 0;
  std::int64_t heap_max_bytes = 0;
  double heap_slope_bytes_per_s = 0;
  std::int64_t gc_count = 0;
  double gc_pause_ms = 0;
  // business: per-method invocation counters
  std::map<std::string, BusinessCounters> business_calls;
  /// Server-span latencies, ascending. Kept so rollups can pool exact percentiles.
  std::vector<double> latency_samples_ms;

  std::int64_t client_calls() const noexcept;
  std::int64_t business_total_calls() const noexcept;
  std::int64_t business_total_errors() const noexcept;

  friend bool operator==(const WindowMetrics&, const WindowMetrics&) = default;
};

struct InstanceAggregate : WindowMetrics {
  std::string service;
  std::string instance;
  WindowSpec window;

  friend bool operator==(const InstanceAggregate&, const InstanceAggregate&) = default;
};

struct ServiceAggregate : WindowMetrics {
  std::string service;
  WindowSpec window;
  std::int64_t instance_count = 0;
  double load_cv = 0;

  friend bool operator==(const ServiceAggregate&, const ServiceAggregate&) = default;
};

/// Nearest-rank percentile of an ascending sample list; 0 for an empty list.
double nearest_rank_percentile(std::span<const double> sorted, double p);

/// Removes exact duplicates, keeping the first occurrence in input order.
/// Spans are keyed by (trace_id, span_id); samples by (service, instance, ts_us, method).
std::vector<TelemetryRecord> dedup(std::span<const TelemetryRecord> records);

/// One aggregate per (service, instance) seen, ordered by service then instance.
/// Throws Error{argument} when a record falls outside the window.
std::vector<InstanceAggregate> aggregate_window(std::span<const TelemetryRecord> records, const WindowSpec& spec);

/// Throws Error{argument} for empty input or mixed service/window.
ServiceAggregate rollup(std::span<const InstanceAggregate> instances);

/// Groups instance aggregates by service and rolls each group up.
std::vector<ServiceAggregate> rollup_all(std::span<const InstanceAggregate> instances);

nlohmann::json to_json(const WindowSpec& w);
WindowSpec window_from_json(const nlohmann::json& j);
nlohmann::json to_json(const InstanceAggregate& a);
nlohmann::json to_json(const ServiceAggregate& a);
InstanceAggregate instance_aggregate_from_json(const nlohmann::json& j);
ServiceAggregate service_aggregate_from_json(const nlohmann::json& j);

}  // namespace smellwatch
