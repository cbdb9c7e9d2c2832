// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace smellwatch {

using TimestampUs = std::int64_t;

enum class SpanKind { server, client, db };
enum class SpanStatus { ok, error };
enum class StatementKind { select, insert, update, remove };

std::string_view to_string(SpanKind k) noexcept;
std::string_view to_string(SpanStatus s) noexcept;
std::string_view to_string(StatementKind s) noexcept;

/// One timed operation of a distributed trace.
struct SpanRecord {
  std::string trace_id;
  std::string span_id;
  std::optional<std::string> parent_span_id;
  std::string service;
  std::string instance;
  std::string operation;
  SpanKind kind = SpanKind::server;
  TimestampUs start_us = 0;
  std::int64_t duration_us = 0;
  SpanStatus status = SpanStatus::ok;
  std::optional<std::string> peer_service;           // kind == client
  std::optional<StatementKind> db_statement_kind;    // kind == db

  friend bool operator==(const SpanRecord&, const SpanRecord&) = default;
};

/// Process-level resource sample. Counters are deltas since the previous sample.
struct MetricSample {
  std::string service;
  std::string instance;
  TimestampUs ts_us = 0;
  double cpu_frac = 0;
  std::int64_t heap_used_bytes = 0;
  std::int64_t heap_max_bytes = 0;
  std::int64_t gc_count_delta = 0;
  double gc_pause_ms_delta = 0;

  friend bool operator==(const MetricSample&, const MetricSample&) = default;
};

/// Business-method invocation counters reported by the collector agent.
struct BusinessSample {
  std::string service;
  std::string instance;
  std::string method;
  TimestampUs ts_us = 0;
  std::int64_t call_count_delta = 0;
  std::int64_t error_count_delta = 0;
  double latency_sum_ms_delta = 0;

  friend bool operator==(const BusinessSample&, const BusinessSample&) = default;
};

using TelemetryRecord = std::variant<SpanRecord, MetricSample, BusinessSample>;

enum class RawCategory { span, metric, business };

std::string_view to_string(RawCategory c) noexcept;
std::optional<RawCategory> parse_raw_category(std::string_view s) noexcept;
/// Store category name ("raw.span", ...).
std::string_view store_category(RawCategory c) noexcept;

struct TelemetryBatch {
  std::string producer;
  std::vector<SpanRecord> spans;
  std::vector<MetricSample> metrics;
  std::vector<BusinessSample> business;

  std::size_t size() const noexcept { return spans.size() + metrics.size() + business.size(); }
  bool empty() const noexcept { return size() == 0; }
  friend bool operator==(const TelemetryBatch&, const TelemetryBatch&) = default;
};

TimestampUs timestamp_of(const TelemetryRecord& r) noexcept;
RawCategory category_of(const TelemetryRecord& r) noexcept;
const std::string& service_of(const TelemetryRecord& r) noexcept;
const std::string& instance_of(const TelemetryRecord& r) noexcept;

/// Returns the first violated record invariant, or nullopt when valid.
std::optional<std::string> validate(const SpanRecord& s);
std::optional<std::string> validate(const MetricSample& m);
std::optional<std::string> validate(const BusinessSample& b);
std::optional<std::string> validate(const TelemetryRecord& r);

nlohmann::json to_json(const SpanRecord& s);
nlohmann::json to_json(const MetricSample& m);
nlohmann::json to_json(const BusinessSample& b);
nlohmann::json to_json(const TelemetryRecord& r);
nlohmann::json to_json(const TelemetryBatch& b);

/// Field-level decoding; throws Error{parse} naming the offending field.
SpanRecord span_from_json(const nlohmann::json& j, std::string_view ctx = "span");
MetricSample metric_from_json(const nlohmann::json& j, std::string_view ctx = "metric");
BusinessSample business_from_json(const nlohmann::json& j, std::string_view ctx = "business");
TelemetryRecord record_from_json(RawCategory c, const nlohmann::json& j);
TelemetryBatch batch_from_json(const nlohmann::json& j);

}  // namespace smellwatch
