// SPDX-License-Identifier: Apache-2.0

#include "smellwatch/telemetry.hpp"

#include "smellwatch/detail/json_fields.hpp"

namespace smellwatch {

using detail::field_or;
using detail::json;
using detail::optional_field;
using detail::required;

std::string_view to_string(SpanKind k) noexcept {
  switch (k) {
    case SpanKind::server: return "server";
    case SpanKind::client: return "client";
    case SpanKind::db: return "db";
  }
  return "";
}

std::string_view to_string(SpanStatus s) noexcept { return s == SpanStatus::ok ? "ok" : "error"; }

std::string_view to_string(StatementKind s) noexcept {
  switch (s) {
    case StatementKind::select: return "select";
    case StatementKind::insert: return "insert";
    case StatementKind::update: return "update";
    case StatementKind::remove: return "delete";
  }
  return "";
}

std::string_view to_string(RawCategory c) noexcept {
  switch (c) {
    case RawCategory::span: return "span";
    case RawCategory::metric: return "metric";
    case RawCategory::business: return "business";
  }
  return "";
}

std::optional<RawCategory> parse_raw_category(std::string_view s) noexcept {
  if (s == "span" || s == "spans") return RawCategory::span;
  if (s == "metric" || s == "metrics") return RawCategory::metric;
  if (s == "business") return RawCategory::business;
  return std::nullopt;
}

std::string_view store_category(RawCategory c) noexcept {
  switch (c) {
    case RawCategory::span: return "raw.span";
    case RawCategory::metric: return "raw.metric";
    case RawCategory::business: return "raw.business";
  }
  return "";
}

TimestampUs timestamp_of(const TelemetryRecord& r) noexcept {
  return std::visit(
      [](const auto& v) -> TimestampUs {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, SpanRecord>) {
          return v.start_us;
        } else {
          return v.ts_us;
        }
      },
      r);
}

RawCategory category_of(const TelemetryRecord& r) noexcept { return static_cast<RawCategory>(r.index()); }

const std::string& service_of(const TelemetryRecord& r) noexcept {
  return std::visit([](const auto& v) -> const std::string& { return v.service; }, r);
}

const std::string& instance_of(const TelemetryRecord& r) noexcept {
  return std::visit([](const auto& v) -> const std::string& { return v.instance; }, r);
}

std::optional<std::string> validate(const SpanRecord& s) {
  if (s.trace_id.empty()) return "trace_id empty";
  if (s.span_id.empty()) return "span_id empty";
  if (s.service.empty()) return "service empty";
  if (s.duration_us < 0) return "duration_us negative";
  if (s.kind == SpanKind::client && !s.peer_service) return "client span missing peer_service";
  if (s.kind == SpanKind::db && !s.db_statement_kind) return "db span missing db_statement_kind";
  if (s.parent_span_id && *s.parent_span_id == s.span_id) return "span is its own parent";
  return std::nullopt;
}

std::optional<std::string> validate(const MetricSample& m) {
  if (m.service.empty()) return "service empty";
  if (!(m.cpu_frac >= 0.0 && m.cpu_frac <= 1.0)) return "cpu_frac out of range";
  if (m.heap_used_bytes < 0 || m.heap_max_bytes < 0) return "heap bytes negative";
  if (m.heap_used_bytes > m.heap_max_bytes) return "heap_used_bytes exceeds heap_max_bytes";
  if (m.gc_count_delta < 0 || !(m.gc_pause_ms_delta >= 0.0)) return "gc delta negative";
  return std::nullopt;
}

std::optional<std::string> validate(const BusinessSample& b) {
  if (b.service.empty()) return "service empty";
  if (b.method.empty()) return "method empty";
  if (b.call_count_delta < 0 || b.error_count_delta < 0 || !(b.latency_sum_ms_delta >= 0.0)) {
    return "business delta negative";
  }
  if (b.error_count_delta > b.call_count_delta) return "error_count_delta exceeds call_count_delta";
  return std::nullopt;
}

std::optional<std::string> validate(const TelemetryRecord& r) {
  return std::visit([](const auto& v) { return validate(v); }, r);
}

json to_json(const SpanRecord& s) {
  json j{{"trace_id", s.trace_id},   {"span_id", s.span_id},         {"service", s.service},
         {"instance", s.instance},   {"operation", s.operation},     {"kind", to_string(s.kind)},
         {"start_us", s.start_us},   {"duration_us", s.duration_us}, {"status", to_string(s.status)}};
  if (s.parent_span_id) j["parent_span_id"] = *s.parent_span_id;
  if (s.peer_service) j["peer_service"] = *s.peer_service;
  if (s.db_statement_kind) j["db_statement_kind"] = to_string(*s.db_statement_kind);
  return j;
}

json to_json(const MetricSample& m) {
  return json{{"service", m.service},
              {"instance", m.instance},
              {"ts_us", m.ts_us},
              {"cpu_frac", m.cpu_frac},
              {"heap_used_bytes", m.heap_used_bytes},
              {"heap_max_bytes", m.heap_max_bytes},
              {"gc_count_delta", m.gc_count_delta},
              {"gc_pause_ms_delta", m.gc_pause_ms_delta}};
}

json to_json(const BusinessSample& b) {
  return json{{"service", b.service},
              {"instance", b.instance},
              {"method", b.method},
              {"ts_us", b.ts_us},
              {"call_count_delta", b.call_count_delta},
              {"error_count_delta", b.error_count_delta},
              {"latency_sum_ms_delta", b.latency_sum_ms_delta}};
}

json to_json(const TelemetryRecord& r) {
  return std::visit([](const auto& v) { return to_json(v); }, r);
}

json to_json(const TelemetryBatch& b) {
  json spans = json::array();
  json metrics = json::array();
  json business = json::array();
  for (const auto& s : b.spans) spans.push_back(to_json(s));
  for (const auto& m : b.metrics) metrics.push_back(to_json(m));
  for (const auto& x : b.business) business.push_back(to_json(x));
  return json{{"producer", b.producer}, {"spans", spans}, {"metrics", metrics}, {"business", business}};
}

SpanRecord span_from_json(const json& j, std::string_view ctx) {
  SpanRecord s;
  s.trace_id = required<std::string>(j, "trace_id", ctx);
  s.span_id = required<std::string>(j, "span_id", ctx);
  s.parent_span_id = optional_field<std::string>(j, "parent_span_id", ctx);
  s.service = required<std::string>(j, "service", ctx);
  s.instance = field_or<std::string>(j, "instance", ctx, "");
  s.operation = field_or<std::string>(j, "operation", ctx, "");
  const auto kind = required<std::string>(j, "kind", ctx);
  if (kind == "server") {
    s.kind = SpanKind::server;
  } else if (kind == "client") {
    s.kind = SpanKind::client;
  } else if (kind == "db") {
    s.kind = SpanKind::db;
  } else {
    detail::field_error(ctx, "kind", "one of server, client, db");
  }
  s.start_us = required<std::int64_t>(j, "start_us", ctx);
  s.duration_us = required<std::int64_t>(j, "duration_us", ctx);
  const auto status = field_or<std::string>(j, "status", ctx, "ok");
  if (status == "ok") {
    s.status = SpanStatus::ok;
  } else if (status == "error") {
    s.status = SpanStatus::error;
  } else {
    detail::field_error(ctx, "status", "one of ok, error");
  }
  s.peer_service = optional_field<std::string>(j, "peer_service", ctx);
  if (auto stmt = optional_field<std::string>(j, "db_statement_kind", ctx)) {
    if (*stmt == "select") {
      s.db_statement_kind = StatementKind::select;
    } else if (*stmt == "insert") {
      s.db_statement_kind = StatementKind::insert;
    } else if (*stmt == "update") {
      s.db_statement_kind = StatementKind::update;
    } else if (*stmt == "delete") {
      s.db_statement_kind = StatementKind::remove;
    } else {
      detail::field_error(ctx, "db_statement_kind", "one of select, insert, update, delete");
    }
  }
  return s;
}

MetricSample metric_from_json(const json& j, std::string_view ctx) {
  MetricSample m;
  m.service = required<std::string>(j, "service", ctx);
  m.instance = field_or<std::string>(j, "instance", ctx, "");
  m.ts_us = required<std::int64_t>(j, "ts_us", ctx);
  m.cpu_frac = required<double>(j, "cpu_frac", ctx);
  m.heap_used_bytes = required<std::int64_t>(j, "heap_used_bytes", ctx);
  m.heap_max_bytes = required<std::int64_t>(j, "heap_max_bytes", ctx);
  m.gc_count_delta = field_or<std::int64_t>(j, "gc_count_delta", ctx, 0);
  m.gc_pause_ms_delta = field_or<double>(j, "gc_pause_ms_delta", ctx, 0.0);
  return m;
}

BusinessSample business_from_json(const json& j, std::string_view ctx) {
  BusinessSample b;
  b.service = required<std::string>(j, "service", ctx);
  b.instance = field_or<std::string>(j, "instance", ctx, "");
  b.method = required<std::string>(j, "method", ctx);
  b.ts_us = required<std::int64_t>(j, "ts_us", ctx);
  b.call_count_delta = required<std::int64_t>(j, "call_count_delta", ctx);
  b.error_count_delta = field_or<std::int64_t>(j, "error_count_delta", ctx, 0);
  b.latency_sum_ms_delta = field_or<double>(j, "latency_sum_ms_delta", ctx, 0.0);
  return b;
}

TelemetryRecord record_from_json(RawCategory c, const json& j) {
  switch (c) {
    case RawCategory::span: return span_from_json(j);
    case RawCategory::metric: return metric_from_json(j);
    case RawCategory::business: return business_from_json(j);
  }
  return span_from_json(j);
}

TelemetryBatch batch_from_json(const json& j) {
  if (!j.is_object()) detail::field_error("batch", "", "object");
  TelemetryBatch b;
  b.producer = field_or<std::string>(j, "producer", "batch", "");
  if (const auto* arr = detail::optional_array(j, "spans", "batch")) {
    for (std::size_t i = 0; i < arr->size(); ++i) b.spans.push_back(span_from_json((*arr)[i], "spans[" + std::to_string(i) + "]"));
  }
  if (const auto* arr = detail::optional_array(j, "metrics", "batch")) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      b.metrics.push_back(metric_from_json((*arr)[i], "metrics[" + std::to_string(i) + "]"));
    }
  }
  if (const auto* arr = detail::optional_array(j, "business", "batch")) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      b.business.push_back(business_from_json((*arr)[i], "business[" + std::to_string(i) + "]"));
    }
  }
  return b;
}

}  // namespace smellwatch
