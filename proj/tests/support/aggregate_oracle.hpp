// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "smellwatch/telemetry.hpp"

namespace swtest {

/// Per-instance counts recomputed by direct scans over raw records. Shares no
/// code with the aggregation path.
struct InstanceCounts {
  std::int64_t server = 0;
  std::int64_t errors = 0;
  std::int64_t in_calls = 0;
  std::int64_t sql = 0;
  std::map<std::string, std::int64_t> out_calls;
  std::int64_t metric_samples = 0;
  std::int64_t gc_count = 0;
  std::map<std::string, std::int64_t> business_calls;
  std::map<std::string, std::int64_t> business_errors;
  std::vector<std::int64_t> durations_us;  // server spans, ascending
};

inline bool same_key(const smellwatch::TelemetryRecord& a, const smellwatch::TelemetryRecord& b) {
  using namespace smellwatch;
  if (a.index() != b.index()) return false;
  if (const auto* x = std::get_if<SpanRecord>(&a)) {
    const auto& y = std::get<SpanRecord>(b);
    return x->trace_id == y.trace_id && x->span_id == y.span_id;
  }
  if (const auto* x = std::get_if<MetricSample>(&a)) {
    const auto& y = std::get<MetricSample>(b);
    return x->service == y.service && x->instance == y.instance && x->ts_us == y.ts_us;
  }
  const auto& x = std::get<BusinessSample>(a);
  const auto& y = std::get<BusinessSample>(b);
  return x.service == y.service && x.instance == y.instance && x.ts_us == y.ts_us && x.method == y.method;
}

/// Quadratic first-occurrence dedup.
inline std::vector<smellwatch::TelemetryRecord> brute_dedup(const std::vector<smellwatch::TelemetryRecord>& in) {
  std::vector<smellwatch::TelemetryRecord> out;
  for (const auto& r : in) {
    bool seen = false;
    for (const auto& o : out) {
      if (same_key(o, r)) {
        seen = true;
        break;
      }
    }
    if (!seen) out.push_back(r);
  }
  return out;
}

using InstanceKey = std::pair<std::string, std::string>;

inline std::map<InstanceKey, InstanceCounts> brute_counts(const std::vector<smellwatch::TelemetryRecord>& raw) {
  using namespace smellwatch;
  std::map<InstanceKey, InstanceCounts> out;
  for (const auto& r : brute_dedup(raw)) {
    auto& c = out[{service_of(r), instance_of(r)}];
    if (const auto* s = std::get_if<SpanRecord>(&r)) {
      if (s->kind == SpanKind::server) {
        ++c.server;
        c.errors += s->status == SpanStatus::error;
        c.in_calls += s->parent_span_id.has_value();
        c.durations_us.push_back(s->duration_us);
      } else if (s->kind == SpanKind::client) {
        ++c.out_calls[s->peer_service.value_or("")];
      } else {
        ++c.sql;
      }
    } else if (const auto* m = std::get_if<MetricSample>(&r)) {
      ++c.metric_samples;
      c.gc_count += m->gc_count_delta;
    } else {
      const auto& b = std::get<BusinessSample>(r);
      c.business_calls[b.method] += b.call_count_delta;
      c.business_errors[b.method] += b.error_count_delta;
    }
  }
  for (auto& [_, c] : out) std::sort(c.durations_us.begin(), c.durations_us.end());
  return out;
}

/// Nearest-rank percentile in integer arithmetic: rank = ceil(pct * n / 100).
inline double rank_percentile_ms(const std::vector<std::int64_t>& sorted_us, std::int64_t pct) {
  if (sorted_us.empty()) return 0;
  const auto n = static_cast<std::int64_t>(sorted_us.size());
  auto rank = (pct * n + 99) / 100;
  rank = std::max<std::int64_t>(rank, 1);
  return static_cast<double>(sorted_us[static_cast<std::size_t>(rank - 1)]) / 1000.0;
}

}  // namespace swtest
