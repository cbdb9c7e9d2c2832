// SPDX-License-Identifier: Apache-2.0

#include "smellwatch/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "smellwatch/detail/json_fields.hpp"
#include "smellwatch/error.hpp"

namespace smellwatch {

using nlohmann::json;

TimestampUs align_down(TimestampUs ts, std::int64_t length) noexcept {
  auto q = ts / length;
  if (ts % length != 0 && ts < 0) --q;
  return q * length;
}

std::int64_t WindowMetrics::client_calls() const noexcept {
  std::int64_t n = 0;
  for (const auto& [_, c] : out_calls) n += c;
  return n;
}

std::int64_t WindowMetrics::business_total_calls() const noexcept {
  std::int64_t n = 0;
  for (const auto& [_, c] : business_calls) n += c.calls;
  return n;
}

std::int64_t WindowMetrics::business_total_errors() const noexcept {
  std::int64_t n = 0;
  for (const auto& [_, c] : business_calls) n += c.errors;
  return n;
}

double nearest_rank_percentile(std::span<const double> sorted, double p) {
  if (sorted.empty()) return 0.0;
  const double n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(p * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

std::vector<TelemetryRecord> dedup(std::span<const TelemetryRecord> records) {
  using Key = std::tuple<std::size_t, std::string, std::string, TimestampUs, std::string>;
  std::set<Key> seen;
  std::vector<TelemetryRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    Key key = std::visit(
        [&](const auto& v) -> Key {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, SpanRecord>) {
            return {0, v.trace_id, v.span_id, 0, {}};
          } else if constexpr (std::is_same_v<T, MetricSample>) {
            return {1, v.service, v.instance, v.ts_us, {}};
          } else {
            return {2, v.service, v.instance, v.ts_us, v.method};
          }
        },
        r);
    if (seen.insert(std::move(key)).second) out.push_back(r);
  }
  return out;
}

namespace {

struct InstanceBuilder {
  InstanceAggregate agg;
  std::int64_t client_spans = 0;
  double cpu_sum = 0;
  std::vector<std::pair<TimestampUs, const MetricSample*>> heap;
};

// Longest parent chain (in spans) below each root, assigned to the root's instance.
void compute_trace_depths(const std::vector<const SpanRecord*>& spans,
                          std::map<std::pair<std::string, std::string>, InstanceBuilder>& builders) {
  std::unordered_map<std::string, std::vector<const SpanRecord*>> by_trace;
  for (const auto* s : spans) by_trace[s->trace_id].push_back(s);
  for (auto& [_, trace] : by_trace) {
    std::unordered_map<std::string_view, const SpanRecord*> by_id;
    for (const auto* s : trace) by_id.emplace(s->span_id, s);
    std::unordered_map<std::string_view, std::vector<const SpanRecord*>> children;
    std::vector<const SpanRecord*> roots;
    for (const auto* s : trace) {
      if (s->parent_span_id && by_id.contains(*s->parent_span_id)) {
        children[*s->parent_span_id].push_back(s);
      } else {
        roots.push_back(s);
      }
    }
    for (const auto* root : roots) {
      std::int64_t depth = 0;
      std::vector<std::pair<const SpanRecord*, std::int64_t>> stack{{root, 1}};
      std::unordered_set<std::string_view> visited;
      while (!stack.empty()) {
        auto [s, d] = stack.back();
        stack.pop_back();
        if (!visited.insert(s->span_id).second) continue;
        depth = std::max(depth, d);
        if (auto it = children.find(s->span_id); it != children.end()) {
          for (const auto* c : it->second) stack.emplace_back(c, d + 1);
        }
      }
      auto& b = builders.at({root->service, root->instance});
      b.agg.max_trace_depth = std::max(b.agg.max_trace_depth, depth);
    }
  }
}

double least_squares_slope(const std::vector<std::pair<TimestampUs, const MetricSample*>>& pts, TimestampUs origin) {
  if (pts.size() < 2) return 0.0;
  const double n = static_cast<double>(pts.size());
  double sx = 0, sy = 0;
  for (const auto& [t, m] : pts) {
    sx += static_cast<double>(t - origin) / 1e6;
    sy += static_cast<double>(m->heap_used_bytes);
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (const auto& [t, m] : pts) {
    const double dx = static_cast<double>(t - origin) / 1e6 - mx;
    sxx += dx * dx;
    sxy += dx * (static_cast<double>(m->heap_used_bytes) - my);
  }
  return sxx == 0.0 ? 0.0 : sxy / sxx;
}

void finish_latency(WindowMetrics& m) {
  std::sort(m.latency_samples_ms.begin(), m.latency_samples_ms.end());
  m.latency_p50_ms = nearest_rank_percentile(m.latency_samples_ms, 0.50);
  m.latency_p95_ms = nearest_rank_percentile(m.latency_samples_ms, 0.95);
  if (!m.latency_samples_ms.empty()) {
    m.latency_mean_ms = std::accumulate(m.latency_samples_ms.begin(), m.latency_samples_ms.end(), 0.0) /
                        static_cast<double>(m.latency_samples_ms.size());
  } else {
    m.latency_mean_ms = 0.0;
  }
}

}  // namespace

std::vector<InstanceAggregate> aggregate_window(std::span<const TelemetryRecord> records, const WindowSpec& spec) {
  if (spec.length_us <= 0) fail(ErrorCode::argument, "window length must be positive");
  std::map<std::pair<std::string, std::string>, InstanceBuilder> builders;
  std::vector<const SpanRecord*> spans;
  auto builder = [&](const std::string& service, const std::string& instance) -> InstanceBuilder& {
    auto [it, inserted] = builders.try_emplace({service, instance});
    if (inserted) {
      it->second.agg.service = service;
      it->second.agg.instance = instance;
      it->second.agg.window = spec;
    }
    return it->second;
  };

  // Canonical processing order makes floating-point sums independent of input order.
  std::vector<const TelemetryRecord*> ordered;
  ordered.reserve(records.size());
  for (const auto& r : records) ordered.push_back(&r);
  auto sort_key = [](const TelemetryRecord* r) {
    std::string_view a, b;
    if (const auto* s = std::get_if<SpanRecord>(r)) {
      a = s->trace_id;
      b = s->span_id;
    } else if (const auto* bs = std::get_if<BusinessSample>(r)) {
      a = bs->method;
    }
    return std::make_tuple(r->index(), std::string_view(service_of(*r)), std::string_view(instance_of(*r)),
                           timestamp_of(*r), a, b);
  };
  std::sort(ordered.begin(), ordered.end(),
            [&](const TelemetryRecord* x, const TelemetryRecord* y) { return sort_key(x) < sort_key(y); });

  for (const auto* rp : ordered) {
    const auto& r = *rp;
    const auto ts = timestamp_of(r);
    if (!spec.contains(ts)) {
      fail(ErrorCode::argument, "record at " + std::to_string(ts) + " outside window [" +
                                    std::to_string(spec.start_us) + ", " + std::to_string(spec.end_us()) + ")");
    }
    auto& b = builder(service_of(r), instance_of(r));
    auto& a = b.agg;
    if (const auto* s = std::get_if<SpanRecord>(&r)) {
      spans.push_back(s);
      switch (s->kind) {
        case SpanKind::server:
          ++a.server_requests;
          if (s->status == SpanStatus::error) ++a.error_requests;
          if (s->parent_span_id) ++a.in_calls;
          a.latency_samples_ms.push_back(static_cast<double>(s->duration_us) / 1000.0);
          break;
        case SpanKind::client:
          ++b.client_spans;
          ++a.out_calls[s->peer_service.value_or("")];
          break;
        case SpanKind::db:
          ++a.sql_calls;
          break;
      }
    } else if (const auto* m = std::get_if<MetricSample>(&r)) {
      ++a.metric_samples;
      b.cpu_sum += m->cpu_frac;
      a.cpu_max_frac = std::max(a.cpu_max_frac, m->cpu_frac);
      a.heap_max_bytes = std::max(a.heap_max_bytes, m->heap_max_bytes);
      a.gc_count += m->gc_count_delta;
      a.gc_pause_ms += m->gc_pause_ms_delta;
      b.heap.emplace_back(m->ts_us, m);
    } else if (const auto* bs = std::get_if<BusinessSample>(&r)) {
      auto& c = a.business_calls[bs->method];
      c.calls += bs->call_count_delta;
      c.errors += bs->error_count_delta;
      c.latency_sum_ms += bs->latency_sum_ms_delta;
    }
  }

  compute_trace_depths(spans, builders);

  std::vector<InstanceAggregate> out;
  out.reserve(builders.size());
  for (auto& [_, b] : builders) {
    auto& a = b.agg;
    finish_latency(a);
    a.calls_per_request_mean =
        a.server_requests == 0 ? 0.0 : static_cast<double>(b.client_spans) / static_cast<double>(a.server_requests);
    if (a.metric_samples > 0) a.cpu_mean_frac = b.cpu_sum / static_cast<double>(a.metric_samples);
    if (!b.heap.empty()) {
      // Metric keys are unique per instance after dedup, so ts alone orders the samples.
      std::sort(b.heap.begin(), b.heap.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
      a.heap_used_start_bytes = b.heap.front().second->heap_used_bytes;
      a.heap_used_end_bytes = b.heap.back().second->heap_used_bytes;
      a.heap_slope_bytes_per_s = least_squares_slope(b.heap, spec.start_us);
    }
    out.push_back(std::move(a));
  }
  return out;
}

ServiceAggregate rollup(std::span<const InstanceAggregate> instances) {
  if (instances.empty()) fail(ErrorCode::argument, "rollup of an empty instance list");
  const auto& first = instances.front();
  ServiceAggregate s;
  s.service = first.service;
  s.window = first.window;
  s.instance_count = static_cast<std::int64_t>(instances.size());

  std::int64_t weight_total = 0;
  for (const auto& i : instances) {
    if (i.service != s.service || i.window != s.window) {
      fail(ErrorCode::argument, "rollup over mixed services or windows");
    }
    weight_total += i.server_requests;
  }
  const bool weighted = weight_total > 0;
  auto weight = [&](const InstanceAggregate& i) {
    return weighted ? static_cast<double>(i.server_requests) / static_cast<double>(weight_total)
                    : 1.0 / static_cast<double>(instances.size());
  };

  double cpu_mean = 0;
  double cpr = 0;
  for (const auto& i : instances) {
    for (const auto& [target, n] : i.out_calls) s.out_calls[target] += n;
    s.in_calls += i.in_calls;
    s.sql_calls += i.sql_calls;
    s.server_requests += i.server_requests;
    s.error_requests += i.error_requests;
    s.max_trace_depth = std::max(s.max_trace_depth, i.max_trace_depth);
    s.metric_samples += i.metric_samples;
    cpu_mean += weight(i) * i.cpu_mean_frac;
    cpr += weight(i) * i.calls_per_request_mean;
    s.cpu_max_frac = std::max(s.cpu_max_frac, i.cpu_max_frac);
    s.heap_used_start_bytes += i.heap_used_start_bytes;
    s.heap_used_end_bytes += i.heap_used_end_bytes;
    s.heap_max_bytes += i.heap_max_bytes;
    s.heap_slope_bytes_per_s += i.heap_slope_bytes_per_s;
    s.gc_count += i.gc_count;
    s.gc_pause_ms += i.gc_pause_ms;
    for (const auto& [method, c] : i.business_calls) {
      auto& dst = s.business_calls[method];
      dst.calls += c.calls;
      dst.errors += c.errors;
      dst.latency_sum_ms += c.latency_sum_ms;
    }
    s.latency_samples_ms.insert(s.latency_samples_ms.end(), i.latency_samples_ms.begin(), i.latency_samples_ms.end());
  }
  s.cpu_mean_frac = cpu_mean;
  // Weighted by server_requests this is exactly total client calls over total requests.
  s.calls_per_request_mean = weighted ? static_cast<double>(s.client_calls()) / static_cast<double>(s.server_requests)
                                      : cpr;
  finish_latency(s);

  const double n = static_cast<double>(instances.size());
  const double mean = static_cast<double>(s.server_requests) / n;
  if (mean > 0) {
    double var = 0;
    for (const auto& i : instances) {
      const double d = static_cast<double>(i.server_requests) - mean;
      var += d * d;
    }
    s.load_cv = std::sqrt(var / n) / mean;
  }
  return s;
}

std::vector<ServiceAggregate> rollup_all(std::span<const InstanceAggregate> instances) {
  std::map<std::pair<std::string, WindowSpec>, std::vector<InstanceAggregate>> groups;
  for (const auto& i : instances) groups[{i.service, i.window}].push_back(i);
  std::vector<ServiceAggregate> out;
  out.reserve(groups.size());
  for (const auto& [_, g] : groups) out.push_back(rollup(g));
  return out;
}

// --- JSON -------------------------------------------------------------------

json to_json(const WindowSpec& w) { return json{{"start_us", w.start_us}, {"length_us", w.length_us}}; }

WindowSpec window_from_json(const json& j) {
  return WindowSpec{detail::required<TimestampUs>(j, "start_us", "window"),
                    detail::required<std::int64_t>(j, "length_us", "window")};
}

namespace {

void metrics_to_json(json& j, const WindowMetrics& m) {
  json business = json::object();
  for (const auto& [method, c] : m.business_calls) {
    business[method] = json{{"calls", c.calls}, {"errors", c.errors}, {"latency_sum_ms", c.latency_sum_ms}};
  }
  j["out_calls"] = m.out_calls;
  j["in_calls"] = m.in_calls;
  j["sql_calls"] = m.sql_calls;
  j["server_requests"] = m.server_requests;
  j["error_requests"] = m.error_requests;
  j["latency_p50_ms"] = m.latency_p50_ms;
  j["latency_p95_ms"] = m.latency_p95_ms;
  j["latency_mean_ms"] = m.latency_mean_ms;
  j["max_trace_depth"] = m.max_trace_depth;
  j["calls_per_request_mean"] = m.calls_per_request_mean;
  j["metric_samples"] = m.metric_samples;
  j["cpu_mean_frac"] = m.cpu_mean_frac;
  j["cpu_max_frac"] = m.cpu_max_frac;
  j["heap_used_start_bytes"] = m.heap_used_start_bytes;
  j["heap_used_end_bytes"] = m.heap_used_end_bytes;
  j["heap_max_bytes"] = m.heap_max_bytes;
  j["heap_slope_bytes_per_s"] = m.heap_slope_bytes_per_s;
  j["gc_count"] = m.gc_count;
  j["gc_pause_ms"] = m.gc_pause_ms;
  j["business_calls"] = business;
  j["latency_samples_ms"] = m.latency_samples_ms;
}

void metrics_from_json(const json& j, WindowMetrics& m) {
  m.out_calls = j.at("out_calls").get<std::map<std::string, std::int64_t>>();
  m.in_calls = j.at("in_calls").get<std::int64_t>();
  m.sql_calls = j.at("sql_calls").get<std::int64_t>();
  m.server_requests = j.at("server_requests").get<std::int64_t>();
  m.error_requests = j.at("error_requests").get<std::int64_t>();
  m.latency_p50_ms = j.at("latency_p50_ms").get<double>();
  m.latency_p95_ms = j.at("latency_p95_ms").get<double>();
  m.latency_mean_ms = j.at("latency_mean_ms").get<double>();
  m.max_trace_depth = j.at("max_trace_depth").get<std::int64_t>();
  m.calls_per_request_mean = j.at("calls_per_request_mean").get<double>();
  m.metric_samples = j.at("metric_samples").get<std::int64_t>();
  m.cpu_mean_frac = j.at("cpu_mean_frac").get<double>();
  m.cpu_max_frac = j.at("cpu_max_frac").get<double>();
  m.heap_used_start_bytes = j.at("heap_used_start_bytes").get<std::int64_t>();
  m.heap_used_end_bytes = j.at("heap_used_end_bytes").get<std::int64_t>();
  m.heap_max_bytes = j.at("heap_max_bytes").get<std::int64_t>();
  m.heap_slope_bytes_per_s = j.at("heap_slope_bytes_per_s").get<double>();
  m.gc_count = j.at("gc_count").get<std::int64_t>();
  m.gc_pause_ms = j.at("gc_pause_ms").get<double>();
  for (const auto& [method, c] : j.at("business_calls").items()) {
    m.business_calls[method] = BusinessCounters{c.at("calls").get<std::int64_t>(), c.at("errors").get<std::int64_t>(),
                                                c.at("latency_sum_ms").get<double>()};
  }
  m.latency_samples_ms = j.at("latency_samples_ms").get<std::vector<double>>();
}

}  // namespace

json to_json(const InstanceAggregate& a) {
  json j{{"service", a.service}, {"instance", a.instance}, {"window", to_json(a.window)}};
  metrics_to_json(j, a);
  return j;
}

json to_json(const ServiceAggregate& a) {
  json j{{"service", a.service},
         {"window", to_json(a.window)},
         {"instance_count", a.instance_count},
         {"load_cv", a.load_cv}};
  metrics_to_json(j, a);
  return j;
}

InstanceAggregate instance_aggregate_from_json(const json& j) {
  InstanceAggregate a;
  a.service = j.at("service").get<std::string>();
  a.instance = j.at("instance").get<std::string>();
  a.window = window_from_json(j.at("window"));
  metrics_from_json(j, a);
  return a;
}

ServiceAggregate service_aggregate_from_json(const json& j) {
  ServiceAggregate a;
  a.service = j.at("service").get<std::string>();
  a.window = window_from_json(j.at("window"));
  a.instance_count = j.at("instance_count").get<std::int64_t>();
  a.load_cv = j.at("load_cv").get<double>();
  metrics_from_json(j, a);
  return a;
}

}  // namespace smellwatch
