// SPDX-License-Identifier: Apache-2.0

#include "smellwatch/runtime_detector.hpp"

#include <algorithm>
#include <functional>

#include "smellwatch/error.hpp"

namespace smellwatch {

using nlohmann::json;

void validate(const DetectionContext& ctx) {
  for (const auto& a : ctx.current) {
    if (a.window != ctx.window) fail(ErrorCode::argument, "current aggregate for '" + a.service + "' is off-window");
  }
  for (const auto& [service, hist] : ctx.history) {
    TimestampUs prev = std::numeric_limits<TimestampUs>::min();
    for (const auto& h : hist) {
      if (h.window.start_us >= ctx.window.start_us) {
        fail(ErrorCode::argument, "history for '" + service + "' does not precede the window");
      }
      if (h.window.start_us <= prev) fail(ErrorCode::argument, "history for '" + service + "' is not ascending");
      prev = h.window.start_us;
    }
  }
}

AlgorithmRegistry::AlgorithmRegistry(const Catalog& catalog) {
  for (const auto* e : catalog.bound_entries()) status_[e->id] = true;
}

bool AlgorithmRegistry::contains(std::string_view smell_id) const noexcept {
  return status_.find(smell_id) != status_.end();
}

bool AlgorithmRegistry::online(std::string_view smell_id) const noexcept {
  auto it = status_.find(smell_id);
  return it != status_.end() && it->second;
}

void AlgorithmRegistry::set(std::string_view smell_id, bool on) {
  auto it = status_.find(smell_id);
  if (it == status_.end()) fail(ErrorCode::not_found, "unknown smell '" + std::string(smell_id) + "'");
  it->second = on;
}

json to_json(const AlgorithmRegistry& r) {
  json out = json::array();
  for (const auto& [id, on] : r.status()) out.push_back({{"smell_id", id}, {"online", on}});
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0;
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  return n % 2 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

namespace {

Clause ge(std::string stat, double v, double thr) { return {std::move(stat), v, Comparator::ge, thr}; }
Clause gt(std::string stat, double v, double thr) { return {std::move(stat), v, Comparator::gt, thr}; }

double ratio(double num, double den) { return den > 0 ? num / den : 0.0; }

struct RuleInput {
  const ServiceAggregate& cur;
  const std::vector<ServiceAggregate>& history;
  const DetectionContext& ctx;
  const ParamMap& p;
  double total_in_calls;
};

struct RuleOutput {
  RuleTerms terms;
  Evidence evidence;
};

using Rule = std::function<RuleOutput(const RuleInput&)>;

double param(const ParamMap& p, const char* key) {
  auto it = p.find(key);
  if (it == p.end()) fail(ErrorCode::configuration, std::string("missing detector parameter '") + key + "'");
  return it->second;
}

std::optional<RuleOutput> insufficient(double have, const ParamMap& p) {
  const double need = param(p, "min_history");
  if (have >= need) return std::nullopt;
  return RuleOutput{{{ge("history_windows", have, need)}}, {{"reason", std::string("insufficient_history")}}};
}

const std::map<std::string, Rule, std::less<>>& rules() {
  static const std::map<std::string, Rule, std::less<>> table = {
      {"chatty-service",
       [](const RuleInput& in) {
         return RuleOutput{{{ge("calls_per_request_mean", in.cur.calls_per_request_mean, param(in.p, "chatty_min_ratio"))}},
                           {{"client_calls", static_cast<double>(in.cur.client_calls())},
                            {"server_requests", static_cast<double>(in.cur.server_requests)}}};
       }},
      {"bottleneck-service",
       [](const RuleInput& in) {
         const double share = ratio(static_cast<double>(in.cur.in_calls), in.total_in_calls);
         return RuleOutput{{{ge("in_call_share", share, param(in.p, "bottleneck_fanin_frac"))},
                            {ge("latency_p95_ms", in.cur.latency_p95_ms, param(in.p, "bottleneck_p95_ms"))}},
                           {{"in_calls", static_cast<double>(in.cur.in_calls)}, {"total_in_calls", in.total_in_calls}}};
       }},
      {"uneven-load-distribution",
       [](const RuleInput& in) {
         return RuleOutput{{{ge("load_cv", in.cur.load_cv, param(in.p, "load_cv_max"))},
                            {ge("instance_count", static_cast<double>(in.cur.instance_count), param(in.p, "min_instances"))}},
                           {}};
       }},
      {"fragile-service",
       [](const RuleInput& in) {
         const double req = static_cast<double>(in.cur.server_requests);
         return RuleOutput{{{ge("error_rate", ratio(static_cast<double>(in.cur.error_requests), req),
                                param(in.p, "error_rate_max"))},
                            {ge("server_requests", req, param(in.p, "min_requests"))}},
                           {{"error_requests", static_cast<double>(in.cur.error_requests)}}};
       }},
      {"latency-degradation",
       [](const RuleInput& in) -> RuleOutput {
         std::vector<double> base;
         for (const auto& h : in.history) {
           if (h.server_requests > 0) base.push_back(h.latency_p95_ms);
         }
         if (auto r = insufficient(static_cast<double>(base.size()), in.p)) return std::move(*r);
         const double baseline = median(base);
         return RuleOutput{{{ge("latency_p95_ms", in.cur.latency_p95_ms, param(in.p, "degrade_factor") * baseline)},
                            {gt("baseline_p95_ms", baseline, 0)},
                            {ge("server_requests", static_cast<double>(in.cur.server_requests), 1)}},
                           {{"history_windows", static_cast<double>(base.size())}}};
       }},
      {"n-plus-one-query",
       [](const RuleInput& in) {
         return RuleOutput{{{ge("sql_per_request",
                                ratio(static_cast<double>(in.cur.sql_calls), static_cast<double>(in.cur.server_requests)),
                                param(in.p, "nplus1_min_ratio"))}},
                           {{"sql_calls", static_cast<double>(in.cur.sql_calls)},
                            {"server_requests", static_cast<double>(in.cur.server_requests)}}};
       }},
      {"frequent-gc",
       [](const RuleInput& in) {
         const double instances = static_cast<double>(std::max<std::int64_t>(1, in.cur.instance_count));
         const double secs = in.cur.window.seconds();
         return RuleOutput{{{ge("gc_per_s", ratio(static_cast<double>(in.cur.gc_count), instances * secs),
                                param(in.p, "gc_per_s_max")),
                             ge("gc_pause_frac", ratio(in.cur.gc_pause_ms, instances * secs * 1000.0),
                                param(in.p, "gc_pause_frac"))}},
                           {{"gc_count", static_cast<double>(in.cur.gc_count)}, {"gc_pause_ms", in.cur.gc_pause_ms}}};
       }},
      {"memory-jitter",
       [](const RuleInput& in) -> RuleOutput {
         if (auto r = insufficient(static_cast<double>(in.history.size()), in.p)) return std::move(*r);
         double run = 0;
         double growth = 0;
         if (in.cur.heap_slope_bytes_per_s > 0) {
           run = 1;
           const ServiceAggregate* first = &in.cur;
           for (auto it = in.history.rbegin(); it != in.history.rend() && it->heap_slope_bytes_per_s > 0; ++it) {
             ++run;
             first = &*it;
           }
           growth = static_cast<double>(in.cur.heap_used_end_bytes - first->heap_used_start_bytes);
         }
         const double heap_max = static_cast<double>(in.cur.heap_max_bytes);
         return RuleOutput{{{ge("rising_windows", run, param(in.p, "leak_windows"))},
                            {ge("heap_growth_bytes", growth, param(in.p, "leak_min_frac") * heap_max)},
                            {gt("heap_max_bytes", heap_max, 0)}},
                           {{"heap_slope_bytes_per_s", in.cur.heap_slope_bytes_per_s}}};
       }},
      {"cpu-saturation",
       [](const RuleInput& in) {
         return RuleOutput{{{ge("cpu_mean_frac", in.cur.cpu_mean_frac, param(in.p, "cpu_mean_max")),
                             ge("cpu_max_frac", in.cur.cpu_max_frac, param(in.p, "cpu_peak_max"))}},
                           {{"metric_samples", static_cast<double>(in.cur.metric_samples)}}};
       }},
      {"call-rate-anomaly",
       [](const RuleInput& in) -> RuleOutput {
         if (auto r = insufficient(static_cast<double>(in.history.size()), in.p)) return std::move(*r);
         std::vector<double> base;
         for (const auto& h : in.history) base.push_back(static_cast<double>(h.business_total_calls()));
         const double baseline = median(base);
         return RuleOutput{{{ge("business_calls", static_cast<double>(in.cur.business_total_calls()),
                                param(in.p, "spike_factor") * baseline)},
                            {gt("baseline_calls", baseline, 0)}},
                           {{"history_windows", static_cast<double>(base.size())}}};
       }},
      {"uneven-api-usage",
       [](const RuleInput& in) {
         const double total = static_cast<double>(in.cur.business_total_calls());
         double top = 0;
         std::string top_method;
         for (const auto& [method, c] : in.cur.business_calls) {
           if (static_cast<double>(c.calls) > top) {
             top = static_cast<double>(c.calls);
             top_method = method;
           }
         }
         Evidence ev;
         if (!top_method.empty()) ev["top_method"] = top_method;
         return RuleOutput{{{ge("top_method_share", ratio(top, total), param(in.p, "api_skew_frac"))},
                            {ge("business_methods", static_cast<double>(in.cur.business_calls.size()),
                                param(in.p, "min_methods"))},
                            {ge("business_calls", total, param(in.p, "min_requests"))}},
                           std::move(ev)};
       }},
      {"long-call-chain-runtime",
       [](const RuleInput& in) {
         return RuleOutput{{{ge("max_trace_depth", static_cast<double>(in.cur.max_trace_depth),
                                param(in.p, "chain_depth_max"))}},
                           {}};
       }},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& runtime_detector_ids() {
  static const std::vector<std::string> ids = [] {
    std::vector<std::string> v;
    for (const auto& [id, _] : rules()) v.push_back(id);
    return v;
  }();
  return ids;
}

std::vector<DetectionRecord> detect_runtime(const DetectionContext& ctx, const AlgorithmRegistry& registry,
                                            const DetectionParams& params) {
  validate(ctx);
  const auto& statics = static_detector_ids();
  for (const auto& [id, _] : registry.status()) {
    if (!rules().contains(id) && !std::binary_search(statics.begin(), statics.end(), id)) {
      fail(ErrorCode::configuration, "registry holds '" + id + "' but no detector implements it");
    }
  }
  std::vector<const ServiceAggregate*> current;
  for (const auto& a : ctx.current) current.push_back(&a);
  std::sort(current.begin(), current.end(), [](auto* a, auto* b) { return a->service < b->service; });
  double total_in = 0;
  for (const auto* a : current) total_in += static_cast<double>(a->in_calls);

  static const std::vector<ServiceAggregate> kNoHistory;
  std::vector<DetectionRecord> out;
  for (const auto& [id, rule] : rules()) {
    if (!registry.online(id)) continue;
    const auto& p = params.for_smell(id);
    for (const auto* a : current) {
      auto hit = ctx.history.find(a->service);
      const auto& hist = hit == ctx.history.end() ? kNoHistory : hit->second;
      auto res = rule(RuleInput{*a, hist, ctx, p, total_in});
      auto rec = evaluate_rule(id, a->service, res.terms, std::move(res.evidence), p);
      rec.window = ctx.window;
      out.push_back(std::move(rec));
    }
  }
  return out;
}

}  // namespace smellwatch
