// SPDX-License-Identifier: Apache-2.0

// Acceptance run: one PASS/FAIL line per criterion. Exit status is non-zero
// when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "aggregate_oracle.hpp"
#include "oracles.hpp"
#include "smellwatch/reintegration.hpp"
#include "smellwatch/runtime_detector.hpp"
#include "smellwatch/static_analyzer.hpp"
#include "support.hpp"

using namespace smellwatch;

namespace {

constexpr double kFractionTolerance = 1e-9;
constexpr double kCaseStudyBudgetS = 5;
constexpr double kCardBudgetS = 30;
constexpr double kScenarioBudgetS = 120;
constexpr std::size_t kRandomWindows = 100;

/// Collects failures for one criterion; keeps the first few messages.
class Verdict {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failures_;
    if (messages_.size() < 5) messages_.push_back(what);
  }
  bool ok() const noexcept { return failures_ == 0; }
  std::string report() const {
    std::ostringstream out;
    out << failures_ << " failed check(s)";
    for (const auto& m : messages_) out << "; " << m;
    return out.str();
  }

 private:
  std::size_t failures_ = 0;
  std::vector<std::string> messages_;
};

using Pair = std::pair<std::string, std::string>;

bool is_static(const std::string& id) {
  const auto& ids = static_detector_ids();
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

std::string describe(const std::set<Pair>& s) {
  std::string out = "{";
  for (const auto& [a, b] : s) out += a + "@" + b + " ";
  return out + "}";
}

// 1. Case study: static analysis finds the two known smells, and detection
//    surfaces both under cloud-user-service.
void case_study(Verdict& v) {
  const std::set<Pair> expect{{"no-api-gateway", "system"}, {"no-api-versioning", "cloud-user-service"}};
  const auto model = load_manifest_dir(swtest::source_path("fixtures/case-study"));
  const auto& cat = bundled_catalog();
  std::set<Pair> scanned;
  for (const auto& r : detect_static(model, DetectionParams::from_catalog(cat), cat)) {
    if (r.detected) scanned.emplace(r.smell_id, r.scope);
  }
  v.expect(scanned == expect, "scan found " + describe(scanned));

  const auto scenario = swtest::load_shipped_scenario("case-study");
  const auto workload = generate(scenario);
  const auto replica = build_model(workload.manifests);
  v.expect(replica.services.size() == 5, "replica scenario does not have 5 services");
  std::set<Pair> replica_scan;
  for (const auto& r : detect_static(replica, DetectionParams::from_catalog(cat), cat)) {
    if (r.detected) replica_scan.emplace(r.smell_id, r.scope);
  }
  v.expect(replica_scan == expect, "replica scan found " + describe(replica_scan));

  swtest::TempDir dir;
  Pipeline p(swtest::test_config(dir.path()));
  p.engine().set_system_model(replica);
  replay(workload.batches, direct_sink(p.ingest()));
  const auto runs = p.run_cycles(swtest::after_end(scenario)).runs;
  v.expect(runs.size() == static_cast<std::size_t>(scenario.window_count()), "unexpected run count");
  for (const auto& run : runs) {
    std::set<Pair> found;
    for (const auto& r : p.results().records(run.window.start_us, run.window.start_us + 1)) {
      if (r.detected && is_static(r.smell_id)) found.emplace(r.smell_id, r.scope);
    }
    v.expect(found == expect, run.run_id + " static detections " + describe(found));
  }
  const auto history = p.results().query_history(std::string("cloud-user-service"), 0, swtest::after_end(scenario));
  v.expect(history.windows.size() == runs.size(), "history window count");
  for (const auto& w : history.windows) {
    const auto it = w.services.find("cloud-user-service");
    v.expect(it != w.services.end(), w.run_id + ": cloud-user-service missing from history");
    if (it == w.services.end()) continue;
    for (const auto& [id, _] : expect) {
      v.expect(std::find(it->second.begin(), it->second.end(), id) != it->second.end(),
               w.run_id + ": " + id + " not listed under cloud-user-service");
    }
  }
}

// 2. The detection card over the 29-window workload.
void detection_card(Verdict& v) {
  const auto s = swtest::load_shipped_scenario("card-29");
  const auto run = swtest::run_scenario(s);
  const auto card = run.pipeline->results().query_summary(0, swtest::after_end(s), run.pipeline->catalog());
  v.expect(card.executed == 29, "executed=" + std::to_string(card.executed));
  v.expect(card.positive == 11, "positive=" + std::to_string(card.positive));
}

// 3. Every injection scenario is detected in its final injected window; the
//    clean scenario produces no detection at all.
void scenarios(Verdict& v) {
  std::size_t injected = 0;
  for (const auto& e : std::filesystem::directory_iterator(swtest::source_path("scenarios"))) {
    const auto name = e.path().stem().string();
    if (name.rfind("inject-", 0) != 0) continue;
    ++injected;
    const auto s = swtest::load_shipped_scenario(name);
    const auto run = swtest::run_scenario(s);
    v.expect(run.replay.rejected == 0, name + ": replay rejected records");
    for (const auto& in : s.injections) {
      bool hit = false;
      for (const auto& r : swtest::records_for(run, in.window_to - 1)) {
        hit = hit || (r.detected && r.smell_id == in.smell_id && (r.scope == in.target || r.scope == "system"));
      }
      v.expect(hit, name + ": " + in.smell_id + "@" + in.target + " not detected in window " +
                        std::to_string(in.window_to - 1));
    }
  }
  v.expect(injected == 24, "expected 24 injection scenarios, found " + std::to_string(injected));

  const auto clean = swtest::load_shipped_scenario("clean");
  const auto run = swtest::run_scenario(clean);
  v.expect(run.runs.size() == static_cast<std::size_t>(clean.window_count()), "clean: run count");
  for (const auto& r : run.pipeline->results().records(0, swtest::after_end(clean))) {
    v.expect(!r.detected, "clean: " + r.smell_id + "@" + r.scope + " detected");
  }
}

// 4. Cycle enumeration against brute force on every small digraph.
std::string node(std::size_t i) { return std::string(1, static_cast<char>('a' + i)); }

std::vector<std::vector<std::string>> named_brute_cycles(const std::vector<std::vector<bool>>& adj) {
  std::vector<std::vector<std::string>> out;
  for (const auto& c : swtest::brute_force_cycles(adj)) {
    std::vector<std::string> cyc;
    for (auto x : c) cyc.push_back(node(x));
    out.push_back(cyc);
  }
  std::sort(out.begin(), out.end());
  return out;
}

SystemModel model_of(const std::vector<std::vector<bool>>& adj) {
  std::vector<ServiceManifest> ms(adj.size());
  for (std::size_t u = 0; u < adj.size(); ++u) {
    ms[u].name = node(u);
    for (std::size_t x = 0; x < adj.size(); ++x) {
      if (adj[u][x]) ms[u].dependencies.push_back({node(x), DependencyVia::http});
    }
  }
  return build_model(ms);
}

void cycles(Verdict& v) {
  for (std::size_t n = 0; n <= 5; ++n) {
    for (const bool loops : {false, true}) {
      if (loops && n > 4) continue;
      for (std::size_t code = 0; code < (std::size_t{1} << swtest::pair_count(n, loops)); ++code) {
        const auto adj = swtest::digraph_from_code(n, code, loops);
        const auto tag = " n=" + std::to_string(n) + " code=" + std::to_string(code) + (loops ? " loops" : "");
        Adjacency g(n);
        for (std::size_t u = 0; u < n; ++u) {
          for (std::size_t x = 0; x < n; ++x) {
            if (adj[u][x]) g[u].push_back(x);
          }
        }
        v.expect(elementary_cycles(g) == swtest::brute_force_cycles(adj), "elementary_cycles" + tag);
        if (!loops) v.expect(find_cycles(model_of(adj)) == named_brute_cycles(adj), "find_cycles" + tag);
      }
    }
  }
}

// 5. Reintegration against a brute-force recount of random windows.
void aggregation(Verdict& v) {
  swtest::Gen g(2024);
  constexpr TimestampUs kT0 = 1'700'000'040'000'000;
  constexpr std::int64_t kMinute = 60'000'000;
  swtest::TempDir dir;
  Pipeline p(swtest::test_config(dir.path()));
  std::vector<std::vector<TelemetryRecord>> raw(kRandomWindows);
  for (std::size_t i = 0; i < kRandomWindows; ++i) {
    const WindowSpec w{kT0 + static_cast<std::int64_t>(i) * kMinute, kMinute};
    raw[i] = swtest::random_window_records(g, w, static_cast<std::size_t>(g.range(1, 150)));
    const auto receipt = p.ingest().ingest_batch(swtest::to_batch(raw[i]));
    v.expect(receipt.rejected.empty(), "ingest rejected a generated record");
  }
  p.reintegrator().run_cycle(kT0 + static_cast<std::int64_t>(kRandomWindows + 60) * kMinute);
  for (std::size_t i = 0; i < kRandomWindows; ++i) {
    const auto ws = kT0 + static_cast<std::int64_t>(i) * kMinute;
    const auto tag = "window " + std::to_string(i) + ": ";
    const auto oracle = swtest::brute_counts(raw[i]);
    const auto insts = load_instance_aggregates(p.store(), ws, ws + 1);
    v.expect(insts.size() == oracle.size(), tag + "instance count");
    std::map<std::string, swtest::InstanceCounts> per_service;
    for (const auto& a : insts) {
      const auto it = oracle.find({a.service, a.instance});
      v.expect(it != oracle.end(), tag + "unknown instance " + a.instance);
      if (it == oracle.end()) continue;
      const auto& o = it->second;
      std::map<std::string, std::int64_t> calls, errors;
      for (const auto& [m, c] : a.business_calls) {
        calls[m] = c.calls;
        errors[m] = c.errors;
      }
      v.expect(a.server_requests == o.server && a.error_requests == o.errors && a.in_calls == o.in_calls &&
                   a.sql_calls == o.sql && a.out_calls == o.out_calls && a.metric_samples == o.metric_samples &&
                   a.gc_count == o.gc_count && calls == o.business_calls && errors == o.business_errors,
               tag + "counts differ for " + a.instance);
      v.expect(a.latency_p50_ms == swtest::rank_percentile_ms(o.durations_us, 50) &&
                   a.latency_p95_ms == swtest::rank_percentile_ms(o.durations_us, 95),
               tag + "percentiles differ for " + a.instance);
      auto& s = per_service[a.service];
      s.server += o.server;
      s.errors += o.errors;
      s.in_calls += o.in_calls;
      s.sql += o.sql;
      s.metric_samples += o.metric_samples;
      s.gc_count += o.gc_count;
      for (const auto& [k, n] : o.out_calls) s.out_calls[k] += n;
      s.durations_us.insert(s.durations_us.end(), o.durations_us.begin(), o.durations_us.end());
    }
    const auto services = load_service_aggregates(p.store(), ws, ws + 1);
    v.expect(services.size() == per_service.size(), tag + "service count");
    for (const auto& a : services) {
      auto& o = per_service[a.service];
      std::sort(o.durations_us.begin(), o.durations_us.end());
      v.expect(a.server_requests == o.server && a.error_requests == o.errors && a.in_calls == o.in_calls &&
                   a.sql_calls == o.sql && a.out_calls == o.out_calls && a.metric_samples == o.metric_samples &&
                   a.gc_count == o.gc_count,
               tag + "rollup sums differ for " + a.service);
      v.expect(a.latency_p50_ms == swtest::rank_percentile_ms(o.durations_us, 50) &&
                   a.latency_p95_ms == swtest::rank_percentile_ms(o.durations_us, 95),
               tag + "pooled percentiles differ for " + a.service);
    }
  }
}

// 6. Duplicate delivery and repeated cycles change nothing.
void idempotence(Verdict& v) {
  const auto s = swtest::load_shipped_scenario("card-29");
  auto run = swtest::run_scenario(s);
  auto& p = *run.pipeline;
  const auto end = swtest::after_end(s);
  const auto aggs = load_service_aggregates(p.store(), 0, end);
  const auto records = p.results().records(0, end);
  const auto runs = p.results().runs(0, end);

  v.expect(p.run_cycles(end).runs.empty(), "re-running the cycle produced runs");
  replay(run.workload.batches, direct_sink(p.ingest()));
  const auto again = p.run_cycles(end);
  v.expect(again.runs.empty(), "duplicate replay produced runs");
  v.expect(load_service_aggregates(p.store(), 0, end) == aggs, "duplicate replay changed aggregates");
  v.expect(p.results().records(0, end) == records, "duplicate replay changed records");
  v.expect(p.results().runs(0, end) == runs, "duplicate replay changed runs");

  // A fresh pipeline fed every batch twice matches one fed once.
  swtest::TempDir dir;
  Pipeline twice(swtest::test_config(dir.path()));
  twice.engine().set_system_model(build_model(run.workload.manifests));
  replay(run.workload.batches, direct_sink(twice.ingest()));
  replay(run.workload.batches, direct_sink(twice.ingest()));
  twice.run_cycles(end);
  v.expect(load_service_aggregates(twice.store(), 0, end) == aggs, "double delivery changed aggregates");
  v.expect(twice.results().records(0, end) == records, "double delivery changed records");
}

// 7. Offline algorithms emit nothing, online resumes, state survives restart.
void registry(Verdict& v) {
  constexpr TimestampUs kT0 = 1'700'000'040'000'000;
  constexpr std::int64_t kMinute = 60'000'000;
  const TimestampUs later = kT0 + 1000 * kMinute;
  swtest::TempDir dir;
  const auto cfg = swtest::test_config(dir.path());
  const auto model = load_manifest_dir(swtest::source_path("fixtures/case-study"));
  auto count = [](const std::vector<DetectionRecord>& rs, const std::string& id) {
    return std::count_if(rs.begin(), rs.end(), [&](const auto& r) { return r.smell_id == id; });
  };
  const std::vector<std::string> targets{"chatty-service", "no-api-versioning"};
  {
    Pipeline p(cfg);
    swtest::Gen g(77);
    for (int i = 0; i < 4; ++i) {
      p.ingest().ingest_batch(swtest::to_batch(swtest::random_window_records(g, {kT0 + i * kMinute, kMinute}, 80)));
    }
    p.engine().set_system_model(model);
    for (const auto& id : targets) p.engine().set_algorithm_status(id, false, kT0 + 1);
    p.run_cycles(later, 1);
    const auto rs = p.results().records(kT0, kT0 + 1);
    for (const auto& id : targets) v.expect(count(rs, id) == 0, "offline " + id + " emitted records");
    v.expect(!rs.empty(), "online algorithms emitted nothing");
  }
  {
    Pipeline p(cfg);
    p.engine().set_system_model(model);
    for (const auto& id : targets) v.expect(!p.engine().registry().online(id), id + " came back online after restart");
    v.expect(p.engine().audit_log().size() == targets.size(), "audit log lost on restart");
    p.run_cycles(later, 1);
    const auto rs = p.results().records(kT0 + kMinute, kT0 + kMinute + 1);
    for (const auto& id : targets) v.expect(count(rs, id) == 0, "offline " + id + " emitted records after restart");
    for (const auto& id : targets) p.engine().set_algorithm_status(id, true, kT0 + 2);
    p.run_cycles(later, 1);
    const auto resumed = p.results().records(kT0 + 2 * kMinute, kT0 + 2 * kMinute + 1);
    for (const auto& id : targets) v.expect(count(resumed, id) > 0, id + " did not resume");
  }
  Pipeline p(cfg);
  for (const auto& id : targets) v.expect(p.engine().registry().online(id), id + " offline after restart");
  v.expect(p.engine().audit_log().size() == 2 * targets.size(), "audit log size after re-enabling");
}

// 8. Summary and ring fractions against a recount over the raw record log.
void summary(Verdict& v) {
  const auto s = swtest::load_shipped_scenario("card-29");
  const auto run = swtest::run_scenario(s);
  auto& p = *run.pipeline;
  const auto& cat = p.catalog();
  std::vector<DetectionRecord> all;
  for (const auto& e : p.store().read_all(kRecordCategory)) {
    all.push_back(detection_record_from_json(nlohmann::json::parse(e.doc)));
  }
  std::vector<DetectionRunSummary> runs;
  for (const auto& e : p.store().read_all(kRunCategory)) {
    runs.push_back(run_summary_from_json(nlohmann::json::parse(e.doc)));
  }
  v.expect(!all.empty() && runs.size() == 29, "raw log is missing runs");

  const auto t0 = s.start_us;
  const std::int64_t w = s.window_s * 1'000'000;
  swtest::Gen g(8);
  std::vector<std::pair<TimestampUs, TimestampUs>> ranges{{0, swtest::after_end(s)}};
  for (int i = 0; i < 30; ++i) {
    auto a = t0 + g.range(-2, 31) * w + g.range(0, 1) * 13;
    auto b = t0 + g.range(-2, 31) * w;
    if (a > b) std::swap(a, b);
    ranges.emplace_back(a, b);
  }
  for (const auto& [from, to] : ranges) {
    const auto tag = "[" + std::to_string(from) + "," + std::to_string(to) + "): ";
    std::int64_t executed = 0, positive = 0;
    for (const auto& r : runs) {
      if (r.window.start_us < from || r.window.start_us >= to) continue;
      ++executed;
      positive += r.positive;
    }
    std::map<std::string, std::pair<std::int64_t, std::int64_t>> per;
    for (const auto& r : all) {
      if (r.window.start_us < from || r.window.start_us >= to) continue;
      per[r.smell_id].first += r.detected;
      ++per[r.smell_id].second;
    }
    std::map<std::pair<PrimaryType, std::string>, std::int64_t> buckets;
    for (const auto& [id, _] : per) {
      const auto* e = cat.find(id);
      ++buckets[{e->primary_type, e->secondary_type}];
    }
    const auto got = p.results().query_summary(from, to, cat);
    v.expect(got.executed == executed && got.positive == positive, tag + "executed/positive");
    v.expect(got.outer_ring.size() == per.size(), tag + "outer ring size");
    for (const auto& slice : got.outer_ring) {
      const auto it = per.find(slice.smell_id);
      if (it == per.end()) {
        v.expect(false, tag + "unexpected outer slice " + slice.smell_id);
        continue;
      }
      const auto [det, eval] = it->second;
      v.expect(slice.detected == det && slice.evaluated == eval, tag + slice.smell_id + " counts");
      v.expect(std::abs(slice.detected_fraction - static_cast<double>(det) / static_cast<double>(eval)) <=
                   kFractionTolerance,
               tag + slice.smell_id + " detected fraction");
      v.expect(std::abs(slice.not_detected_fraction - static_cast<double>(eval - det) / static_cast<double>(eval)) <=
                   kFractionTolerance,
               tag + slice.smell_id + " not-detected fraction");
    }
    v.expect(got.inner_ring.size() == buckets.size(), tag + "inner ring size");
    double sum = 0;
    for (const auto& slice : got.inner_ring) {
      const auto it = buckets.find({slice.primary_type, slice.secondary_type});
      if (it == buckets.end()) {
        v.expect(false, tag + "unexpected inner slice " + slice.secondary_type);
        continue;
      }
      const double want = static_cast<double>(it->second) / static_cast<double>(per.size());
      v.expect(std::abs(slice.fraction - want) <= kFractionTolerance, tag + slice.secondary_type + " fraction");
      sum += slice.fraction;
    }
    if (!buckets.empty()) v.expect(std::abs(sum - 1) <= kFractionTolerance, tag + "inner ring does not sum to 1");
  }
}

struct Criterion {
  int number;
  const char* name;
  std::function<void(Verdict&)> body;
  double budget_s;  // 0: no time limit
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "case-study static smells and history", case_study, kCaseStudyBudgetS},
      {2, "29 executed runs, 11 positive", detection_card, kCardBudgetS},
      {3, "injection scenarios detected, clean scenario silent", scenarios, kScenarioBudgetS},
      {4, "cycle enumeration equals brute force", cycles, 0},
      {5, "aggregates equal a brute-force recount", aggregation, 0},
      {6, "duplicate delivery and repeated cycles are idempotent", idempotence, 0},
      {7, "algorithm registry switches and persistence", registry, 0},
      {8, "summary fractions equal a raw-log recount", summary, 0},
  };
  bool all_ok = true;
  for (const auto& c : criteria) {
    Verdict v;
    const auto started = std::chrono::steady_clock::now();
    try {
      c.body(v);
    } catch (const std::exception& e) {
      v.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (c.budget_s > 0) {
      v.expect(secs <= c.budget_s, "took " + std::to_string(secs) + " s, budget " + std::to_string(c.budget_s) + " s");
    }
    all_ok = all_ok && v.ok();
    std::cout << (v.ok() ? "PASS" : "FAIL") << " criterion " << c.number << ": " << c.name << " (" << std::fixed
              << std::setprecision(2) << secs << " s)";
    if (!v.ok()) std::cout << " -- " << v.report();
    std::cout << std::endl;
  }
  return all_ok ? 0 : 1;
}
