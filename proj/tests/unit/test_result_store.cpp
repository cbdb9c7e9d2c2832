// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <set>

#include "smellwatch/error.hpp"
#include "smellwatch/result_store.hpp"
#include "support.hpp"

using namespace smellwatch;

namespace {

constexpr TimestampUs kT0 = 1'700'000'040'000'000;
constexpr std::int64_t kMinute = 60'000'000;

struct Run {
  DetectionRunSummary summary;
  std::vector<DetectionRecord> records;
};

Run make_run(swtest::Gen& g, int index, double hit_rate) {
  const auto& cat = bundled_catalog();
  const std::vector<std::string> services{"a", "b", "c"};
  Run run;
  run.summary.window = {kT0 + index * kMinute, kMinute};
  run.summary.run_id = "run-" + std::to_string(run.summary.window.start_us);
  run.summary.executed = true;
  for (const auto* e : cat.bound_entries()) {
    if (g.chance(0.3)) continue;
    const bool system = e->id == "esb-usage" || e->id == "no-api-gateway";
    for (const auto& s : system ? std::vector<std::string>{"system"} : services) {
      DetectionRecord r;
      r.run_id = run.summary.run_id;
      r.window = run.summary.window;
      r.scope = s;
      r.smell_id = e->id;
      r.threshold = 1;
      r.metric_value = g.chance(hit_rate) ? 2 : 0;
      r.detected = r.metric_value >= r.threshold;
      r.evidence["x"] = r.metric_value;
      run.summary.positive = run.summary.positive || r.detected;
      run.records.push_back(r);
    }
  }
  run.summary.record_count = run.records.size();
  return run;
}

/// Summary recomputed from the runs written, without reading the store.
DetectionCardSummary recount(const std::vector<Run>& runs, TimestampUs from, TimestampUs to) {
  const auto& cat = bundled_catalog();
  DetectionCardSummary s;
  std::map<std::string, std::pair<std::int64_t, std::int64_t>> per;
  for (const auto& run : runs) {
    const auto ws = run.summary.window.start_us;
    if (ws < from || ws >= to) continue;
    ++s.executed;
    s.positive += run.summary.positive;
    for (const auto& r : run.records) {
      per[r.smell_id].first += r.detected;
      ++per[r.smell_id].second;
    }
  }
  std::map<std::pair<PrimaryType, std::string>, std::int64_t> buckets;
  for (const auto& [id, c] : per) {
    const auto* e = cat.find(id);
    ++buckets[{e->primary_type, e->secondary_type}];
    s.outer_ring.push_back({id, e->primary_type, e->secondary_type, c.first, c.second,
                            static_cast<double>(c.first) / static_cast<double>(c.second),
                            static_cast<double>(c.second - c.first) / static_cast<double>(c.second)});
  }
  std::sort(s.outer_ring.begin(), s.outer_ring.end(), [](const auto& a, const auto& b) {
    return std::tie(a.primary_type, a.secondary_type, a.smell_id) < std::tie(b.primary_type, b.secondary_type, b.smell_id);
  });
  const auto total = static_cast<std::int64_t>(per.size());
  for (const auto& [k, n] : buckets) {
    s.inner_ring.push_back({k.first, k.second, n, total, static_cast<double>(n) / static_cast<double>(total)});
  }
  return s;
}

void check_summary(const DetectionCardSummary& got, const DetectionCardSummary& want) {
  CHECK(got.executed == want.executed);
  CHECK(got.positive == want.positive);
  REQUIRE(got.outer_ring.size() == want.outer_ring.size());
  for (std::size_t i = 0; i < want.outer_ring.size(); ++i) {
    const auto& g = got.outer_ring[i];
    const auto& w = want.outer_ring[i];
    CHECK(g.smell_id == w.smell_id);
    CHECK(g.detected == w.detected);
    CHECK(g.evaluated == w.evaluated);
    CHECK(std::abs(g.detected_fraction - w.detected_fraction) <= 1e-9);
    CHECK(std::abs(g.detected_fraction + g.not_detected_fraction - 1) <= 1e-9);
  }
  REQUIRE(got.inner_ring.size() == want.inner_ring.size());
  double sum = 0;
  for (std::size_t i = 0; i < want.inner_ring.size(); ++i) {
    CHECK(got.inner_ring[i].primary_type == want.inner_ring[i].primary_type);
    CHECK(got.inner_ring[i].secondary_type == want.inner_ring[i].secondary_type);
    CHECK(got.inner_ring[i].types == want.inner_ring[i].types);
    CHECK(std::abs(got.inner_ring[i].fraction - want.inner_ring[i].fraction) <= 1e-9);
    sum += got.inner_ring[i].fraction;
  }
  if (!want.inner_ring.empty()) CHECK(std::abs(sum - 1) <= 1e-9);
}

}  // namespace

TEST_CASE("store_run round-trips summaries and records") {
  swtest::TempDir dir;
  Store store({dir.path()});
  ResultStore results(store);
  swtest::Gen g(1);
  const auto run = make_run(g, 0, 0.3);
  CHECK(results.store_run(run.summary, run.records) == run.summary.run_id);
  CHECK(results.has_run(run.summary.run_id));
  CHECK(results.runs(kT0, kT0 + kMinute) == std::vector<DetectionRunSummary>{run.summary});
  CHECK(results.records(kT0, kT0 + kMinute) == run.records);
  CHECK(results.last_run_window_start() == kT0);
}

TEST_CASE("storing a run twice is a conflict, also after reopening") {
  swtest::TempDir dir;
  swtest::Gen g(2);
  const auto run = make_run(g, 0, 0.3);
  {
    Store store({dir.path()});
    ResultStore results(store);
    results.store_run(run.summary, run.records);
    try {
      results.store_run(run.summary, run.records);
      FAIL("expected conflict");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::conflict);
    }
  }
  Store store({dir.path()});
  ResultStore results(store);
  CHECK(results.has_run(run.summary.run_id));
  CHECK_THROWS_AS(results.store_run(run.summary, run.records), Error);
  CHECK(results.records(kT0, kT0 + kMinute).size() == run.records.size());
}

TEST_CASE("inconsistent runs are rejected") {
  swtest::TempDir dir;
  Store store({dir.path()});
  ResultStore results(store);
  swtest::Gen g(3);
  auto run = make_run(g, 0, 0.5);
  auto bad_count = run;
  bad_count.summary.record_count += 1;
  CHECK_THROWS_AS(results.store_run(bad_count.summary, bad_count.records), Error);
  auto bad_flag = run;
  bad_flag.summary.positive = !bad_flag.summary.positive;
  CHECK_THROWS_AS(results.store_run(bad_flag.summary, bad_flag.records), Error);
  auto foreign = run;
  foreign.records[0].run_id = "other";
  CHECK_THROWS_AS(results.store_run(foreign.summary, foreign.records), Error);
  CHECK(results.runs(kT0, kT0 + kMinute).empty());
}

TEST_CASE("29 executed runs of which 11 positive") {
  swtest::TempDir dir;
  Store store({dir.path()});
  ResultStore results(store);
  swtest::Gen g(4);
  std::vector<Run> runs;
  for (int i = 0; i < 29; ++i) {
    const bool positive = i % 2 == 1 && i < 23;
    runs.push_back(make_run(g, i, positive ? 0.2 : 0.0));
    if (positive && !runs.back().summary.positive) {
      runs.back().records[0].metric_value = 2;
      runs.back().records[0].detected = true;
      runs.back().summary.positive = true;
    }
    results.store_run(runs.back().summary, runs.back().records);
  }
  const auto s = results.query_summary(kT0, kT0 + 29 * kMinute, bundled_catalog());
  CHECK(s.executed == 29);
  CHECK(s.positive == 11);
  check_summary(s, recount(runs, kT0, kT0 + 29 * kMinute));
}

TEST_CASE("empty store answers with empty results") {
  swtest::TempDir dir;
  Store store({dir.path()});
  ResultStore results(store);
  const auto s = results.query_summary(0, kT0, bundled_catalog());
  CHECK(s.executed == 0);
  CHECK(s.positive == 0);
  CHECK(s.inner_ring.empty());
  CHECK(s.outer_ring.empty());
  CHECK(results.query_history(std::nullopt, 0, kT0).windows.empty());
  CHECK(results.query_service_records("a", 0, kT0).empty());
  CHECK_FALSE(results.last_run_window_start());
}

TEST_CASE("inverted ranges are argument errors") {
  swtest::TempDir dir;
  Store store({dir.path()});
  ResultStore results(store);
  auto code = [](const std::function<void()>& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::startup;
  };
  CHECK(code([&] { results.query_summary(5, 4, bundled_catalog()); }) == ErrorCode::argument);
  CHECK(code([&] { results.query_history(std::nullopt, 5, 4); }) == ErrorCode::argument);
  CHECK(code([&] { results.query_service_records("a", 5, 4); }) == ErrorCode::argument);
  CHECK(code([&] { results.record_counts(5, 4); }) == ErrorCode::argument);
}

TEST_CASE("summary equals a full recount over random ranges, and ranges tile") {
  swtest::TempDir dir;
  Store store({dir.path(), 16 * 1024});
  ResultStore results(store);
  swtest::Gen g(5);
  std::vector<Run> runs;
  for (int i = 0; i < 40; ++i) {
    runs.push_back(make_run(g, i, g.unit() * 0.4));
    results.store_run(runs.back().summary, runs.back().records);
  }
  for (int round = 0; round < 40; ++round) {
    auto a = kT0 + g.range(-2, 42) * kMinute + g.range(0, 1) * 7;
    auto b = kT0 + g.range(-2, 42) * kMinute;
    if (a > b) std::swap(a, b);
    check_summary(results.query_summary(a, b, bundled_catalog()), recount(runs, a, b));
    const auto m = a + (b - a) / 2;
    CHECK(results.runs(a, m).size() + results.runs(m, b).size() == results.runs(a, b).size());
    CHECK(results.records(a, m).size() + results.records(m, b).size() == results.records(a, b).size());
    std::int64_t counted = 0;
    for (const auto& [_, n] : results.record_counts(a, b)) counted += n;
    CHECK(static_cast<std::size_t>(counted) == results.records(a, b).size());
  }
}

TEST_CASE("history lists each service's detections and system detections under every service") {
  swtest::TempDir dir;
  Store store({dir.path()});
  ResultStore results(store);
  swtest::Gen g(6);
  std::vector<Run> runs;
  for (int i = 0; i < 10; ++i) {
    runs.push_back(make_run(g, i, 0.15));
    results.store_run(runs.back().summary, runs.back().records);
  }
  const auto t = results.query_history(std::nullopt, kT0, kT0 + 10 * kMinute);
  REQUIRE(t.windows.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& entry = t.windows[i];
    CHECK(entry.run_id == runs[i].summary.run_id);
    std::set<std::string> system;
    std::map<std::string, std::set<std::string>> expect;
    for (const auto& r : runs[i].records) {
      if (r.scope == "system") {
        if (r.detected) system.insert(r.smell_id);
      } else {
        auto& s = expect[r.scope];
        if (r.detected) s.insert(r.smell_id);
      }
    }
    for (auto& [svc, smells] : expect) smells.insert(system.begin(), system.end());
    CHECK(entry.services.size() == expect.size());
    for (const auto& [svc, smells] : expect) {
      REQUIRE(entry.services.contains(svc));
      CHECK(entry.services.at(svc) == std::vector<std::string>(smells.begin(), smells.end()));
    }
  }
  // Filtering partitions the unfiltered timeline.
  for (const auto* svc : {"a", "b", "c"}) {
    const auto f = results.query_history(std::string(svc), kT0, kT0 + 10 * kMinute);
    REQUIRE(f.windows.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) {
      for (const auto& [s, smells] : f.windows[i].services) {
        CHECK(s == svc);
        CHECK(t.windows[i].services.at(s) == smells);
      }
    }
  }
}

TEST_CASE("service records are ordered by window then smell") {
  swtest::TempDir dir;
  Store store({dir.path()});
  ResultStore results(store);
  swtest::Gen g(7);
  std::size_t expect = 0;
  for (int i = 3; i >= 0; --i) {
    auto run = make_run(g, i, 0.3);
    for (const auto& r : run.records) expect += r.scope == "b";
    results.store_run(run.summary, run.records);
  }
  const auto rs = results.query_service_records("b", kT0, kT0 + 4 * kMinute);
  CHECK(rs.size() == expect);
  for (std::size_t i = 1; i < rs.size(); ++i) {
    CHECK(std::tie(rs[i - 1].window.start_us, rs[i - 1].smell_id) < std::tie(rs[i].window.start_us, rs[i].smell_id));
  }
  for (const auto& r : rs) CHECK(r.scope == "b");
}
