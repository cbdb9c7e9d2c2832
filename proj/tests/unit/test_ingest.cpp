// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "smellwatch/error.hpp"
#include "smellwatch/ingest.hpp"
#include "support.hpp"

using namespace smellwatch;
using nlohmann::json;

namespace {

constexpr TimestampUs kT0 = 1'700'000'000'000'000;

MetricSample metric(TimestampUs ts, double cpu = 0.2) {
  return {"svc", "svc-0", ts, cpu, 100, 200, 0, 0};
}

SpanRecord span(std::string id, TimestampUs ts) {
  SpanRecord s;
  s.trace_id = "t";
  s.span_id = std::move(id);
  s.service = "svc";
  s.instance = "svc-0";
  s.operation = "GET /x";
  s.start_us = ts;
  s.duration_us = 1000;
  return s;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::startup;
}

}  // namespace

TEST_CASE("telemetry records round-trip through JSON") {
  swtest::Gen g(5);
  const WindowSpec w{kT0, 60'000'000};
  for (const auto& r : swtest::random_window_records(g, w, 300)) {
    const auto back = record_from_json(category_of(r), to_json(r));
    CHECK(back == r);
  }
}

TEST_CASE("valid mixed batch is accepted in full") {
  swtest::TempDir dir;
  Store store({dir.path()});
  TelemetryIngest ingest(store);
  TelemetryBatch b;
  b.producer = "test";
  b.spans = {span("a", kT0), span("b", kT0 + 10)};
  b.metrics = {metric(kT0 + 5)};
  b.business = {{"svc", "svc-0", "place", kT0 + 7, 3, 1, 12.5}};
  const auto receipt = ingest.ingest_batch(b);
  CHECK(receipt.accepted == 4);
  CHECK(receipt.rejected.empty());
  CHECK(ingest.read_raw(RawCategory::span, kT0, kT0 + 11).size() == 2);
  CHECK(ingest.read_raw(RawCategory::metric, kT0, kT0 + 11).size() == 1);
  CHECK(ingest.read_raw(RawCategory::business, kT0, kT0 + 11).size() == 1);
}

TEST_CASE("cpu_frac 1.7 is rejected with its index and the rest accepted") {
  swtest::TempDir dir;
  Store store({dir.path()});
  TelemetryIngest ingest(store);
  TelemetryBatch b;
  b.metrics = {metric(kT0), metric(kT0 + 1, 1.7), metric(kT0 + 2)};
  const auto receipt = ingest.ingest_batch(b);
  CHECK(receipt.accepted == 2);
  REQUIRE(receipt.rejected.size() == 1);
  CHECK(receipt.rejected[0].category == RawCategory::metric);
  CHECK(receipt.rejected[0].index == 1);
  CHECK(receipt.rejected[0].reason.find("cpu_frac") != std::string::npos);
  CHECK(ingest.read_raw(RawCategory::metric, kT0, kT0 + 10).size() == 2);
}

TEST_CASE("wire decoding: bad body is a parse error, bad fields are per-record rejections") {
  swtest::TempDir dir;
  Store store({dir.path()});
  TelemetryIngest ingest(store);
  CHECK(code_of([&] { ingest.ingest_json("not json"); }) == ErrorCode::parse);
  CHECK(code_of([&] { ingest.ingest_json("[1,2]"); }) == ErrorCode::parse);
  CHECK(code_of([&] { ingest.ingest_json("{}"); }) == ErrorCode::validation);
  json body{{"producer", "p"}, {"metrics", json::array({to_json(metric(kT0)), json{{"service", "svc"}}})}};
  const auto receipt = ingest.ingest_json(body.dump());
  CHECK(receipt.accepted == 1);
  REQUIRE(receipt.rejected.size() == 1);
  CHECK(receipt.rejected[0].index == 1);
}

TEST_CASE("empty batch is a validation error") {
  swtest::TempDir dir;
  Store store({dir.path()});
  TelemetryIngest ingest(store);
  CHECK(code_of([&] { ingest.ingest_batch({}); }) == ErrorCode::validation);
}

TEST_CASE("read_raw ranges are half-open and tile") {
  swtest::TempDir dir;
  Store store({dir.path(), 4096});
  TelemetryIngest ingest(store, {1'000'000'000});
  swtest::Gen g(17);
  const WindowSpec w{kT0, 60'000'000};
  const auto records = swtest::random_window_records(g, w, 400);
  for (std::size_t i = 0; i < records.size(); i += 50) {
    std::vector<TelemetryRecord> part(records.begin() + static_cast<std::ptrdiff_t>(i),
                                      records.begin() + static_cast<std::ptrdiff_t>(std::min(i + 50, records.size())));
    ingest.ingest_batch(swtest::to_batch(part));
  }
  CHECK(store.segment_count() > 1);
  for (auto c : {RawCategory::span, RawCategory::metric, RawCategory::business}) {
    const auto whole = ingest.read_raw(c, w.start_us, w.start_us + w.length_us);
    std::size_t expect = 0;
    for (const auto& r : records) expect += category_of(r) == c;
    CHECK(whole.size() == expect);
    for (int round = 0; round < 20; ++round) {
      const auto a = w.start_us + g.range(0, w.length_us);
      const auto b = w.start_us + g.range(0, w.length_us);
      const auto lo = std::min(a, b);
      const auto hi = std::max(a, b);
      const auto left = ingest.read_raw(c, w.start_us, lo);
      const auto mid = ingest.read_raw(c, lo, hi);
      const auto right = ingest.read_raw(c, hi, w.start_us + w.length_us);
      CHECK(left.size() + mid.size() + right.size() == whole.size());
      for (const auto& r : mid) {
        CHECK(timestamp_of(r) >= lo);
        CHECK(timestamp_of(r) < hi);
      }
      CHECK(ingest.read_raw(c, lo, lo).empty());
    }
    CHECK(std::is_sorted(whole.begin(), whole.end(),
                         [](const auto& x, const auto& y) { return timestamp_of(x) < timestamp_of(y); }));
  }
}

TEST_CASE("inverted read range is an argument error") {
  swtest::TempDir dir;
  Store store({dir.path()});
  TelemetryIngest ingest(store);
  CHECK(code_of([&] { ingest.read_raw(RawCategory::span, 10, 5); }) == ErrorCode::argument);
}

TEST_CASE("store fault: the batch fails with a retryable error and nothing is visible") {
  swtest::TempDir dir;
  Store store({dir.path()});
  TelemetryIngest ingest(store);
  TelemetryBatch b;
  b.metrics = {metric(kT0), metric(kT0 + 1)};
  store.set_write_fault(true);
  try {
    ingest.ingest_batch(b);
    FAIL("expected a store error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::store);
    CHECK(e.retryable());
  }
  CHECK(ingest.read_raw(RawCategory::metric, kT0, kT0 + 10).empty());
  store.set_write_fault(false);
  CHECK(ingest.ingest_batch(b).accepted == 2);
  CHECK(ingest.read_raw(RawCategory::metric, kT0, kT0 + 10).size() == 2);
}

TEST_CASE("late arrivals beyond the horizon are rejected") {
  swtest::TempDir dir;
  Store store({dir.path()});
  TelemetryIngest ingest(store, {60'000'000});
  TelemetryBatch first;
  first.metrics = {metric(kT0 + 120'000'000)};
  ingest.ingest_batch(first);
  TelemetryBatch late;
  late.metrics = {metric(kT0 + 60'000'000), metric(kT0 + 59'999'999)};
  const auto receipt = ingest.ingest_batch(late);
  CHECK(receipt.accepted == 1);
  REQUIRE(receipt.rejected.size() == 1);
  CHECK(receipt.rejected[0].index == 1);
}

TEST_CASE("store recovers frames on reopen and drops a torn tail") {
  swtest::TempDir dir;
  {
    Store store({dir.path()});
    TelemetryIngest ingest(store);
    TelemetryBatch b;
    b.spans = {span("a", kT0), span("b", kT0 + 1)};
    ingest.ingest_batch(b);
  }
  std::filesystem::path seg;
  for (const auto& e : std::filesystem::directory_iterator(dir.path())) seg = e.path();
  {
    std::ofstream out(seg, std::ios::app | std::ios::binary);
    out << "{\"entries\":[{\"category\":\"raw.span\"";
  }
  Store reopened({dir.path()});
  CHECK(reopened.count("raw.span") == 2);
  TelemetryIngest ingest(reopened);
  CHECK(ingest.watermark() == kT0 + 1);
  TelemetryBatch more;
  more.spans = {span("c", kT0 + 2)};
  ingest.ingest_batch(more);
  Store again({dir.path()});
  CHECK(again.count("raw.span") == 3);
}
