// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <cstdlib>
#include <stdexcept>

namespace swtest {

std::filesystem::path source_path(const std::string& relative) {
  return std::filesystem::path(SMELLWATCH_SOURCE_DIR) / relative;
}

TempDir::TempDir() {
  auto pattern = (std::filesystem::temp_directory_path() / "smellwatch-test-XXXXXX").string();
  if (!::mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
  path_ = pattern;
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::uint64_t Gen::next() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::int64_t Gen::range(std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(next() % span);
}

double Gen::unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::vector<TelemetryRecord> random_window_records(Gen& g, const WindowSpec& w, std::size_t approx_count,
                                                   double dup_rate) {
  const std::vector<std::string> services{"alpha", "beta", "gamma"};
  const std::vector<std::string> methods{"get", "put", "list"};
  auto instance = [&](const std::string& s) { return s + "-" + std::to_string(g.range(0, 2)); };
  auto ts = [&] { return w.start_us + g.range(0, w.length_us - 1); };
  std::vector<TelemetryRecord> out;
  int trace = 0;
  while (out.size() < approx_count) {
    const auto kind = g.range(0, 9);
    if (kind < 6) {
      // A small trace: root, optional client + remote server, optional db.
      const std::string tid = "t" + std::to_string(trace++);
      const auto& svc = g.pick(services);
      SpanRecord root;
      root.trace_id = tid;
      root.span_id = "r";
      root.service = svc;
      root.instance = instance(svc);
      root.operation = "/op";
      root.kind = SpanKind::server;
      root.start_us = ts();
      root.duration_us = g.range(0, 400'000);
      root.status = g.chance(0.1) ? SpanStatus::error : SpanStatus::ok;
      out.emplace_back(root);
      std::string parent = "r";
      const auto depth = g.range(0, 3);
      for (std::int64_t d = 0; d < depth; ++d) {
        const auto& peer = g.pick(services);
        SpanRecord c = root;
        c.span_id = "c" + std::to_string(d);
        c.parent_span_id = parent;
        c.kind = SpanKind::client;
        c.peer_service = peer;
        c.status = SpanStatus::ok;
        c.start_us = ts();
        out.emplace_back(c);
        SpanRecord s = c;
        s.span_id = "s" + std::to_string(d);
        s.parent_span_id = c.span_id;
        s.service = peer;
        s.instance = instance(peer);
        s.kind = SpanKind::server;
        s.peer_service.reset();
        s.status = g.chance(0.1) ? SpanStatus::error : SpanStatus::ok;
        s.duration_us = g.range(0, 400'000);
        s.start_us = ts();
        out.emplace_back(s);
        parent = s.span_id;
        root = s;
      }
      if (g.chance(0.5)) {
        SpanRecord db = root;
        db.span_id = "d";
        db.parent_span_id = root.span_id;
        db.kind = SpanKind::db;
        db.db_statement_kind = StatementKind::select;
        db.peer_service.reset();
        db.start_us = ts();
        out.emplace_back(db);
      }
    } else if (kind < 8) {
      MetricSample m;
      m.service = g.pick(services);
      m.instance = instance(m.service);
      m.ts_us = ts();
      m.cpu_frac = g.unit();
      m.heap_max_bytes = 1'000'000;
      m.heap_used_bytes = g.range(0, m.heap_max_bytes);
      m.gc_count_delta = g.range(0, 5);
      m.gc_pause_ms_delta = static_cast<double>(g.range(0, 50));
      out.emplace_back(m);
    } else {
      BusinessSample b;
      b.service = g.pick(services);
      b.instance = instance(b.service);
      b.method = g.pick(methods);
      b.ts_us = ts();
      b.call_count_delta = g.range(0, 20);
      b.error_count_delta = g.range(0, b.call_count_delta);
      b.latency_sum_ms_delta = static_cast<double>(g.range(0, 1000));
      out.emplace_back(b);
    }
  }
  const auto originals = out.size();
  for (std::size_t i = 0; i < originals; ++i) {
    if (g.chance(dup_rate)) out.push_back(out[static_cast<std::size_t>(g.range(0, static_cast<std::int64_t>(originals) - 1))]);
  }
  return out;
}

TelemetryBatch to_batch(const std::vector<TelemetryRecord>& records) {
  TelemetryBatch b;
  b.producer = "test";
  for (const auto& r : records) {
    if (const auto* s = std::get_if<SpanRecord>(&r)) b.spans.push_back(*s);
    if (const auto* m = std::get_if<MetricSample>(&r)) b.metrics.push_back(*m);
    if (const auto* x = std::get_if<BusinessSample>(&r)) b.business.push_back(*x);
  }
  return b;
}

Config test_config(const std::filesystem::path& data_dir) {
  Config c;
  c.data_dir = data_dir;
  c.port = 0;
  return c;
}

TimestampUs after_end(const Scenario& s) { return s.start_us + s.duration_s * 1'000'000 + 3'600'000'000LL; }

ScenarioRun run_scenario(const Scenario& s) {
  ScenarioRun run;
  run.dir = std::make_unique<TempDir>();
  run.pipeline = std::make_unique<Pipeline>(test_config(run.dir->path() / "data"));
  run.workload = generate(s);
  run.pipeline->engine().set_system_model(build_model(run.workload.manifests));
  run.replay = replay(run.workload.batches, direct_sink(run.pipeline->ingest()));
  run.runs = run.pipeline->run_cycles(after_end(s)).runs;
  return run;
}

Scenario load_shipped_scenario(const std::string& name) {
  return load_scenario_file(source_path("scenarios/" + name + ".json"));
}

std::vector<DetectionRecord> records_for(const ScenarioRun& run, int window_index) {
  const auto& runs = run.runs;
  if (window_index < 0 || static_cast<std::size_t>(window_index) >= runs.size()) return {};
  const auto& w = runs[static_cast<std::size_t>(window_index)].window;
  return run.pipeline->results().records(w.start_us, w.start_us + 1);
}

}  // namespace swtest
