// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "smellwatch/catalog.hpp"
#include "smellwatch/ingest.hpp"
#include "smellwatch/static_analyzer.hpp"
#include "smellwatch/telemetry.hpp"

namespace smellwatch {

/// One simulated service: its manifest plus the traffic and resource profile
/// the generator uses for it.
struct SimService {
  ServiceManifest manifest;
  int instances = 1;
  double baseline_rps = 1.0;
  /// Per dependency target; targets missing here use 0.5.
  std::map<std::string, double> calls_per_request;
  double latency_ms = 40;
  double db_calls_per_request = 1;
  std::vector<std::string> business_methods{"handle", "query"};
  double cpu_frac = 0.3;
  std::int64_t heap_used_bytes = 200'000'000;
  std::int64_t heap_max_bytes = 512'000'000;
  double gc_per_min = 6;
  double gc_pause_ms = 15;

  friend bool operator==(const SimService&, const SimService&) = default;
};

struct Injection {
  std::string smell_id;
  std::string target;  // service name, or "system"
  int window_from = 0;  // window indices, half-open
  int window_to = 1;
  double intensity = 1.0;

  friend bool operator==(const Injection&, const Injection&) = default;
};

struct Scenario {
  std::string name;
  std::uint64_t seed = 1;
  TimestampUs start_us = 1'700'000'040'000'000;  // multiple of 60 s
  std::int64_t window_s = 60;
  std::int64_t duration_s = 180;
  std::int64_t report_interval_s = 5;
  std::vector<SimService> services;
  std::vector<Injection> injections;

  int window_count() const noexcept { return static_cast<int>(duration_s / window_s); }
  friend bool operator==(const Scenario&, const Scenario&) = default;
};

Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Scenario& s);
Scenario load_scenario_file(const std::filesystem::path& path);

struct GeneratedWorkload {
  std::vector<ServiceManifest> manifests;
  /// One batch per report interval that holds records, ascending in time.
  std::vector<TelemetryBatch> batches;
};

/// Pure function of the scenario. Injection magnitudes are derived from the
/// catalog's default thresholds so that targeted statistics land at least 20%
/// past the threshold. Throws Error{validation} for invalid scenarios.
GeneratedWorkload generate(const Scenario& scenario, const Catalog& catalog = bundled_catalog());

/// Writes each manifest as `<name>.json` into `dir` (created if missing).
void write_manifests(const std::vector<ServiceManifest>& manifests, const std::filesystem::path& dir);

struct ReplayReport {
  std::size_t sent_batches = 0;
  std::size_t sent_records = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;

  friend bool operator==(const ReplayReport&, const ReplayReport&) = default;
};

nlohmann::json to_json(const ReplayReport& r);

/// Delivers one batch and returns the ingest receipt.
using BatchSink = std::function<IngestReceipt(const TelemetryBatch&)>;

struct ReplayOptions {
  /// Pacing multiplier over simulated time; 0 or infinity disables pacing.
  double speed = 0;
  int max_attempts = 3;
  std::chrono::milliseconds retry_backoff{100};
};

/// Delivers batches in time order. A sink that throws Error{unreachable} is
/// retried up to max_attempts before the error propagates.
ReplayReport replay(const std::vector<TelemetryBatch>& batches, const BatchSink& sink, ReplayOptions options = {});

BatchSink direct_sink(TelemetryIngest& ingest);
/// POSTs batches to `<base_url>/ingest`.
BatchSink http_sink(const std::string& base_url);

}  // namespace smellwatch
