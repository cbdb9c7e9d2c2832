// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "smellwatch/service.hpp"
#include "smellwatch/simulator.hpp"
#include "smellwatch/telemetry.hpp"

namespace swtest {

using namespace smellwatch;

std::filesystem::path source_path(const std::string& relative);

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

/// splitmix64-based generator for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  /// Uniform integer in [lo, hi].
  std::int64_t range(std::int64_t lo, std::int64_t hi);
  double unit();
  bool chance(double p) { return unit() < p; }
  template <class T>
  const T& pick(const std::vector<T>& v) {
    return v[static_cast<std::size_t>(range(0, static_cast<std::int64_t>(v.size()) - 1))];
  }

 private:
  std::uint64_t state_;
};

/// Random records inside `window`: spans with parent links across a few
/// services and instances, metric and business samples, and exact duplicates
/// of some of them (about `dup_rate` of the output).
std::vector<TelemetryRecord> random_window_records(Gen& g, const WindowSpec& window, std::size_t approx_count,
                                                   double dup_rate = 0.1);

TelemetryBatch to_batch(const std::vector<TelemetryRecord>& records);

Config test_config(const std::filesystem::path& data_dir);

/// A moment after which every window of the scenario has closed.
TimestampUs after_end(const Scenario& s);

/// Generates the scenario, replays it into a fresh pipeline, registers the
/// generated manifests and drains detection.
struct ScenarioRun {
  std::unique_ptr<TempDir> dir;
  std::unique_ptr<Pipeline> pipeline;
  GeneratedWorkload workload;
  ReplayReport replay;
  std::vector<DetectionRunSummary> runs;
};
ScenarioRun run_scenario(const Scenario& s);
Scenario load_shipped_scenario(const std::string& name);

/// Every record stored for the run of the `window_index`-th window.
std::vector<DetectionRecord> records_for(const ScenarioRun& run, int window_index);

}  // namespace swtest
