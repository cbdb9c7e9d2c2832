// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>

#include "smellwatch/api_service.hpp"
#include "smellwatch/config.hpp"
#include "smellwatch/reintegration.hpp"

namespace smellwatch {

struct CycleReport {
  std::size_t aggregated_windows = 0;
  std::vector<DetectionRunSummary> runs;
};

/// Store, ingest, reintegration and detection wired together from a Config.
/// Registry state and results persist in the data dir across restarts.
class Pipeline {
 public:
  /// Throws Error{configuration} for bad threshold overrides or catalog files.
  explicit Pipeline(const Config& config);

  /// Reloads manifests_dir, if configured, into the engine's system model.
  /// Errors keep the previous model and are rethrown.
  void reload_manifests();
  /// One reintegration cycle, then detection until no committed window is
  /// left without a run (at most `max_runs` when non-zero).
  CycleReport run_cycles(TimestampUs now_us, std::size_t max_runs = 0);

  Store& store() noexcept { return *store_; }
  TelemetryIngest& ingest() noexcept { return *ingest_; }
  Reintegrator& reintegrator() noexcept { return *reintegrator_; }
  ResultStore& results() noexcept { return *results_; }
  DetectionEngine& engine() noexcept { return *engine_; }
  const Catalog& catalog() const noexcept { return catalog_; }
  const Config& config() const noexcept { return config_; }

 private:
  Config config_;
  Catalog catalog_;
  std::unique_ptr<Store> store_;
  std::unique_ptr<TelemetryIngest> ingest_;
  std::unique_ptr<Reintegrator> reintegrator_;
  std::unique_ptr<ResultStore> results_;
  std::unique_ptr<DetectionEngine> engine_;
};

TimestampUs wall_clock_us();

/// `serve`: the API plus a scheduler thread running reintegration and
/// detection on their configured periods.
class Service {
 public:
  explicit Service(const Config& config, std::function<TimestampUs()> clock = wall_clock_us);
  ~Service();

  /// Throws Error{startup} when the port cannot be bound.
  void start();
  /// Stops the scheduler, then the API after draining in-flight requests.
  void stop();
  int port() const noexcept { return api_->port(); }
  Pipeline& pipeline() noexcept { return pipeline_; }

 private:
  void scheduler_loop();

  Pipeline pipeline_;
  std::function<TimestampUs()> clock_;
  std::unique_ptr<ApiServer> api_;
  std::thread scheduler_;
  std::mutex mutex_;
  std::condition_variable wake_;
  bool stopping_ = false;
};

}  // namespace smellwatch
