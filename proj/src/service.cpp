// SPDX-License-Identifier: Apache-2.0

#include "smellwatch/service.hpp"

#include <chrono>
#include <iostream>
#include <set>

namespace smellwatch {

TimestampUs wall_clock_us() {
  return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

Pipeline::Pipeline(const Config& config)
    : config_(config), catalog_(config.catalog ? load_catalog_file(config.catalog->string()) : bundled_catalog()) {
  auto params = DetectionParams::from_catalog(catalog_, config_.thresholds);
  store_ = std::make_unique<Store>(StoreOptions{config_.data_dir, config_.segment_bytes});
  ingest_ = std::make_unique<TelemetryIngest>(*store_, IngestOptions{config_.lateness_s * 1'000'000});
  reintegrator_ = std::make_unique<Reintegrator>(
      *store_, ReintegrationOptions{config_.window_s * 1'000'000, config_.lateness_s * 1'000'000});
  results_ = std::make_unique<ResultStore>(*store_);
  engine_ = std::make_unique<DetectionEngine>(*store_, *results_, catalog_, std::move(params),
                                              EngineOptions{config_.history_depth});
}

void Pipeline::reload_manifests() {
  if (!config_.manifests_dir) return;
  engine_->set_system_model(load_manifest_dir(*config_.manifests_dir));
}

CycleReport Pipeline::run_cycles(TimestampUs now_us, std::size_t max_runs) {
  CycleReport report;
  std::set<TimestampUs> windows;
  for (const auto& a : reintegrator_->run_cycle(now_us)) windows.insert(a.window.start_us);
  report.aggregated_windows = windows.size();
  while (max_runs == 0 || report.runs.size() < max_runs) {
    auto summary = engine_->run_detection_cycle(now_us);
    if (!summary.executed) break;
    report.runs.push_back(std::move(summary));
  }
  return report;
}

Service::Service(const Config& config, std::function<TimestampUs()> clock)
    : pipeline_(config), clock_(std::move(clock)) {
  ApiOptions options{config.host, config.port, config.cors_origin, config.ui_dir};
  api_ = std::make_unique<ApiServer>(
      ApiDependencies{pipeline_.store(), pipeline_.ingest(), pipeline_.results(), pipeline_.engine(),
                      pipeline_.catalog(), clock_},
      options);
}

Service::~Service() { stop(); }

void Service::start() {
  try {
    pipeline_.reload_manifests();
  } catch (const Error& e) {
    std::cerr << "smellwatch: manifests not loaded: " << e.what() << '\n';
  }
  api_->start();
  scheduler_ = std::thread([this] { scheduler_loop(); });
}

void Service::stop() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  wake_.notify_all();
  if (scheduler_.joinable()) scheduler_.join();
  api_->stop();
}

void Service::scheduler_loop() {
  using clock = std::chrono::steady_clock;
  const auto& cfg = pipeline_.config();
  const auto reint_period = std::chrono::duration<double>(cfg.reintegration_period_s);
  const auto detect_period = std::chrono::duration<double>(cfg.detection_period_s);
  auto next_reint = clock::now();
  auto next_detect = clock::now();
  std::unique_lock lock(mutex_);
  while (!stopping_) {
    lock.unlock();
    const auto now = clock::now();
    try {
      if (now >= next_reint) {
        pipeline_.reintegrator().run_cycle(clock_());
        next_reint = now + std::chrono::duration_cast<clock::duration>(reint_period);
      }
      if (now >= next_detect) {
        try {
          pipeline_.reload_manifests();
        } catch (const Error& e) {
          std::cerr << "smellwatch: manifests not reloaded: " << e.what() << '\n';
        }
        while (pipeline_.engine().run_detection_cycle(clock_()).executed) {
        }
        next_detect = now + std::chrono::duration_cast<clock::duration>(detect_period);
      }
    } catch (const Error& e) {
      // Store failures leave the window pending; the next tick retries.
      std::cerr << "smellwatch: cycle failed: " << e.what() << '\n';
    }
    lock.lock();
    wake_.wait_until(lock, std::min(next_reint, next_detect), [this] { return stopping_; });
  }
}

}  // namespace smellwatch
