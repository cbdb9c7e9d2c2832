// SPDX-License-Identifier: Apache-2.0

#include "smellwatch/engine.hpp"

#include <algorithm>
#include <limits>

#include "smellwatch/error.hpp"
#include "smellwatch/reintegration.hpp"

namespace smellwatch {

using nlohmann::json;

json to_json(const RegistryChange& c) {
  return json{{"smell_id", c.smell_id}, {"online", c.online}, {"at_us", c.at_us}};
}

DetectionContext build_context(const Store& store, const WindowSpec& window, std::size_t history_depth) {
  DetectionContext ctx;
  ctx.window = window;
  ctx.current = load_service_aggregates(store, window.start_us, window.end_us());
  if (history_depth == 0 || ctx.current.empty()) return ctx;

  const auto first = store.first_ts_at_or_after(kAggServiceCategory, std::numeric_limits<TimestampUs>::min());
  if (!first || *first >= window.start_us) return ctx;
  // Widen the look-back until every current service has enough history or
  // the start of the data is reached.
  std::int64_t span = static_cast<std::int64_t>(history_depth) * window.length_us;
  while (true) {
    const TimestampUs lo = window.start_us - span < *first ? *first : window.start_us - span;
    std::map<std::string, std::vector<ServiceAggregate>> hist;
    for (auto& a : load_service_aggregates(store, lo, window.start_us)) hist[a.service].push_back(std::move(a));
    bool enough = true;
    for (const auto& c : ctx.current) {
      if (hist[c.service].size() < history_depth) enough = false;
    }
    if (enough || lo == *first) {
      for (const auto& c : ctx.current) {
        auto& h = hist[c.service];
        if (h.size() > history_depth) h.erase(h.begin(), h.end() - static_cast<std::ptrdiff_t>(history_depth));
        if (!h.empty()) ctx.history[c.service] = std::move(h);
      }
      return ctx;
    }
    span *= 2;
  }
}

DetectionEngine::DetectionEngine(Store& store, ResultStore& results, const Catalog& catalog, DetectionParams params,
                                 EngineOptions options)
    : store_(store),
      results_(results),
      catalog_(catalog),
      params_(std::move(params)),
      options_(options),
      registry_(catalog) {
  for (const auto& e : store_.read_all(kRegistryCategory)) {
    const auto j = json::parse(e.doc);
    const auto id = j.at("smell_id").get<std::string>();
    if (registry_.contains(id)) registry_.set(id, j.at("online").get<bool>());
  }
}

std::optional<WindowSpec> DetectionEngine::next_window() const {
  TimestampUs from = std::numeric_limits<TimestampUs>::min();
  if (auto last = results_.last_run_window_start()) from = *last + 1;
  const auto ts = store_.first_ts_at_or_after(kAggWindowCategory, from);
  if (!ts) return std::nullopt;
  const auto entries = store_.read(kAggWindowCategory, *ts, *ts + 1);
  return window_from_json(json::parse(entries.front().doc).at("window"));
}

void DetectionEngine::set_system_model(std::optional<SystemModel> model) {
  std::lock_guard lock(state_mutex_);
  model_ = std::move(model);
}

std::optional<SystemModel> DetectionEngine::system_model() const {
  std::lock_guard lock(state_mutex_);
  return model_;
}

std::vector<DetectionRecord> DetectionEngine::static_records() {
  std::lock_guard lock(state_mutex_);
  if (!model_) return {};
  auto fp = model_fingerprint(*model_);
  if (fp != cached_fingerprint_) {
    cached_static_ = detect_static(*model_, params_, catalog_);
    cached_fingerprint_ = std::move(fp);
  }
  std::vector<DetectionRecord> out;
  for (const auto& r : cached_static_) {
    if (registry_.online(r.smell_id)) out.push_back(r);
  }
  return out;
}

DetectionRunSummary DetectionEngine::run_detection_cycle(TimestampUs now_us) {
  std::lock_guard cycle(cycle_mutex_);
  const auto window = next_window();
  if (!window) return DetectionRunSummary{};

  const auto reg = registry();
  auto ctx = build_context(store_, *window, options_.history_depth);
  auto records = static_records();
  ctx.static_model = system_model();
  ctx.static_results = records;
  auto runtime = detect_runtime(ctx, reg, params_);
  records.insert(records.end(), std::make_move_iterator(runtime.begin()), std::make_move_iterator(runtime.end()));

  DetectionRunSummary summary;
  summary.run_id = "run-" + std::to_string(window->start_us);
  summary.window = *window;
  summary.executed = true;
  for (auto& r : records) {
    r.run_id = summary.run_id;
    r.window = *window;
    r.created_at_us = now_us;
    summary.positive = summary.positive || r.detected;
  }
  summary.record_count = records.size();
  results_.store_run(summary, records);
  return summary;
}

AlgorithmRegistry DetectionEngine::set_algorithm_status(std::string_view smell_id, bool online, TimestampUs now_us) {
  std::lock_guard lock(state_mutex_);
  if (!registry_.contains(smell_id) || !catalog_.is_bound(smell_id)) {
    fail(ErrorCode::not_found, "unknown smell '" + std::string(smell_id) + "'");
  }
  RegistryChange change{std::string(smell_id), online, now_us};
  // Replay follows index order, so the index key must never go backwards.
  const auto key = std::max(now_us, store_.last_ts(kRegistryCategory).value_or(now_us));
  store_.append({FrameEntry{std::string(kRegistryCategory), key, to_json(change)}});
  registry_.set(smell_id, online);
  return registry_;
}

AlgorithmRegistry DetectionEngine::registry() const {
  std::lock_guard lock(state_mutex_);
  return registry_;
}

std::vector<RegistryChange> DetectionEngine::audit_log() const {
  std::vector<RegistryChange> out;
  for (const auto& e : store_.read_all(kRegistryCategory)) {
    const auto j = json::parse(e.doc);
    out.push_back({j.at("smell_id").get<std::string>(), j.at("online").get<bool>(), j.at("at_us").get<TimestampUs>()});
  }
  return out;
}

}  // namespace smellwatch
