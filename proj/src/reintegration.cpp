// SPDX-License-Identifier: Apache-2.0

#include "smellwatch/reintegration.hpp"

#include <limits>

#include "smellwatch/error.hpp"
#include "smellwatch/ingest.hpp"

namespace smellwatch {

using nlohmann::json;

namespace {

constexpr std::string_view kStateCategory = "state.reintegration";
constexpr RawCategory kRawCategories[] = {RawCategory::span, RawCategory::metric, RawCategory::business};

}  // namespace

std::vector<TelemetryRecord> read_window(const Store& store, const WindowSpec& spec) {
  std::vector<TelemetryRecord> raw;
  for (auto c : kRawCategories) {
    for (const auto& e : store.read(store_category(c), spec.start_us, spec.end_us())) raw.push_back(decode_raw(c, e));
  }
  return dedup(raw);
}

std::vector<InstanceAggregate> aggregate_store_window(const Store& store, const WindowSpec& spec) {
  const auto records = read_window(store, spec);
  return aggregate_window(records, spec);
}

Reintegrator::Reintegrator(Store& store, ReintegrationOptions options) : store_(store), options_(options) {
  if (options_.window_us <= 0) fail(ErrorCode::argument, "window length must be positive");
  if (options_.lateness_us < 0) fail(ErrorCode::argument, "lateness horizon must be non-negative");
}

std::optional<TimestampUs> Reintegrator::persisted_next() const {
  // Progress only moves forward, so the largest marker wins.
  return store_.last_ts(kStateCategory);
}

std::optional<TimestampUs> Reintegrator::first_raw_at_or_after(TimestampUs from) const {
  std::optional<TimestampUs> best;
  for (auto c : kRawCategories) {
    if (auto ts = store_.first_ts_at_or_after(store_category(c), from)) best = best ? std::min(*best, *ts) : *ts;
  }
  return best;
}

std::optional<TimestampUs> Reintegrator::next_window_start() const {
  if (auto p = persisted_next()) return p;
  if (auto first = first_raw_at_or_after(std::numeric_limits<TimestampUs>::min())) {
    return align_down(*first, options_.window_us);
  }
  return std::nullopt;
}

std::vector<ServiceAggregate> Reintegrator::run_cycle(TimestampUs now_us) {
  std::lock_guard lock(cycle_mutex_);
  std::vector<ServiceAggregate> emitted;
  const auto L = options_.window_us;
  const auto start = next_window_start();
  if (!start) return emitted;
  // Windows [s, s+L) qualify when s + L <= now - lateness.
  const TimestampUs limit_end = align_down(now_us - options_.lateness_us, L);
  if (limit_end <= *start) return emitted;

  TimestampUs s = *start;
  while (s < limit_end) {
    auto next_data = first_raw_at_or_after(s);
    if (!next_data || *next_data >= limit_end) break;
    if (*next_data >= s + L) {
      s = align_down(*next_data, L);
      continue;
    }
    const WindowSpec spec{s, L};
    auto instances = aggregate_store_window(store_, spec);
    auto services = rollup_all(instances);

    std::vector<FrameEntry> frame;
    frame.reserve(instances.size() + services.size() + 2);
    for (const auto& i : instances) frame.push_back({std::string(kAggInstanceCategory), s, to_json(i)});
    for (const auto& sv : services) frame.push_back({std::string(kAggServiceCategory), s, to_json(sv)});
    frame.push_back({std::string(kAggWindowCategory), s,
                     json{{"window", to_json(spec)}, {"services", services.size()}, {"instances", instances.size()}}});
    frame.push_back({std::string(kStateCategory), s + L, json{{"next_start_us", s + L}}});
    store_.append(frame);
    emitted.insert(emitted.end(), services.begin(), services.end());
    s += L;
  }
  if (persisted_next().value_or(std::numeric_limits<TimestampUs>::min()) < limit_end) {
    store_.append({FrameEntry{std::string(kStateCategory), limit_end, json{{"next_start_us", limit_end}}}});
  }
  return emitted;
}

std::vector<ServiceAggregate> load_service_aggregates(const Store& store, TimestampUs from_us, TimestampUs to_us) {
  std::vector<ServiceAggregate> out;
  for (const auto& e : store.read(kAggServiceCategory, from_us, to_us)) {
    out.push_back(service_aggregate_from_json(json::parse(e.doc)));
  }
  return out;
}

std::vector<InstanceAggregate> load_instance_aggregates(const Store& store, TimestampUs from_us, TimestampUs to_us) {
  std::vector<InstanceAggregate> out;
  for (const auto& e : store.read(kAggInstanceCategory, from_us, to_us)) {
    out.push_back(instance_aggregate_from_json(json::parse(e.doc)));
  }
  return out;
}

std::vector<WindowSpec> committed_windows(const Store& store, TimestampUs from_us, TimestampUs to_us) {
  std::vector<WindowSpec> out;
  for (const auto& e : store.read(kAggWindowCategory, from_us, to_us)) {
    out.push_back(window_from_json(json::parse(e.doc).at("window")));
  }
  return out;
}

}  // namespace smellwatch
