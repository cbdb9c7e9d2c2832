// SPDX-License-Identifier: Apache-2.0

#include "smellwatch/result_store.hpp"

#include <algorithm>
#include <tuple>

#include "smellwatch/error.hpp"

namespace smellwatch {

using nlohmann::json;

namespace {

void check_range(TimestampUs from_us, TimestampUs to_us) {
  if (from_us > to_us) fail(ErrorCode::argument, "inverted time range");
}

}  // namespace

json to_json(const DetectionCardSummary& s) {
  json inner = json::array();
  for (const auto& r : s.inner_ring) {
    inner.push_back({{"primary_type", to_string(r.primary_type)},
                     {"secondary_type", r.secondary_type},
                     {"types", r.types},
                     {"total_types", r.total_types},
                     {"fraction", r.fraction}});
  }
  json outer = json::array();
  for (const auto& r : s.outer_ring) {
    outer.push_back({{"smell_id", r.smell_id},
                     {"primary_type", to_string(r.primary_type)},
                     {"secondary_type", r.secondary_type},
                     {"detected", r.detected},
                     {"evaluated", r.evaluated},
                     {"detected_fraction", r.detected_fraction},
                     {"not_detected_fraction", r.not_detected_fraction}});
  }
  return json{{"executed", s.executed}, {"positive", s.positive}, {"inner_ring", inner}, {"outer_ring", outer}};
}

json to_json(const HistoryTimeline& t) {
  json windows = json::array();
  for (const auto& w : t.windows) {
    json services = json::array();
    for (const auto& [svc, smells] : w.services) services.push_back({{"service", svc}, {"smells", smells}});
    windows.push_back({{"window", to_json(w.window)}, {"run_id", w.run_id}, {"services", services}});
  }
  return json{{"windows", windows}};
}

ResultStore::ResultStore(Store& store) : store_(store) {
  for (const auto& e : store_.read_all(kRunCategory)) {
    run_ids_.insert(json::parse(e.doc).at("run_id").get<std::string>());
  }
}

std::string ResultStore::store_run(const DetectionRunSummary& summary, const std::vector<DetectionRecord>& records) {
  if (summary.run_id.empty()) fail(ErrorCode::argument, "run id must be non-empty");
  if (summary.record_count != records.size()) fail(ErrorCode::argument, "record_count disagrees with records");
  bool any = false;
  for (const auto& r : records) {
    if (r.run_id != summary.run_id || r.window != summary.window) {
      fail(ErrorCode::argument, "record for '" + r.smell_id + "' does not belong to run " + summary.run_id);
    }
    any = any || r.detected;
  }
  if (any != summary.positive) fail(ErrorCode::argument, "positive flag disagrees with records");

  std::lock_guard lock(mutex_);
  if (run_ids_.contains(summary.run_id)) fail(ErrorCode::conflict, "run " + summary.run_id + " already stored");
  std::vector<FrameEntry> frame;
  frame.reserve(records.size() + 1);
  const auto ts = summary.window.start_us;
  frame.push_back({std::string(kRunCategory), ts, to_json(summary)});
  for (const auto& r : records) frame.push_back({std::string(kRecordCategory), ts, to_json(r)});
  store_.append(frame);
  run_ids_.insert(summary.run_id);
  return summary.run_id;
}

bool ResultStore::has_run(std::string_view run_id) const {
  std::lock_guard lock(mutex_);
  return run_ids_.find(run_id) != run_ids_.end();
}

std::optional<TimestampUs> ResultStore::last_run_window_start() const { return store_.last_ts(kRunCategory); }

std::vector<DetectionRunSummary> ResultStore::runs(TimestampUs from_us, TimestampUs to_us) const {
  check_range(from_us, to_us);
  std::vector<DetectionRunSummary> out;
  for (const auto& e : store_.read(kRunCategory, from_us, to_us)) out.push_back(run_summary_from_json(json::parse(e.doc)));
  return out;
}

std::vector<DetectionRecord> ResultStore::records(TimestampUs from_us, TimestampUs to_us) const {
  check_range(from_us, to_us);
  std::vector<DetectionRecord> out;
  for (const auto& e : store_.read(kRecordCategory, from_us, to_us)) {
    out.push_back(detection_record_from_json(json::parse(e.doc)));
  }
  return out;
}

DetectionCardSummary ResultStore::query_summary(TimestampUs from_us, TimestampUs to_us, const Catalog& catalog) const {
  const auto run_list = runs(from_us, to_us);
  std::set<std::string> visible;
  for (const auto& r : run_list) visible.insert(r.run_id);

  DetectionCardSummary s;
  s.executed = static_cast<std::int64_t>(run_list.size());
  std::set<std::string> positive_runs;
  std::map<std::string, std::pair<std::int64_t, std::int64_t>> per_smell;  // detected, evaluated
  for (const auto& r : records(from_us, to_us)) {
    if (!visible.contains(r.run_id)) continue;
    auto& c = per_smell[r.smell_id];
    ++c.second;
    if (r.detected) {
      ++c.first;
      positive_runs.insert(r.run_id);
    }
  }
  s.positive = static_cast<std::int64_t>(positive_runs.size());

  using Bucket = std::tuple<PrimaryType, std::string>;
  std::map<Bucket, std::int64_t> buckets;
  std::int64_t typed = 0;
  for (const auto& [id, counts] : per_smell) {
    OuterRingSlice o;
    o.smell_id = id;
    if (const auto* e = catalog.find(id)) {
      o.primary_type = e->primary_type;
      o.secondary_type = e->secondary_type;
      ++buckets[{e->primary_type, e->secondary_type}];
      ++typed;
    }
    o.detected = counts.first;
    o.evaluated = counts.second;
    o.detected_fraction = static_cast<double>(o.detected) / static_cast<double>(o.evaluated);
    o.not_detected_fraction = static_cast<double>(o.evaluated - o.detected) / static_cast<double>(o.evaluated);
    s.outer_ring.push_back(std::move(o));
  }
  std::stable_sort(s.outer_ring.begin(), s.outer_ring.end(), [](const auto& a, const auto& b) {
    return std::tie(a.primary_type, a.secondary_type, a.smell_id) < std::tie(b.primary_type, b.secondary_type, b.smell_id);
  });
  for (const auto& [bucket, n] : buckets) {
    s.inner_ring.push_back({std::get<0>(bucket), std::get<1>(bucket), n, typed,
                            static_cast<double>(n) / static_cast<double>(typed)});
  }
  return s;
}

HistoryTimeline ResultStore::query_history(const std::optional<std::string>& service, TimestampUs from_us,
                                           TimestampUs to_us) const {
  const auto run_list = runs(from_us, to_us);
  std::map<std::string, HistoryEntry> by_run;
  for (const auto& r : run_list) by_run[r.run_id] = HistoryEntry{r.window, r.run_id, {}};

  std::map<std::string, std::set<std::string>> system_hits;
  std::map<std::string, std::map<std::string, std::set<std::string>>> service_hits;
  for (const auto& r : records(from_us, to_us)) {
    if (!by_run.contains(r.run_id)) continue;
    if (r.scope == kSystemScope) {
      if (r.detected) system_hits[r.run_id].insert(r.smell_id);
      continue;
    }
    auto& smells = service_hits[r.run_id][r.scope];
    if (r.detected) smells.insert(r.smell_id);
  }

  HistoryTimeline t;
  for (const auto& r : run_list) {
    auto entry = std::move(by_run[r.run_id]);
    auto& per_service = service_hits[r.run_id];
    const auto& sys = system_hits[r.run_id];
    if (per_service.empty() && !sys.empty()) per_service[std::string(kSystemScope)];
    for (auto& [svc, smells] : per_service) {
      if (service && svc != *service) continue;
      std::set<std::string> merged = smells;
      merged.insert(sys.begin(), sys.end());
      entry.services[svc].assign(merged.begin(), merged.end());
    }
    t.windows.push_back(std::move(entry));
  }
  return t;
}

std::vector<DetectionRecord> ResultStore::query_service_records(std::string_view service, TimestampUs from_us,
                                                                TimestampUs to_us) const {
  std::vector<DetectionRecord> out;
  for (auto& r : records(from_us, to_us)) {
    if (r.scope == service) out.push_back(std::move(r));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.window.start_us, a.smell_id) < std::tie(b.window.start_us, b.smell_id);
  });
  return out;
}

std::map<std::string, std::int64_t> ResultStore::record_counts(TimestampUs from_us, TimestampUs to_us) const {
  std::map<std::string, std::int64_t> out;
  for (const auto& r : records(from_us, to_us)) ++out[r.smell_id];
  return out;
}

}  // namespace smellwatch
