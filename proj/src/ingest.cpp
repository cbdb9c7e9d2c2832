// SPDX-License-Identifier: Apache-2.0

#include "smellwatch/ingest.hpp"

#include <algorithm>
#include <limits>

#include "smellwatch/detail/json_fields.hpp"
#include "smellwatch/error.hpp"

namespace smellwatch {

using nlohmann::json;

json to_json(const IngestReceipt& r) {
  json rejected = json::array();
  for (const auto& x : r.rejected) {
    rejected.push_back(json{{"category", to_string(x.category)}, {"index", x.index}, {"reason", x.reason}});
  }
  return json{{"accepted", r.accepted}, {"rejected", rejected}};
}

TelemetryIngest::TelemetryIngest(Store& store, IngestOptions options)
    : store_(store), options_(options), watermark_(std::numeric_limits<TimestampUs>::min()) {
  if (options_.lateness_us < 0) fail(ErrorCode::argument, "lateness horizon must be non-negative");
  for (auto c : {RawCategory::span, RawCategory::metric, RawCategory::business}) {
    if (auto ts = store_.last_ts(store_category(c))) {
      watermark_ = has_watermark_ ? std::max(watermark_, *ts) : *ts;
      has_watermark_ = true;
    }
  }
}

TimestampUs TelemetryIngest::watermark() const {
  std::lock_guard lock(mutex_);
  return has_watermark_ ? watermark_ : 0;
}

IngestReceipt TelemetryIngest::ingest_batch(const TelemetryBatch& batch) {
  if (batch.empty()) fail(ErrorCode::validation, "batch contains no records");
  std::vector<Candidate> candidates;
  candidates.reserve(batch.size());
  for (std::size_t i = 0; i < batch.spans.size(); ++i) candidates.push_back({RawCategory::span, i, batch.spans[i], {}});
  for (std::size_t i = 0; i < batch.metrics.size(); ++i) {
    candidates.push_back({RawCategory::metric, i, batch.metrics[i], {}});
  }
  for (std::size_t i = 0; i < batch.business.size(); ++i) {
    candidates.push_back({RawCategory::business, i, batch.business[i], {}});
  }
  return commit(std::move(candidates));
}

IngestReceipt TelemetryIngest::ingest_json(std::string_view body) {
  const json doc = detail::parse_json(body, "ingest body");
  if (!doc.is_object()) fail(ErrorCode::parse, "ingest body: expected a JSON object");
  std::vector<Candidate> candidates;
  const std::pair<const char*, RawCategory> lists[] = {
      {"spans", RawCategory::span}, {"metrics", RawCategory::metric}, {"business", RawCategory::business}};
  for (const auto& [key, category] : lists) {
    const json* arr = detail::optional_array(doc, key, "batch");
    if (!arr) continue;
    for (std::size_t i = 0; i < arr->size(); ++i) {
      try {
        candidates.push_back({category, i, record_from_json(category, (*arr)[i]), {}});
      } catch (const Error& e) {
        candidates.push_back({category, i, std::nullopt, e.what()});
      }
    }
  }
  if (candidates.empty()) fail(ErrorCode::validation, "batch contains no records");
  return commit(std::move(candidates));
}

IngestReceipt TelemetryIngest::commit(std::vector<Candidate> candidates) {
  std::lock_guard lock(mutex_);
  IngestReceipt receipt;
  std::vector<FrameEntry> frame;
  frame.reserve(candidates.size());
  TimestampUs high = watermark_;
  bool any = has_watermark_;
  for (auto& c : candidates) {
    if (!c.record) {
      receipt.rejected.push_back({c.category, c.index, std::move(c.reason)});
      continue;
    }
    if (auto reason = validate(*c.record)) {
      receipt.rejected.push_back({c.category, c.index, std::move(*reason)});
      continue;
    }
    const auto ts = timestamp_of(*c.record);
    if (has_watermark_ && ts < watermark_ - options_.lateness_us) {
      receipt.rejected.push_back({c.category, c.index, "late arrival beyond lateness horizon"});
      continue;
    }
    frame.push_back(FrameEntry{std::string(store_category(c.category)), ts, to_json(*c.record)});
    high = any ? std::max(high, ts) : ts;
    any = true;
  }
  store_.append(frame);
  receipt.accepted = frame.size();
  if (!frame.empty()) {
    watermark_ = high;
    has_watermark_ = true;
  }
  return receipt;
}

TelemetryRecord decode_raw(RawCategory category, const StoreEntry& entry) {
  return record_from_json(category, json::parse(entry.doc));
}

std::vector<TelemetryRecord> TelemetryIngest::read_raw(RawCategory category, TimestampUs from_us,
                                                      TimestampUs to_us) const {
  if (from_us > to_us) fail(ErrorCode::argument, "inverted range: from_us > to_us");
  std::vector<TelemetryRecord> out;
  for (const auto& e : store_.read(store_category(category), from_us, to_us)) out.push_back(decode_raw(category, e));
  return out;
}

}  // namespace smellwatch
