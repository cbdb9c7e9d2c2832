// SPDX-License-Identifier: Apache-2.0

#include "smellwatch/store.hpp"

#include <algorithm>
#include <cstdio>
#include <mutex>

#include "smellwatch/error.hpp"

namespace smellwatch {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kSegmentPrefix = "seg-";
constexpr std::string_view kSegmentSuffix = ".log";

std::optional<std::size_t> segment_number(const fs::path& p) {
  const auto name = p.filename().string();
  if (name.size() <= kSegmentPrefix.size() + kSegmentSuffix.size()) return std::nullopt;
  if (!name.starts_with(kSegmentPrefix) || !name.ends_with(kSegmentSuffix)) return std::nullopt;
  const auto digits = name.substr(kSegmentPrefix.size(), name.size() - kSegmentPrefix.size() - kSegmentSuffix.size());
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit)) return std::nullopt;
  return static_cast<std::size_t>(std::stoull(digits));
}

}  // namespace

Store::Store(StoreOptions options) : options_(std::move(options)) {
  if (options_.segment_bytes == 0) fail(ErrorCode::argument, "segment_bytes must be positive");
  std::error_code ec;
  fs::create_directories(options_.dir, ec);
  if (ec || !fs::is_directory(options_.dir)) {
    fail(ErrorCode::store, "cannot create data dir '" + options_.dir.string() + "': " + ec.message());
  }
  recover();
}

fs::path Store::segment_path(std::size_t number) const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", number);
  return options_.dir / (std::string(kSegmentPrefix) + buf + std::string(kSegmentSuffix));
}

void Store::recover() {
  std::vector<std::pair<std::size_t, fs::path>> segments;
  for (const auto& entry : fs::directory_iterator(options_.dir)) {
    if (!entry.is_regular_file()) continue;
    if (auto n = segment_number(entry.path())) segments.emplace_back(*n, entry.path());
  }
  std::sort(segments.begin(), segments.end());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    load_segment(segments[i].second, i + 1 == segments.size());
  }
  segments_ = segments.size();
  open_active_segment(segments.empty() ? 1 : segments.back().first);
  if (segments.empty()) segments_ = 1;
}

void Store::load_segment(const fs::path& path, bool last) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::store, "cannot read segment '" + path.string() + "'");
  std::string line;
  std::uint64_t good_bytes = 0;
  std::uint64_t offset = 0;
  while (std::getline(in, line)) {
    const bool complete = !in.eof();
    offset += line.size() + (complete ? 1 : 0);
    if (!complete) break;  // torn tail without newline
    json frame = json::parse(line, nullptr, false);
    if (frame.is_discarded()) {
      if (!last) fail(ErrorCode::store, "corrupt frame in sealed segment '" + path.string() + "'");
      break;
    }
    index_frame(frame);
    good_bytes = offset;
  }
  if (last) {
    in.close();
    std::error_code ec;
    if (fs::file_size(path, ec) != good_bytes && !ec) fs::resize_file(path, good_bytes, ec);
    if (ec) fail(ErrorCode::store, "cannot truncate torn segment '" + path.string() + "': " + ec.message());
  }
}

void Store::index_frame(const json& frame) {
  const auto it = frame.find("entries");
  if (it == frame.end() || !it->is_array()) return;
  for (const auto& e : *it) {
    auto& idx = index_[e.at("c").get<std::string>()];
    idx.emplace(e.at("t").get<TimestampUs>(), Indexed{next_seq_++, e.at("d").dump()});
  }
}

void Store::open_active_segment(std::size_t number) {
  if (active_.is_open()) active_.close();
  const auto path = segment_path(number);
  active_.open(path, std::ios::binary | std::ios::app);
  if (!active_) fail(ErrorCode::store, "cannot open segment '" + path.string() + "'");
  std::error_code ec;
  active_bytes_ = fs::exists(path, ec) ? fs::file_size(path, ec) : 0;
  active_number_ = number;
}

void Store::append(const std::vector<FrameEntry>& entries) {
  if (entries.empty()) return;
  json arr = json::array();
  for (const auto& e : entries) arr.push_back(json{{"c", e.category}, {"t", e.ts_us}, {"d", e.doc}});
  std::string line = json{{"entries", std::move(arr)}}.dump();
  line.push_back('\n');

  std::unique_lock lock(mutex_);
  if (write_fault_) fail(ErrorCode::store, "store unavailable: write fault");
  if (active_bytes_ > 0 && active_bytes_ + line.size() > options_.segment_bytes) {
    open_active_segment(active_number_ + 1);
    ++segments_;
  }
  active_.write(line.data(), static_cast<std::streamsize>(line.size()));
  active_.flush();
  if (!active_) {
    active_.clear();
    fail(ErrorCode::store, "store unavailable: write to segment failed");
  }
  active_bytes_ += line.size();
  for (const auto& e : entries) {
    index_[e.category].emplace(e.ts_us, Indexed{next_seq_++, e.doc.dump()});
  }
}

std::vector<StoreEntry> Store::read(std::string_view category, TimestampUs from, TimestampUs to) const {
  if (from > to) fail(ErrorCode::argument, "inverted range: from > to");
  std::shared_lock lock(mutex_);
  std::vector<StoreEntry> out;
  auto it = index_.find(category);
  if (it == index_.end()) return out;
  const auto& idx = it->second;
  for (auto e = idx.lower_bound(from); e != idx.end() && e->first < to; ++e) {
    out.push_back(StoreEntry{std::string(category), e->first, e->second.seq, e->second.doc});
  }
  return out;
}

std::vector<StoreEntry> Store::read_all(std::string_view category) const {
  std::shared_lock lock(mutex_);
  std::vector<StoreEntry> out;
  auto it = index_.find(category);
  if (it == index_.end()) return out;
  out.reserve(it->second.size());
  for (const auto& [ts, e] : it->second) out.push_back(StoreEntry{std::string(category), ts, e.seq, e.doc});
  return out;
}

std::optional<TimestampUs> Store::first_ts_at_or_after(std::string_view category, TimestampUs from) const {
  std::shared_lock lock(mutex_);
  auto it = index_.find(category);
  if (it == index_.end()) return std::nullopt;
  auto e = it->second.lower_bound(from);
  if (e == it->second.end()) return std::nullopt;
  return e->first;
}

std::optional<TimestampUs> Store::last_ts(std::string_view category) const {
  std::shared_lock lock(mutex_);
  auto it = index_.find(category);
  if (it == index_.end() || it->second.empty()) return std::nullopt;
  return it->second.rbegin()->first;
}

std::size_t Store::count(std::string_view category) const {
  std::shared_lock lock(mutex_);
  auto it = index_.find(category);
  return it == index_.end() ? 0 : it->second.size();
}

std::size_t Store::segment_count() const {
  std::shared_lock lock(mutex_);
  return segments_;
}

}  // namespace smellwatch
