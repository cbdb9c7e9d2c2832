// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "smellwatch/telemetry.hpp"

namespace smellwatch {

struct StoreOptions {
  std::filesystem::path dir;
  std::uint64_t segment_bytes = 8u << 20;
};

/// One entry of a frame handed to Store::append.
struct FrameEntry {
  std::string category;
  TimestampUs ts_us = 0;
  nlohmann::json doc;
};

/// One stored entry as returned by reads. `doc` is compact JSON text.
struct StoreEntry {
  std::string category;
  TimestampUs ts_us = 0;
  std::uint64_t seq = 0;
  std::string doc;
};

/// Append-only segmented log with an in-memory (category, time) index.
///
/// Every append is one frame written as a single line, so a frame is either
/// fully recovered on reopen or dropped as a torn tail. Segments roll once the
/// active file exceeds `segment_bytes`. Readers hold a shared lock and only ever
/// see whole frames.
class Store {
 public:
  explicit Store(StoreOptions options);
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  void append(const std::vector<FrameEntry>& entries);

  /// Entries with ts in [from, to), ordered by ts then arrival.
  std::vector<StoreEntry> read(std::string_view category, TimestampUs from, TimestampUs to) const;
  std::vector<StoreEntry> read_all(std::string_view category) const;

  std::optional<TimestampUs> first_ts_at_or_after(std::string_view category, TimestampUs from) const;
  std::optional<TimestampUs> last_ts(std::string_view category) const;
  std::size_t count(std::string_view category) const;
  std::size_t segment_count() const;
  const std::filesystem::path& dir() const noexcept { return options_.dir; }

  /// Makes subsequent appends fail as if the disk were unavailable.
  void set_write_fault(bool on) noexcept { write_fault_ = on; }

 private:
  struct Indexed {
    std::uint64_t seq;
    std::string doc;
  };
  using CategoryIndex = std::multimap<TimestampUs, Indexed>;

  void recover();
  void load_segment(const std::filesystem::path& path, bool last);
  void index_frame(const nlohmann::json& frame);
  void open_active_segment(std::size_t number);
  std::filesystem::path segment_path(std::size_t number) const;

  StoreOptions options_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, CategoryIndex, std::less<>> index_;
  std::uint64_t next_seq_ = 0;
  std::size_t active_number_ = 0;
  std::size_t segments_ = 0;
  std::uint64_t active_bytes_ = 0;
  std::ofstream active_;
  std::atomic<bool> write_fault_{false};
};

}  // namespace smellwatch
