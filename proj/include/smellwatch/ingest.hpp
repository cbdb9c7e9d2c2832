// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "smellwatch/store.hpp"
#include "smellwatch/telemetry.hpp"

namespace smellwatch {

struct IngestOptions {
  /// Records older than the ingest watermark minus this horizon are rejected.
  std::int64_t lateness_us = 60'000'000;
};

struct Rejection {
  RawCategory category = RawCategory::span;
  std::size_t index = 0;  // position within the category list of the batch
  std::string reason;

  friend bool operator==(const Rejection&, const Rejection&) = default;
};

struct IngestReceipt {
  std::size_t accepted = 0;
  std::vector<Rejection> rejected;
};

nlohmann::json to_json(const IngestReceipt& r);

/// Validates telemetry and appends it to the raw category streams.
class TelemetryIngest {
 public:
  TelemetryIngest(Store& store, IngestOptions options = {});

  /// Invalid records are rejected individually; the rest land in one frame.
  /// Throws Error{validation} for an empty batch, Error{store} when the frame
  /// cannot be written (in which case nothing is visible).
  IngestReceipt ingest_batch(const TelemetryBatch& batch);

  /// Decodes a wire body. A body that is not a JSON batch object throws
  /// Error{parse}; records with undecodable fields are rejected individually.
  IngestReceipt ingest_json(std::string_view body);

  std::vector<TelemetryRecord> read_raw(RawCategory category, TimestampUs from_us, TimestampUs to_us) const;

  TimestampUs watermark() const;
  const IngestOptions& options() const noexcept { return options_; }

 private:
  struct Candidate {
    RawCategory category;
    std::size_t index;
    std::optional<TelemetryRecord> record;
    std::string reason;
  };
  IngestReceipt commit(std::vector<Candidate> candidates);

  Store& store_;
  IngestOptions options_;
  mutable std::mutex mutex_;
  TimestampUs watermark_;
  bool has_watermark_ = false;
};

/// Decodes a stored raw entry back into its typed record.
TelemetryRecord decode_raw(RawCategory category, const StoreEntry& entry);

}  // namespace smellwatch
