// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace smellwatch {

enum class PrimaryType { architecture, runtime, performance };
enum class DetectionKind { static_analysis, runtime };

std::string_view to_string(PrimaryType t) noexcept;
std::string_view to_string(DetectionKind k) noexcept;
std::optional<PrimaryType> parse_primary_type(std::string_view s) noexcept;
std::optional<DetectionKind> parse_detection_kind(std::string_view s) noexcept;

using ParamMap = std::map<std::string, double>;

struct SmellTypeEntry {
  std::string id;
  std::string name;
  PrimaryType primary_type = PrimaryType::architecture;
  std::string secondary_type;
  std::string definition;
  DetectionKind detection_kind = DetectionKind::static_analysis;
  ParamMap default_params;
  std::vector<std::string> references;

  friend bool operator==(const SmellTypeEntry&, const SmellTypeEntry&) = default;
};

/// Built-in detector a catalog id can bind to, with the parameter keys the
/// detector reads from default_params.
struct DetectorBinding {
  std::string_view id;
  DetectionKind kind;
  std::vector<std::string_view> params;
};

std::span<const DetectorBinding> detector_bindings();
const DetectorBinding* find_binding(std::string_view id) noexcept;

/// Immutable, validated set of knowledge-base entries. Entries whose id has a
/// detector binding are "bound"; the rest are knowledge-only.
class Catalog {
 public:
  Catalog() = default;
  /// Throws Error{validation} on any invariant violation.
  Catalog(std::string version, std::vector<SmellTypeEntry> entries);

  const std::string& version() const noexcept { return version_; }
  const std::vector<SmellTypeEntry>& entries() const noexcept { return entries_; }

  const SmellTypeEntry* find(std::string_view id) const noexcept;
  bool is_bound(std::string_view id) const noexcept;
  std::vector<const SmellTypeEntry*> bound_entries() const;
  std::vector<const SmellTypeEntry*> bound_entries(DetectionKind kind) const;

  friend bool operator==(const Catalog&, const Catalog&) = default;

 private:
  std::string version_;
  std::vector<SmellTypeEntry> entries_;
};

Catalog load_catalog(std::istream& source);
Catalog load_catalog(std::string_view text);
Catalog load_catalog_file(const std::string& path);
std::string serialize_catalog(const Catalog& catalog);

/// The catalog compiled into the binary from data/catalog.json.
const Catalog& bundled_catalog();
std::string_view bundled_catalog_text() noexcept;

nlohmann::json to_json(const SmellTypeEntry& e);

std::optional<SmellTypeEntry> get_entry(const Catalog& catalog, std::string_view id);

std::vector<SmellTypeEntry> list_by_taxonomy(const Catalog& catalog,
                                             std::optional<PrimaryType> primary,
                                             std::optional<std::string> secondary);

}  // namespace smellwatch
