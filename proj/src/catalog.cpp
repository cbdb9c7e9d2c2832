// SPDX-License-Identifier: Apache-2.0

#include "smellwatch/catalog.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "smellwatch/detail/json_fields.hpp"
#include "smellwatch/error.hpp"

namespace smellwatch {

namespace {

using detail::json;

const std::vector<DetectorBinding>& binding_table() {
  static const std::vector<DetectorBinding> table = {
      // architecture-level, evaluated over the SystemModel
      {"esb-usage", DetectionKind::static_analysis, {"bus_fraction", "min_bus_edges"}},
      {"microservice-greedy", DetectionKind::static_analysis, {"greedy_max_endpoints", "greedy_max_loc"}},
      {"no-api-gateway", DetectionKind::static_analysis, {}},
      {"no-api-versioning", DetectionKind::static_analysis, {}},
      {"hardcoded-endpoints", DetectionKind::static_analysis, {"hardcoded_min_deps"}},
      {"shared-persistence", DetectionKind::static_analysis, {"shared_min_services"}},
      {"cyclic-dependency", DetectionKind::static_analysis, {}},
      {"hub-like-dependency", DetectionKind::static_analysis, {"hub_sigma", "hub_min_degree"}},
      {"shared-libraries", DetectionKind::static_analysis, {"shared_lib_min_services"}},
      {"mega-service", DetectionKind::static_analysis, {"mega_min_endpoints", "mega_min_loc"}},
      {"nano-service", DetectionKind::static_analysis, {"nano_max_loc", "nano_min_deps"}},
      {"long-service-chain-static", DetectionKind::static_analysis, {"chain_min_len"}},
      // runtime, evaluated over window aggregates
      {"chatty-service", DetectionKind::runtime, {"chatty_min_ratio"}},
      {"bottleneck-service", DetectionKind::runtime, {"bottleneck_fanin_frac", "bottleneck_p95_ms"}},
      {"uneven-load-distribution", DetectionKind::runtime, {"load_cv_max", "min_instances"}},
      {"fragile-service", DetectionKind::runtime, {"error_rate_max", "min_requests"}},
      {"latency-degradation", DetectionKind::runtime, {"degrade_factor", "min_history"}},
      {"n-plus-one-query", DetectionKind::runtime, {"nplus1_min_ratio"}},
      {"frequent-gc", DetectionKind::runtime, {"gc_per_s_max", "gc_pause_frac"}},
      {"memory-jitter", DetectionKind::runtime, {"leak_windows", "leak_min_frac", "min_history"}},
      {"cpu-saturation", DetectionKind::runtime, {"cpu_mean_max", "cpu_peak_max"}},
      {"call-rate-anomaly", DetectionKind::runtime, {"spike_factor", "min_history"}},
      {"uneven-api-usage", DetectionKind::runtime, {"api_skew_frac", "min_requests", "min_methods"}},
      {"long-call-chain-runtime", DetectionKind::runtime, {"chain_depth_max"}},
  };
  return table;
}

bool valid_id(std::string_view id) {
  return !id.empty() && std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-';
  });
}

void validate_entry(const SmellTypeEntry& e) {
  if (!valid_id(e.id)) fail(ErrorCode::validation, "invalid smell id '" + e.id + "': must match [a-z0-9-]+");
  if (e.name.empty()) fail(ErrorCode::validation, "entry '" + e.id + "': empty name");
  const bool runtime_type = e.primary_type == PrimaryType::runtime || e.primary_type == PrimaryType::performance;
  if (e.detection_kind == DetectionKind::static_analysis && e.primary_type != PrimaryType::architecture) {
    fail(ErrorCode::validation, "entry '" + e.id + "': detection_kind static requires primary_type Architecture");
  }
  if (e.detection_kind == DetectionKind::runtime && !runtime_type) {
    fail(ErrorCode::validation,
         "entry '" + e.id + "': detection_kind runtime requires primary_type Runtime or Performance");
  }
  if (const auto* binding = find_binding(e.id)) {
    if (binding->kind != e.detection_kind) {
      fail(ErrorCode::validation, "entry '" + e.id + "': detection_kind does not match its detector");
    }
    for (auto key : binding->params) {
      if (!e.default_params.contains(std::string(key))) {
        fail(ErrorCode::validation,
             "entry '" + e.id + "': default_params missing '" + std::string(key) + "' required by its detector");
      }
    }
  }
}

SmellTypeEntry entry_from_json(const json& j, const std::string& ctx) {
  SmellTypeEntry e;
  e.id = detail::required<std::string>(j, "id", ctx);
  e.name = detail::required<std::string>(j, "name", ctx);
  const auto primary = detail::required<std::string>(j, "primary_type", ctx);
  auto pt = parse_primary_type(primary);
  if (!pt) detail::field_error(ctx, "primary_type", "one of Architecture, Runtime, Performance");
  e.primary_type = *pt;
  e.secondary_type = detail::field_or<std::string>(j, "secondary_type", ctx, "");
  e.definition = detail::field_or<std::string>(j, "definition", ctx, "");
  const auto kind = detail::required<std::string>(j, "detection_kind", ctx);
  auto dk = parse_detection_kind(kind);
  if (!dk) detail::field_error(ctx, "detection_kind", "one of static, runtime");
  e.detection_kind = *dk;
  if (const auto* params = detail::optional_object(j, "default_params", ctx)) {
    for (const auto& [k, v] : params->items()) {
      if (!v.is_number()) detail::field_error(detail::field_path(ctx, "default_params"), k, "number");
      e.default_params[k] = v.get<double>();
    }
  }
  if (const auto* refs = detail::optional_array(j, "references", ctx)) {
    for (std::size_t i = 0; i < refs->size(); ++i) {
      if (!(*refs)[i].is_string()) detail::field_error(ctx, "references[" + std::to_string(i) + "]", "string");
      e.references.push_back((*refs)[i].get<std::string>());
    }
  }
  return e;
}

json entry_to_json(const SmellTypeEntry& e) {
  json params = json::object();
  for (const auto& [k, v] : e.default_params) params[k] = v;
  return json{{"id", e.id},
              {"name", e.name},
              {"primary_type", to_string(e.primary_type)},
              {"secondary_type", e.secondary_type},
              {"definition", e.definition},
              {"detection_kind", to_string(e.detection_kind)},
              {"default_params", params},
              {"references", e.references}};
}

}  // namespace

json to_json(const SmellTypeEntry& e) { return entry_to_json(e); }

std::string_view to_string(PrimaryType t) noexcept {
  switch (t) {
    case PrimaryType::architecture: return "Architecture";
    case PrimaryType::runtime: return "Runtime";
    case PrimaryType::performance: return "Performance";
  }
  return "";
}

std::string_view to_string(DetectionKind k) noexcept {
  return k == DetectionKind::static_analysis ? "static" : "runtime";
}

std::optional<PrimaryType> parse_primary_type(std::string_view s) noexcept {
  if (s == "Architecture") return PrimaryType::architecture;
  if (s == "Runtime") return PrimaryType::runtime;
  if (s == "Performance") return PrimaryType::performance;
  return std::nullopt;
}

std::optional<DetectionKind> parse_detection_kind(std::string_view s) noexcept {
  if (s == "static") return DetectionKind::static_analysis;
  if (s == "runtime") return DetectionKind::runtime;
  return std::nullopt;
}

std::span<const DetectorBinding> detector_bindings() { return binding_table(); }

const DetectorBinding* find_binding(std::string_view id) noexcept {
  const auto& table = binding_table();
  auto it = std::find_if(table.begin(), table.end(), [&](const DetectorBinding& b) { return b.id == id; });
  return it == table.end() ? nullptr : &*it;
}

Catalog::Catalog(std::string version, std::vector<SmellTypeEntry> entries)
    : version_(std::move(version)), entries_(std::move(entries)) {
  std::set<std::string_view> seen;
  for (const auto& e : entries_) {
    validate_entry(e);
    if (!seen.insert(e.id).second) fail(ErrorCode::validation, "duplicate smell id '" + e.id + "'");
  }
}

const SmellTypeEntry* Catalog::find(std::string_view id) const noexcept {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const SmellTypeEntry& e) { return e.id == id; });
  return it == entries_.end() ? nullptr : &*it;
}

bool Catalog::is_bound(std::string_view id) const noexcept {
  return find(id) != nullptr && find_binding(id) != nullptr;
}

std::vector<const SmellTypeEntry*> Catalog::bound_entries() const {
  std::vector<const SmellTypeEntry*> out;
  for (const auto& e : entries_) {
    if (find_binding(e.id)) out.push_back(&e);
  }
  return out;
}

std::vector<const SmellTypeEntry*> Catalog::bound_entries(DetectionKind kind) const {
  auto out = bound_entries();
  std::erase_if(out, [kind](const SmellTypeEntry* e) { return e->detection_kind != kind; });
  return out;
}

Catalog load_catalog(std::string_view text) {
  const json doc = detail::parse_json(text, "catalog");
  if (!doc.is_object()) detail::field_error("catalog", "", "object");
  auto version = detail::required<std::string>(doc, "version", "catalog");
  const auto& arr = detail::required_array(doc, "entries", "catalog");
  std::vector<SmellTypeEntry> entries;
  entries.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    entries.push_back(entry_from_json(arr[i], "entries[" + std::to_string(i) + "]"));
  }
  return Catalog(std::move(version), std::move(entries));
}

Catalog load_catalog(std::istream& source) {
  std::string text{std::istreambuf_iterator<char>(source), std::istreambuf_iterator<char>()};
  return load_catalog(std::string_view(text));
}

Catalog load_catalog_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::store, "cannot open catalog file '" + path + "'");
  return load_catalog(in);
}

std::string serialize_catalog(const Catalog& catalog) {
  json entries = json::array();
  for (const auto& e : catalog.entries()) entries.push_back(entry_to_json(e));
  return json{{"version", catalog.version()}, {"entries", entries}}.dump(2);
}

const Catalog& bundled_catalog() {
  static const Catalog catalog = load_catalog(bundled_catalog_text());
  return catalog;
}

std::optional<SmellTypeEntry> get_entry(const Catalog& catalog, std::string_view id) {
  if (const auto* e = catalog.find(id)) return *e;
  return std::nullopt;
}

std::vector<SmellTypeEntry> list_by_taxonomy(const Catalog& catalog, std::optional<PrimaryType> primary,
                                             std::optional<std::string> secondary) {
  std::vector<SmellTypeEntry> out;
  for (const auto& e : catalog.entries()) {
    if (primary && e.primary_type != *primary) continue;
    if (secondary && e.secondary_type != *secondary) continue;
    out.push_back(e);
  }
  return out;
}

}  // namespace smellwatch
