// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "smellwatch/catalog.hpp"
#include "smellwatch/detection.hpp"

namespace smellwatch {

enum class ServiceRole { service, gateway, message_bus };
enum class DependencyVia { http, bus, db };
enum class LibraryCategory { business, utility };

std::string_view to_string(ServiceRole r) noexcept;
std::string_view to_string(DependencyVia v) noexcept;
std::string_view to_string(LibraryCategory c) noexcept;

struct Endpoint {
  std::string path;
  std::string http_method;
  std::optional<std::string> version_label;

  friend bool operator==(const Endpoint&, const Endpoint&) = default;
};

struct Dependency {
  std::string target;
  DependencyVia via = DependencyVia::http;

  friend bool operator==(const Dependency&, const Dependency&) = default;
};

struct Library {
  std::string name;
  LibraryCategory category = LibraryCategory::utility;

  friend bool operator==(const Library&, const Library&) = default;
};

struct ServiceManifest {
  std::string name;
  std::string version;
  ServiceRole role = ServiceRole::service;
  std::vector<Endpoint> endpoints;
  std::vector<Dependency> dependencies;
  std::vector<std::string> datastores;
  std::vector<Library> libraries;
  std::int64_t loc = 0;
  std::int64_t entity_count = 0;

  friend bool operator==(const ServiceManifest&, const ServiceManifest&) = default;
};

/// Directed http/bus edge. A literal-URL target stays an opaque node with
/// `hardcoded` set; every other target names a manifest.
struct DependencyEdge {
  std::string source;
  std::string target;
  DependencyVia via = DependencyVia::http;
  bool hardcoded = false;

  friend auto operator<=>(const DependencyEdge&, const DependencyEdge&) = default;
};

struct SystemModel {
  std::vector<ServiceManifest> services;  // sorted by name
  std::vector<DependencyEdge> edges;      // sorted, deduplicated
  std::map<std::string, std::set<std::string>> datastore_bindings;

  const ServiceManifest* find(std::string_view name) const noexcept;
  friend bool operator==(const SystemModel&, const SystemModel&) = default;
};

bool is_literal_url(std::string_view target) noexcept;
/// True when the endpoint has a non-empty version_label or a `/v<digits>` segment.
bool endpoint_versioned(const Endpoint& e) noexcept;

ServiceManifest manifest_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ServiceManifest& m);
nlohmann::json to_json(const SystemModel& m);

/// Builds the model from manifest documents (JSON text each).
SystemModel parse_manifests(std::span<const std::string> sources);
SystemModel build_model(std::vector<ServiceManifest> manifests);
/// Every `*.json` file in `dir`, in name order.
SystemModel load_manifest_dir(const std::filesystem::path& dir);

/// Stable digest of the model's content, used to invalidate cached results.
std::string model_fingerprint(const SystemModel& m);

using Adjacency = std::vector<std::vector<std::size_t>>;

/// Elementary cycles of a digraph (Johnson). Each cycle starts at its smallest
/// vertex index; the list is sorted.
std::vector<std::vector<std::size_t>> elementary_cycles(const Adjacency& g);

/// Elementary cycles among manifest nodes, rotated to start at the
/// lexicographically smallest member and sorted.
std::vector<std::vector<std::string>> find_cycles(const SystemModel& model);

/// Ids of the 12 architecture-level detectors, sorted.
const std::vector<std::string>& static_detector_ids();

/// The 12 architecture-level rules. Throws Error{configuration} when the
/// catalog lacks a bound static entry or its parameters.
std::vector<DetectionRecord> detect_static(const SystemModel& model, const DetectionParams& params,
                                           const Catalog& catalog);

}  // namespace smellwatch
