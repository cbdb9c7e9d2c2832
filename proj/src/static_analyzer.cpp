// SPDX-License-Identifier: Apache-2.0

#include "smellwatch/static_analyzer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "smellwatch/detail/json_fields.hpp"
#include "smellwatch/error.hpp"

namespace smellwatch {

using nlohmann::json;
using namespace detail;

std::string_view to_string(ServiceRole r) noexcept {
  switch (r) {
    case ServiceRole::service: return "service";
    case ServiceRole::gateway: return "gateway";
    case ServiceRole::message_bus: return "message_bus";
  }
  return "";
}

std::string_view to_string(DependencyVia v) noexcept {
  switch (v) {
    case DependencyVia::http: return "http";
    case DependencyVia::bus: return "bus";
    case DependencyVia::db: return "db";
  }
  return "";
}

std::string_view to_string(LibraryCategory c) noexcept {
  return c == LibraryCategory::business ? "business" : "utility";
}

namespace {

template <class E, std::size_t N>
E parse_enum(const std::string& s, const E (&values)[N], std::string_view ctx, std::string_view key) {
  for (auto v : values) {
    if (to_string(v) == s) return v;
  }
  std::string allowed;
  for (auto v : values) allowed += (allowed.empty() ? "" : "|") + std::string(to_string(v));
  field_error(ctx, key, allowed);
}

constexpr ServiceRole kRoles[] = {ServiceRole::service, ServiceRole::gateway, ServiceRole::message_bus};
constexpr DependencyVia kVias[] = {DependencyVia::http, DependencyVia::bus, DependencyVia::db};
constexpr LibraryCategory kLibCats[] = {LibraryCategory::business, LibraryCategory::utility};

}  // namespace

const ServiceManifest* SystemModel::find(std::string_view name) const noexcept {
  auto it = std::lower_bound(services.begin(), services.end(), name,
                             [](const ServiceManifest& m, std::string_view n) { return m.name < n; });
  return it != services.end() && it->name == name ? &*it : nullptr;
}

bool is_literal_url(std::string_view target) noexcept { return target.find("://") != std::string_view::npos; }

bool endpoint_versioned(const Endpoint& e) noexcept {
  if (e.version_label && !e.version_label->empty()) return true;
  std::string_view p = e.path;
  std::size_t pos = 0;
  while (pos < p.size()) {
    auto next = p.find('/', pos);
    auto seg = p.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos);
    if (seg.size() >= 2 && seg[0] == 'v' &&
        std::all_of(seg.begin() + 1, seg.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      return true;
    }
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return false;
}

ServiceManifest manifest_from_json(const json& j) {
  const std::string ctx = "manifest";
  ServiceManifest m;
  m.name = required<std::string>(j, "name", ctx);
  if (m.name.empty()) field_error(ctx, "name", "non-empty string");
  const std::string mctx = "manifest '" + m.name + "'";
  m.version = field_or<std::string>(j, "version", mctx, "");
  if (auto r = optional_field<std::string>(j, "role", mctx)) m.role = parse_enum(*r, kRoles, mctx, "role");
  if (const auto* eps = optional_array(j, "endpoints", mctx)) {
    for (std::size_t i = 0; i < eps->size(); ++i) {
      const auto ectx = field_path(mctx, "endpoints[" + std::to_string(i) + "]");
      const auto& e = (*eps)[i];
      m.endpoints.push_back({required<std::string>(e, "path", ectx), field_or<std::string>(e, "http_method", ectx, "GET"),
                             optional_field<std::string>(e, "version_label", ectx)});
    }
  }
  if (const auto* deps = optional_array(j, "dependencies", mctx)) {
    for (std::size_t i = 0; i < deps->size(); ++i) {
      const auto dctx = field_path(mctx, "dependencies[" + std::to_string(i) + "]");
      const auto& d = (*deps)[i];
      Dependency dep{required<std::string>(d, "target", dctx), DependencyVia::http};
      if (dep.target.empty()) field_error(dctx, "target", "non-empty string");
      if (auto v = optional_field<std::string>(d, "via", dctx)) dep.via = parse_enum(*v, kVias, dctx, "via");
      m.dependencies.push_back(std::move(dep));
    }
  }
  if (const auto* ds = optional_array(j, "datastores", mctx)) {
    for (const auto& d : *ds) {
      if (!d.is_string() || d.get<std::string>().empty()) field_error(mctx, "datastores", "array of non-empty strings");
      m.datastores.push_back(d.get<std::string>());
    }
  }
  if (const auto* libs = optional_array(j, "libraries", mctx)) {
    for (std::size_t i = 0; i < libs->size(); ++i) {
      const auto lctx = field_path(mctx, "libraries[" + std::to_string(i) + "]");
      const auto& l = (*libs)[i];
      Library lib{required<std::string>(l, "name", lctx), LibraryCategory::utility};
      if (auto c = optional_field<std::string>(l, "category", lctx)) lib.category = parse_enum(*c, kLibCats, lctx, "category");
      m.libraries.push_back(std::move(lib));
    }
  }
  m.loc = field_or<std::int64_t>(j, "loc", mctx, 0);
  m.entity_count = field_or<std::int64_t>(j, "entity_count", mctx, 0);
  if (m.loc < 0) fail(ErrorCode::validation, mctx + ": loc must be >= 0");
  if (m.entity_count < 0) fail(ErrorCode::validation, mctx + ": entity_count must be >= 0");
  return m;
}

json to_json(const ServiceManifest& m) {
  json eps = json::array();
  for (const auto& e : m.endpoints) {
    json je{{"path", e.path}, {"http_method", e.http_method}};
    if (e.version_label) je["version_label"] = *e.version_label;
    eps.push_back(std::move(je));
  }
  json deps = json::array();
  for (const auto& d : m.dependencies) deps.push_back({{"target", d.target}, {"via", to_string(d.via)}});
  json libs = json::array();
  for (const auto& l : m.libraries) libs.push_back({{"name", l.name}, {"category", to_string(l.category)}});
  return json{{"name", m.name},           {"version", m.version},   {"role", to_string(m.role)},
              {"endpoints", eps},         {"dependencies", deps},   {"datastores", m.datastores},
              {"libraries", libs},        {"loc", m.loc},           {"entity_count", m.entity_count}};
}

json to_json(const SystemModel& m) {
  json services = json::array();
  for (const auto& s : m.services) services.push_back(to_json(s));
  json edges = json::array();
  for (const auto& e : m.edges) {
    edges.push_back({{"source", e.source}, {"target", e.target}, {"via", to_string(e.via)}, {"hardcoded", e.hardcoded}});
  }
  json bindings = json::object();
  for (const auto& [ds, users] : m.datastore_bindings) bindings[ds] = users;
  return json{{"services", services}, {"edges", edges}, {"datastore_bindings", bindings}};
}

SystemModel build_model(std::vector<ServiceManifest> manifests) {
  SystemModel model;
  std::sort(manifests.begin(), manifests.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  for (std::size_t i = 1; i < manifests.size(); ++i) {
    if (manifests[i].name == manifests[i - 1].name) {
      fail(ErrorCode::validation, "duplicate service name '" + manifests[i].name + "'");
    }
  }
  model.services = std::move(manifests);

  std::set<std::string> declared;
  for (const auto& m : model.services) {
    for (const auto& d : m.datastores) {
      declared.insert(d);
      model.datastore_bindings[d].insert(m.name);
    }
  }
  std::set<DependencyEdge> edges;
  for (const auto& m : model.services) {
    for (const auto& d : m.dependencies) {
      if (d.via == DependencyVia::db) {
        if (!declared.contains(d.target)) {
          fail(ErrorCode::validation,
               "manifest '" + m.name + "': dangling datastore reference '" + d.target + "'");
        }
        model.datastore_bindings[d.target].insert(m.name);
        continue;
      }
      if (is_literal_url(d.target)) {
        edges.insert({m.name, d.target, d.via, true});
        continue;
      }
      if (!model.find(d.target)) {
        fail(ErrorCode::validation, "manifest '" + m.name + "': dependency target '" + d.target +
                                        "' is neither a known service nor a literal URL");
      }
      edges.insert({m.name, d.target, d.via, false});
    }
  }
  model.edges.assign(edges.begin(), edges.end());
  return model;
}

SystemModel parse_manifests(std::span<const std::string> sources) {
  std::vector<ServiceManifest> manifests;
  manifests.reserve(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    manifests.push_back(manifest_from_json(parse_json(sources[i], "manifest #" + std::to_string(i))));
  }
  return build_model(std::move(manifests));
}

SystemModel load_manifest_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    fail(ErrorCode::not_found, "manifest directory '" + dir.string() + "' does not exist");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ServiceManifest> manifests;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) fail(ErrorCode::not_found, "cannot read '" + f.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    manifests.push_back(manifest_from_json(parse_json(ss.str(), f.filename().string())));
  }
  return build_model(std::move(manifests));
}

std::string model_fingerprint(const SystemModel& m) {
  // FNV-1a over the canonical dump.
  const auto text = to_json(m).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Cycles

namespace {

class Johnson {
 public:
  explicit Johnson(const Adjacency& g) : g_(g), n_(g.size()) {}

  std::vector<std::vector<std::size_t>> run() {
    for (start_ = 0; start_ < n_; ++start_) {
      in_comp_ = component_of(start_);
      blocked_.assign(n_, false);
      blocked_by_.assign(n_, {});
      circuit(start_);
    }
    std::sort(out_.begin(), out_.end());
    return std::move(out_);
  }

 private:
  // Strongly connected component containing `s` in the subgraph of vertices >= s.
  std::vector<bool> component_of(std::size_t s) {
    std::vector<bool> fwd(n_, false), bwd(n_, false);
    reach(s, fwd, false);
    reach(s, bwd, true);
    std::vector<bool> comp(n_, false);
    for (std::size_t v = s; v < n_; ++v) comp[v] = fwd[v] && bwd[v];
    return comp;
  }

  void reach(std::size_t s, std::vector<bool>& seen, bool reverse) {
    if (reverse && rev_.empty()) {
      rev_.assign(n_, {});
      for (std::size_t u = 0; u < n_; ++u) {
        for (auto w : g_[u]) rev_[w].push_back(u);
      }
    }
    const auto& adj = reverse ? rev_ : g_;
    std::vector<std::size_t> stack{s};
    seen[s] = true;
    while (!stack.empty()) {
      auto u = stack.back();
      stack.pop_back();
      for (auto w : adj[u]) {
        if (w >= start_ && !seen[w]) {
          seen[w] = true;
          stack.push_back(w);
        }
      }
    }
  }

  void unblock(std::size_t u) {
    blocked_[u] = false;
    auto pending = std::move(blocked_by_[u]);
    blocked_by_[u].clear();
    for (auto w : pending) {
      if (blocked_[w]) unblock(w);
    }
  }

  bool circuit(std::size_t v) {
    bool found = false;
    path_.push_back(v);
    blocked_[v] = true;
    for (auto w : g_[v]) {
      if (!in_comp_[w]) continue;
      if (w == start_) {
        out_.push_back(path_);
        found = true;
      } else if (!blocked_[w] && circuit(w)) {
        found = true;
      }
    }
    if (found) {
      unblock(v);
    } else {
      for (auto w : g_[v]) {
        if (in_comp_[w]) blocked_by_[w].insert(v);
      }
    }
    path_.pop_back();
    return found;
  }

  const Adjacency& g_;
  std::size_t n_;
  Adjacency rev_;
  std::size_t start_ = 0;
  std::vector<bool> in_comp_;
  std::vector<bool> blocked_;
  std::vector<std::set<std::size_t>> blocked_by_;
  std::vector<std::size_t> path_;
  std::vector<std::vector<std::size_t>> out_;
};

Adjacency normalized(const Adjacency& g) {
  Adjacency out(g.size());
  for (std::size_t u = 0; u < g.size(); ++u) {
    std::set<std::size_t> uniq;
    for (auto w : g[u]) {
      if (w >= g.size()) fail(ErrorCode::argument, "adjacency references vertex out of range");
      uniq.insert(w);
    }
    out[u].assign(uniq.begin(), uniq.end());
  }
  return out;
}

// Service graph over manifests (index = position in model.services).
Adjacency service_graph(const SystemModel& model) {
  Adjacency g(model.services.size());
  auto index = [&](const std::string& name) {
    return static_cast<std::size_t>(model.find(name) - model.services.data());
  };
  for (const auto& e : model.edges) {
    if (e.hardcoded) continue;
    g[index(e.source)].push_back(index(e.target));
  }
  return normalized(g);
}

}  // namespace

std::vector<std::vector<std::size_t>> elementary_cycles(const Adjacency& g) {
  const auto norm = normalized(g);
  return Johnson(norm).run();
}

std::vector<std::vector<std::string>> find_cycles(const SystemModel& model) {
  // Services are sorted, so the smallest index is also the smallest name.
  std::vector<std::vector<std::string>> out;
  for (const auto& c : elementary_cycles(service_graph(model))) {
    std::vector<std::string> names;
    names.reserve(c.size());
    for (auto v : c) names.push_back(model.services[v].name);
    out.push_back(std::move(names));
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Rules

namespace {

constexpr const char* kStaticIds[] = {
    "esb-usage",           "microservice-greedy", "no-api-gateway",   "no-api-versioning",
    "hardcoded-endpoints", "shared-persistence",  "cyclic-dependency", "hub-like-dependency",
    "shared-libraries",    "mega-service",        "nano-service",     "long-service-chain-static"};

}  // namespace

const std::vector<std::string>& static_detector_ids() {
  static const std::vector<std::string> ids = [] {
    std::vector<std::string> v(std::begin(kStaticIds), std::end(kStaticIds));
    std::sort(v.begin(), v.end());
    return v;
  }();
  return ids;
}

namespace {

Clause ge(std::string stat, double v, double thr) { return {std::move(stat), v, Comparator::ge, thr}; }
Clause lt(std::string stat, double v, double thr) { return {std::move(stat), v, Comparator::lt, thr}; }
Clause le(std::string stat, double v, double thr) { return {std::move(stat), v, Comparator::le, thr}; }

struct GraphStats {
  Adjacency g;
  std::vector<std::size_t> in_degree, out_degree;
  std::vector<bool> in_cycle;
  std::vector<double> longest_path_through;  // edges
};

GraphStats graph_stats(const SystemModel& model) {
  GraphStats s;
  s.g = service_graph(model);
  const auto n = s.g.size();
  s.in_degree.assign(n, 0);
  s.out_degree.assign(n, 0);
  for (std::size_t u = 0; u < n; ++u) {
    for (auto w : s.g[u]) {
      if (w == u) continue;
      ++s.out_degree[u];
      ++s.in_degree[w];
    }
  }
  s.in_cycle.assign(n, false);
  for (const auto& c : elementary_cycles(s.g)) {
    for (auto v : c) s.in_cycle[v] = true;
  }
  // Every simple path is enumerated once from its first vertex; each vertex on
  // it records the path's length.
  s.longest_path_through.assign(n, 0);
  std::vector<std::size_t> path;
  std::vector<bool> on_path(n, false);
  std::function<void(std::size_t)> dfs = [&](std::size_t u) {
    path.push_back(u);
    on_path[u] = true;
    const double len = static_cast<double>(path.size() - 1);
    for (auto v : path) s.longest_path_through[v] = std::max(s.longest_path_through[v], len);
    for (auto w : s.g[u]) {
      if (!on_path[w]) dfs(w);
    }
    on_path[u] = false;
    path.pop_back();
  };
  for (std::size_t u = 0; u < n; ++u) dfs(u);
  return s;
}

}  // namespace

std::vector<DetectionRecord> detect_static(const SystemModel& model, const DetectionParams& params,
                                           const Catalog& catalog) {
  for (const auto* id : kStaticIds) {
    const auto* e = catalog.find(id);
    if (!e || !catalog.is_bound(id) || e->detection_kind != DetectionKind::static_analysis) {
      fail(ErrorCode::configuration, std::string("catalog lacks bound static entry '") + id + "'");
    }
    if (!params.has(id)) fail(ErrorCode::configuration, std::string("no parameters for static smell '") + id + "'");
  }
  std::vector<DetectionRecord> out;
  if (model.services.empty()) return out;

  const auto gs = graph_stats(model);
  std::vector<std::size_t> scoped;
  for (std::size_t i = 0; i < model.services.size(); ++i) {
    if (model.services[i].role == ServiceRole::service) scoped.push_back(i);
  }
  auto P = [&](const char* id) -> const ParamMap& { return params.for_smell(id); };
  auto p = [&](const char* id, const char* key) { return params.get(id, key); };
  const std::string system(kSystemScope);

  // esb-usage
  {
    double total = 0, bus = 0;
    for (const auto& e : model.edges) {
      if (e.hardcoded) continue;
      ++total;
      if (e.via != DependencyVia::bus) continue;
      const auto* src = model.find(e.source);
      const auto* dst = model.find(e.target);
      if (src->role == ServiceRole::message_bus || dst->role == ServiceRole::message_bus) ++bus;
    }
    const double fraction = total > 0 ? bus / total : 0.0;
    out.push_back(evaluate_rule("esb-usage", system,
                                {{ge("bus_edge_fraction", fraction, p("esb-usage", "bus_fraction"))},
                                 {ge("bus_edges", bus, p("esb-usage", "min_bus_edges"))}},
                                {{"inter_service_edges", total}}, P("esb-usage")));
  }

  // no-api-gateway
  {
    double gateways = 0;
    for (const auto& m : model.services) gateways += m.role == ServiceRole::gateway;
    out.push_back(evaluate_rule("no-api-gateway", system, {{lt("gateway_count", gateways, 1)}}, {}, P("no-api-gateway")));
  }

  // Library and datastore sharing.
  std::map<std::string, std::set<std::string>> business_lib_users;
  for (auto i : scoped) {
    for (const auto& l : model.services[i].libraries) {
      if (l.category == LibraryCategory::business) business_lib_users[l.name].insert(model.services[i].name);
    }
  }

  double degree_mean = 0, degree_sd = 0;
  if (!scoped.empty()) {
    for (auto i : scoped) degree_mean += static_cast<double>(gs.in_degree[i] + gs.out_degree[i]);
    degree_mean /= static_cast<double>(scoped.size());
    for (auto i : scoped) {
      const double d = static_cast<double>(gs.in_degree[i] + gs.out_degree[i]) - degree_mean;
      degree_sd += d * d;
    }
    degree_sd = std::sqrt(degree_sd / static_cast<double>(scoped.size()));
  }

  for (auto i : scoped) {
    const auto& m = model.services[i];
    const std::string& scope = m.name;
    const double endpoints = static_cast<double>(m.endpoints.size());
    const double loc = static_cast<double>(m.loc);

    out.push_back(evaluate_rule("microservice-greedy", scope,
                                {{le("endpoints", endpoints, p("microservice-greedy", "greedy_max_endpoints"))},
                                 {lt("loc", loc, p("microservice-greedy", "greedy_max_loc"))}},
                                {}, P("microservice-greedy")));

    double versioned = 0;
    for (const auto& e : m.endpoints) versioned += endpoint_versioned(e);
    out.push_back(evaluate_rule("no-api-versioning", scope,
                                {{ge("endpoints", endpoints, 1)}, {lt("versioned_endpoints", versioned, 1)}}, {},
                                P("no-api-versioning")));

    double hardcoded = 0;
    std::string first_url;
    for (const auto& d : m.dependencies) {
      if (d.via != DependencyVia::db && is_literal_url(d.target)) {
        if (hardcoded == 0) first_url = d.target;
        ++hardcoded;
      }
    }
    Evidence hc_ev;
    if (!first_url.empty()) hc_ev["first_literal_target"] = first_url;
    out.push_back(evaluate_rule("hardcoded-endpoints", scope,
                                {{ge("hardcoded_dependencies", hardcoded,
                                     p("hardcoded-endpoints", "hardcoded_min_deps"))}},
                                std::move(hc_ev), P("hardcoded-endpoints")));

    double max_sharers = 0;
    std::string shared_store;
    std::set<std::string> own_stores(m.datastores.begin(), m.datastores.end());
    for (const auto& d : m.dependencies) {
      if (d.via == DependencyVia::db) own_stores.insert(d.target);
    }
    for (const auto& ds : own_stores) {
      double sharers = 0;
      for (const auto& user : model.datastore_bindings.at(ds)) {
        const auto* um = model.find(user);
        sharers += um->role == ServiceRole::service;
      }
      if (sharers > max_sharers) {
        max_sharers = sharers;
        shared_store = ds;
      }
    }
    Evidence sp_ev;
    if (!shared_store.empty()) sp_ev["datastore"] = shared_store;
    out.push_back(evaluate_rule("shared-persistence", scope,
                                {{ge("datastore_sharers", max_sharers, p("shared-persistence", "shared_min_services"))}},
                                std::move(sp_ev), P("shared-persistence")));

    double cycles = gs.in_cycle[i] ? 1 : 0;
    out.push_back(evaluate_rule("cyclic-dependency", scope, {{ge("in_cycle", cycles, 1)}}, {},
                                P("cyclic-dependency")));

    const double degree = static_cast<double>(gs.in_degree[i] + gs.out_degree[i]);
    out.push_back(evaluate_rule(
        "hub-like-dependency", scope,
        {{ge("degree", degree, degree_mean + p("hub-like-dependency", "hub_sigma") * degree_sd)},
         {ge("degree_floor", degree, p("hub-like-dependency", "hub_min_degree"))}},
        {{"degree_mean", degree_mean}, {"degree_stddev", degree_sd},
         {"in_degree", static_cast<double>(gs.in_degree[i])}, {"out_degree", static_cast<double>(gs.out_degree[i])}},
        P("hub-like-dependency")));

    double lib_sharers = 0;
    std::string shared_lib;
    for (const auto& l : m.libraries) {
      if (l.category != LibraryCategory::business) continue;
      const double users = static_cast<double>(business_lib_users[l.name].size());
      if (users > lib_sharers) {
        lib_sharers = users;
        shared_lib = l.name;
      }
    }
    Evidence sl_ev;
    if (!shared_lib.empty()) sl_ev["library"] = shared_lib;
    out.push_back(evaluate_rule("shared-libraries", scope,
                                {{ge("library_sharers", lib_sharers, p("shared-libraries", "shared_lib_min_services"))}},
                                std::move(sl_ev), P("shared-libraries")));

    out.push_back(evaluate_rule("mega-service", scope,
                                {{ge("endpoints", endpoints, p("mega-service", "mega_min_endpoints")),
                                  ge("loc", loc, p("mega-service", "mega_min_loc"))}},
                                {}, P("mega-service")));

    out.push_back(evaluate_rule("nano-service", scope,
                                {{lt("loc", loc, p("nano-service", "nano_max_loc"))},
                                 {ge("out_degree", static_cast<double>(gs.out_degree[i]),
                                     p("nano-service", "nano_min_deps"))}},
                                {}, P("nano-service")));

    out.push_back(evaluate_rule("long-service-chain-static", scope,
                                {{ge("longest_path_edges", gs.longest_path_through[i],
                                     p("long-service-chain-static", "chain_min_len"))}},
                                {}, P("long-service-chain-static")));
  }

  std::stable_sort(out.begin(), out.end(), [](const DetectionRecord& a, const DetectionRecord& b) {
    return std::tie(a.smell_id, a.scope) < std::tie(b.smell_id, b.scope);
  });
  return out;
}

}  // namespace smellwatch
