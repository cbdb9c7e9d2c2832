// SPDX-License-Identifier: Apache-2.0

#include "smellwatch/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "smellwatch/detail/json_fields.hpp"
#include "smellwatch/error.hpp"

namespace smellwatch {

using nlohmann::json;
using namespace detail;

// ---------------------------------------------------------------------------
// Scenario files

Scenario scenario_from_json(const json& j) {
  const std::string ctx = "scenario";
  if (!j.is_object()) fail(ErrorCode::parse, "scenario: expected object");
  Scenario s;
  s.name = field_or<std::string>(j, "name", ctx, "");
  s.seed = field_or<std::uint64_t>(j, "seed", ctx, 1);
  s.start_us = field_or<TimestampUs>(j, "start_us", ctx, s.start_us);
  s.window_s = field_or<std::int64_t>(j, "window_s", ctx, s.window_s);
  s.duration_s = field_or<std::int64_t>(j, "duration_s", ctx, s.duration_s);
  s.report_interval_s = field_or<std::int64_t>(j, "report_interval_s", ctx, s.report_interval_s);
  const auto& services = required_array(j, "services", ctx);
  for (std::size_t i = 0; i < services.size(); ++i) {
    const auto& sj = services[i];
    SimService svc;
    svc.manifest = manifest_from_json(sj);
    const auto sctx = "scenario service '" + svc.manifest.name + "'";
    svc.instances = field_or<int>(sj, "instances", sctx, svc.instances);
    svc.baseline_rps = field_or<double>(sj, "baseline_rps", sctx, svc.baseline_rps);
    svc.latency_ms = field_or<double>(sj, "latency_ms", sctx, svc.latency_ms);
    svc.db_calls_per_request = field_or<double>(sj, "db_calls_per_request", sctx, svc.db_calls_per_request);
    if (const auto* methods = optional_array(sj, "business_methods", sctx)) {
      svc.business_methods.clear();
      for (const auto& m : *methods) {
        if (!m.is_string()) field_error(sctx, "business_methods", "array of strings");
        svc.business_methods.push_back(m.get<std::string>());
      }
    }
    svc.cpu_frac = field_or<double>(sj, "cpu_frac", sctx, svc.cpu_frac);
    svc.heap_used_bytes = field_or<std::int64_t>(sj, "heap_used_bytes", sctx, svc.heap_used_bytes);
    svc.heap_max_bytes = field_or<std::int64_t>(sj, "heap_max_bytes", sctx, svc.heap_max_bytes);
    svc.gc_per_min = field_or<double>(sj, "gc_per_min", sctx, svc.gc_per_min);
    svc.gc_pause_ms = field_or<double>(sj, "gc_pause_ms", sctx, svc.gc_pause_ms);
    if (const auto* deps = optional_array(sj, "dependencies", sctx)) {
      for (const auto& d : *deps) {
        if (auto cpr = optional_field<double>(d, "calls_per_request", sctx)) {
          svc.calls_per_request[d.at("target").get<std::string>()] = *cpr;
        }
      }
    }
    s.services.push_back(std::move(svc));
  }
  if (const auto* inj = optional_array(j, "injections", ctx)) {
    for (std::size_t i = 0; i < inj->size(); ++i) {
      const auto ictx = field_path(ctx, "injections[" + std::to_string(i) + "]");
      const auto& ij = (*inj)[i];
      Injection in;
      in.smell_id = required<std::string>(ij, "smell_id", ictx);
      in.target = required<std::string>(ij, "target", ictx);
      if (const auto* range = optional_array(ij, "window_range", ictx)) {
        if (range->size() != 2 || !(*range)[0].is_number_integer() || !(*range)[1].is_number_integer()) {
          field_error(ictx, "window_range", "[from, to] integer pair");
        }
        in.window_from = (*range)[0].get<int>();
        in.window_to = (*range)[1].get<int>();
      } else {
        in.window_from = 0;
        in.window_to = static_cast<int>(s.duration_s / std::max<std::int64_t>(1, s.window_s));
      }
      in.intensity = field_or<double>(ij, "intensity", ictx, 1.0);
      s.injections.push_back(std::move(in));
    }
  }
  return s;
}

json to_json(const Scenario& s) {
  json services = json::array();
  for (const auto& svc : s.services) {
    json j = to_json(svc.manifest);
    for (auto& d : j["dependencies"]) {
      auto it = svc.calls_per_request.find(d["target"].get<std::string>());
      if (it != svc.calls_per_request.end()) d["calls_per_request"] = it->second;
    }
    j["instances"] = svc.instances;
    j["baseline_rps"] = svc.baseline_rps;
    j["latency_ms"] = svc.latency_ms;
    j["db_calls_per_request"] = svc.db_calls_per_request;
    j["business_methods"] = svc.business_methods;
    j["cpu_frac"] = svc.cpu_frac;
    j["heap_used_bytes"] = svc.heap_used_bytes;
    j["heap_max_bytes"] = svc.heap_max_bytes;
    j["gc_per_min"] = svc.gc_per_min;
    j["gc_pause_ms"] = svc.gc_pause_ms;
    services.push_back(std::move(j));
  }
  json injections = json::array();
  for (const auto& in : s.injections) {
    injections.push_back({{"smell_id", in.smell_id},
                          {"target", in.target},
                          {"window_range", {in.window_from, in.window_to}},
                          {"intensity", in.intensity}});
  }
  return json{{"name", s.name},
              {"seed", s.seed},
              {"start_us", s.start_us},
              {"window_s", s.window_s},
              {"duration_s", s.duration_s},
              {"report_interval_s", s.report_interval_s},
              {"services", services},
              {"injections", injections}};
}

Scenario load_scenario_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::not_found, "cannot read scenario '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return scenario_from_json(parse_json(ss.str(), path.filename().string()));
}

void write_manifests(const std::vector<ServiceManifest>& manifests, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& m : manifests) {
    std::ofstream out(dir / (m.name + ".json"), std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::not_found, "cannot write manifest into '" + dir.string() + "'");
    out << to_json(m).dump(2) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Generation

namespace {

constexpr double kJitter = 0.05;
constexpr double kMargin = 1.2;
constexpr std::int64_t kActiveSpanUs = 50'000'000;  // roots start within the first 50 s of a window

/// splitmix64; the sequence is fixed across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  /// Uniform in [-1, 1).
  double sym() noexcept { return uniform() * 2.0 - 1.0; }

 private:
  std::uint64_t state_;
};

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Rng stream(std::uint64_t seed, std::string_view service, int window, std::uint64_t purpose) {
  Rng mix(seed ^ (fnv1a(service) * 31) ^ (static_cast<std::uint64_t>(window) * 0x9e3779b97f4a7c15ULL) ^
          (purpose << 56));
  return Rng(mix.next());
}

/// Smooth weighted round robin: after n picks, each index has been chosen
/// within one of n * weight / total times.
class Picker {
 public:
  explicit Picker(std::vector<double> weights) : w_(std::move(weights)), cur_(w_.size(), 0.0) {
    for (double x : w_) total_ += x;
  }
  std::size_t next() {
    std::size_t best = 0;
    for (std::size_t i = 0; i < w_.size(); ++i) {
      cur_[i] += w_[i];
      if (cur_[i] > cur_[best]) best = i;
    }
    cur_[best] -= total_;
    return best;
  }

 private:
  std::vector<double> w_;
  std::vector<double> cur_;
  double total_ = 0;
};

struct WindowRecords {
  std::vector<SpanRecord> spans;
  std::vector<MetricSample> metrics;
  std::vector<BusinessSample> business;
};

struct Params {
  const Catalog& catalog;
  double get(const std::string& smell, const char* key) const {
    const auto* e = catalog.find(smell);
    if (!e) fail(ErrorCode::validation, "unknown smell '" + smell + "'");
    auto it = e->default_params.find(key);
    if (it == e->default_params.end()) {
      fail(ErrorCode::configuration, "catalog entry '" + smell + "' lacks parameter '" + key + "'");
    }
    return it->second;
  }
};

bool emits_telemetry(const SimService& s) { return s.manifest.role != ServiceRole::message_bus; }

std::string instance_name(const std::string& service, std::size_t i) { return service + "-" + std::to_string(i); }

bool is_system_smell(std::string_view id) { return id == "esb-usage" || id == "no-api-gateway"; }

bool is_history_smell(std::string_view id) {
  return id == "latency-degradation" || id == "call-rate-anomaly" || id == "memory-jitter";
}

SimService* find_service(std::vector<SimService>& services, std::string_view name) {
  for (auto& s : services) {
    if (s.manifest.name == name) return &s;
  }
  return nullptr;
}

bool has_dependency(const ServiceManifest& m, std::string_view target) {
  return std::any_of(m.dependencies.begin(), m.dependencies.end(), [&](const Dependency& d) { return d.target == target; });
}

void add_dependency(SimService& s, const std::string& target, DependencyVia via = DependencyVia::http) {
  if (!has_dependency(s.manifest, target)) s.manifest.dependencies.push_back({target, via});
}

std::vector<SimService*> other_services(std::vector<SimService>& services, std::string_view target) {
  std::vector<SimService*> out;
  for (auto& s : services) {
    if (s.manifest.role == ServiceRole::service && s.manifest.name != target) out.push_back(&s);
  }
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->manifest.name < b->manifest.name; });
  return out;
}

std::string strip_version_segments(const std::string& path) {
  std::string out;
  std::size_t pos = 0;
  while (pos <= path.size()) {
    auto next = path.find('/', pos);
    auto seg = path.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    const bool versioned = seg.size() >= 2 && seg[0] == 'v' &&
                           std::all_of(seg.begin() + 1, seg.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
    if (!versioned && !seg.empty()) out += "/" + seg;
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return out.empty() ? "/" : out;
}

void apply_static_injection(std::vector<SimService>& services, const Injection& in) {
  const auto& id = in.smell_id;
  SimService* t = is_system_smell(id) ? nullptr : find_service(services, in.target);
  if (id == "esb-usage") {
    SimService bus;
    bus.manifest.name = "event-bus";
    bus.manifest.version = "1.0.0";
    bus.manifest.role = ServiceRole::message_bus;
    bus.manifest.loc = 3000;
    bus.baseline_rps = 0;
    for (auto& s : services) {
      std::vector<Dependency> kept;
      bool routed = false;
      for (const auto& d : s.manifest.dependencies) {
        if (d.via == DependencyVia::db || is_literal_url(d.target)) {
          kept.push_back(d);
          continue;
        }
        if (!has_dependency(bus.manifest, d.target)) bus.manifest.dependencies.push_back({d.target, DependencyVia::bus});
        routed = true;
      }
      if (routed) kept.push_back({bus.manifest.name, DependencyVia::bus});
      s.manifest.dependencies = std::move(kept);
    }
    services.push_back(std::move(bus));
  } else if (id == "no-api-gateway") {
    std::set<std::string> removed;
    for (const auto& s : services) {
      if (s.manifest.role == ServiceRole::gateway) removed.insert(s.manifest.name);
    }
    std::erase_if(services, [&](const SimService& s) { return removed.contains(s.manifest.name); });
    for (auto& s : services) {
      std::erase_if(s.manifest.dependencies, [&](const Dependency& d) { return removed.contains(d.target); });
    }
  } else if (id == "microservice-greedy") {
    t->manifest.endpoints.clear();
    t->manifest.loc = 120;
  } else if (id == "no-api-versioning") {
    for (auto& e : t->manifest.endpoints) {
      e.version_label.reset();
      e.path = strip_version_segments(e.path);
    }
  } else if (id == "hardcoded-endpoints") {
    add_dependency(*t, "http://10.0.0.7:8081");
  } else if (id == "shared-persistence") {
    auto others = other_services(services, in.target);
    if (others.empty()) fail(ErrorCode::validation, "shared-persistence injection needs a second service");
    auto* o = others.front();
    if (o->manifest.datastores.empty()) o->manifest.datastores.push_back("shared-db");
    const auto store = o->manifest.datastores.front();
    if (std::find(t->manifest.datastores.begin(), t->manifest.datastores.end(), store) == t->manifest.datastores.end()) {
      t->manifest.datastores.push_back(store);
    }
  } else if (id == "cyclic-dependency") {
    SimService* back = nullptr;
    for (const auto& d : t->manifest.dependencies) {
      auto* s = find_service(services, d.target);
      if (d.via != DependencyVia::db && s && s->manifest.role == ServiceRole::service) {
        back = s;
        break;
      }
    }
    if (!back) {
      auto others = other_services(services, in.target);
      if (others.empty()) fail(ErrorCode::validation, "cyclic-dependency injection needs a second service");
      back = others.front();
      add_dependency(*t, back->manifest.name);
    }
    add_dependency(*back, t->manifest.name);
  } else if (id == "hub-like-dependency") {
    for (auto* o : other_services(services, in.target)) add_dependency(*o, t->manifest.name);
  } else if (id == "shared-libraries") {
    auto others = other_services(services, in.target);
    if (others.empty()) fail(ErrorCode::validation, "shared-libraries injection needs a second service");
    const Library lib{"shared-domain-model", LibraryCategory::business};
    t->manifest.libraries.push_back(lib);
    others.front()->manifest.libraries.push_back(lib);
  } else if (id == "mega-service") {
    t->manifest.endpoints.clear();
    for (int i = 0; i < 24; ++i) {
      t->manifest.endpoints.push_back({"/v1/op" + std::to_string(i), i % 2 ? "POST" : "GET", std::string("v1")});
    }
    t->manifest.loc = std::max<std::int64_t>(t->manifest.loc, 12'000);
  } else if (id == "nano-service") {
    t->manifest.loc = 120;
    int added = 0;
    for (auto* o : other_services(services, in.target)) {
      if (added == 3) break;
      add_dependency(*t, o->manifest.name);
      ++added;
    }
    if (added < 3) fail(ErrorCode::validation, "nano-service injection needs three other services");
  } else if (id == "long-service-chain-static") {
    auto others = other_services(services, in.target);
    if (others.size() < 5) fail(ErrorCode::validation, "long-service-chain-static injection needs six services");
    SimService* prev = t;
    for (std::size_t i = 0; i < 5; ++i) {
      add_dependency(*prev, others[i]->manifest.name);
      prev = others[i];
    }
  }
}

void validate_scenario(const Scenario& s, const Catalog& catalog) {
  if (s.window_s <= 0) fail(ErrorCode::validation, "scenario: window_s must be positive");
  if (s.duration_s < s.window_s || s.duration_s % s.window_s != 0) {
    fail(ErrorCode::validation, "scenario: duration_s must be a positive multiple of window_s");
  }
  if (s.report_interval_s <= 0 || s.window_s % s.report_interval_s != 0) {
    fail(ErrorCode::validation, "scenario: report_interval_s must divide window_s");
  }
  if (s.window_s * 1'000'000 <= kActiveSpanUs) fail(ErrorCode::validation, "scenario: window_s must exceed 50 s");
  if (s.start_us % (s.window_s * 1'000'000) != 0) fail(ErrorCode::validation, "scenario: start_us must be window-aligned");
  for (const auto& svc : s.services) {
    const auto& n = svc.manifest.name;
    if (svc.instances < 1) fail(ErrorCode::validation, "service '" + n + "': instances must be >= 1");
    if (svc.baseline_rps < 0) fail(ErrorCode::validation, "service '" + n + "': baseline_rps must be >= 0");
    if (svc.latency_ms <= 0) fail(ErrorCode::validation, "service '" + n + "': latency_ms must be positive");
    if (svc.db_calls_per_request < 0) fail(ErrorCode::validation, "service '" + n + "': db_calls_per_request must be >= 0");
    if (svc.business_methods.empty()) fail(ErrorCode::validation, "service '" + n + "': business_methods is empty");
    if (svc.cpu_frac < 0 || svc.cpu_frac > 1) fail(ErrorCode::validation, "service '" + n + "': cpu_frac out of range");
    if (svc.heap_used_bytes < 0 || svc.heap_used_bytes > svc.heap_max_bytes) {
      fail(ErrorCode::validation, "service '" + n + "': heap_used_bytes exceeds heap_max_bytes");
    }
    for (const auto& [target, cpr] : svc.calls_per_request) {
      if (cpr < 0) fail(ErrorCode::validation, "service '" + n + "': calls_per_request must be >= 0");
    }
  }
  const int windows = s.window_count();
  for (const auto& in : s.injections) {
    const auto* e = catalog.find(in.smell_id);
    if (!e || !catalog.is_bound(in.smell_id)) fail(ErrorCode::validation, "injection: unknown smell '" + in.smell_id + "'");
    if (!(in.intensity >= 1.0)) fail(ErrorCode::validation, "injection '" + in.smell_id + "': intensity must be >= 1");
    if (in.window_from < 0 || in.window_from >= in.window_to || in.window_to > windows) {
      fail(ErrorCode::validation, "injection '" + in.smell_id + "': window_range outside the scenario");
    }
    if (is_system_smell(in.smell_id)) {
      if (in.target != kSystemScope) fail(ErrorCode::validation, "injection '" + in.smell_id + "': target must be 'system'");
      continue;
    }
    const SimService* t = nullptr;
    for (const auto& svc : s.services) {
      if (svc.manifest.name == in.target) t = &svc;
    }
    if (!t || t->manifest.role != ServiceRole::service) {
      fail(ErrorCode::validation, "injection '" + in.smell_id + "': target '" + in.target + "' is not a service");
    }
    if (e->detection_kind == DetectionKind::static_analysis) continue;
    if (is_history_smell(in.smell_id)) {
      const auto need = static_cast<int>(std::ceil(e->default_params.at("min_history")));
      if (in.window_from < need) {
        fail(ErrorCode::validation, "injection '" + in.smell_id + "': needs " + std::to_string(need) +
                                        " clean windows before window_range");
      }
    }
    if (in.smell_id == "memory-jitter" &&
        in.window_to - in.window_from < static_cast<int>(std::ceil(e->default_params.at("leak_windows")))) {
      fail(ErrorCode::validation, "injection 'memory-jitter': window_range shorter than leak_windows");
    }
    if (in.smell_id == "uneven-load-distribution" && t->instances < 2) {
      fail(ErrorCode::validation, "injection 'uneven-load-distribution': target needs >= 2 instances");
    }
    if (in.smell_id == "uneven-api-usage" && t->business_methods.size() < 2) {
      fail(ErrorCode::validation, "injection 'uneven-api-usage': target needs >= 2 business methods");
    }
    if (t->baseline_rps <= 0) {
      fail(ErrorCode::validation, "injection '" + in.smell_id + "': target has no traffic of its own");
    }
  }
}

class Generator {
 public:
  Generator(const Scenario& s, const Catalog& catalog) : s_(s), p_{catalog} {}

  GeneratedWorkload run() {
    validate_scenario(s_, p_.catalog);
    services_ = s_.services;
    for (const auto& in : s_.injections) {
      const auto* e = p_.catalog.find(in.smell_id);
      if (e->detection_kind == DetectionKind::static_analysis) apply_static_injection(services_, in);
    }
    std::sort(services_.begin(), services_.end(),
              [](const SimService& a, const SimService& b) { return a.manifest.name < b.manifest.name; });

    GeneratedWorkload out;
    std::vector<ServiceManifest> manifests;
    for (const auto& svc : services_) manifests.push_back(svc.manifest);
    // Validates names and dependency targets.
    out.manifests = build_model(manifests).services;

    window_us_ = s_.window_s * 1'000'000;
    interval_us_ = s_.report_interval_s * 1'000'000;
    for (const auto& svc : services_) {
      if (svc.manifest.role == ServiceRole::message_bus) continue;
      gc_acc_[svc.manifest.name].assign(static_cast<std::size_t>(svc.instances), 0.0);
    }
    const std::string producer = "simulator/" + (s_.name.empty() ? std::string("scenario") : s_.name);
    for (int w = 0; w < s_.window_count(); ++w) {
      auto recs = generate_window(w);
      bucket(recs, w, producer, out.batches);
    }
    return out;
  }

 private:
  const Injection* active(std::string_view smell, int w) const {
    for (const auto& in : s_.injections) {
      if (in.smell_id == smell && w >= in.window_from && w < in.window_to) return &in;
    }
    return nullptr;
  }

  const Injection* active_on(std::string_view smell, std::string_view service, int w) const {
    const auto* in = active(smell, w);
    return in && in->target == service ? in : nullptr;
  }

  const SimService* service(std::string_view name) const {
    for (const auto& s : services_) {
      if (s.manifest.name == name) return &s;
    }
    return nullptr;
  }

  std::int64_t jittered_us(double ms, Rng& rng) const {
    return std::max<std::int64_t>(1, std::llround(ms * 1000.0 * (1.0 + kJitter * rng.sym())));
  }

  WindowRecords generate_window(int w) {
    WindowRecords r;
    const TimestampUs ws = s_.start_us + static_cast<TimestampUs>(w) * window_us_;
    const auto intervals = static_cast<std::size_t>(window_us_ / interval_us_);

    std::map<std::string, Picker> pickers;
    std::map<std::string, Rng> latency_rng;
    for (const auto& svc : services_) {
      if (!emits_telemetry(svc)) continue;
      const auto& name = svc.manifest.name;
      const auto n = static_cast<std::size_t>(svc.instances);
      std::vector<double> weights(n, 1.0);
      if (const auto* in = active_on("uneven-load-distribution", name, w)) {
        // Weight p on instance 0, the rest shared equally: the coefficient of
        // variation of that split is c (population stddev over mean).
        const double root = std::sqrt(static_cast<double>(n - 1));
        const double thr = p_.get(in->smell_id, "load_cv_max");
        const double c = std::min(thr * kMargin * in->intensity * 1.05, 0.95 * root);
        const double p = (1.0 + c * root) / static_cast<double>(n);
        weights.assign(n, (1.0 - p) / static_cast<double>(n - 1));
        weights[0] = p;
      }
      pickers.emplace(name, Picker(weights));
      latency_rng.emplace(name, stream(s_.seed, name, w, 2));
    }

    // business[(service, instance, interval, method)] -> (calls, latency sum)
    std::map<std::tuple<std::string, std::size_t, std::size_t, std::string>, std::pair<std::int64_t, double>> business;

    for (const auto& svc : services_) {
      if (!emits_telemetry(svc) || svc.baseline_rps <= 0) continue;
      const auto& name = svc.manifest.name;
      auto rng = stream(s_.seed, name, w, 1);
      const double expected = svc.baseline_rps * s_.window_s * (1.0 + kJitter * rng.sym());
      const auto roots = std::max<std::int64_t>(1, std::llround(expected));
      double db_acc = 0;
      std::map<std::string, double> call_acc;
      for (std::int64_t k = 0; k < roots; ++k) {
        const TimestampUs t = ws + static_cast<TimestampUs>((static_cast<double>(k) + 0.5) *
                                                            static_cast<double>(kActiveSpanUs) / static_cast<double>(roots));
        const auto inst = pickers.at(name).next();
        const std::string trace = name + "-" + std::to_string(w) + "-" + std::to_string(k);
        SpanRecord root;
        root.trace_id = trace;
        root.span_id = "r";
        root.service = name;
        root.instance = instance_name(name, inst);
        root.operation = svc.manifest.endpoints.empty()
                             ? "/"
                             : svc.manifest.endpoints[static_cast<std::size_t>(k) % svc.manifest.endpoints.size()].path;
        root.kind = SpanKind::server;
        root.start_us = t;
        root.duration_us = jittered_us(svc.latency_ms, latency_rng.at(name));
        r.spans.push_back(root);

        db_acc += svc.db_calls_per_request;
        const auto dbs = static_cast<int>(std::floor(db_acc));
        db_acc -= dbs;
        for (int d = 0; d < dbs; ++d) {
          SpanRecord db;
          db.trace_id = trace;
          db.span_id = "d" + std::to_string(d);
          db.parent_span_id = "r";
          db.service = name;
          db.instance = root.instance;
          db.operation = "SELECT";
          db.kind = SpanKind::db;
          db.start_us = t + 500 + d;
          db.duration_us = 2000;
          db.db_statement_kind = StatementKind::select;
          r.spans.push_back(std::move(db));
        }

        int call_index = 0;
        for (const auto& dep : svc.manifest.dependencies) {
          if (dep.via == DependencyVia::db || is_literal_url(dep.target)) continue;
          const auto* down = service(dep.target);
          if (!down || !emits_telemetry(*down)) continue;
          auto cpr_it = svc.calls_per_request.find(dep.target);
          auto& acc = call_acc[dep.target];
          acc += cpr_it == svc.calls_per_request.end() ? 0.5 : cpr_it->second;
          const auto calls = static_cast<int>(std::floor(acc));
          acc -= calls;
          for (int c = 0; c < calls; ++c, ++call_index) add_call(r, root, *down, call_index, latency_rng.at(dep.target), pickers.at(dep.target));
        }

        const auto method = svc.business_methods[static_cast<std::size_t>(k) % svc.business_methods.size()];
        auto& b = business[{name, inst, static_cast<std::size_t>((t - ws) / interval_us_), method}];
        b.first += 1;
        b.second += static_cast<double>(root.duration_us) / 1000.0;
      }
    }

    for (const auto& svc : services_) {
      if (!emits_telemetry(svc)) continue;
      const auto& name = svc.manifest.name;
      auto rng = stream(s_.seed, name, w, 3);
      for (std::size_t i = 0; i < static_cast<std::size_t>(svc.instances); ++i) {
        for (std::size_t j = 0; j < intervals; ++j) {
          MetricSample m;
          m.service = name;
          m.instance = instance_name(name, i);
          m.ts_us = ws + static_cast<TimestampUs>(j) * interval_us_;
          m.cpu_frac = std::clamp(svc.cpu_frac * (1.0 + kJitter * rng.sym()), 0.0, 1.0);
          m.heap_max_bytes = svc.heap_max_bytes;
          m.heap_used_bytes = heap_at(svc, m.ts_us);
          auto& acc = gc_acc_[name][i];
          acc += svc.gc_per_min * static_cast<double>(s_.report_interval_s) / 60.0;
          m.gc_count_delta = static_cast<std::int64_t>(std::floor(acc));
          acc -= static_cast<double>(m.gc_count_delta);
          m.gc_pause_ms_delta = static_cast<double>(m.gc_count_delta) * svc.gc_pause_ms;
          r.metrics.push_back(std::move(m));

          for (const auto& method : svc.business_methods) {
            BusinessSample b;
            b.service = name;
            b.instance = instance_name(name, i);
            b.method = method;
            b.ts_us = ws + static_cast<TimestampUs>(j + 1) * interval_us_ - 1;
            if (auto it = business.find({name, i, j, method}); it != business.end()) {
              b.call_count_delta = it->second.first;
              b.latency_sum_ms_delta = it->second.second;
            }
            r.business.push_back(std::move(b));
          }
        }
      }
    }

    inject_runtime(r, w);
    return r;
  }

  void add_call(WindowRecords& r, const SpanRecord& parent, const SimService& down, int index, Rng& rng, Picker& picker) {
    SpanRecord client;
    client.trace_id = parent.trace_id;
    client.span_id = "c" + std::to_string(index);
    client.parent_span_id = parent.span_id;
    client.service = parent.service;
    client.instance = parent.instance;
    client.operation = "call " + down.manifest.name;
    client.kind = SpanKind::client;
    client.start_us = parent.start_us + 1000 * (index + 1);
    SpanRecord server;
    server.trace_id = parent.trace_id;
    server.span_id = "s" + std::to_string(index);
    server.parent_span_id = client.span_id;
    server.service = down.manifest.name;
    server.instance = instance_name(down.manifest.name, picker.next());
    server.operation = down.manifest.endpoints.empty() ? "/" : down.manifest.endpoints.front().path;
    server.kind = SpanKind::server;
    server.start_us = client.start_us + 200;
    server.duration_us = jittered_us(down.latency_ms, rng);
    client.duration_us = server.duration_us + 400;
    client.peer_service = down.manifest.name;
    r.spans.push_back(std::move(client));
    r.spans.push_back(std::move(server));
  }

  std::int64_t heap_at(const SimService& svc, TimestampUs ts) const {
    for (const auto& in : s_.injections) {
      if (in.smell_id != "memory-jitter" || in.target != svc.manifest.name) continue;
      const TimestampUs from = s_.start_us + static_cast<TimestampUs>(in.window_from) * window_us_;
      const TimestampUs to = s_.start_us + static_cast<TimestampUs>(in.window_to) * window_us_;
      if (ts < from) continue;
      // The detector measures growth from the first sample of the run to the
      // last sample of the final window, one report interval short of the span.
      const double span = static_cast<double>(to - from);
      const double measured = span - static_cast<double>(interval_us_);
      const double frac = p_.get(in.smell_id, "leak_min_frac");
      const double growth = frac * kMargin * in.intensity * 1.01 * static_cast<double>(svc.heap_max_bytes) * span / measured;
      if (static_cast<double>(svc.heap_used_bytes) + growth > static_cast<double>(svc.heap_max_bytes)) {
        fail(ErrorCode::validation, "memory-jitter injection on '" + svc.manifest.name + "' would exceed heap_max_bytes");
      }
      const double progress = std::min(1.0, static_cast<double>(ts - from) / span);
      return svc.heap_used_bytes + static_cast<std::int64_t>(std::ceil(growth * progress));
    }
    return svc.heap_used_bytes;
  }

  static std::vector<SpanRecord*> server_spans(WindowRecords& r, std::string_view service) {
    std::vector<SpanRecord*> out;
    for (auto& s : r.spans) {
      if (s.service == service && s.kind == SpanKind::server) out.push_back(&s);
    }
    return out;
  }

  static std::vector<std::size_t> root_indices(const WindowRecords& r, std::string_view service) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < r.spans.size(); ++i) {
      const auto& s = r.spans[i];
      if (s.service == service && s.kind == SpanKind::server && !s.parent_span_id) out.push_back(i);
    }
    return out;
  }

  void require_traffic(std::size_t have, double need, const Injection& in) const {
    if (static_cast<double>(have) < need) {
      fail(ErrorCode::validation, "injection '" + in.smell_id + "' on '" + in.target + "': too little traffic (" +
                                      std::to_string(have) + " < " + std::to_string(need) + ")");
    }
  }

  void inject_runtime(WindowRecords& r, int w) {
    for (const auto& in : s_.injections) {
      if (w < in.window_from || w >= in.window_to) continue;
      const auto* e = p_.catalog.find(in.smell_id);
      if (e->detection_kind != DetectionKind::runtime) continue;
      const double m = in.intensity;
      const auto& id = in.smell_id;
      const auto& T = in.target;

      if (id == "chatty-service") {
        const auto servers = server_spans(r, T).size();
        std::size_t clients = 0;
        for (const auto& s : r.spans) clients += s.service == T && s.kind == SpanKind::client;
        const auto want = static_cast<std::size_t>(std::ceil(p_.get(id, "chatty_min_ratio") * kMargin * m * static_cast<double>(servers)));
        add_client_calls(r, T, want > clients ? want - clients : 0);
      } else if (id == "bottleneck-service") {
        inject_bottleneck(r, in, w);
      } else if (id == "fragile-service") {
        auto servers = server_spans(r, T);
        require_traffic(servers.size(), p_.get(id, "min_requests") * kMargin, in);
        const double rate = std::min(1.0, p_.get(id, "error_rate_max") * kMargin * m);
        const auto errors = static_cast<std::size_t>(std::ceil(rate * static_cast<double>(servers.size())));
        for (std::size_t i = 0; i < errors; ++i) {
          servers[i * servers.size() / errors]->status = SpanStatus::error;
        }
      } else if (id == "latency-degradation") {
        const double f = p_.get(id, "degrade_factor") * kMargin * m * (1 + kJitter) / (1 - kJitter) * 1.01;
        for (auto* s : server_spans(r, T)) s->duration_us = static_cast<std::int64_t>(std::ceil(static_cast<double>(s->duration_us) * f));
        for (auto& b : r.business) {
          if (b.service == T) b.latency_sum_ms_delta *= f;
        }
      } else if (id == "n-plus-one-query") {
        const auto servers = server_spans(r, T).size();
        std::size_t sql = 0;
        for (const auto& s : r.spans) sql += s.service == T && s.kind == SpanKind::db;
        const auto want = static_cast<std::size_t>(std::ceil(p_.get(id, "nplus1_min_ratio") * kMargin * m * static_cast<double>(servers)));
        add_db_calls(r, T, want > sql ? want - sql : 0);
      } else if (id == "frequent-gc") {
        const double per_sample = p_.get(id, "gc_per_s_max") * kMargin * m * static_cast<double>(s_.report_interval_s) * 1.01;
        const auto delta = static_cast<std::int64_t>(std::ceil(per_sample));
        const auto* svc = service(T);
        for (auto& mt : r.metrics) {
          if (mt.service != T) continue;
          mt.gc_count_delta = delta;
          mt.gc_pause_ms_delta = static_cast<double>(delta) * svc->gc_pause_ms;
        }
      } else if (id == "cpu-saturation") {
        for (auto& mt : r.metrics) {
          if (mt.service == T) mt.cpu_frac = 1.0;
        }
      } else if (id == "call-rate-anomaly") {
        const double f = p_.get(id, "spike_factor") * kMargin * m * (1 + kJitter) / (1 - kJitter) * 1.01;
        for (auto& b : r.business) {
          if (b.service != T) continue;
          b.call_count_delta = static_cast<std::int64_t>(std::ceil(static_cast<double>(b.call_count_delta) * f));
          b.latency_sum_ms_delta *= f;
        }
      } else if (id == "uneven-api-usage") {
        inject_api_skew(r, in);
      } else if (id == "long-call-chain-runtime") {
        const auto roots = root_indices(r, T);
        require_traffic(roots.size(), 1, in);
        const auto depth = static_cast<int>(std::ceil(p_.get(id, "chain_depth_max") * kMargin * m));
        SpanRecord parent = r.spans[roots.front()];
        for (int d = 1; d < depth; ++d) {
          SpanRecord s = parent;
          s.span_id = "chain" + std::to_string(d);
          s.parent_span_id = parent.span_id;
          s.kind = d % 2 ? SpanKind::client : SpanKind::server;
          s.peer_service = s.kind == SpanKind::client ? std::optional<std::string>(T) : std::nullopt;
          s.start_us = parent.start_us + 100;
          s.duration_us = std::max<std::int64_t>(1, parent.duration_us - 200);
          r.spans.push_back(s);
          parent = std::move(s);
        }
      }
      // memory-jitter is shaped in heap_at(); uneven-load-distribution in the instance pickers.
    }
  }

  void add_client_calls(WindowRecords& r, const std::string& T, std::size_t extra) {
    if (extra == 0) return;
    const auto roots = root_indices(r, T);
    if (roots.empty()) fail(ErrorCode::validation, "chatty-service injection on '" + T + "': no roots");
    const auto* svc = service(T);
    std::string peer = T + "-cache";
    for (const auto& d : svc->manifest.dependencies) {
      if (d.via != DependencyVia::db && !is_literal_url(d.target)) {
        peer = d.target;
        break;
      }
    }
    std::vector<SpanRecord> added;
    for (std::size_t i = 0; i < extra; ++i) {
      const auto& root = r.spans[roots[i % roots.size()]];
      SpanRecord c;
      c.trace_id = root.trace_id;
      c.span_id = "x" + std::to_string(i / roots.size());
      c.parent_span_id = root.span_id;
      c.service = T;
      c.instance = root.instance;
      c.operation = "call " + peer;
      c.kind = SpanKind::client;
      c.start_us = root.start_us + 300;
      c.duration_us = 500;
      c.peer_service = peer;
      added.push_back(std::move(c));
    }
    r.spans.insert(r.spans.end(), added.begin(), added.end());
  }

  void add_db_calls(WindowRecords& r, const std::string& T, std::size_t extra) {
    if (extra == 0) return;
    const auto roots = root_indices(r, T);
    if (roots.empty()) fail(ErrorCode::validation, "n-plus-one-query injection on '" + T + "': no roots");
    std::vector<SpanRecord> added;
    for (std::size_t i = 0; i < extra; ++i) {
      const auto& root = r.spans[roots[i % roots.size()]];
      SpanRecord d;
      d.trace_id = root.trace_id;
      d.span_id = "q" + std::to_string(i / roots.size());
      d.parent_span_id = root.span_id;
      d.service = T;
      d.instance = root.instance;
      d.operation = "SELECT";
      d.kind = SpanKind::db;
      d.start_us = root.start_us + 700;
      d.duration_us = 1000;
      d.db_statement_kind = StatementKind::select;
      added.push_back(std::move(d));
    }
    r.spans.insert(r.spans.end(), added.begin(), added.end());
  }

  void inject_bottleneck(WindowRecords& r, const Injection& in, int w) {
    const auto& T = in.target;
    const auto* target = service(T);
    double total = 0, mine = 0;
    for (const auto& s : r.spans) {
      if (s.kind != SpanKind::server || !s.parent_span_id) continue;
      ++total;
      if (s.service == T) ++mine;
    }
    const double thr = p_.get(in.smell_id, "bottleneck_fanin_frac");
    const double share = std::min(thr * kMargin * in.intensity, (thr + 1.0) / 2.0);
    const auto extra = static_cast<std::size_t>(std::max(0.0, std::ceil((share * total - mine) / (1.0 - share))));

    std::vector<std::size_t> caller_roots;
    for (std::size_t i = 0; i < r.spans.size(); ++i) {
      const auto& s = r.spans[i];
      if (s.service != T && s.kind == SpanKind::server && !s.parent_span_id) caller_roots.push_back(i);
    }
    if (extra > 0 && caller_roots.empty()) {
      fail(ErrorCode::validation, "bottleneck-service injection on '" + T + "': no other service produces traffic");
    }
    Picker picker(std::vector<double>(static_cast<std::size_t>(target->instances), 1.0));
    auto rng = stream(s_.seed, T, w, 4);
    std::vector<SpanRecord> added;
    for (std::size_t i = 0; i < extra; ++i) {
      const auto root = r.spans[caller_roots[i % caller_roots.size()]];
      WindowRecords tmp;
      add_call(tmp, root, *target, 1000 + static_cast<int>(i / caller_roots.size()), rng, picker);
      added.insert(added.end(), tmp.spans.begin(), tmp.spans.end());
    }
    r.spans.insert(r.spans.end(), added.begin(), added.end());

    const double p95_ms = p_.get(in.smell_id, "bottleneck_p95_ms") * kMargin * in.intensity * 1.01;
    for (auto* s : server_spans(r, T)) {
      s->duration_us = std::max(s->duration_us, static_cast<std::int64_t>(std::ceil(p95_ms * 1000.0 * (1.0 + kJitter * rng.uniform()))));
    }
  }

  void inject_api_skew(WindowRecords& r, const Injection& in) {
    const auto& T = in.target;
    const auto* svc = service(T);
    const auto& top = svc->business_methods.front();
    const auto& second = svc->business_methods[1];
    std::int64_t total = 0;
    for (const auto& b : r.business) {
      if (b.service == T) total += b.call_count_delta;
    }
    require_traffic(static_cast<std::size_t>(total), p_.get(in.smell_id, "min_requests") * kMargin, in);
    // One call on the second method, everything else on the top method.
    const double thr = p_.get(in.smell_id, "api_skew_frac");
    const double share = std::min(thr * kMargin * in.intensity, (thr + 1.0) / 2.0);
    const auto minor = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor((1.0 - share) * static_cast<double>(total))));
    bool minor_placed = false, top_placed = false;
    for (auto& b : r.business) {
      if (b.service != T) continue;
      if (b.method == second && !minor_placed) {
        b.call_count_delta = minor;
        minor_placed = true;
      } else if (b.method == top && !top_placed) {
        b.call_count_delta = total - minor;
        top_placed = true;
      } else {
        b.call_count_delta = 0;
        b.latency_sum_ms_delta = 0;
      }
    }
  }

  void bucket(WindowRecords& r, int w, const std::string& producer, std::vector<TelemetryBatch>& out) const {
    const TimestampUs ws = s_.start_us + static_cast<TimestampUs>(w) * window_us_;
    const auto intervals = static_cast<std::size_t>(window_us_ / interval_us_);
    std::vector<TelemetryBatch> batches(intervals);
    auto slot = [&](TimestampUs ts) {
      return std::min(intervals - 1, static_cast<std::size_t>((ts - ws) / interval_us_));
    };
    std::stable_sort(r.spans.begin(), r.spans.end(), [](const auto& a, const auto& b) { return a.start_us < b.start_us; });
    for (auto& s : r.spans) batches[slot(s.start_us)].spans.push_back(std::move(s));
    for (auto& m : r.metrics) batches[slot(m.ts_us)].metrics.push_back(std::move(m));
    for (auto& b : r.business) batches[slot(b.ts_us)].business.push_back(std::move(b));
    for (auto& b : batches) {
      if (b.empty()) continue;
      b.producer = producer;
      out.push_back(std::move(b));
    }
  }

  const Scenario& s_;
  Params p_;
  std::vector<SimService> services_;
  std::int64_t window_us_ = 0;
  std::int64_t interval_us_ = 0;
  std::map<std::string, std::vector<double>> gc_acc_;
};

}  // namespace

GeneratedWorkload generate(const Scenario& scenario, const Catalog& catalog) {
  return Generator(scenario, catalog).run();
}

// ---------------------------------------------------------------------------
// Replay

json to_json(const ReplayReport& r) {
  return json{{"sent_batches", r.sent_batches},
              {"sent_records", r.sent_records},
              {"accepted", r.accepted},
              {"rejected", r.rejected}};
}

ReplayReport replay(const std::vector<TelemetryBatch>& batches, const BatchSink& sink, ReplayOptions options) {
  ReplayReport report;
  const bool paced = options.speed > 0 && std::isfinite(options.speed);
  std::optional<TimestampUs> prev_ts;
  auto first_ts = [](const TelemetryBatch& b) {
    TimestampUs t = std::numeric_limits<TimestampUs>::max();
    for (const auto& s : b.spans) t = std::min(t, s.start_us);
    for (const auto& m : b.metrics) t = std::min(t, m.ts_us);
    for (const auto& x : b.business) t = std::min(t, x.ts_us);
    return t;
  };
  for (const auto& batch : batches) {
    if (batch.empty()) continue;
    if (paced) {
      const auto ts = first_ts(batch);
      if (prev_ts && ts > *prev_ts) {
        std::this_thread::sleep_for(std::chrono::microseconds(
            static_cast<std::int64_t>(static_cast<double>(ts - *prev_ts) / options.speed)));
      }
      prev_ts = ts;
    }
    IngestReceipt receipt;
    for (int attempt = 1;; ++attempt) {
      try {
        receipt = sink(batch);
        break;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::unreachable && e.code() != ErrorCode::store) throw;
        if (attempt >= options.max_attempts) throw;
        std::this_thread::sleep_for(options.retry_backoff * attempt);
      }
    }
    ++report.sent_batches;
    report.sent_records += batch.size();
    report.accepted += receipt.accepted;
    report.rejected += receipt.rejected.size();
  }
  return report;
}

BatchSink direct_sink(TelemetryIngest& ingest) {
  return [&ingest](const TelemetryBatch& b) { return ingest.ingest_batch(b); };
}

BatchSink http_sink(const std::string& base_url) {
  auto client = std::make_shared<httplib::Client>(base_url);
  client->set_connection_timeout(2, 0);
  client->set_read_timeout(30, 0);
  return [client, base_url](const TelemetryBatch& b) {
    auto res = client->Post("/ingest", to_json(b).dump(), "application/json");
    if (!res) {
      fail(ErrorCode::unreachable, "ingest endpoint " + base_url + " unreachable: " + httplib::to_string(res.error()));
    }
    if (res->status == 503) fail(ErrorCode::store, "ingest endpoint reported storage unavailable");
    if (res->status != 200) fail(ErrorCode::validation, "ingest rejected batch: HTTP " + std::to_string(res->status) + " " + res->body);
    const auto j = parse_json(res->body, "ingest receipt");
    IngestReceipt receipt;
    receipt.accepted = j.at("accepted").get<std::size_t>();
    for (const auto& r : j.at("rejected")) {
      Rejection rej;
      rej.index = r.at("index").get<std::size_t>();
      rej.reason = r.at("reason").get<std::string>();
      if (auto c = parse_raw_category(r.at("category").get<std::string>())) rej.category = *c;
      receipt.rejected.push_back(std::move(rej));
    }
    return receipt;
  };
}

}  // namespace smellwatch
