// SPDX-License-Identifier: Apache-2.0

#include "smellwatch/api_service.hpp"

#include <charconv>
#include <iostream>
#include <map>

#include <httplib.h>

#include "smellwatch/reintegration.hpp"

namespace smellwatch {

using nlohmann::json;

namespace {

constexpr std::int64_t kDefaultRangeUs = 24LL * 3600 * 1'000'000;

struct Range {
  TimestampUs from;
  TimestampUs to;
};

std::int64_t int_param(const httplib::Request& req, const char* name) {
  const auto text = req.get_param_value(name);
  std::int64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc{} || ptr != end) {
    fail(ErrorCode::argument, std::string("query parameter '") + name + "' must be an integer");
  }
  return v;
}

/// Defaults to the 24 h before now; a lone bound is completed relative to the other.
Range range_param(const httplib::Request& req, TimestampUs now) {
  const bool has_from = req.has_param("from");
  const bool has_to = req.has_param("to");
  Range r{};
  r.to = has_to ? int_param(req, "to") : (has_from ? std::numeric_limits<TimestampUs>::max() : now + 1);
  r.from = has_from ? int_param(req, "from") : (has_to ? r.to - kDefaultRangeUs : now + 1 - kDefaultRangeUs);
  if (r.from > r.to) fail(ErrorCode::argument, "range 'from' is after 'to'");
  return r;
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message) {
  send_json(res, api_error_body(status, code, message), status);
}

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

Handler guarded(Handler h) {
  return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
    try {
      h(req, res);
    } catch (const Error& e) {
      send_error(res, http_status(e.code()), to_string(e.code()), e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, to_string(ErrorCode::parse), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal_error", e.what());
    }
  };
}

json latest_per_service(const std::vector<ServiceAggregate>& aggs) {
  std::map<std::string, const ServiceAggregate*> latest;
  for (const auto& a : aggs) {
    auto& slot = latest[a.service];
    if (!slot || slot->window.start_us < a.window.start_us) slot = &a;
  }
  json out = json::array();
  for (const auto& [name, a] : latest) out.push_back(to_json(*a));
  return out;
}

}  // namespace

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::parse:
    case ErrorCode::validation:
    case ErrorCode::argument: return 400;
    case ErrorCode::not_found: return 404;
    case ErrorCode::conflict: return 409;
    case ErrorCode::store:
    case ErrorCode::unreachable: return 503;
    case ErrorCode::configuration:
    case ErrorCode::startup: return 500;
  }
  return 500;
}

json api_error_body(int status, std::string_view code, std::string_view message) {
  return json{{"status", status}, {"code", code}, {"message", message}};
}

ApiServer::ApiServer(ApiDependencies deps, ApiOptions options)
    : deps_(std::move(deps)), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  if (!deps_.now) {
    deps_.now = [] {
      return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::system_clock::now().time_since_epoch())
          .count();
    };
  }
  install_routes();
}

ApiServer::~ApiServer() { stop(); }

void ApiServer::install_routes() {
  auto& svr = *server_;
  // Without SO_REUSEPORT a second server on the same port fails to bind.
  svr.set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
  });

  svr.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { res.set_content("ok", "text/plain"); });

  svr.Get("/api/knowledge/types", guarded([this](const httplib::Request& req, httplib::Response& res) {
            std::optional<PrimaryType> primary;
            std::optional<std::string> secondary;
            if (req.has_param("primary")) {
              const auto p = req.get_param_value("primary");
              primary = parse_primary_type(p);
              if (!primary) fail(ErrorCode::argument, "unknown primary type '" + p + "'");
            }
            if (req.has_param("secondary")) secondary = req.get_param_value("secondary");
            json out = json::array();
            for (const auto& e : list_by_taxonomy(deps_.catalog, primary, secondary)) out.push_back(to_json(e));
            send_json(res, out);
          }));

  svr.Get(R"(/api/knowledge/types/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto id = req.matches[1].str();
            const auto e = get_entry(deps_.catalog, id);
            if (!e) fail(ErrorCode::not_found, "unknown smell type '" + id + "'");
            send_json(res, to_json(*e));
          }));

  svr.Get("/api/knowledge/record-counts", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto r = range_param(req, deps_.now());
            const auto counts = deps_.results.record_counts(r.from, r.to);
            json out = json::object();
            for (const auto& e : deps_.catalog.entries()) {
              auto it = counts.find(e.id);
              out[e.id] = it == counts.end() ? 0 : it->second;
            }
            send_json(res, out);
          }));

  svr.Get("/api/monitor/services", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto r = range_param(req, deps_.now());
            send_json(res, latest_per_service(load_service_aggregates(deps_.store, r.from, r.to)));
          }));

  svr.Get(R"(/api/monitor/services/([^/]+)/instances)",
          guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto service = req.matches[1].str();
            const auto r = range_param(req, deps_.now());
            std::optional<TimestampUs> latest;
            for (const auto& a : load_service_aggregates(deps_.store, r.from, r.to)) {
              if (a.service == service && (!latest || *latest < a.window.start_us)) latest = a.window.start_us;
            }
            if (!latest) fail(ErrorCode::not_found, "no aggregates for service '" + service + "' in range");
            json out = json::array();
            for (const auto& a : load_instance_aggregates(deps_.store, *latest, *latest + 1)) {
              if (a.service == service) out.push_back(to_json(a));
            }
            send_json(res, out);
          }));

  svr.Get("/api/detection/summary", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto r = range_param(req, deps_.now());
            send_json(res, to_json(deps_.results.query_summary(r.from, r.to, deps_.catalog)));
          }));

  svr.Get("/api/detection/history", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto r = range_param(req, deps_.now());
            std::optional<std::string> service;
            if (req.has_param("service")) service = req.get_param_value("service");
            send_json(res, to_json(deps_.results.query_history(service, r.from, r.to)));
          }));

  svr.Get(R"(/api/detection/services/([^/]+)/records)",
          guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto service = req.matches[1].str();
            const auto r = range_param(req, deps_.now());
            auto records = deps_.results.query_service_records(service, r.from, r.to);
            if (records.empty()) {
              bool known = false;
              for (const auto& a : load_service_aggregates(deps_.store, r.from, r.to)) known = known || a.service == service;
              if (!known) fail(ErrorCode::not_found, "no records for service '" + service + "' in range");
            }
            if (req.has_param("limit")) {
              const auto limit = int_param(req, "limit");
              if (limit < 0) fail(ErrorCode::argument, "query parameter 'limit' must be >= 0");
              if (records.size() > static_cast<std::size_t>(limit)) records.resize(static_cast<std::size_t>(limit));
            }
            json out = json::array();
            for (const auto& rec : records) out.push_back(to_json(rec));
            send_json(res, out);
          }));

  svr.Get("/api/detection/algorithms", guarded([this](const httplib::Request&, httplib::Response& res) {
            send_json(res, to_json(deps_.engine.registry()));
          }));

  svr.Get("/api/detection/algorithms/audit", guarded([this](const httplib::Request&, httplib::Response& res) {
            json out = json::array();
            for (const auto& c : deps_.engine.audit_log()) out.push_back(to_json(c));
            send_json(res, out);
          }));

  svr.Put(R"(/api/detection/algorithms/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto id = req.matches[1].str();
            json body;
            try {
              body = json::parse(req.body);
            } catch (const json::exception& e) {
              fail(ErrorCode::parse, std::string("request body: ") + e.what());
            }
            if (!body.is_object() || !body.contains("online") || !body["online"].is_boolean()) {
              fail(ErrorCode::validation, "request body must be {\"online\": bool}");
            }
            const auto reg = deps_.engine.set_algorithm_status(id, body["online"].get<bool>(), deps_.now());
            send_json(res, json{{"smell_id", id}, {"online", reg.online(id)}});
          }));

  svr.Post("/ingest", guarded([this](const httplib::Request& req, httplib::Response& res) {
             send_json(res, to_json(deps_.ingest.ingest_json(req.body)));
           }));

  if (options_.ui_dir) {
    if (!svr.set_mount_point("/ui", options_.ui_dir->string())) {
      fail(ErrorCode::configuration, "ui_dir '" + options_.ui_dir->string() + "' is not a directory");
    }
    svr.Get("/ui", [](const httplib::Request&, httplib::Response& res) { res.set_redirect("/ui/"); });
  }

  if (!options_.cors_origin.empty()) {
    const auto origin = options_.cors_origin;
    svr.set_post_routing_handler([origin](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", origin);
      res.set_header("Vary", "Origin");
    });
    svr.Options(R"(/.*)", [origin](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, PUT, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
  }

  svr.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    const auto code = res.status == 404 ? "not_found" : "http_error";
    const auto message = res.status == 404 ? "no route for " + req.method + " " + req.path
                                           : "request failed with HTTP " + std::to_string(res.status);
    send_error(res, res.status, code, message);
  });
}

void ApiServer::start() {
  if (running_) return;
  if (options_.port == 0) {
    port_ = server_->bind_to_any_port(options_.host);
    if (port_ < 0) fail(ErrorCode::startup, "cannot bind " + options_.host + " on an ephemeral port");
  } else {
    if (!server_->bind_to_port(options_.host, options_.port)) {
      fail(ErrorCode::startup, "cannot bind " + options_.host + ":" + std::to_string(options_.port));
    }
    port_ = options_.port;
  }
  running_ = true;
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void ApiServer::stop() {
  if (!running_.exchange(false)) return;
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace smellwatch
