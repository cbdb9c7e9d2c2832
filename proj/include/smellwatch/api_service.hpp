// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

#include "smellwatch/catalog.hpp"
#include "smellwatch/engine.hpp"
#include "smellwatch/error.hpp"
#include "smellwatch/ingest.hpp"
#include "smellwatch/result_store.hpp"
#include "smellwatch/store.hpp"

namespace httplib {
class Server;
}

namespace smellwatch {

/// HTTP status for an error code: 400 for bad input, 404, 409, 503 for
/// storage failures and 500 otherwise.
int http_status(ErrorCode code) noexcept;

/// Every non-2xx body: {"status", "code", "message"}.
nlohmann::json api_error_body(int status, std::string_view code, std::string_view message);

struct ApiOptions {
  std::string host = "127.0.0.1";
  /// 0 binds an ephemeral port.
  int port = 8080;
  std::string cors_origin;
  std::optional<std::filesystem::path> ui_dir;
};

struct ApiDependencies {
  Store& store;
  TelemetryIngest& ingest;
  ResultStore& results;
  DetectionEngine& engine;
  const Catalog& catalog;
  std::function<TimestampUs()> now;
};

/// Route table over the core modules. Handlers only translate between HTTP and
/// module calls.
class ApiServer {
 public:
  ApiServer(ApiDependencies deps, ApiOptions options);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds and starts serving on a background thread. Throws Error{startup}
  /// when the address cannot be bound.
  void start();
  /// Stops accepting and waits for in-flight requests to finish.
  void stop();
  int port() const noexcept { return port_; }
  bool running() const noexcept { return running_; }

 private:
  void install_routes();

  ApiDependencies deps_;
  ApiOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::atomic<bool> running_{false};
  int port_ = 0;
};

}  // namespace smellwatch
