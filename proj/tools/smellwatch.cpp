// SPDX-License-Identifier: Apache-2.0

#include <csignal>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "smellwatch/config.hpp"
#include "smellwatch/error.hpp"
#include "smellwatch/service.hpp"
#include "smellwatch/simulator.hpp"
#include "smellwatch/static_analyzer.hpp"

using namespace smellwatch;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;
constexpr int kExitSmells = 3;

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::not_found:
    case ErrorCode::store:
    case ErrorCode::unreachable:
    case ErrorCode::startup: return kExitIo;
    default: return kExitValidation;
  }
}

/// Flags that map onto config keys; unset flags leave lower layers alone.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;

  void bind(CLI::App* cmd, const std::string& flag, const std::string& key, const std::string& help) {
    cmd->add_option_function<std::string>(flag, [this, key](const std::string& v) { values[key] = v; }, help);
  }

  Config resolve() const {
    Config c;
    if (!config_path.empty()) apply_config_file(c, config_path);
    apply_env(c, process_environment());
    for (const auto& [k, v] : values) set_config_value(c, k, v);
    return c;
  }
};

void add_common(CLI::App* cmd, ConfigFlags& flags) {
  cmd->add_option("--config", flags.config_path, "YAML or JSON config file");
  flags.bind(cmd, "--data-dir", "data_dir", "Store directory");
}

std::string text_record(const DetectionRecord& r) {
  std::ostringstream out;
  out << (r.detected ? "DETECTED  " : "ok        ") << r.smell_id << "  scope=" << r.scope << "  " << r.metric_value << ' '
      << to_string(r.comparator) << ' ' << r.threshold;
  return out.str();
}

void print_summary(const DetectionRunSummary& s, const std::string& format) {
  if (format == "json") {
    std::cout << to_json(s).dump() << '\n';
  } else if (!s.executed) {
    std::cout << "no committed window without a run\n";
  } else {
    std::cout << s.run_id << ": " << s.record_count << " records, " << (s.positive ? "smells detected" : "clean") << '\n';
  }
}

int run_scan(const ConfigFlags& flags, const std::string& manifests, const std::string& format) {
  const auto config = flags.resolve();
  const Catalog catalog = config.catalog ? load_catalog_file(config.catalog->string()) : bundled_catalog();
  const auto params = DetectionParams::from_catalog(catalog, config.thresholds);
  const auto model = load_manifest_dir(manifests);
  const auto records = detect_static(model, params, catalog);
  bool any = false;
  json out = json::array();
  for (const auto& r : records) {
    any = any || r.detected;
    if (format == "json") {
      out.push_back(to_json(r));
    } else {
      std::cout << text_record(r) << '\n';
    }
  }
  if (format == "json") std::cout << out.dump(2) << '\n';
  return any ? kExitSmells : kExitOk;
}

int run_simulate(const ConfigFlags& flags, const std::string& scenario_path, const std::string& target, bool direct,
                 std::optional<std::uint64_t> seed, double speed, const std::string& manifests_out) {
  auto scenario = load_scenario_file(scenario_path);
  if (seed) scenario.seed = *seed;
  const auto workload = generate(scenario);
  if (!manifests_out.empty()) write_manifests(workload.manifests, manifests_out);
  ReplayOptions options;
  options.speed = speed;
  ReplayReport report;
  if (!target.empty()) {
    report = replay(workload.batches, http_sink(target), options);
  } else if (direct) {
    Pipeline pipeline(flags.resolve());
    report = replay(workload.batches, direct_sink(pipeline.ingest()), options);
  }
  std::cout << to_json(report).dump() << '\n';
  return kExitOk;
}

int run_detect(const ConfigFlags& flags, bool all, const std::string& format) {
  Pipeline pipeline(flags.resolve());
  pipeline.reload_manifests();
  const auto report = pipeline.run_cycles(wall_clock_us(), all ? 0 : 1);
  if (all) {
    if (format == "json") {
      json out = json::array();
      for (const auto& s : report.runs) out.push_back(to_json(s));
      std::cout << out.dump() << '\n';
    } else {
      for (const auto& s : report.runs) print_summary(s, format);
      if (report.runs.empty()) print_summary(DetectionRunSummary{}, format);
    }
  } else {
    print_summary(report.runs.empty() ? DetectionRunSummary{} : report.runs.front(), format);
  }
  return kExitOk;
}

int run_serve(const ConfigFlags& flags) {
  // Block before any thread starts so only sigwait below sees the signals.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  const auto config = flags.resolve();
  Service service(config);
  service.start();
  std::cerr << "smellwatch: listening on " << config.host << ':' << service.port() << '\n';
  int sig = 0;
  sigwait(&signals, &sig);
  std::cerr << "smellwatch: shutting down\n";
  service.stop();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"smellwatch: microservice bad-smell detection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "smellwatch 0.1.0");

  ConfigFlags serve_flags;
  auto* serve = app.add_subcommand("serve", "Run the HTTP API with periodic reintegration and detection");
  add_common(serve, serve_flags);
  serve_flags.bind(serve, "--port", "port", "Listen port");
  serve_flags.bind(serve, "--host", "host", "Listen address");
  serve_flags.bind(serve, "--manifests", "manifests_dir", "Directory of service manifests");
  serve_flags.bind(serve, "--ui-dir", "ui_dir", "Dashboard asset directory served under /ui/");
  serve_flags.bind(serve, "--cors-origin", "cors_origin", "Allowed CORS origin");

  ConfigFlags scan_flags;
  std::string scan_manifests;
  std::string scan_format = "text";
  auto* scan = app.add_subcommand("scan", "Run the static analyzer once over a manifest directory");
  scan->add_option("--config", scan_flags.config_path, "YAML or JSON config file");
  scan->add_option("--manifests", scan_manifests, "Directory of service manifests")->required();
  scan->add_option("--format", scan_format, "Output format")->check(CLI::IsMember({"json", "text"}));

  ConfigFlags sim_flags;
  std::string scenario, target, manifests_out;
  bool direct = false;
  std::optional<std::uint64_t> seed;
  double speed = 0;
  auto* sim = app.add_subcommand("simulate", "Generate a scenario workload and replay it");
  add_common(sim, sim_flags);
  sim->add_option("--scenario", scenario, "Scenario JSON file")->required();
  auto* target_opt = sim->add_option("--target", target, "Base URL of a running ingest endpoint");
  sim->add_flag("--direct", direct, "Write into the configured data dir instead of over HTTP")->excludes(target_opt);
  sim->add_option("--seed", seed, "Override the scenario seed");
  sim->add_option("--speed", speed, "Pacing multiplier over simulated time; 0 replays unpaced")
      ->check(CLI::NonNegativeNumber);
  sim->add_option("--manifests-out", manifests_out, "Write the generated manifests into this directory");

  ConfigFlags detect_flags;
  bool once = false, all = false;
  std::string detect_format = "json";
  auto* detect = app.add_subcommand("detect", "Run reintegration and detection over stored data");
  add_common(detect, detect_flags);
  detect_flags.bind(detect, "--manifests", "manifests_dir", "Directory of service manifests");
  auto* once_opt = detect->add_flag("--once", once, "One reintegration cycle and one detection cycle");
  detect->add_flag("--all", all, "Detect every pending window")->excludes(once_opt);
  detect->add_option("--format", detect_format, "Output format")->check(CLI::IsMember({"json", "text"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*serve) return run_serve(serve_flags);
    if (*scan) return run_scan(scan_flags, scan_manifests, scan_format);
    if (*sim) {
      if (target.empty() && !direct && manifests_out.empty()) {
        std::cerr << "simulate: nothing to do; pass --target, --direct or --manifests-out\n";
        return kExitValidation;
      }
      return run_simulate(sim_flags, scenario, target, direct, seed, speed, manifests_out);
    }
    if (*detect) {
      if (!once && !all) {
        std::cerr << "detect: pass --once or --all\n" << detect->help();
        return kExitValidation;
      }
      return run_detect(detect_flags, all, detect_format);
    }
  } catch (const Error& e) {
    std::cerr << "smellwatch: " << to_string(e.code()) << ": " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "smellwatch: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "smellwatch: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitValidation;
}
