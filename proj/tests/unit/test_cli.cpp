// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>
#include <httplib.h>
#include <sys/wait.h>

#include <cstdio>
#include <set>

#include "support.hpp"

using nlohmann::json;

namespace {

struct Outcome {
  int exit = -1;
  std::string out;
};

/// Runs the CLI with `args`; stderr is discarded.
Outcome cli(const std::string& args, const std::string& env = "") {
  const auto cmd = env + (env.empty() ? "" : " ") + "'" SMELLWATCH_CLI "' " + args + " 2>/dev/null";
  Outcome o;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) o.out.append(buf, n);
  const int status = ::pclose(pipe);
  o.exit = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string quoted(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("scan reports smells with exit 3 and clean systems with exit 0") {
  const auto smelly = cli("scan --format json --manifests " + quoted(swtest::source_path("fixtures/case-study")));
  CHECK(smelly.exit == 3);
  std::set<std::pair<std::string, std::string>> detected;
  for (const auto& r : json::parse(smelly.out)) {
    if (r["detected"].get<bool>()) detected.emplace(r["smell_id"], r["scope"]);
  }
  CHECK(detected == std::set<std::pair<std::string, std::string>>{{"no-api-gateway", "system"},
                                                                   {"no-api-versioning", "cloud-user-service"}});

  const auto clean = cli("scan --manifests " + quoted(swtest::source_path("fixtures/clean")));
  CHECK(clean.exit == 0);
  CHECK(clean.out.find("DETECTED") == std::string::npos);
}

TEST_CASE("I/O failures exit 2 and usage errors exit 1") {
  CHECK(cli("scan --manifests /nonexistent/manifests").exit == 2);
  CHECK(cli("bogus").exit == 1);
  CHECK(cli("").exit == 1);
  CHECK(cli("scan").exit == 1);
  CHECK(cli("scan --format yaml --manifests .").exit == 1);
  swtest::TempDir dir;
  CHECK(cli("detect --data-dir " + quoted(dir.path())).exit == 1);
  CHECK(cli("detect --once --all --data-dir " + quoted(dir.path())).exit == 1);
  CHECK(cli("simulate --scenario " + quoted(swtest::source_path("scenarios/clean.json"))).exit == 1);
  CHECK(cli("simulate --direct --scenario /nonexistent.json --data-dir " + quoted(dir.path())).exit == 2);
}

TEST_CASE("configuration errors exit 1") {
  swtest::TempDir dir;
  CHECK(cli("detect --once --data-dir " + quoted(dir.path()), "SMELLWATCH_PORT=abc").exit == 1);
  CHECK(cli("detect --once --data-dir " + quoted(dir.path()), "SMELLWATCH_NO_SUCH_KEY=1").exit == 1);
  CHECK(cli("detect --once --config /nonexistent.yaml").exit != 0);
}

TEST_CASE("detect on an empty store executes nothing") {
  swtest::TempDir dir;
  const auto o = cli("detect --once --data-dir " + quoted(dir.path()));
  CHECK(o.exit == 0);
  const auto s = json::parse(o.out);
  CHECK(s["executed"] == false);
  CHECK(s["record_count"] == 0);
}

TEST_CASE("simulate --direct then detect --all drains every window") {
  swtest::TempDir dir;
  const auto scenario = swtest::load_shipped_scenario("clean");
  const auto sim = cli("simulate --direct --scenario " + quoted(swtest::source_path("scenarios/clean.json")) +
                       " --data-dir " + quoted(dir.path()));
  CHECK(sim.exit == 0);
  const auto report = json::parse(sim.out);
  CHECK(report["rejected"] == 0);
  CHECK(report["accepted"].get<std::size_t>() > 0);

  const auto det = cli("detect --all --format json --data-dir " + quoted(dir.path()));
  CHECK(det.exit == 0);
  const auto runs = json::parse(det.out);
  CHECK(runs.size() == static_cast<std::size_t>(scenario.window_count()));
  for (const auto& r : runs) {
    CHECK(r["executed"] == true);
    CHECK(r["positive"] == false);
  }
  const auto again = cli("detect --once --data-dir " + quoted(dir.path()));
  CHECK(json::parse(again.out)["executed"] == false);
}

TEST_CASE("simulate --manifests-out writes manifests that scan reads") {
  swtest::TempDir dir;
  const auto out = dir.path() / "manifests";
  const auto sim = cli("simulate --scenario " + quoted(swtest::source_path("scenarios/inject-no-api-versioning.json")) +
                       " --manifests-out " + quoted(out));
  CHECK(sim.exit == 0);
  const auto scan = cli("scan --format json --manifests " + quoted(out));
  CHECK(scan.exit == 3);
  bool found = false;
  for (const auto& r : json::parse(scan.out)) found = found || (r["detected"] == true && r["smell_id"] == "no-api-versioning");
  CHECK(found);
}

TEST_CASE("serve on an occupied port exits 2") {
  httplib::Server blocker;
  const int port = blocker.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  swtest::TempDir dir;
  CHECK(cli("serve --host 127.0.0.1 --port " + std::to_string(port) + " --data-dir " + quoted(dir.path())).exit == 2);
}
