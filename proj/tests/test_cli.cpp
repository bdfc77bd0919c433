#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "autoscout/bench_harness.hpp"
#include "autoscout/cli.hpp"
#include "autoscout/external_oracle.hpp"
#include "support.hpp"

using namespace autoscout;
using nlohmann::json;
using testing::data_dir;
using testing::make_config;
using testing::megatron;

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "autoscout_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path script(const fs::path& dir, const std::string& name, const std::string& body) {
  const auto p = dir / name;
  std::ofstream(p) << "#!/bin/sh\ncat > /dev/null\n" << body << '\n';
  fs::permissions(p, fs::perms::owner_all);
  return p;
}

struct Invocation {
  int code;
  std::string out, err;
};

Invocation invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "autoscout");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string space_path() { return (data_dir() / "spaces" / "megatron.json").string(); }

}  // namespace

TEST_CASE("parse_oracle_line") {
  CHECK(parse_oracle_line("1.25") == 1.25);
  CHECK(parse_oracle_line("  3e2 \r") == 300.0);
  CHECK(is_infeasible(parse_oracle_line("INFEASIBLE")));
  CHECK_THROWS_AS(parse_oracle_line(""), ProtocolError);
  CHECK_THROWS_AS(parse_oracle_line("fast"), ProtocolError);
  CHECK_THROWS_AS(parse_oracle_line("1.5 s"), ProtocolError);
  CHECK_THROWS_AS(parse_oracle_line("nan"), ProtocolError);
  CHECK_THROWS_AS(parse_oracle_line("inf"), ProtocolError);
}

TEST_CASE("OracleSpec::parse") {
  const auto b = OracleSpec::parse("builtin:vl-8B");
  CHECK(b.kind == OracleSpec::Kind::Builtin);
  CHECK(b.target == "vl-8B");
  const auto c = OracleSpec::parse("command:/usr/bin/profile");
  CHECK(c.kind == OracleSpec::Kind::Command);
  CHECK(c.target == "/usr/bin/profile");
  CHECK_THROWS(OracleSpec::parse("vl-8B"));
  CHECK_THROWS(OracleSpec::parse("shell:x"));
  CHECK_THROWS(OracleSpec::parse("command:"));
}

TEST_CASE("external oracle protocol") {
  const auto dir = scratch("protocol");
  const auto& space = megatron();
  const auto c = make_config(space, {{"tp", 2}});
  OracleSpec spec;
  spec.kind = OracleSpec::Kind::Command;

  SUBCASE("one decimal line") {
    spec.target = script(dir, "ok.sh", "echo 1.25").string();
    CHECK(external_oracle_eval(spec, space, c) == 1.25);
  }
  SUBCASE("INFEASIBLE") {
    spec.target = script(dir, "inf.sh", "echo INFEASIBLE").string();
    CHECK(is_infeasible(external_oracle_eval(spec, space, c)));
  }
  SUBCASE("configuration arrives on stdin as JSON") {
    const auto p = dir / "echo_tp.sh";
    std::ofstream(p) << "#!/bin/sh\nsed -n 's/.*\"tp\":\\([0-9]*\\).*/\\1/p'\n";
    fs::permissions(p, fs::perms::owner_all);
    spec.target = p.string();
    CHECK(external_oracle_eval(spec, space, c) == 2.0);
  }
  SUBCASE("two lines are a protocol violation") {
    spec.target = script(dir, "two.sh", "echo 1\necho 2").string();
    CHECK_THROWS_AS(external_oracle_eval(spec, space, c), ProtocolError);
  }
  SUBCASE("garbage is a protocol violation and is counted") {
    spec.target = script(dir, "bad.sh", "echo fast").string();
    auto count = std::make_shared<std::atomic<std::size_t>>(0);
    const auto oracle = make_command_oracle(spec, space, count);
    CHECK_THROWS_AS(oracle(c), ProtocolError);
    CHECK(count->load() == 1);
  }
  SUBCASE("nonzero exit is a failure, not a protocol violation") {
    spec.target = script(dir, "fail.sh", "echo 1.0\nexit 3").string();
    try {
      external_oracle_eval(spec, space, c);
      FAIL("expected OracleError");
    } catch (const ProtocolError&) {
      FAIL("nonzero exit reported as protocol violation");
    } catch (const OracleError&) {
    }
  }
  SUBCASE("timeout kills the process") {
    spec.target = script(dir, "slow.sh", "sleep 5\necho 1.0").string();
    spec.timeout_seconds = 0.3;
    const auto t0 = std::chrono::steady_clock::now();
    CHECK_THROWS_AS(external_oracle_eval(spec, space, c), OracleError);
    CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(3));
  }
}

TEST_CASE("cli: invalid input exits 2") {
  CHECK(invoke({}).code == kExitInvalidInput);
  CHECK(invoke({"optimize", "--oracle", "builtin:vl-8B"}).code == kExitInvalidInput);
  CHECK(invoke({"optimize", "--space", "/nonexistent.json", "--oracle", "builtin:vl-8B"}).code == kExitInvalidInput);
  CHECK(invoke({"optimize", "--space", space_path(), "--oracle", "builtin:gpt-5T"}).code == kExitInvalidInput);
  CHECK(invoke({"optimize", "--space", space_path(), "--oracle", "command:/nonexistent"}).code == kExitInvalidInput);
  CHECK(invoke({"optimize", "--space", space_path(), "--oracle", "builtin:vl-8B", "--variant", "bogus"}).code ==
        kExitInvalidInput);
  CHECK(invoke({"benchmark", "--scenario", "/nonexistent.json"}).code == kExitInvalidInput);

  const auto dir = scratch("bad_scenario");
  std::ofstream(dir / "s.json") << R"({"name": "7dp", "space": "x.json", "model_preset": "builtin:vl-8B"})";
  const auto r = invoke({"benchmark", "--scenario", (dir / "s.json").string()});
  CHECK(r.code == kExitInvalidInput);
  CHECK(r.err.find("invalid scenario") != std::string::npos);
}

TEST_CASE("cli: optimize with a builtin oracle writes best.json and a reproducible trace") {
  const auto a = scratch("run_a"), b = scratch("run_b");
  const std::vector<std::string> common{"optimize", "--space", space_path(), "--oracle", "builtin:vl-8B",
                                        "--budget-iters", "30", "--seed", "4"};
  auto args_a = common, args_b = common;
  args_a.insert(args_a.end(), {"--out", a.string()});
  args_b.insert(args_b.end(), {"--out", b.string()});
  const auto ra = invoke(args_a);
  REQUIRE(ra.code == kExitOk);
  REQUIRE(invoke(args_b).code == kExitOk);
  CHECK(ra.out.find("best cost:") != std::string::npos);

  const auto best = json::parse(slurp(a / "best.json"));
  CHECK(best.contains("config"));
  CHECK(best["cost"].get<double>() >= 10.0154 * (1 - 1e-4));
  CHECK(best["preset_hash"] == builtin_preset("vl-8B").hash());
  const auto cfg = megatron().config_from_json(best["config"]);
  CHECK(is_feasible(megatron(), cfg));
  CHECK(synthetic_cost(builtin_preset("vl-8B"), megatron(), cfg) == doctest::Approx(best["cost"].get<double>()));

  // Model time makes even the wall column deterministic for builtin oracles.
  CHECK(slurp(a / "trace.csv") == slurp(b / "trace.csv"));
  CHECK(slurp(a / "trace.csv").rfind("iteration,", 0) == 0);
}

TEST_CASE("cli: command oracle") {
  const auto dir = scratch("command");
  const auto base = [&](const fs::path& oracle, const fs::path& out) {
    return std::vector<std::string>{"optimize",     "--space", space_path(), "--oracle",
                                    "command:" + oracle.string(), "--budget-iters", "3", "--out", out.string(),
                                    "--k-tournament", "2"};
  };
  SUBCASE("constant profiler succeeds") {
    const auto r = invoke(base(script(dir, "ok.sh", "echo 2.5"), dir / "ok"));
    CHECK(r.code == kExitOk);
    CHECK(json::parse(slurp(dir / "ok" / "best.json"))["cost"] == 2.5);
  }
  SUBCASE("protocol violation exits 3") {
    const auto r = invoke(base(script(dir, "bad.sh", "echo fast"), dir / "bad"));
    CHECK(r.code == kExitProtocol);
    CHECK(fs::exists(dir / "bad" / "trace.csv"));
  }
  SUBCASE("no successful evaluation exits 4") {
    const auto r = invoke(base(script(dir, "fail.sh", "exit 1"), dir / "fail"));
    CHECK(r.code == kExitNoEvaluations);
    CHECK(slurp(dir / "fail" / "trace.csv").find(",failed,") != std::string::npos);
  }
}

TEST_CASE("cli: benchmark") {
  const auto dir = scratch("bench");
  std::ofstream(dir / "s.json") << json{{"name", "3dp"},
                                        {"space", space_path()},
                                        {"model_preset", "builtin:dense-3B"},
                                        {"seeds", 2},
                                        {"budget_iters", 8},
                                        {"methods", {"autoscout", "random_search"}}}
                                       .dump();
  const auto r = invoke({"benchmark", "--scenario", (dir / "s.json").string(), "--out", (dir / "out").string()});
  CHECK(r.code == kExitOk);
  CHECK(fs::exists(dir / "out" / "summary.csv"));
  CHECK(fs::exists(dir / "out" / "trace_autoscout_K5_seed1.csv"));
}
