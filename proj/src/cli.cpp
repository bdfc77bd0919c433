#include "autoscout/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "autoscout/bench_harness.hpp"
#include "autoscout/external_oracle.hpp"
#include "autoscout/orchestrator.hpp"

namespace autoscout {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void configure_logging() {
  const char* level = std::getenv("AUTOSCOUT_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);
}

struct OptimizeArgs {
  std::string space, oracle, out = "out", config, simulators, variant;
  std::size_t budget_iters = 100, tau = 5, k = 5, max_parallel = 4;
  double budget_seconds = 0, epsilon = 0.1, c0 = 1.414, gamma = 0.995, timeout = 600, noise = 0;
  std::uint64_t seed = 0;
  long sim_samples = -1;
  std::vector<std::string> env;
};

struct BenchmarkArgs {
  std::string scenario, out = "bench";
  std::size_t seeds = 0;
};

int cmd_optimize(const OptimizeArgs& a, const CLI::App& sub, std::ostream& out, std::ostream& err) {
  std::optional<ConfigSpace> space;
  RunConfig cfg;
  OracleSpec spec;
  try {
    space = ConfigSpace::load(a.space);
    if (!a.config.empty()) {
      std::ifstream in(a.config);
      if (!in) throw std::invalid_argument("cannot open run config: " + a.config);
      cfg = RunConfig::from_json(json::parse(in));
    }
    if (sub.count("--budget-iters")) cfg.budget_iters = a.budget_iters;
    if (sub.count("--budget-seconds")) cfg.budget_seconds = a.budget_seconds;
    if (sub.count("--seed")) cfg.seed = a.seed;
    if (sub.count("--tau")) cfg.tau = a.tau;
    if (sub.count("--epsilon")) cfg.epsilon = a.epsilon;
    if (sub.count("--k-tournament")) cfg.k_tournament = a.k;
    if (sub.count("--c0")) cfg.c0 = a.c0;
    if (sub.count("--gamma")) cfg.gamma = a.gamma;
    if (sub.count("--max-parallel")) cfg.max_parallel = a.max_parallel;
    if (!a.variant.empty()) cfg.variant = variant_from_name(a.variant);
    spec = OracleSpec::parse(a.oracle);
    spec.timeout_seconds = a.timeout;
    spec.env_passthrough = a.env;
    if (spec.kind == OracleSpec::Kind::Command && !fs::exists(spec.target))
      throw std::invalid_argument("oracle command not found: " + spec.target);
    if (spec.kind == OracleSpec::Kind::Builtin) builtin_preset(spec.target);
    cfg.validate();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalidInput;
  }

  auto violations = std::make_shared<std::atomic<std::size_t>>(0);
  Oracle oracle;
  std::optional<SyntheticClusterModel> model;
  if (spec.kind == OracleSpec::Kind::Builtin) {
    model = builtin_preset(spec.target);
    oracle = make_oracle(*model, *space);
  } else {
    oracle = make_command_oracle(spec, *space, violations);
    cfg.model_time = false;  // real profilers: budget in wall-clock seconds
  }

  Simulator simulator;
  const auto samples = a.sim_samples >= 0 ? static_cast<std::size_t>(a.sim_samples)
                                          : (spec.kind == OracleSpec::Kind::Builtin ? 200 : 0);
  std::optional<SimulatorEnsemble> ensemble;
  try {
    auto specs = default_simulator_specs();
    if (!a.simulators.empty()) {
      std::ifstream in(a.simulators);
      if (!in) throw std::invalid_argument("cannot open simulator spec: " + a.simulators);
      specs = simulator_specs_from_json(json::parse(in));
    }
    if (samples > 0 && cfg.variant != Variant::NoSimulators) {
      ensemble = train_ensemble(*space, oracle, specs, samples, cfg.seed);
      simulator = make_simulator(*space, *ensemble, a.noise, cfg.seed + 1000003);
    }
  } catch (const OracleError& e) {
    err << "error: simulator training failed: " << e.what() << '\n';
    return violations->load() ? kExitProtocol : kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalidInput;
  }

  RunResult res;
  try {
    res = run(*space, oracle, simulator, cfg);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }

  const fs::path dir(a.out);
  fs::create_directories(dir);
  const auto trace_path = dir / "trace.csv";
  {
    std::ofstream f(trace_path);
    write_trace_csv(f, res.trace);
  }
  if (!res.succeeded()) {
    err << "error: no successful evaluation within the budget\n";
    out << "wrote " << trace_path.string() << '\n';
    return violations->load() ? kExitProtocol : kExitNoEvaluations;
  }

  json best = {{"config", space->config_to_json(*res.best)},
               {"cost", res.best_cost},
               {"real_evals", res.real_evals},
               {"simulated_evals", res.sim_evals},
               {"iterations", res.iterations},
               {"failures", res.failures},
               {"switched_at", res.switch_info ? json(res.switch_info->report.iteration) : json(nullptr)},
               {"run_config", cfg.to_json()},
               {"oracle", a.oracle}};
  if (model) best["preset_hash"] = model->hash();
  if (ensemble) best["simulators"] = ensemble->to_json();
  const auto best_path = dir / "best.json";
  {
    std::ofstream f(best_path);
    f << best.dump(2) << '\n';
  }
  out << "best configuration: " << space->config_to_json(*res.best).dump() << '\n';
  out << "best cost: " << format_cost(res.best_cost) << '\n';
  out << "real evaluations: " << res.real_evals << ", simulated: " << res.sim_evals << '\n';
  out << "wrote " << best_path.string() << '\n';
  out << "wrote " << trace_path.string() << '\n';
  return kExitOk;
}

int cmd_benchmark(const BenchmarkArgs& a, std::ostream& out, std::ostream& err) {
  Scenario sc;
  try {
    sc = Scenario::load(a.scenario);
    if (a.seeds) sc.seeds = a.seeds;
    ConfigSpace::load(sc.space.string());
    resolve_preset(sc.model_preset);
  } catch (const std::exception& e) {
    err << "error: invalid scenario: " << e.what() << '\n';
    return kExitInvalidInput;
  }
  ExperimentResult res;
  try {
    res = run_experiment(sc, a.out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  out << "scenario " << sc.name << ": optimum " << format_cost(res.optimum.cost) << " over "
      << res.optimum.enumerated << " configurations (preset " << res.preset_hash << ")\n";
  out << "method,K,completed,median_best_cost,median_evals_to_5pct,median_real_evals\n";
  for (const auto& r : res.summary)
    out << r.method << ',' << r.k << ',' << r.completed << '/' << r.seeds << ',' << format_cost(r.median_best_cost)
        << ',' << format_cost(r.median_evals_to_5pct) << ',' << format_cost(r.median_real_evals) << '\n';
  out << "wrote " << (fs::path(a.out) / "summary.csv").string() << '\n';
  return kExitOk;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  configure_logging();
  CLI::App app{"Configuration optimizer for distributed training and inference"};
  app.require_subcommand(1);

  OptimizeArgs oa;
  auto* opt = app.add_subcommand("optimize", "Search a configuration space against an oracle");
  opt->add_option("--space", oa.space, "Configuration space JSON")->required();
  opt->add_option("--oracle", oa.oracle, "builtin:<preset> or command:<path>")->required();
  opt->add_option("--budget-iters", oa.budget_iters, "Main-loop iterations");
  opt->add_option("--budget-seconds", oa.budget_seconds, "Time budget (model time for builtin oracles)");
  opt->add_option("--seed", oa.seed, "Random seed");
  opt->add_option("--out", oa.out, "Output directory")->capture_default_str();
  opt->add_option("--tau", oa.tau, "Validation interval");
  opt->add_option("--epsilon", oa.epsilon, "MAPE threshold");
  opt->add_option("--k-tournament", oa.k, "Tournament size");
  opt->add_option("--c0", oa.c0, "Initial bandit exploration");
  opt->add_option("--gamma", oa.gamma, "Exploration decay");
  opt->add_option("--max-parallel", oa.max_parallel, "Concurrent oracle calls");
  opt->add_option("--config", oa.config, "Run config JSON (flags override it)");
  opt->add_option("--simulators", oa.simulators, "Simulator spec JSON");
  opt->add_option("--sim-samples", oa.sim_samples, "Simulator training samples (default 200 builtin, 0 command)");
  opt->add_option("--noise", oa.noise, "Multiplicative simulator noise");
  opt->add_option("--variant", oa.variant, "full|sparse_only|dense_only|no_orchestrator|no_simulators");
  opt->add_option("--timeout", oa.timeout, "Command oracle timeout in seconds");
  opt->add_option("--env", oa.env, "Environment variables passed to a command oracle");

  BenchmarkArgs ba;
  auto* bench = app.add_subcommand("benchmark", "Run a scripted experiment");
  bench->add_option("--scenario", ba.scenario, "Scenario JSON")->required();
  bench->add_option("--out", ba.out, "Output directory")->capture_default_str();
  bench->add_option("--seeds", ba.seeds, "Override the scenario's seed count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitInvalidInput;
  }
  if (opt->parsed()) return cmd_optimize(oa, *opt, out, err);
  return cmd_benchmark(ba, out, err);
}

}  // namespace autoscout
