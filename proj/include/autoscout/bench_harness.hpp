#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "autoscout/config_space.hpp"
#include "autoscout/evaluator.hpp"
#include "autoscout/oracle.hpp"
#include "autoscout/orchestrator.hpp"

namespace autoscout {

/// Deterministic ground-truth cost model of a small heterogeneous cluster.
struct SyntheticClusterModel {
  std::string name;
  Hardware hardware;
  double f_work = 100.0;
  double p_mem = 128.0;
  double a_mem = 8.0;
  double global_batch = 64.0;
  double alpha_tp = 2.0;
  double alpha_dp = 1.5;
  double r_ar = 1.33;
  double sp_discount = 0.8;

  static SyntheticClusterModel from_json(const nlohmann::json& j);
  static SyntheticClusterModel load(const std::string& path);
  nlohmann::json to_json() const;
  /// FNV-1a of the compact JSON form, as 16 hex digits.
  std::string hash() const;
};

/// Names of the compiled-in presets: dense-3B, vl-8B, moe-30B.
std::vector<std::string> builtin_preset_names();
/// Throws std::invalid_argument for an unknown name.
SyntheticClusterModel builtin_preset(const std::string& name);
/// "builtin:<name>", a bare preset name, or a path to a preset JSON file.
SyntheticClusterModel resolve_preset(const std::string& ref, const std::filesystem::path& base_dir = {});

/// Seconds per iteration, or kInfeasible when a device runs out of memory or
/// the world exceeds the cluster. Features absent from the configuration (or
/// inactive) take their reference defaults.
double synthetic_cost(const SyntheticClusterModel& m, const ConfigSpace& space, const Configuration& c);
Oracle make_oracle(const SyntheticClusterModel& m, const ConfigSpace& space);

struct Optimum {
  Configuration config;
  double cost = kInfeasible;
  std::size_t enumerated = 0;
  std::size_t feasible = 0;  // finite cost
};

/// Exact argmin over the enumerated space; ties go to the earliest
/// configuration. Throws when the space exceeds `guard` configurations.
Optimum brute_force_optimum(const ConfigSpace& space, const Oracle& oracle, std::size_t guard = 1'000'000);

/// Uniformly random feasible configurations (optionally without
/// replacement), one real evaluation each. Trace rows carry the cost in c_bb.
RunResult baseline_random_search(const ConfigSpace& space, const Oracle& oracle, std::size_t budget,
                                 std::uint64_t seed, bool without_replacement = false);

/// Runs the optimizer with one component disabled.
RunResult baseline_ablations(const ConfigSpace& space, const Oracle& oracle, const Simulator& simulator,
                             std::size_t budget, std::uint64_t seed, Variant variant, RunConfig base = {});

/// Simulator ensemble trained on `samples` seeded random configurations with
/// a finite cost under `oracle` (infeasible draws are discarded and redrawn).
SimulatorEnsemble train_ensemble(const ConfigSpace& space, const Oracle& oracle,
                                 const std::vector<SimulatorSpec>& specs, std::size_t samples, std::uint64_t seed);
/// Ensemble as a Simulator callable, optionally noise-wrapped.
Simulator make_simulator(const ConfigSpace& space, SimulatorEnsemble ensemble, double noise_pct, std::uint64_t seed);

/// 1-based index of the first real evaluation with cost <= threshold.
std::optional<std::size_t> evals_to_threshold(const std::vector<RealRecord>& history, double threshold);

/// Sparse features kept by a named scenario: 3dp, 5dp or full (empty: all).
std::vector<std::string> scenario_features(const std::string& name);

struct Scenario {
  std::string name;  // 3dp | 5dp | full
  std::filesystem::path space;
  std::string model_preset;
  double noise_pct = 0.0;
  std::vector<std::size_t> k_values{5};
  std::size_t seeds = 20;
  std::uint64_t seed_base = 0;
  std::size_t budget_iters = 100;
  std::optional<double> budget_seconds;
  std::vector<std::string> methods;  // default: every method
  std::size_t sim_samples = 200;
  std::size_t random_budget = 0;     // 0: 4 * budget_iters
  RunConfig run;                     // remaining run knobs (tau, epsilon, ...)

  /// Paths inside the document are resolved against `base_dir`.
  static Scenario from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static Scenario load(const std::string& path);
};

/// Every method the harness knows: autoscout, random_search and the four ablations.
std::vector<std::string> all_methods();

struct SeedOutcome {
  std::string method;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  bool completed = false;
  std::string error;
  double best_cost = kInfeasible;
  std::optional<std::size_t> evals_to_5pct;
  std::size_t real_evals = 0;
  std::size_t sim_evals = 0;
  bool switched = false;
  double wall_seconds = 0.0;
};

struct SummaryRow {
  std::string method;
  std::size_t k = 0;
  std::size_t seeds = 0;
  std::size_t completed = 0;
  double median_best_cost = kInfeasible;
  double mean_best_cost = kInfeasible;
  double median_evals_to_5pct = kInfeasible;  // unreached runs count as infinite
  double median_real_evals = 0.0;
  double mean_wall_seconds = 0.0;
};

struct ExperimentResult {
  Optimum optimum;
  std::string preset_hash;
  std::vector<SeedOutcome> outcomes;
  std::vector<SummaryRow> summary;

  const SummaryRow* row(const std::string& method, std::size_t k) const;
  std::vector<const SeedOutcome*> seeds_of(const std::string& method, std::size_t k) const;
};

/// Every method for every seed (and K), trace CSVs and summary.csv under
/// `out_dir` when it is non-empty.
ExperimentResult run_experiment(const Scenario& sc, const std::filesystem::path& out_dir = {});

double median(std::vector<double> v);

}  // namespace autoscout
