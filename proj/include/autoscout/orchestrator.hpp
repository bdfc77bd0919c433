#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "autoscout/bandit.hpp"
#include "autoscout/config_space.hpp"
#include "autoscout/dense_optimizer.hpp"
#include "autoscout/evaluator.hpp"
#include "autoscout/oracle.hpp"
#include "autoscout/sparse_optimizer.hpp"

namespace autoscout {

/// Which parts of the optimizer are enabled.
enum class Variant { Full, SparseOnly, DenseOnly, NoOrchestrator, NoSimulators };

std::string_view variant_name(Variant v);
Variant variant_from_name(std::string_view name);

struct RunConfig {
  std::size_t budget_iters = 100;
  std::optional<double> budget_seconds;
  std::size_t tau = 5;
  double epsilon = 0.1;
  double c0 = 1.414;
  double gamma = 0.995;
  double c_uct = 1.414;
  int step_cap = 8;
  std::size_t k_tournament = 5;
  std::size_t k_reval = 5;
  double lambda = 0.25;
  std::uint64_t seed = 0;
  std::size_t max_parallel = 4;
  bool model_time = true;
  Variant variant = Variant::Full;
  /// Optional tree orderings (arrays of sparse feature names), used before
  /// the generated ones.
  nlohmann::json orderings = nullptr;

  /// Throws std::invalid_argument on out-of-range fields.
  void validate() const;
  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Cell order of a 2x2 batch: (s_base,x_base), (s_base,x_cand), (s_cand,x_base), (s_cand,x_cand).
enum Cell : std::size_t { kBB = 0, kBC = 1, kCB = 2, kCC = 3 };

struct EvalBatch {
  std::array<Configuration, 4> configs;
  std::array<double, 4> costs{kInfeasible, kInfeasible, kInfeasible, kInfeasible};
  std::array<Fidelity, 4> fidelity{Fidelity::Real, Fidelity::Real, Fidelity::Real, Fidelity::Real};
  std::array<bool, 4> failed{};
  std::array<bool, 4> reprojected{};  // dense half changed by projection under the paired sparse half

  std::size_t distinct(const ConfigSpace& space) const;
};

/// Pairs every sparse half with every dense half, projecting the dense half
/// onto the mask of the sparse half it is paired with.
EvalBatch build_batch(const ConfigSpace& space, const SparseAssignment& s_base, const SparseAssignment& s_cand,
                      const DenseAssignment& x_base, const DenseAssignment& x_cand);

struct AttributionResult {
  double delta_sparse = 0.0;
  double delta_dense = 0.0;
  double reward_sparse = 0.0;
  double reward_dense = 0.0;
  bool base_infeasible = false;  // c_bb is the sentinel; bases must be re-seeded
};

/// Difference-of-differences over the four cell costs (lower is better).
/// Contrasts touching an infeasible cell are dropped from the average; an
/// infeasible cell zeroes the reward of each arm whose candidate it holds.
AttributionResult attribute(const std::array<double, 4>& costs);

struct BestSoFar {
  std::optional<Configuration> config;
  double cost = kInfeasible;
  Fidelity fidelity = Fidelity::Real;
};

/// Replaces `best` when a successful, feasible cell is strictly cheaper.
bool update_best(BestSoFar& best, const EvalBatch& batch);

/// Index of the cheapest successful cell, earliest cell on ties; nullopt when
/// every cell failed or is infeasible.
std::optional<std::size_t> batch_argmin(const EvalBatch& batch);

struct TraceRecord {
  std::size_t iteration = 0;
  double wall_seconds = 0.0;
  std::string arm;  // "sparse", "dense" or "none"
  Fidelity fidelity = Fidelity::Simulated;
  std::array<double, 4> costs{};
  double delta_sparse = 0.0;
  double delta_dense = 0.0;
  double best_cost = kInfeasible;
  std::size_t real_evals = 0;
  std::size_t sim_evals = 0;
  bool failed = false;
};

inline constexpr const char* kTraceHeader =
    "iteration,wall_seconds,arm_selected,fidelity,c_bb,c_bc,c_cb,c_cc,delta_sparse,delta_dense,best_cost,"
    "real_evals_cumulative,sim_evals_cumulative";

/// CSV rows in the trace schema; `with_wall = false` blanks the wall-clock
/// column for byte-level comparisons.
void write_trace_csv(std::ostream& os, const std::vector<TraceRecord>& trace, bool with_wall = true);
std::string format_cost(double v);

struct TournamentLog {
  std::size_t k = 0;
  std::vector<std::size_t> proposers;                 // in proposal order
  std::vector<std::size_t> rounds;                    // round of each proposal
  std::vector<double> rewards;                        // reward of each proposal
  std::vector<std::vector<std::size_t>> survivors;    // after each halving
  std::size_t halvings = 0;
  std::size_t winner = 0;
};

struct SwitchRecord {
  SwitchReport report;
  std::vector<std::size_t> nodes_before, nodes_after;  // per tree
  std::optional<double> mape;
};

struct RunResult {
  std::optional<Configuration> best;
  double best_cost = kInfeasible;
  std::vector<TraceRecord> trace;
  std::vector<RealRecord> real_history;
  TournamentLog tournament;
  std::optional<SwitchRecord> switch_info;
  std::vector<Arm> arms;  // arm selected at each iteration
  std::size_t iterations = 0;
  std::size_t real_evals = 0;
  std::size_t sim_evals = 0;
  std::size_t failures = 0;
  double clock = 0.0;
  std::vector<std::vector<std::size_t>> tree_orders;
  nlohmann::json tree_stats;  // winner tree node statistics

  bool succeeded() const { return best.has_value(); }
};

/// Tournament warm start, initial pairs, then the bandit-driven 2x2 loop.
/// `simulator` may be empty (real profiling throughout).
RunResult run(const ConfigSpace& space, const Oracle& oracle, const Simulator& simulator, const RunConfig& cfg);

}  // namespace autoscout
