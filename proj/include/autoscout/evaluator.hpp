#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "autoscout/bandit.hpp"
#include "autoscout/config_space.hpp"
#include "autoscout/oracle.hpp"

namespace autoscout {

enum class Fidelity { Simulated, Real };

inline std::string_view fidelity_name(Fidelity f) { return f == Fidelity::Real ? "real" : "simulated"; }

// ---------------------------------------------------------------------------
// Linear simulators

struct SimulatorSpec {
  std::string name;
  std::vector<std::string> inputs;  // feature names or device class names
};

/// The four input subsets of the default ensemble: 3D parallelism, 5D
/// parallelism, DDP-aware and communication-aware.
std::vector<SimulatorSpec> default_simulator_specs();
std::vector<SimulatorSpec> simulator_specs_from_json(const nlohmann::json& doc);

/// Result of an ordinary least-squares fit with a seeded holdout split.
struct LinearFit {
  Eigen::VectorXd coefficients;
  double intercept = 0.0;
  double r2 = 0.0;  // on the holdout rows; 0 when the holdout target has no variance
  bool ridge = false;  // singular design, solved with a 1e-6 ridge penalty
};

/// Fits y ~ X with intercept on a random 80% of the rows and scores R^2 on
/// the rest.
LinearFit fit_linear(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::uint64_t seed,
                     double holdout_fraction = 0.2);

/// R^2 of predictions; zero-variance targets score 0.
double r_squared(const Eigen::VectorXd& actual, const Eigen::VectorXd& predicted);

struct LinearSimulator {
  std::string name;
  std::vector<std::string> inputs;  // resolved inputs actually used
  Eigen::VectorXd coefficients;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t samples = 0;
  bool ridge = false;

  double predict(const Eigen::VectorXd& encoded) const { return intercept + coefficients.dot(encoded); }
};

/// Numeric encoding of a configuration for a list of inputs. Features use
/// their value (booleans 0/1; inactive features their default); device class
/// names use the number of devices of that class the configuration occupies.
Eigen::VectorXd encode_inputs(const ConfigSpace& space, const std::vector<std::string>& inputs,
                              const Configuration& c);

/// Drops inputs naming neither a feature nor a device class of `space`.
std::vector<std::string> resolve_inputs(const ConfigSpace& space, const std::vector<std::string>& inputs);

LinearSimulator fit_simulator(const ConfigSpace& space, const SimulatorSpec& spec,
                              const std::vector<std::pair<Configuration, double>>& samples, std::uint64_t seed);

/// w_i = max(0, R2_i) / sum_j max(0, R2_j); all zero when no R2 is positive.
std::vector<double> ensemble_weights(const std::vector<double>& r2);

class SimulatorEnsemble {
 public:
  SimulatorEnsemble() = default;
  explicit SimulatorEnsemble(std::vector<LinearSimulator> sims);

  const std::vector<LinearSimulator>& simulators() const { return sims_; }
  const std::vector<double>& weights() const { return weights_; }
  bool available() const;

  /// Weighted prediction; nullopt when every R2 is non-positive.
  std::optional<double> predict(const ConfigSpace& space, const Configuration& c) const;

  nlohmann::json to_json() const;

 private:
  std::vector<LinearSimulator> sims_;
  std::vector<double> weights_;
};

SimulatorEnsemble fit_ensemble(const ConfigSpace& space, const std::vector<SimulatorSpec>& specs,
                               const std::vector<std::pair<Configuration, double>>& samples, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Noise injection

/// cost * (1 + u); infeasible costs pass through.
inline double apply_noise(double cost, double u) { return is_infeasible(cost) ? cost : cost * (1.0 + u); }

/// Deterministic draw of u in [-pct, +pct] for a configuration key.
double noise_draw(std::uint64_t seed, const std::string& key, double pct);

/// Oracle whose outputs are multiplied by (1 + u), u uniform on
/// [-noise_pct, +noise_pct], drawn per configuration from `seed`.
Oracle wrap_noisy(const ConfigSpace& space, Oracle inner, double noise_pct, std::uint64_t seed);
Simulator wrap_noisy(const ConfigSpace& space, Simulator inner, double noise_pct, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Cache and fidelity control

struct CachedCost {
  double cost = 0.0;
  Fidelity fidelity = Fidelity::Simulated;
};

/// canonical_key -> cost per fidelity. A real entry supersedes the simulated
/// one for the same key; lookups always report the fidelity they return.
class EvaluationCache {
 public:
  void store(const std::string& key, double cost, Fidelity f);
  /// Real entry if present, else (when allowed) the simulated one.
  std::optional<CachedCost> lookup(const std::string& key, bool allow_simulated) const;
  std::optional<double> simulated(const std::string& key) const;
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, double, std::less<>> real_, simulated_;
};

struct FidelityController {
  Fidelity mode = Fidelity::Simulated;
  std::size_t tau = 5;
  double epsilon = 0.1;
  std::size_t simulated_evals = 0;
  std::size_t real_evals = 0;
  std::optional<double> last_mape;
  std::optional<std::size_t> switched_at;  // iteration of the switch

  bool is_checkpoint(std::size_t t) const { return mode == Fidelity::Simulated && t > 0 && t % tau == 0; }
};

/// mean(|pred - real| / real) over the pairs; nullopt when empty. An
/// infeasible real cost contributes 1 (0 if the prediction is infeasible too).
std::optional<double> mape(const std::vector<std::pair<double, double>>& predicted_real);

struct EvaluatorOptions {
  std::size_t tau = 5;
  double epsilon = 0.1;
  std::size_t max_parallel = 1;
  /// Clock advances by the cost of every real evaluation instead of wall time.
  bool model_time = true;
};

struct Evaluation {
  double cost = kInfeasible;
  Fidelity fidelity = Fidelity::Real;
  bool failed = false;
  std::string error;
};

struct BatchEvaluation {
  std::vector<Evaluation> cells;
  bool validated = false;
  std::optional<double> mape;
  bool switched = false;
  std::size_t oracle_calls = 0;  // real-oracle calls for the batch itself
  std::size_t validation_calls = 0;

  bool any_failed() const;
};

struct RealRecord {
  std::size_t index = 0;  // 1-based count of real oracle calls
  Configuration config;
  double cost = kInfeasible;
};

/// Fidelity-adaptive evaluation: simulator ensemble with periodic real
/// validation and a one-way switch to the real oracle.
class AdaptiveEvaluator {
 public:
  /// With an empty simulator the evaluator starts (and stays) in Real mode.
  AdaptiveEvaluator(const ConfigSpace& space, Oracle real, Simulator simulator, EvaluatorOptions opts);

  /// Single evaluation in the current mode (cache-aware, no validation).
  Evaluation evaluate(const Configuration& c);
  /// Real evaluation (cache-aware).
  Evaluation evaluate_real(const Configuration& c);
  /// Batch evaluation at main-loop iteration t, including the checkpoint
  /// validation and, if the error threshold is exceeded, the fidelity switch.
  BatchEvaluation evaluate_batch(const std::vector<Configuration>& batch, std::size_t t);

  /// Simulated -> Real; no-op when already Real.
  void switch_to_real(std::size_t t);

  /// The k distinct configurations with the lowest simulated cost, ascending.
  std::vector<std::pair<Configuration, double>> top_simulated(std::size_t k) const;
  std::optional<std::pair<Configuration, double>> best_simulated() const;
  /// Lowest real cost observed so far (first occurrence on ties).
  std::optional<RealRecord> best_real() const;

  const FidelityController& controller() const { return fc_; }
  Fidelity mode() const { return fc_.mode; }
  std::size_t real_evals() const { return fc_.real_evals; }
  std::size_t simulated_evals() const { return fc_.simulated_evals; }
  const std::vector<RealRecord>& real_history() const { return real_history_; }
  const EvaluationCache& cache() const { return cache_; }
  double clock() const;

 private:
  std::optional<double> simulate(const Configuration& c, const std::string& key);
  void run_real(const std::vector<std::pair<std::string, Configuration>>& todo,
                std::map<std::string, Evaluation>& out);

  const ConfigSpace* space_;
  Oracle real_;
  Simulator simulator_;
  EvaluatorOptions opts_;
  FidelityController fc_;
  EvaluationCache cache_;
  std::map<std::string, std::pair<Configuration, double>> simulated_history_;
  std::vector<RealRecord> real_history_;
  double model_clock_ = 0.0;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

/// Outcome of a fidelity switch.
struct SwitchReport {
  std::size_t iteration = 0;
  std::array<double, 2> bandit_reward_before{}, bandit_pulls_before{};
  std::array<double, 2> bandit_reward_after{}, bandit_pulls_after{};
  std::vector<std::pair<Configuration, double>> requeued;  // (config, simulated cost), ascending
  std::vector<Evaluation> reevaluated;
};

/// Completes a switch: the evaluator goes Real, bandit statistics become
/// lambda-weighted priors and the k_reval best simulated configurations are
/// evaluated on the real oracle. Search trees are not touched.
SwitchReport switch_fidelity(AdaptiveEvaluator& ev, BanditState& bandit, double lambda, std::size_t k_reval,
                             std::size_t iteration);

}  // namespace autoscout
