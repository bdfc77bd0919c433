#include "autoscout/evaluator.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <future>
#include <numeric>
#include <random>
#include <set>

namespace autoscout {

using nlohmann::json;

std::vector<SimulatorSpec> default_simulator_specs() {
  return {
      {"3d-parallelism", {"a100", "a40", "mbs", "tp", "pp", "dp"}},
      {"5d-parallelism", {"a100", "a40", "mbs", "tp", "pp", "dp", "ep", "cp", "sp"}},
      {"ddp-aware", {"a100", "a40", "mbs", "tp", "pp", "dp", "ddp"}},
      {"communication-aware", {"a100", "a40", "mbs", "tp", "pp", "dp", "ar", "tp_comm"}},
  };
}

std::vector<SimulatorSpec> simulator_specs_from_json(const json& doc) {
  if (!doc.is_array()) throw SpaceError("simulator spec must be a JSON array");
  std::vector<SimulatorSpec> out;
  for (const auto& s : doc) {
    SimulatorSpec spec;
    spec.name = s.at("name").get<std::string>();
    spec.inputs = s.at("inputs").get<std::vector<std::string>>();
    out.push_back(std::move(spec));
  }
  return out;
}

double r_squared(const Eigen::VectorXd& actual, const Eigen::VectorXd& predicted) {
  if (actual.size() == 0) return 0.0;
  const double mean = actual.mean();
  const double ss_tot = (actual.array() - mean).square().sum();
  if (ss_tot <= 0.0) return 0.0;
  const double ss_res = (actual - predicted).squaredNorm();
  return 1.0 - ss_res / ss_tot;
}

LinearFit fit_linear(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::uint64_t seed,
                     double holdout_fraction) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto p = static_cast<std::size_t>(x.cols());
  if (n < p + 2) throw std::invalid_argument("fit_linear: need at least (inputs + 2) samples");

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  auto holdout = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(n)));
  holdout = std::clamp<std::size_t>(holdout, 1, n - (p + 1));
  const auto train = n - holdout;

  Eigen::MatrixXd a(train, p + 1);
  Eigen::VectorXd b(train);
  for (std::size_t r = 0; r < train; ++r) {
    a(r, 0) = 1.0;
    a.row(r).tail(p) = x.row(idx[r]);
    b(r) = y(idx[r]);
  }

  LinearFit fit;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::VectorXd beta;
  if (static_cast<std::size_t>(qr.rank()) < p + 1) {
    fit.ridge = true;
    Eigen::MatrixXd gram = a.transpose() * a;
    gram.diagonal().array() += 1e-6;
    beta = gram.ldlt().solve(a.transpose() * b);
  } else {
    beta = qr.solve(b);
  }
  fit.intercept = beta(0);
  fit.coefficients = beta.tail(p);

  Eigen::VectorXd actual(holdout), predicted(holdout);
  for (std::size_t r = 0; r < holdout; ++r) {
    const auto row = idx[train + r];
    actual(r) = y(row);
    predicted(r) = fit.intercept + x.row(row).dot(fit.coefficients);
  }
  fit.r2 = r_squared(actual, predicted);
  return fit;
}

namespace {

std::string lower(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

std::optional<std::size_t> device_class(const ConfigSpace& space, const std::string& name) {
  const auto key = lower(name);
  const auto& devs = space.hardware().devices;
  for (std::size_t k = 0; k < devs.size(); ++k)
    if (lower(devs[k].name) == key) return k;
  return std::nullopt;
}

}  // namespace

std::vector<std::string> resolve_inputs(const ConfigSpace& space, const std::vector<std::string>& inputs) {
  std::vector<std::string> out;
  for (const auto& in : inputs)
    if (space.index_of(in) || device_class(space, in)) out.push_back(in);
  return out;
}

Eigen::VectorXd encode_inputs(const ConfigSpace& space, const std::vector<std::string>& inputs,
                              const Configuration& c) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(inputs.size()));
  std::optional<DeviceAllocation> alloc;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (auto fi = space.index_of(inputs[i])) {
      const auto val = space.value_of(c, *fi);
      v(static_cast<Eigen::Index>(i)) = static_cast<double>(val ? *val : space.feature(*fi).default_value);
    } else if (auto dc = device_class(space, inputs[i])) {
      if (!alloc) alloc = space.allocate_devices(c.sparse);
      v(static_cast<Eigen::Index>(i)) = alloc->per_class[*dc];
    } else {
      v(static_cast<Eigen::Index>(i)) = 0.0;
    }
  }
  return v;
}

LinearSimulator fit_simulator(const ConfigSpace& space, const SimulatorSpec& spec,
                              const std::vector<std::pair<Configuration, double>>& samples, std::uint64_t seed) {
  LinearSimulator sim;
  sim.name = spec.name;
  sim.inputs = resolve_inputs(space, spec.inputs);
  std::vector<const std::pair<Configuration, double>*> usable;
  for (const auto& s : samples)
    if (!is_infeasible(s.second)) usable.push_back(&s);
  const auto p = sim.inputs.size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(usable.size()), static_cast<Eigen::Index>(p));
  Eigen::VectorXd y(static_cast<Eigen::Index>(usable.size()));
  for (std::size_t r = 0; r < usable.size(); ++r) {
    x.row(static_cast<Eigen::Index>(r)) = encode_inputs(space, sim.inputs, usable[r]->first).transpose();
    y(static_cast<Eigen::Index>(r)) = usable[r]->second;
  }
  const auto fit = fit_linear(x, y, seed);
  sim.coefficients = fit.coefficients;
  sim.intercept = fit.intercept;
  sim.r2 = fit.r2;
  sim.ridge = fit.ridge;
  sim.samples = usable.size();
  return sim;
}

std::vector<double> ensemble_weights(const std::vector<double>& r2) {
  std::vector<double> w(r2.size(), 0.0);
  double denom = 0.0;
  for (double r : r2) denom += std::max(0.0, r);
  if (denom <= 0.0) return w;
  for (std::size_t i = 0; i < r2.size(); ++i) w[i] = std::max(0.0, r2[i]) / denom;
  return w;
}

SimulatorEnsemble::SimulatorEnsemble(std::vector<LinearSimulator> sims) : sims_(std::move(sims)) {
  std::vector<double> r2;
  for (const auto& s : sims_) r2.push_back(s.r2);
  weights_ = ensemble_weights(r2);
}

bool SimulatorEnsemble::available() const {
  return std::any_of(weights_.begin(), weights_.end(), [](double w) { return w > 0.0; });
}

std::optional<double> SimulatorEnsemble::predict(const ConfigSpace& space, const Configuration& c) const {
  if (!available()) return std::nullopt;
  double total = 0.0;
  for (std::size_t i = 0; i < sims_.size(); ++i) {
    if (weights_[i] <= 0.0) continue;
    total += weights_[i] * sims_[i].predict(encode_inputs(space, sims_[i].inputs, c));
  }
  return total;
}

json SimulatorEnsemble::to_json() const {
  json arr = json::array();
  for (std::size_t i = 0; i < sims_.size(); ++i) {
    const auto& s = sims_[i];
    json coef = json::object();
    for (std::size_t k = 0; k < s.inputs.size(); ++k) coef[s.inputs[k]] = s.coefficients(static_cast<Eigen::Index>(k));
    arr.push_back({{"name", s.name},
                   {"inputs", s.inputs},
                   {"coefficients", coef},
                   {"intercept", s.intercept},
                   {"r2", s.r2},
                   {"samples", s.samples},
                   {"ridge", s.ridge},
                   {"weight", weights_[i]}});
  }
  return arr;
}

SimulatorEnsemble fit_ensemble(const ConfigSpace& space, const std::vector<SimulatorSpec>& specs,
                               const std::vector<std::pair<Configuration, double>>& samples, std::uint64_t seed) {
  std::vector<LinearSimulator> sims;
  for (std::size_t i = 0; i < specs.size(); ++i) sims.push_back(fit_simulator(space, specs[i], samples, seed + i));
  return SimulatorEnsemble(std::move(sims));
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

double noise_draw(std::uint64_t seed, const std::string& key, double pct) {
  const auto bits = splitmix64(seed ^ fnv1a(key));
  const double unit = static_cast<double>(bits >> 11) * 0x1.0p-53;  // [0, 1)
  return pct * (2.0 * unit - 1.0);
}

Oracle wrap_noisy(const ConfigSpace& space, Oracle inner, double noise_pct, std::uint64_t seed) {
  if (noise_pct < 0.0) throw std::invalid_argument("noise_pct must be non-negative");
  return [&space, inner = std::move(inner), noise_pct, seed](const Configuration& c) {
    const double cost = inner(c);
    if (noise_pct == 0.0) return cost;
    return apply_noise(cost, noise_draw(seed, space.canonical_key(c), noise_pct));
  };
}

Simulator wrap_noisy(const ConfigSpace& space, Simulator inner, double noise_pct, std::uint64_t seed) {
  if (noise_pct < 0.0) throw std::invalid_argument("noise_pct must be non-negative");
  return [&space, inner = std::move(inner), noise_pct, seed](const Configuration& c) -> std::optional<double> {
    auto cost = inner(c);
    if (!cost || noise_pct == 0.0) return cost;
    return apply_noise(*cost, noise_draw(seed, space.canonical_key(c), noise_pct));
  };
}

// ---------------------------------------------------------------------------

void EvaluationCache::store(const std::string& key, double cost, Fidelity f) {
  std::lock_guard lock(mu_);
  if (f == Fidelity::Real) {
    real_[key] = cost;
  } else {
    simulated_.emplace(key, cost);
  }
}

std::optional<CachedCost> EvaluationCache::lookup(const std::string& key, bool allow_simulated) const {
  std::lock_guard lock(mu_);
  if (auto it = real_.find(key); it != real_.end()) return CachedCost{it->second, Fidelity::Real};
  if (allow_simulated)
    if (auto it = simulated_.find(key); it != simulated_.end()) return CachedCost{it->second, Fidelity::Simulated};
  return std::nullopt;
}

std::optional<double> EvaluationCache::simulated(const std::string& key) const {
  std::lock_guard lock(mu_);
  if (auto it = simulated_.find(key); it != simulated_.end()) return it->second;
  return std::nullopt;
}

std::size_t EvaluationCache::size() const {
  std::lock_guard lock(mu_);
  std::set<std::string> keys;
  for (const auto& [k, v] : real_) keys.insert(k);
  for (const auto& [k, v] : simulated_) keys.insert(k);
  return keys.size();
}

std::optional<double> mape(const std::vector<std::pair<double, double>>& predicted_real) {
  if (predicted_real.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& [pred, real] : predicted_real) {
    // An infeasible measurement counts at the limit of |pred - real| / real as real grows.
    if (is_infeasible(real)) sum += is_infeasible(pred) ? 0.0 : 1.0;
    else sum += std::abs(pred - real) / real;
  }
  return sum / static_cast<double>(predicted_real.size());
}

bool BatchEvaluation::any_failed() const {
  return std::any_of(cells.begin(), cells.end(), [](const Evaluation& e) { return e.failed; });
}

AdaptiveEvaluator::AdaptiveEvaluator(const ConfigSpace& space, Oracle real, Simulator simulator,
                                     EvaluatorOptions opts)
    : space_(&space), real_(std::move(real)), simulator_(std::move(simulator)), opts_(opts) {
  if (opts_.tau < 1) throw std::invalid_argument("tau must be at least 1");
  if (!(opts_.epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  fc_.tau = opts_.tau;
  fc_.epsilon = opts_.epsilon;
  fc_.mode = simulator_ ? Fidelity::Simulated : Fidelity::Real;
}

double AdaptiveEvaluator::clock() const {
  if (opts_.model_time) return model_clock_;
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
}

std::optional<double> AdaptiveEvaluator::simulate(const Configuration& c, const std::string& key) {
  if (auto hit = cache_.simulated(key)) return hit;
  auto pred = simulator_(c);
  if (!pred) return std::nullopt;
  cache_.store(key, *pred, Fidelity::Simulated);
  simulated_history_.emplace(key, std::make_pair(c, *pred));
  ++fc_.simulated_evals;
  return pred;
}

void AdaptiveEvaluator::run_real(const std::vector<std::pair<std::string, Configuration>>& todo,
                                 std::map<std::string, Evaluation>& out) {
  auto call = [this](const Configuration& c) {
    Evaluation e;
    e.fidelity = Fidelity::Real;
    try {
      e.cost = real_(c);
      if (std::isnan(e.cost)) throw OracleError("oracle returned NaN");
    } catch (const std::exception& ex) {
      e.failed = true;
      e.error = ex.what();
    }
    return e;
  };
  std::vector<Evaluation> results(todo.size());
  const auto width = std::max<std::size_t>(opts_.max_parallel, 1);
  for (std::size_t begin = 0; begin < todo.size(); begin += width) {
    const auto end = std::min(todo.size(), begin + width);
    if (end - begin == 1 || width == 1) {
      for (auto i = begin; i < end; ++i) results[i] = call(todo[i].second);
      continue;
    }
    std::vector<std::future<Evaluation>> futs;
    for (auto i = begin; i < end; ++i) futs.push_back(std::async(std::launch::async, call, std::cref(todo[i].second)));
    for (auto i = begin; i < end; ++i) results[i] = futs[i - begin].get();
  }
  for (std::size_t i = 0; i < todo.size(); ++i) {
    ++fc_.real_evals;
    auto& e = results[i];
    if (!e.failed) {
      cache_.store(todo[i].first, e.cost, Fidelity::Real);
      real_history_.push_back({fc_.real_evals, todo[i].second, e.cost});
      if (opts_.model_time && !is_infeasible(e.cost)) model_clock_ += e.cost;
    }
    out[todo[i].first] = e;
  }
}

Evaluation AdaptiveEvaluator::evaluate_real(const Configuration& c) {
  const auto key = space_->canonical_key(c);
  if (auto hit = cache_.lookup(key, false)) return {hit->cost, Fidelity::Real, false, {}};
  std::map<std::string, Evaluation> out;
  run_real({{key, c}}, out);
  return out.at(key);
}

Evaluation AdaptiveEvaluator::evaluate(const Configuration& c) {
  if (fc_.mode == Fidelity::Real) return evaluate_real(c);
  const auto key = space_->canonical_key(c);
  if (auto hit = cache_.lookup(key, true)) return {hit->cost, hit->fidelity, false, {}};
  if (auto pred = simulate(c, key)) return {*pred, Fidelity::Simulated, false, {}};
  return evaluate_real(c);
}

BatchEvaluation AdaptiveEvaluator::evaluate_batch(const std::vector<Configuration>& batch, std::size_t t) {
  BatchEvaluation be;
  be.cells.resize(batch.size());
  std::vector<std::string> keys;
  for (const auto& c : batch) keys.push_back(space_->canonical_key(c));

  std::map<std::string, Evaluation> done;
  std::vector<std::pair<std::string, Configuration>> pending;
  std::set<std::string> queued;
  const bool simulated = fc_.mode == Fidelity::Simulated;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& key = keys[i];
    if (done.count(key) || queued.count(key)) continue;
    if (auto hit = cache_.lookup(key, simulated)) {
      done[key] = {hit->cost, hit->fidelity, false, {}};
      continue;
    }
    if (simulated)
      if (auto pred = simulate(batch[i], key)) {
        done[key] = {*pred, Fidelity::Simulated, false, {}};
        continue;
      }
    pending.emplace_back(key, batch[i]);
    queued.insert(key);
  }
  const auto before = fc_.real_evals;
  run_real(pending, done);
  be.oracle_calls = fc_.real_evals - before;
  for (std::size_t i = 0; i < batch.size(); ++i) be.cells[i] = done.at(keys[i]);

  if (fc_.is_checkpoint(t)) {
    std::vector<std::pair<std::string, Configuration>> targets;
    if (auto best = best_simulated()) targets.emplace_back(space_->canonical_key(best->first), best->first);
    std::size_t arg = SIZE_MAX;
    for (std::size_t i = 0; i < batch.size(); ++i)
      if (!be.cells[i].failed && (arg == SIZE_MAX || be.cells[i].cost < be.cells[arg].cost)) arg = i;
    if (arg != SIZE_MAX && (targets.empty() || targets.front().first != keys[arg]))
      targets.emplace_back(keys[arg], batch[arg]);

    std::vector<std::pair<double, double>> pairs;
    const auto before_val = fc_.real_evals;
    for (const auto& [key, cfg] : targets) {
      const auto pred = cache_.simulated(key);
      const auto real = evaluate_real(cfg);
      if (!pred || real.failed || real.cost <= 0.0) continue;
      pairs.emplace_back(*pred, real.cost);
    }
    be.validation_calls = fc_.real_evals - before_val;
    if (auto m = mape(pairs)) {
      be.validated = true;
      be.mape = m;
      fc_.last_mape = m;
      if (*m > fc_.epsilon) {
        switch_to_real(t);
        be.switched = true;
      }
    }
  }
  return be;
}

void AdaptiveEvaluator::switch_to_real(std::size_t t) {
  if (fc_.mode == Fidelity::Real) return;
  fc_.mode = Fidelity::Real;
  fc_.switched_at = t;
}

std::vector<std::pair<Configuration, double>> AdaptiveEvaluator::top_simulated(std::size_t k) const {
  std::vector<std::pair<Configuration, double>> all;
  for (const auto& [key, entry] : simulated_history_)
    if (!is_infeasible(entry.second)) all.push_back(entry);
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
  if (all.size() > k) all.resize(k);
  return all;
}

std::optional<std::pair<Configuration, double>> AdaptiveEvaluator::best_simulated() const {
  auto top = top_simulated(1);
  if (top.empty()) return std::nullopt;
  return top.front();
}

std::optional<RealRecord> AdaptiveEvaluator::best_real() const {
  std::optional<RealRecord> best;
  for (const auto& r : real_history_)
    if (!is_infeasible(r.cost) && (!best || r.cost < best->cost)) best = r;
  return best;
}

SwitchReport switch_fidelity(AdaptiveEvaluator& ev, BanditState& bandit, double lambda, std::size_t k_reval,
                             std::size_t iteration) {
  SwitchReport rep;
  rep.iteration = iteration;
  ev.switch_to_real(iteration);
  rep.bandit_reward_before = bandit.reward;
  rep.bandit_pulls_before = bandit.pulls;
  scale_to_prior(bandit, lambda);
  rep.bandit_reward_after = bandit.reward;
  rep.bandit_pulls_after = bandit.pulls;
  rep.requeued = ev.top_simulated(k_reval);
  for (const auto& [cfg, sim_cost] : rep.requeued) rep.reevaluated.push_back(ev.evaluate_real(cfg));
  return rep;
}

}  // namespace autoscout
