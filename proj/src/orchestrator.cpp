#include "autoscout/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

namespace autoscout {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<Variant, std::string_view>, 5> kVariants{{
    {Variant::Full, "full"},
    {Variant::SparseOnly, "sparse_only"},
    {Variant::DenseOnly, "dense_only"},
    {Variant::NoOrchestrator, "no_orchestrator"},
    {Variant::NoSimulators, "no_simulators"},
}};

}  // namespace

std::string_view variant_name(Variant v) {
  for (const auto& [var, name] : kVariants)
    if (var == v) return name;
  return "full";
}

Variant variant_from_name(std::string_view name) {
  for (const auto& [var, n] : kVariants)
    if (n == name) return var;
  throw std::invalid_argument("unknown variant: " + std::string(name));
}

void RunConfig::validate() const {
  if (tau < 1) throw std::invalid_argument("tau must be >= 1");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in (0, 1]");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must be in (0, 1]");
  if (c0 < 0.0) throw std::invalid_argument("c0 must be >= 0");
  if (c_uct < 0.0) throw std::invalid_argument("c_uct must be >= 0");
  if (step_cap < 1) throw std::invalid_argument("step_cap must be >= 1");
  if (k_tournament < 1) throw std::invalid_argument("K must be >= 1");
  if (budget_seconds && !(*budget_seconds >= 0.0)) throw std::invalid_argument("budget_seconds must be >= 0");
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key) && !j.at(key).is_null()) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  if (j.contains("T")) c.budget_iters = j.at("T").get<std::size_t>();
  get("budget_iters", c.budget_iters);
  if (j.contains("budget_seconds") && !j.at("budget_seconds").is_null())
    c.budget_seconds = j.at("budget_seconds").get<double>();
  get("tau", c.tau);
  get("epsilon", c.epsilon);
  get("c0", c.c0);
  get("gamma", c.gamma);
  get("c_uct", c.c_uct);
  get("step_cap", c.step_cap);
  get("K", c.k_tournament);
  get("K_reval", c.k_reval);
  get("lambda", c.lambda);
  get("seed", c.seed);
  get("max_parallel", c.max_parallel);
  get("model_time", c.model_time);
  if (j.contains("variant")) c.variant = variant_from_name(j.at("variant").get<std::string>());
  if (j.contains("orderings")) c.orderings = j.at("orderings");
  c.validate();
  return c;
}

json RunConfig::to_json() const {
  json j = {{"budget_iters", budget_iters},
            {"budget_seconds", budget_seconds ? json(*budget_seconds) : json(nullptr)},
            {"tau", tau},
            {"epsilon", epsilon},
            {"c0", c0},
            {"gamma", gamma},
            {"c_uct", c_uct},
            {"step_cap", step_cap},
            {"K", k_tournament},
            {"K_reval", k_reval},
            {"lambda", lambda},
            {"seed", seed},
            {"max_parallel", max_parallel},
            {"model_time", model_time},
            {"variant", std::string(variant_name(variant))}};
  if (!orderings.is_null()) j["orderings"] = orderings;
  return j;
}

// ---------------------------------------------------------------------------

std::size_t EvalBatch::distinct(const ConfigSpace& space) const {
  std::set<std::string> keys;
  for (const auto& c : configs) keys.insert(space.canonical_key(c));
  return keys.size();
}

EvalBatch build_batch(const ConfigSpace& space, const SparseAssignment& s_base, const SparseAssignment& s_cand,
                      const DenseAssignment& x_base, const DenseAssignment& x_cand) {
  EvalBatch b;
  const std::array<const SparseAssignment*, 2> ss{&s_base, &s_cand};
  const std::array<const DenseAssignment*, 2> xs{&x_base, &x_cand};
  for (std::size_t i = 0; i < 2; ++i) {
    const auto m = mask(space, *ss[i]);
    for (std::size_t j = 0; j < 2; ++j) {
      auto& cell = b.configs[2 * i + j];
      cell.sparse = *ss[i];
      cell.dense = project(space, *xs[j], m);
      b.reprojected[2 * i + j] = cell.dense != *xs[j];
    }
  }
  return b;
}

AttributionResult attribute(const std::array<double, 4>& c) {
  AttributionResult r;
  auto ok = [&](std::size_t i) { return !is_infeasible(c[i]); };
  // Mean of the contrasts whose two cells are both feasible.
  auto contrast = [&](std::initializer_list<std::pair<std::size_t, std::size_t>> pairs) {
    double sum = 0.0;
    int n = 0;
    for (const auto& [a, b] : pairs)
      if (ok(a) && ok(b)) {
        sum += c[a] - c[b];
        ++n;
      }
    return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
  };
  r.delta_sparse = contrast({{kBB, kCB}, {kBC, kCC}});
  r.delta_dense = contrast({{kBB, kBC}, {kCB, kCC}});
  if (!ok(kBB)) {
    r.base_infeasible = true;
    return r;
  }
  auto reward = [&](double delta) {
    return std::isnan(delta) || !(c[kBB] > 0.0) ? 0.0 : std::clamp(delta / c[kBB], 0.0, 1.0);
  };
  r.reward_sparse = (ok(kCB) && ok(kCC)) ? reward(r.delta_sparse) : 0.0;
  r.reward_dense = (ok(kBC) && ok(kCC)) ? reward(r.delta_dense) : 0.0;
  return r;
}

std::optional<std::size_t> batch_argmin(const EvalBatch& batch) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < 4; ++i) {
    if (batch.failed[i] || is_infeasible(batch.costs[i])) continue;
    if (!best || batch.costs[i] < batch.costs[*best]) best = i;
  }
  return best;
}

bool update_best(BestSoFar& best, const EvalBatch& batch) {
  const auto i = batch_argmin(batch);
  if (!i || !(batch.costs[*i] < best.cost)) return false;
  best.config = batch.configs[*i];
  best.cost = batch.costs[*i];
  best.fidelity = batch.fidelity[*i];
  return true;
}

// ---------------------------------------------------------------------------

std::string format_cost(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRecord>& trace, bool with_wall) {
  os << kTraceHeader << '\n';
  for (const auto& r : trace) {
    os << r.iteration << ',' << (with_wall ? format_cost(r.wall_seconds) : std::string()) << ',' << r.arm << ','
       << (r.failed ? std::string("failed") : std::string(fidelity_name(r.fidelity)));
    for (double c : r.costs) os << ',' << format_cost(c);
    os << ',' << format_cost(r.delta_sparse) << ',' << format_cost(r.delta_dense) << ',' << format_cost(r.best_cost)
       << ',' << r.real_evals << ',' << r.sim_evals << '\n';
  }
}

// ---------------------------------------------------------------------------

namespace {

/// Tree reward c_ref / c, with c_ref the first feasible cost seen in the run.
struct TreeReward {
  std::optional<double> ref;
  double operator()(double cost) {
    if (is_infeasible(cost) || cost <= 0.0) return 0.0;
    if (!ref) ref = cost;
    return *ref / cost;
  }
};

constexpr int kFreshAttempts = 32;

SparseAssignment initial_sparse(const ConfigSpace& space) {
  auto s = space.default_sparse();
  if (space.constraints_hold(s)) return s;
  std::optional<SparseAssignment> first;
  enumerate(space, [&](const Configuration& c) {
    first = c.sparse;
    return false;
  });
  if (!first) throw SpaceError("space has no feasible configuration");
  return *first;
}

/// Sparse structures ordered by how many features differ from the default;
/// the first with a finite real cost at default dense values is kept.
SparseAssignment nearest_feasible_structure(const ConfigSpace& space, AdaptiveEvaluator& ev, int step_cap) {
  const auto def = space.default_sparse();
  auto all = enumerate_sparse(space);
  auto distance = [&](const SparseAssignment& s) {
    std::size_t d = 0;
    for (std::size_t i = 0; i < s.values.size(); ++i) d += s.values[i] != def.values[i];
    return d;
  };
  std::stable_sort(all.begin(), all.end(),
                   [&](const auto& a, const auto& b) { return distance(a) < distance(b); });
  for (const auto& s : all) {
    const auto e = ev.evaluate_real({s, init_dense_state(space, mask(space, s), step_cap).current});
    if (!e.failed && !is_infeasible(e.cost)) return s;
  }
  return initial_sparse(space);
}

std::vector<TreeStructure> tree_structures(const ConfigSpace& space, const RunConfig& cfg) {
  std::vector<TreeStructure> out;
  if (!cfg.orderings.is_null()) out = orderings_from_json(space, cfg.orderings);
  if (out.size() > cfg.k_tournament) out.resize(cfg.k_tournament);
  if (out.size() < cfg.k_tournament) {
    for (auto& t : candidate_orderings(space, cfg.k_tournament, cfg.seed)) {
      if (out.size() == cfg.k_tournament) break;
      if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(std::move(t));
    }
    // Fewer distinct orderings than trees: repeat them.
    for (std::size_t i = 0; out.size() < cfg.k_tournament; ++i) out.push_back(out[i]);
  }
  return out;
}

}  // namespace

RunResult run(const ConfigSpace& space, const Oracle& oracle, const Simulator& simulator, const RunConfig& cfg) {
  cfg.validate();
  const bool use_sim = cfg.variant != Variant::NoSimulators && static_cast<bool>(simulator);
  AdaptiveEvaluator ev(space, oracle, use_sim ? simulator : Simulator{},
                       {cfg.tau, cfg.epsilon, cfg.max_parallel, cfg.model_time});
  RunResult res;
  BestSoFar best;

  auto finish = [&]() {
    if (best.config && best.fidelity == Fidelity::Simulated) ev.evaluate_real(*best.config);
    if (auto br = ev.best_real()) {
      res.best = br->config;
      res.best_cost = br->cost;
    }
    res.real_history = ev.real_history();
    res.real_evals = ev.real_evals();
    res.sim_evals = ev.simulated_evals();
    res.clock = ev.clock();
    return res;
  };

  if (cfg.budget_iters == 0) {
    const auto s0 = initial_sparse(space);
    ev.evaluate_real({s0, init_dense_state(space, mask(space, s0), cfg.step_cap).current});
    return finish();
  }

  const bool dense_only = cfg.variant == Variant::DenseOnly;
  const bool sparse_only = cfg.variant == Variant::SparseOnly;

  // Phase 0: tournament warm start over K tree orderings.
  const std::size_t k = dense_only ? 1 : cfg.k_tournament;
  RunConfig tcfg = cfg;
  tcfg.k_tournament = k;
  const auto structures = tree_structures(space, tcfg);
  std::vector<MctsTree> trees;
  for (std::size_t i = 0; i < k; ++i) trees.emplace_back(space, structures[i], cfg.c_uct, cfg.seed * 7919 + i + 1);
  for (const auto& t : trees) res.tree_orders.push_back(t.structure().order);

  TreeReward tree_reward;
  Tournament tour(k);
  res.tournament.k = k;
  while (!tour.complete()) {
    const auto i = tour.next();
    const auto s = trees[i].propose();
    const Configuration c{s, init_dense_state(space, mask(space, s), cfg.step_cap).current};
    const auto e = ev.evaluate(c);
    const double r = e.failed ? 0.0 : tree_reward(e.cost);
    if (!e.failed && !is_infeasible(e.cost) && e.cost < best.cost) best = {c, e.cost, e.fidelity};
    const auto halvings = tour.halvings();
    res.tournament.proposers.push_back(i);
    res.tournament.rounds.push_back(tour.round());
    res.tournament.rewards.push_back(r);
    tour.record(i, r);
    if (tour.halvings() != halvings) res.tournament.survivors.push_back(tour.survivors());
    for (auto& t : trees) t.backpropagate(s, r);
  }
  res.tournament.halvings = tour.halvings();
  res.tournament.winner = tour.winner();
  MctsTree& tree = trees[tour.winner()];
  spdlog::debug("tournament: {} proposals, winner tree {}", res.tournament.proposers.size(), tour.winner());

  // A fresh proposal skips structures whose pairing with the current dense
  // base is already cached; their known cost is fed back to the tree instead.
  DenseAssignment x_anchor;
  auto fresh_sparse = [&](const SparseAssignment& avoid) {
    SparseAssignment s = tree.propose();
    for (int tries = 0; tries < kFreshAttempts; ++tries) {
      const auto hit =
          ev.cache().lookup(space.canonical_key({s, project(space, x_anchor, mask(space, s))}),
                            ev.mode() == Fidelity::Simulated);
      if (!hit && s != avoid) break;
      if (hit) tree.backpropagate(s, tree_reward(hit->cost));
      s = tree.propose();
    }
    return s;
  };

  // Phase 1: initial pairs.
  SparseAssignment s_base = dense_only ? nearest_feasible_structure(space, ev, cfg.step_cap)
                                       : tree.best_path().value_or(tree.propose());
  auto dstate = init_dense_state(space, mask(space, s_base), cfg.step_cap);
  DenseAssignment x_base = dstate.current;
  x_anchor = x_base;
  SparseAssignment s_cand = dense_only ? s_base : fresh_sparse(s_base);
  bool s_cand_fresh = !dense_only;
  DenseAssignment x_cand = sparse_only ? x_base : propose_dense(dstate, mask(space, s_base));

  BanditState bandit;
  bandit.c0 = cfg.c0;
  bandit.gamma = cfg.gamma;

  // Phase 2: bandit-driven 2x2 loop.
  for (std::size_t t = 1; t <= cfg.budget_iters; ++t) {
    if (cfg.budget_seconds && ev.clock() >= *cfg.budget_seconds) break;
    bandit.t = t;
    Arm arm;
    switch (cfg.variant) {
      case Variant::SparseOnly: arm = Arm::Sparse; break;
      case Variant::DenseOnly: arm = Arm::Dense; break;
      case Variant::NoOrchestrator: arm = (t % 2 == 1) ? Arm::Sparse : Arm::Dense; break;
      default: arm = select_arm(bandit);
    }
    res.arms.push_back(arm);

    auto batch = build_batch(space, s_base, s_cand, x_base, x_cand);
    const auto be = ev.evaluate_batch({batch.configs.begin(), batch.configs.end()}, t);
    bool all_real = true;
    for (std::size_t i = 0; i < 4; ++i) {
      batch.costs[i] = be.cells[i].failed ? std::numeric_limits<double>::quiet_NaN() : be.cells[i].cost;
      batch.fidelity[i] = be.cells[i].fidelity;
      batch.failed[i] = be.cells[i].failed;
      all_real = all_real && be.cells[i].fidelity == Fidelity::Real;
    }

    TraceRecord rec;
    rec.iteration = t;
    rec.arm = std::string(arm_name(arm));
    rec.fidelity = all_real ? Fidelity::Real : Fidelity::Simulated;
    rec.costs = batch.costs;
    ++res.iterations;

    if (be.any_failed()) {
      // Measurement failure: the iteration is spent, candidates are redrawn.
      ++res.failures;
      spdlog::warn("iteration {}: oracle failure ({})", t,
                   std::find_if(be.cells.begin(), be.cells.end(), [](const auto& e) { return e.failed; })->error);
      if (!dense_only) s_cand = fresh_sparse(s_base);
      s_cand_fresh = !dense_only;
      if (!sparse_only) {
        if (x_cand != x_base) update_dense(dstate, false, x_cand);
        x_cand = propose_dense(dstate, mask(space, s_base));
      }
      rec.failed = true;
      rec.delta_sparse = rec.delta_dense = std::numeric_limits<double>::quiet_NaN();
    } else {
      const auto att = attribute(batch.costs);
      record_pull(bandit, arm, arm == Arm::Sparse ? att.reward_sparse : att.reward_dense);
      rec.delta_sparse = att.delta_sparse;
      rec.delta_dense = att.delta_dense;

      const auto arg = batch_argmin(batch);
      update_best(best, batch);

      if (s_cand_fresh) tree.backpropagate(s_cand, tree_reward(std::min(batch.costs[kCB], batch.costs[kCC])));
      const bool sparse_improved = arg && (*arg == kCB || *arg == kCC);
      const bool dense_improved = arg && (*arg == kBC || *arg == kCC);
      if (x_cand != x_base) update_dense(dstate, dense_improved, x_cand);

      if (be.switched) {
        SwitchRecord sr;
        for (const auto& tr : trees) sr.nodes_before.push_back(tr.node_count());
        sr.mape = be.mape;
        sr.report = switch_fidelity(ev, bandit, cfg.lambda, cfg.k_reval, t);
        for (const auto& tr : trees) sr.nodes_after.push_back(tr.node_count());
        res.switch_info = std::move(sr);
        best = {};
        if (auto br = ev.best_real()) best = {br->config, br->cost, Fidelity::Real};
        spdlog::info("iteration {}: switched to real profiling (MAPE {:.4f})", t, be.mape.value_or(0.0));
      }

      // Bases advance to the components of the cheapest cell.
      const SparseAssignment prev_base = s_base;
      if (!arg) {
        if (!dense_only) {
          tree.backpropagate(s_base, 0.0);
          s_base = fresh_sparse(s_base);
        }
        dstate = init_dense_state(space, mask(space, s_base), cfg.step_cap);
      } else if (sparse_improved) {
        s_base = s_cand;
      }
      if (s_base != prev_base) reproject_dense(dstate, space, mask(space, s_base));
      x_base = dstate.current;
      x_anchor = x_base;

      s_cand_fresh = !dense_only && (arm == Arm::Sparse || !sparse_improved);
      s_cand = s_cand_fresh ? fresh_sparse(s_base) : s_base;
      if (!sparse_only)
        x_cand = (arm == Arm::Dense || !dense_improved) ? propose_dense(dstate, mask(space, s_base)) : x_base;
      else
        x_cand = x_base;
    }

    rec.wall_seconds = ev.clock();
    rec.best_cost = best.cost;
    rec.real_evals = ev.real_evals();
    rec.sim_evals = ev.simulated_evals();
    res.trace.push_back(rec);
  }
  res.tree_stats = tree.export_stats();
  return finish();
}

}  // namespace autoscout
