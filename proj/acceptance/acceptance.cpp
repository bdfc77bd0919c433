// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failing criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include <spdlog/spdlog.h>

#include "autoscout/bandit.hpp"
#include "autoscout/bench_harness.hpp"
#include "autoscout/config_space.hpp"
#include "autoscout/dense_optimizer.hpp"
#include "autoscout/evaluator.hpp"
#include "autoscout/orchestrator.hpp"
#include "autoscout/sparse_optimizer.hpp"

using namespace autoscout;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and limits.
constexpr double kExactTol = 1e-12;
constexpr std::size_t kSeeds = 20;

const fs::path kData = AUTOSCOUT_DATA_DIR;

struct Verdict {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const char* title, double limit_s, const std::function<Verdict()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs < limit_s;
  const bool pass = v.pass && in_time;
  if (!pass) ++failures;
  std::printf("%s  %2d  %-34s %s [%.2fs / %.0fs%s]\n", pass ? "PASS" : "FAIL", id, title, v.detail.c_str(), secs,
              limit_s, in_time ? "" : " exceeded");
  std::fflush(stdout);
}

std::string num(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

const ConfigSpace& megatron() {
  static const ConfigSpace s = ConfigSpace::load((kData / "spaces" / "megatron.json").string());
  return s;
}

SyntheticClusterModel vl() { return builtin_preset("vl-8B"); }

// Independent UCB1 re-evaluation.
Arm reference_arm(const BanditState& b) {
  if (b.pulls[0] <= 0) return Arm::Sparse;
  if (b.pulls[1] <= 0) return Arm::Dense;
  const double c = b.c0 * std::pow(b.gamma, static_cast<double>(b.t));
  const double n = std::max(0.0, std::log(b.pulls[0] + b.pulls[1]));
  const double s = b.reward[0] / b.pulls[0] + c * std::sqrt(n / b.pulls[0]);
  const double d = b.reward[1] / b.pulls[1] + c * std::sqrt(n / b.pulls[1]);
  return d > s ? Arm::Dense : Arm::Sparse;
}

Scenario scenario(const std::string& file, std::vector<std::string> methods) {
  auto sc = Scenario::load((kData / "scenarios" / file).string());
  sc.methods = std::move(methods);
  sc.seeds = kSeeds;
  return sc;
}

double median_of(const ExperimentResult& r, const std::string& method, std::size_t k,
                 const std::function<double(const SeedOutcome&)>& f) {
  std::vector<double> v;
  for (const auto* o : r.seeds_of(method, k)) v.push_back(f(*o));
  return median(v);
}

double e5(const SeedOutcome& o) {
  return o.evals_to_5pct ? static_cast<double>(*o.evals_to_5pct) : kInfeasible;
}

std::string trace_text(const RunResult& r) {
  std::ostringstream os;
  write_trace_csv(os, r.trace, false);
  return os.str();
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::off);

  report(1, "ensemble weights", 1.0, [] {
    const auto w = ensemble_weights({0.8, 0.2, -0.1, 0.1});
    const double expect[] = {8.0 / 11, 2.0 / 11, 0.0, 1.0 / 11};
    double err = 0;
    for (int i = 0; i < 4; ++i) err = std::max(err, std::abs(w[i] - expect[i]));
    return Verdict{w.size() == 4 && err <= kExactTol, "max |w - {8,2,0,1}/11| = " + num(err)};
  });

  report(2, "UCB1 arm selection", 5.0, [] {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0, 1);
    int mismatches = 0;
    for (int i = 0; i < 10'000; ++i) {
      BanditState b;
      for (int a = 0; a < 2; ++a) {
        b.pulls[a] = (rng() % 10 == 0) ? 0.0 : 0.25 + 50 * u(rng);
        b.reward[a] = b.pulls[a] * u(rng);
      }
      b.c0 = 3 * u(rng);
      b.gamma = 0.9 + 0.1 * u(rng);
      b.t = rng() % 500;
      mismatches += select_arm(b) != reference_arm(b);
    }
    BanditState ex;
    ex.reward = {3.0, 1.0};
    ex.pulls = {2.0, 2.0};
    ex.c0 = 1.0;
    ex.gamma = 1.0;
    const bool example = ex.exploration() == 1.0 && select_arm(ex) == Arm::Sparse;
    return Verdict{mismatches == 0 && example,
                   std::to_string(mismatches) + "/10000 mismatches, worked example " +
                       (example ? "Sparse" : "wrong arm")};
  });

  report(3, "difference of differences", 1.0, [] {
    const auto a = attribute({10, 8, 9, 6});
    const auto z = attribute({0, 0, 0, 0});
    const auto flat = attribute({7, 7, 7, 7});
    const bool ok = a.delta_sparse == 1.5 && a.delta_dense == 2.5 && z.delta_sparse == 0 && z.delta_dense == 0 &&
                    z.reward_sparse == 0 && z.reward_dense == 0 && flat.delta_sparse == 0 && flat.delta_dense == 0;
    return Verdict{ok, "(10,8,9,6) -> " + num(a.delta_sparse) + ", " + num(a.delta_dense) + "; zero batch -> " +
                           num(z.delta_sparse) + ", " + num(z.delta_dense)};
  });

  report(4, "tournament mechanics (K=8)", 10.0, [] {
    const auto& space = megatron();
    RunConfig cfg;
    cfg.k_tournament = 8;
    cfg.budget_iters = 10;
    cfg.seed = 8;
    const auto r = run(space, make_oracle(vl(), space), Simulator{}, cfg);
    const auto& log = r.tournament;

    // Replay the log against an independent schedule and sort.
    std::vector<std::size_t> alive(8);
    std::iota(alive.begin(), alive.end(), 0);
    std::vector<double> cum(8, 0.0);
    std::size_t pos = 0;
    bool zigzag = true, halving = true;
    std::vector<std::size_t> sizes;
    for (std::size_t round = 0; alive.size() > 1; ++round) {
      sizes.push_back(alive.size());
      auto order = alive;
      if (round % 2 == 1) std::reverse(order.begin(), order.end());
      for (auto p : order) {
        if (pos >= log.proposers.size() || log.proposers[pos] != p || log.rounds[pos] != round) zigzag = false;
        if (pos < log.rewards.size()) cum[p] += log.rewards[pos];
        ++pos;
      }
      auto ranked = alive;
      std::sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
        return cum[a] != cum[b] ? cum[a] > cum[b] : a < b;
      });
      ranked.resize((ranked.size() + 1) / 2);
      std::sort(ranked.begin(), ranked.end());
      if (round >= log.survivors.size() || log.survivors[round] != ranked) halving = false;
      alive = ranked;
    }
    const bool ok = zigzag && halving && log.halvings == 3 && pos == log.proposers.size() && pos == 14 &&
                    sizes == std::vector<std::size_t>{8, 4, 2} && log.winner == alive.front();
    return Verdict{ok, std::to_string(log.halvings) + " halvings, " + std::to_string(log.proposers.size()) +
                           " proposals, zigzag " + (zigzag ? "ok" : "broken") + ", survivors " +
                           (halving ? "match sort oracle" : "differ")};
  });

  report(5, "fidelity switch", 30.0, [] {
    const auto& space = megatron();
    const auto oracle = make_oracle(vl(), space);

    RunConfig cfg;
    cfg.budget_iters = 500;
    cfg.seed = 5;
    Simulator exact = [&](const Configuration& c) -> std::optional<double> { return oracle(c); };
    const auto a = run(space, oracle, exact, cfg);
    const bool a_ok = !a.switch_info && a.iterations == 500;

    cfg.budget_iters = 40;
    Simulator triple = [&](const Configuration& c) -> std::optional<double> { return 3.0 * oracle(c); };
    const auto b = run(space, oracle, triple, cfg);
    bool b_ok = false, c_ok = false;
    std::string mape_s = "none";
    if (b.switch_info) {
      const auto& s = *b.switch_info;
      // |3c - c| / c for every validated pair.
      const double expect = 2.0;
      b_ok = s.report.iteration == cfg.tau && s.mape && std::abs(*s.mape - expect) <= kExactTol &&
             *s.mape > cfg.epsilon;
      mape_s = s.mape ? num(*s.mape) : "none";
      double mean_err = 0.0, scale_err = 0.0;
      for (int i = 0; i < 2; ++i) {
        const auto& rb = s.report.bandit_reward_before;
        const auto& nb = s.report.bandit_pulls_before;
        const auto& ra = s.report.bandit_reward_after;
        const auto& na = s.report.bandit_pulls_after;
        if (nb[i] > 0) mean_err = std::max(mean_err, std::abs(rb[i] / nb[i] - ra[i] / na[i]));
        scale_err = std::max({scale_err, std::abs(na[i] - cfg.lambda * nb[i]), std::abs(ra[i] - cfg.lambda * rb[i])});
      }
      c_ok = s.nodes_before == s.nodes_after && !s.nodes_before.empty() && mean_err <= kExactTol &&
             scale_err <= kExactTol;
    }
    return Verdict{a_ok && b_ok && c_ok,
                   std::string("(a) exact sim ") + (a_ok ? "never switches" : "switched") + "; (b) 3x sim switch at t=" +
                       (b.switch_info ? std::to_string(b.switch_info->report.iteration) : "-") + ", MAPE " + mape_s +
                       " (mean |p-r|/r); (c) trees and Q/N " + (c_ok ? "preserved" : "changed")};
  });

  report(6, "3dp optimum within 5% (>=18/20)", 120.0, [] {
    const auto r = run_experiment(scenario("3dp.json", {"autoscout"}));
    std::size_t hits = 0;
    const auto outs = r.seeds_of("autoscout", 5);
    for (const auto* o : outs) hits += o->best_cost <= 1.05 * r.optimum.cost;
    return Verdict{hits >= 18, std::to_string(hits) + "/" + std::to_string(outs.size()) +
                                   " seeds within 5% of optimum " + num(r.optimum.cost, 6) + " (budget 16 iterations)"};
  });

  report(7, "evals to 5% vs random search", 300.0, [] {
    const auto r = run_experiment(scenario("full.json", {"autoscout", "random_search"}));
    const double ours = median_of(r, "autoscout", 5, e5);
    const double rand = median_of(r, "random_search", 5, e5);
    return Verdict{ours <= 0.5 * rand, "median real evals to 5%: autoscout " + num(ours) + ", random search " +
                                           num(rand) + " (ratio " + num(ours / rand, 3) + ")"};
  });

  report(8, "ablation ordering", 300.0, [] {
    const auto r = run_experiment(scenario("full.json", {"autoscout", "no_simulators", "sparse_only"}));
    auto best = [](const SeedOutcome& o) { return o.best_cost; };
    const double full = median_of(r, "autoscout", 5, best);
    const double nosim = median_of(r, "no_simulators", 5, best);
    const double sparse = median_of(r, "sparse_only", 5, best);
    const double e_full = median_of(r, "autoscout", 5, e5);
    const double e_nosim = median_of(r, "no_simulators", 5, e5);
    const bool ok = full <= nosim && nosim <= sparse && e_nosim > e_full;
    return Verdict{ok, "median cost " + num(full, 6) + " <= " + num(nosim, 6) + " <= " + num(sparse, 6) +
                           "; evals to 5% " + num(e_full) + " < " + num(e_nosim)};
  });

  report(9, "80% simulator noise (>=16/20)", 300.0, [] {
    const auto r = run_experiment(scenario("full_noise80.json", {"autoscout"}));
    std::size_t hits = 0, switched = 0;
    for (const auto* o : r.seeds_of("autoscout", 5)) {
      switched += o->switched;
      hits += o->switched && o->best_cost <= 1.10 * r.optimum.cost;
    }
    return Verdict{hits >= 16, std::to_string(hits) + "/20 seeds switched and within 10% (" +
                                   std::to_string(switched) + " switched)"};
  });

  report(10, "determinism and feasibility", 60.0, [] {
    const auto& space = megatron();
    const auto oracle = make_oracle(vl(), space);
    const auto sim = make_simulator(space, train_ensemble(space, oracle, default_simulator_specs(), 200, 10), 0.0, 10);
    RunConfig cfg;
    cfg.budget_iters = 100;
    cfg.seed = 10;
    const bool det = trace_text(run(space, oracle, sim, cfg)) == trace_text(run(space, oracle, sim, cfg));

    std::mt19937_64 rng(10);
    std::size_t infeasible = 0;
    MctsTree tree(space, candidate_orderings(space, 1, 10).front(), 1.414, 10);
    const auto zero = DenseAssignment{std::vector<Value>(space.num_dense())};
    for (int i = 0; i < 10'000; ++i) {
      const auto s = tree.propose();
      const Configuration c{s, project(space, zero, mask(space, s))};
      infeasible += !is_feasible(space, c);
      tree.backpropagate(s, std::uniform_real_distribution<double>(0, 1)(rng));
    }
    const auto structures = enumerate_sparse(space);
    std::size_t dense_props = 0, not_idem = 0;
    while (dense_props < 10'000) {
      const auto& s = structures[rng() % structures.size()];
      const auto m = mask(space, s);
      auto st = init_dense_state(space, m);
      for (int j = 0; j < 25; ++j, ++dense_props) {
        const auto x = propose_dense(st, m);
        infeasible += !is_feasible(space, Configuration{s, x});
        not_idem += !(project(space, x, m) == x);
        update_dense(st, rng() % 2 == 0, x);
      }
    }
    // Project idempotence on arbitrary dense vectors.
    for (int i = 0; i < 10'000; ++i) {
      const auto& s = structures[rng() % structures.size()];
      const auto m = mask(space, s);
      DenseAssignment x{std::vector<Value>(space.num_dense())};
      for (auto& v : x.values)
        if (rng() % 4) v = static_cast<std::int64_t>(rng() % 40) - 5;
      const auto p = project(space, x, m);
      not_idem += !(project(space, p, m) == p);
    }

    // Cache: keys measured for real are never served from simulation.
    Simulator doubled = [&](const Configuration& c) -> std::optional<double> { return 2.0 * oracle(c); };
    AdaptiveEvaluator ev(space, oracle, doubled, {3, 10.0, 1, true});
    const auto all = enumerate_all(space, 100'000);
    std::size_t downgrades = 0;
    for (std::size_t t = 1; t <= 300; ++t) {
      std::vector<Configuration> batch;
      for (int i = 0; i < 4; ++i) batch.push_back(all[rng() % 64]);
      std::vector<bool> had_real;
      for (const auto& c : batch) had_real.push_back(ev.cache().lookup(space.canonical_key(c), false).has_value());
      const auto be = ev.evaluate_batch(batch, t);
      for (std::size_t i = 0; i < batch.size(); ++i)
        downgrades += had_real[i] && be.cells[i].fidelity != Fidelity::Real;
    }
    for (const auto& rec : ev.real_history()) {
      const auto hit = ev.cache().lookup(space.canonical_key(rec.config), true);
      downgrades += !hit || hit->fidelity != Fidelity::Real || hit->cost != rec.cost;
    }
    const bool ok = det && infeasible == 0 && not_idem == 0 && downgrades == 0;
    return Verdict{ok, std::string("traces ") + (det ? "identical" : "differ") + ", " + std::to_string(infeasible) +
                           " infeasible of 20000 proposals, " + std::to_string(not_idem) + " non-idempotent projections, " +
                           std::to_string(downgrades) + " cache downgrades"};
  });

  std::printf("%d criteria failed\n", failures);
  return failures;
}
