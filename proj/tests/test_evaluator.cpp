#include <doctest.h>

#include <atomic>
#include <cmath>
#include <random>
#include <set>

#include "autoscout/bench_harness.hpp"
#include "autoscout/evaluator.hpp"
#include "support.hpp"

using namespace autoscout;
using nlohmann::json;
using testing::make_config;
using testing::megatron;

namespace {

const ConfigSpace& grid_space() {
  static const auto space = ConfigSpace::from_json(
      {{"features",
        {{{"name", "a"}, {"kind", "sparse"}, {"domain", {1, 2, 3, 4, 5, 6}}},
         {{"name", "b"}, {"kind", "sparse"}, {"domain", {1, 2, 3, 4, 5, 6}}}}}});
  return space;
}

Configuration at(std::int64_t a, std::int64_t b) { return {{{a, b}}, {}}; }

double linear_cost(const Configuration& c) { return 10.0 + 2.0 * *c.sparse.values[0] + *c.sparse.values[1]; }

struct Counting {
  std::shared_ptr<std::atomic<int>> calls = std::make_shared<std::atomic<int>>(0);
  Oracle oracle() const {
    return [c = calls](const Configuration& x) {
      ++*c;
      return linear_cost(x);
    };
  }
};

}  // namespace

TEST_CASE("fit_linear recovers an exact linear function") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-5, 5);
  Eigen::MatrixXd x(50, 3);
  Eigen::VectorXd y(50);
  for (int r = 0; r < 50; ++r) {
    for (int c = 0; c < 3; ++c) x(r, c) = u(rng);
    y(r) = 1.5 - 2.0 * x(r, 0) + 0.25 * x(r, 1) + 3.0 * x(r, 2);
  }
  const auto fit = fit_linear(x, y, 7);
  CHECK(fit.r2 == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(fit.intercept == doctest::Approx(1.5).epsilon(1e-9));
  CHECK(fit.coefficients(0) == doctest::Approx(-2.0).epsilon(1e-9));
  CHECK_FALSE(fit.ridge);
}

TEST_CASE("fit_linear three-point example") {
  Eigen::MatrixXd x(3, 1);
  x << 1, 2, 3;
  Eigen::VectorXd y(3);
  y << 2, 4, 6;
  const auto fit = fit_linear(x, y, 0);
  CHECK(fit.coefficients(0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::abs(fit.intercept) < 1e-12);
}

TEST_CASE("fit_linear edge cases") {
  Eigen::MatrixXd x(10, 1);
  for (int i = 0; i < 10; ++i) x(i, 0) = i;
  Eigen::VectorXd y = Eigen::VectorXd::Constant(10, 4.0);
  CHECK(fit_linear(x, y, 0).r2 == 0.0);

  // Duplicate column: rank deficient.
  Eigen::MatrixXd d(10, 2);
  d.col(0) = x.col(0);
  d.col(1) = x.col(0);
  Eigen::VectorXd z = 3.0 * x.col(0);
  const auto fit = fit_linear(d, z, 0);
  CHECK(fit.ridge);
  CHECK(fit.coefficients.allFinite());

  CHECK_THROWS_AS(fit_linear(Eigen::MatrixXd(2, 1), Eigen::VectorXd(2), 0), std::invalid_argument);
}

TEST_CASE("fit_linear is deterministic given the seed") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 1);
  Eigen::MatrixXd x(40, 2);
  Eigen::VectorXd y(40);
  for (int r = 0; r < 40; ++r) {
    x(r, 0) = n(rng);
    x(r, 1) = n(rng);
    y(r) = x(r, 0) + n(rng);
  }
  CHECK(fit_linear(x, y, 5).r2 == fit_linear(x, y, 5).r2);
  CHECK(fit_linear(x, y, 5).coefficients == fit_linear(x, y, 5).coefficients);
}

TEST_CASE("ensemble weights") {
  const auto w = ensemble_weights({0.8, 0.2, -0.1, 0.1});
  CHECK(std::abs(w[0] - 8.0 / 11) < 1e-12);
  CHECK(std::abs(w[1] - 2.0 / 11) < 1e-12);
  CHECK(w[2] == 0.0);
  CHECK(std::abs(w[3] - 1.0 / 11) < 1e-12);
  CHECK(ensemble_weights({0.5}) == std::vector<double>{1.0});
  CHECK(ensemble_weights({-1.0, 0.0}) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("property: weights are normalized") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> r2(1 + rng() % 6);
    for (auto& v : r2) v = u(rng);
    const auto w = ensemble_weights(r2);
    const bool any = std::any_of(r2.begin(), r2.end(), [](double v) { return v > 0; });
    double sum = 0;
    for (double v : w) {
      REQUIRE(v >= 0.0);
      sum += v;
    }
    if (any) REQUIRE(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("ensemble prediction is the weighted average") {
  LinearSimulator a, b, c;
  a.inputs = b.inputs = c.inputs = {"a"};
  a.coefficients = b.coefficients = c.coefficients = Eigen::VectorXd::Ones(1);
  a.intercept = 0;
  b.intercept = 10;
  c.intercept = 100;
  a.r2 = 0.75;
  b.r2 = 0.25;
  c.r2 = -1;
  const SimulatorEnsemble e({a, b, c});
  CHECK(e.available());
  const auto p = e.predict(grid_space(), at(2, 1));
  REQUIRE(p.has_value());
  CHECK(*p == doctest::Approx(0.75 * 2 + 0.25 * 12).epsilon(1e-12));

  c.r2 = 0;
  a.r2 = b.r2 = -0.5;
  const SimulatorEnsemble none({a, b, c});
  CHECK_FALSE(none.available());
  CHECK_FALSE(none.predict(grid_space(), at(1, 1)).has_value());
  const auto j = e.to_json();
  REQUIRE(j.size() == 3);
  CHECK(j[0].at("weight").get<double>() == doctest::Approx(0.75));
  CHECK(j[2].at("weight").get<double>() == 0.0);
}

TEST_CASE("resolve_inputs drops unknown names") {
  const auto inputs = resolve_inputs(megatron(), {"a100", "a40", "mbs", "sp", "tp_comm", "nonexistent"});
  CHECK(inputs == std::vector<std::string>{"a100", "a40", "mbs", "sp", "tp_comm"});
}

TEST_CASE("encode_inputs on a heterogeneous allocation") {
  const auto& space = megatron();
  const auto c = make_config(space, {{"tp", 1}, {"dp", 2}, {"pp", 4}, {"mbs", 4}});
  const auto v = encode_inputs(space, {"a100", "a40", "mbs", "sp", "tp_comm"}, c);
  CHECK(v(0) == 8);
  CHECK(v(1) == 0);
  CHECK(v(2) == 4);
  CHECK(v(3) == 0);   // sp inactive: default false
  CHECK(v(4) == 12);  // tp_comm inactive: default
}

TEST_CASE("fit_simulator skips infeasible samples") {
  std::vector<std::pair<Configuration, double>> samples;
  for (int a = 1; a <= 6; ++a)
    for (int b = 1; b <= 6; ++b) samples.emplace_back(at(a, b), b == 6 ? kInfeasible : linear_cost(at(a, b)));
  const auto sim = fit_simulator(grid_space(), {"lin", {"a", "b"}}, samples, 1);
  CHECK(sim.samples == 30);
  CHECK(sim.r2 == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(sim.coefficients(0) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("mape arithmetic") {
  const auto m = mape({{100, 110}, {200, 180}});
  REQUIRE(m.has_value());
  CHECK(*m == doctest::Approx((10.0 / 110 + 20.0 / 180) / 2).epsilon(1e-12));
  CHECK(*m == doctest::Approx(0.1010).epsilon(1e-3));
  CHECK_FALSE(mape({}).has_value());
  CHECK(*mape({{5, kInfeasible}}) == 1.0);
  CHECK(*mape({{kInfeasible, kInfeasible}}) == 0.0);
  CHECK(*mape({{30, 10}}) == doctest::Approx(2.0));
}

TEST_CASE("noise wrapper") {
  const auto& space = grid_space();
  Oracle base = linear_cost;
  const auto same = wrap_noisy(space, base, 0.0, 1);
  const auto noisy = wrap_noisy(space, base, 0.8, 1);
  const auto again = wrap_noisy(space, base, 0.8, 1);
  bool differs = false;
  for (int a = 1; a <= 6; ++a)
    for (int b = 1; b <= 6; ++b) {
      const auto c = at(a, b);
      CHECK(same(c) == base(c));
      CHECK(noisy(c) == again(c));
      CHECK(noisy(c) >= 0.2 * base(c) - 1e-12);
      CHECK(noisy(c) <= 1.8 * base(c) + 1e-12);
      differs = differs || noisy(c) != base(c);
    }
  CHECK(differs);
  CHECK(apply_noise(100.0, 0.4) == doctest::Approx(140.0));
  CHECK(is_infeasible(apply_noise(kInfeasible, 0.4)));
  const double u = noise_draw(9, "k", 0.8);
  CHECK(u >= -0.8);
  CHECK(u <= 0.8);
}

TEST_CASE("cache keeps real entries") {
  EvaluationCache cache;
  cache.store("k", 5.0, Fidelity::Simulated);
  CHECK(cache.lookup("k", true)->fidelity == Fidelity::Simulated);
  CHECK_FALSE(cache.lookup("k", false).has_value());
  cache.store("k", 7.0, Fidelity::Real);
  cache.store("k", 1.0, Fidelity::Simulated);
  const auto hit = cache.lookup("k", true);
  CHECK(hit->fidelity == Fidelity::Real);
  CHECK(hit->cost == 7.0);
  // The first simulated value is kept.
  CHECK(*cache.simulated("k") == 5.0);
}

TEST_CASE("no real calls between checkpoints in simulated mode") {
  Counting real;
  Simulator sim = [](const Configuration& c) -> std::optional<double> { return linear_cost(c); };
  AdaptiveEvaluator ev(grid_space(), real.oracle(), sim, {5, 0.1, 1, true});
  for (std::size_t t = 1; t <= 4; ++t) {
    const auto be = ev.evaluate_batch({at(t, 1), at(t, 2), at(t + 1, 1), at(t + 1, 2)}, t);
    CHECK(be.oracle_calls == 0);
    CHECK(be.validation_calls == 0);
    for (const auto& e : be.cells) CHECK(e.fidelity == Fidelity::Simulated);
  }
  CHECK(real.calls->load() == 0);
  const auto be = ev.evaluate_batch({at(5, 5), at(5, 6), at(6, 5), at(6, 6)}, 5);
  CHECK(be.validated);
  CHECK(be.validation_calls == 2);
  CHECK(*be.mape == 0.0);
  CHECK_FALSE(be.switched);
  CHECK(ev.mode() == Fidelity::Simulated);
}

TEST_CASE("a biased simulator triggers the switch at the first checkpoint") {
  Counting real;
  Simulator sim = [](const Configuration& c) -> std::optional<double> { return 3.0 * linear_cost(c); };
  AdaptiveEvaluator ev(grid_space(), real.oracle(), sim, {5, 0.1, 1, true});
  BatchEvaluation be;
  std::size_t t = 1;
  for (; t <= 5; ++t) {
    be = ev.evaluate_batch({at(t, 1), at(t, 2), at(t, 3), at(t, 4)}, t);
    if (be.switched) break;
  }
  CHECK(t == 5);
  CHECK(be.switched);
  CHECK(*be.mape == doctest::Approx(2.0).epsilon(1e-12));
  // After the switch only real costs are returned.
  const auto next = ev.evaluate_batch({at(6, 6), at(6, 5), at(5, 6), at(1, 6)}, 6);
  for (const auto& e : next.cells) CHECK(e.fidelity == Fidelity::Real);
  CHECK(next.oracle_calls == 4);
}

TEST_CASE("validation with failing real calls is deferred") {
  Simulator sim = [](const Configuration& c) -> std::optional<double> { return 3.0 * linear_cost(c); };
  Oracle broken = [](const Configuration&) -> double { throw OracleError("down"); };
  AdaptiveEvaluator ev(grid_space(), broken, sim, {1, 0.1, 1, true});
  const auto be = ev.evaluate_batch({at(1, 1), at(1, 2), at(2, 1), at(2, 2)}, 1);
  CHECK_FALSE(be.mape.has_value());
  CHECK_FALSE(be.switched);
  CHECK(ev.mode() == Fidelity::Simulated);
}

TEST_CASE("unavailable simulator forces real profiling") {
  Counting real;
  Simulator none = [](const Configuration&) -> std::optional<double> { return std::nullopt; };
  AdaptiveEvaluator ev(grid_space(), real.oracle(), none, {5, 0.1, 1, true});
  const auto e = ev.evaluate(at(2, 3));
  CHECK(e.fidelity == Fidelity::Real);
  CHECK(e.cost == linear_cost(at(2, 3)));
}

TEST_CASE("batch deduplication shares evaluations") {
  Counting real;
  AdaptiveEvaluator ev(grid_space(), real.oracle(), {}, {5, 0.1, 4, true});
  const auto be = ev.evaluate_batch({at(1, 1), at(1, 1), at(2, 2), at(2, 2)}, 1);
  CHECK(be.oracle_calls == 2);
  CHECK(real.calls->load() == 2);
  const auto again = ev.evaluate_batch({at(1, 1), at(2, 2), at(3, 3), at(1, 1)}, 2);
  CHECK(again.oracle_calls == 1);
  CHECK(ev.real_evals() == 3);
  CHECK(ev.clock() == doctest::Approx(linear_cost(at(1, 1)) + linear_cost(at(2, 2)) + linear_cost(at(3, 3))));
}

TEST_CASE("switch_fidelity scales the bandit and re-evaluates the best simulated configurations") {
  Counting real;
  Simulator sim = [](const Configuration& c) -> std::optional<double> { return 100.0 - linear_cost(c); };
  AdaptiveEvaluator ev(grid_space(), real.oracle(), sim, {1000, 0.1, 1, true});
  for (int i = 1; i <= 5; ++i) ev.evaluate_batch({at(i, 1), at(i, 2)}, static_cast<std::size_t>(i));
  REQUIRE(ev.top_simulated(100).size() == 10);
  BanditState b;
  b.reward = {8, 1};
  b.pulls = {4, 3};
  const auto rep = switch_fidelity(ev, b, 0.25, 3, 5);
  CHECK(ev.mode() == Fidelity::Real);
  CHECK(b.reward[0] == 2.0);
  CHECK(b.pulls[0] == 1.0);
  CHECK(b.mean(Arm::Dense) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  REQUIRE(rep.requeued.size() == 3);
  CHECK(rep.requeued[0].second <= rep.requeued[1].second);
  CHECK(rep.requeued[1].second <= rep.requeued[2].second);
  CHECK(rep.requeued[0].first == at(5, 2));
  CHECK(rep.reevaluated.size() == 3);
  CHECK(real.calls->load() == 3);
  CHECK(ev.best_real()->cost == linear_cost(at(4, 2)));
}

TEST_CASE("property: cache never downgrades a real entry") {
  const auto& space = grid_space();
  Simulator sim = [](const Configuration& c) -> std::optional<double> { return 2.0 * linear_cost(c); };
  AdaptiveEvaluator ev(space, linear_cost, sim, {3, 10.0, 1, true});
  std::mt19937_64 rng(12);
  for (std::size_t t = 1; t <= 200; ++t) {
    std::vector<Configuration> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(at(1 + rng() % 6, 1 + rng() % 6));
    std::vector<bool> had_real;
    for (const auto& c : batch) had_real.push_back(ev.cache().lookup(space.canonical_key(c), false).has_value());
    const auto be = ev.evaluate_batch(batch, t);
    for (std::size_t i = 0; i < 4; ++i) {
      REQUIRE(ev.cache().lookup(space.canonical_key(batch[i]), true).has_value());
      // Keys with a real measurement are never served from simulation.
      if (had_real[i]) REQUIRE(be.cells[i].fidelity == Fidelity::Real);
    }
    for (const auto& rec : ev.real_history()) {
      const auto hit = ev.cache().lookup(space.canonical_key(rec.config), true);
      REQUIRE(hit->fidelity == Fidelity::Real);
      REQUIRE(hit->cost == rec.cost);
    }
  }
}
