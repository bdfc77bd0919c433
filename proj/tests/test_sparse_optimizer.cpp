#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "autoscout/sparse_optimizer.hpp"
#include "support.hpp"

using namespace autoscout;
using nlohmann::json;
using testing::megatron;

namespace {

ConfigSpace chain(int features, std::vector<int> domain) {
  json fs = json::array();
  for (int i = 0; i < features; ++i)
    fs.push_back({{"name", "f" + std::to_string(i)}, {"kind", "sparse"}, {"domain", domain}});
  return ConfigSpace::from_json({{"features", fs}});
}

SparseAssignment assign(std::vector<std::int64_t> v) {
  SparseAssignment s;
  for (auto x : v) s.values.push_back(x);
  return s;
}

std::multimap<std::string, std::pair<std::int64_t, double>> leaf_multiset(const ConfigSpace& space,
                                                                       const MctsTree& t) {
  std::multimap<std::string, std::pair<std::int64_t, double>> out;
  for (const auto& l : t.leaves())
    out.emplace(space.sparse_to_json(l.assignment).dump(), std::make_pair(l.visits, l.reward));
  return out;
}

}  // namespace

TEST_CASE("uct_score worked example") {
  const double bonus = std::sqrt(std::log(4.0) / 2.0);
  CHECK(bonus == doctest::Approx(0.8326).epsilon(1e-4));
  CHECK(uct_score(3.0, 2, 4, 1.0) == doctest::Approx(1.5 + bonus).epsilon(1e-12));
  CHECK(uct_score(1.0, 2, 4, 1.0) == doctest::Approx(0.5 + bonus).epsilon(1e-12));
  CHECK(std::isinf(uct_score(0.0, 0, 4, 1.0)));
}

TEST_CASE("UCT selects the child with the higher score") {
  const auto space = chain(1, {1, 2});
  for (int flip = 0; flip < 2; ++flip) {
    MctsTree t(space, {{0}}, 1.0, 3);
    const std::int64_t good = flip ? 2 : 1, bad = flip ? 1 : 2;
    t.backpropagate(assign({good}), 1.5);
    t.backpropagate(assign({good}), 1.5);
    t.backpropagate(assign({bad}), 0.5);
    t.backpropagate(assign({bad}), 0.5);
    CHECK(t.root().visits == 4);
    CHECK(t.propose() == assign({good}));
  }
}

TEST_CASE("fresh tree expands the root and returns a feasible assignment") {
  const auto& space = megatron();
  MctsTree t(space, candidate_orderings(space, 1, 0).front(), 1.414, 5);
  CHECK(t.node_count() == 1);
  const auto s = t.propose();
  CHECK(t.node_count() == 2);
  CHECK(t.root().children.size() == 1);
  CHECK(space.constraints_hold(s));
}

TEST_CASE("unvisited child is chosen before a visited sibling") {
  const auto space = chain(1, {1, 2});
  MctsTree t(space, {{0}}, 1.0, 1);
  t.backpropagate(assign({1}), 100.0);
  // Value 2 is still unexpanded, so it wins regardless of the sibling's reward.
  CHECK(t.propose() == assign({2}));
}

TEST_CASE("backpropagate accounting") {
  const auto space = chain(3, {1, 2});
  MctsTree t(space, {{0, 1, 2}}, 1.0, 0);
  t.backpropagate(assign({1, 1, 1}), 1.0);
  REQUIRE(t.node_count() == 4);
  for (const auto& n : t.nodes()) {
    CHECK(n.visits == 1);
    CHECK(n.reward == 1.0);
  }
  t.backpropagate(assign({1, 2, 1}), 0.5);
  CHECK(t.node_count() == 6);
  CHECK(t.root().visits == 2);
  const auto first = t.root().children.front().second;
  CHECK(t.nodes()[first].visits == 2);
  CHECK(t.nodes()[first].reward == doctest::Approx(1.5));
}

TEST_CASE("shared learning: trees with different orderings hold identical leaf statistics") {
  const auto& space = megatron();
  auto orders = candidate_orderings(space, 5, 42);
  std::vector<MctsTree> trees;
  for (std::size_t i = 0; i < orders.size(); ++i) trees.emplace_back(space, orders[i], 1.414, i);
  std::mt19937_64 rng(9);
  const auto all = enumerate_sparse(space);
  for (int i = 0; i < 300; ++i) {
    const auto& s = all[rng() % all.size()];
    const double r = std::uniform_real_distribution<double>(0, 2)(rng);
    for (auto& t : trees) t.backpropagate(s, r);
  }
  const auto ref = leaf_multiset(space, trees.front());
  for (const auto& t : trees) {
    CHECK(leaf_multiset(space, t) == ref);
    CHECK(t.root().visits == 300);
  }
}

TEST_CASE("candidate orderings are valid permutations") {
  const auto& space = megatron();
  const auto orders = candidate_orderings(space, 40, 1);
  CHECK(orders.size() == 40);
  for (const auto& o : orders) CHECK(is_valid_ordering(space, o.order));
  // sp is gated on tp; any ordering placing sp before tp is invalid.
  std::vector<std::size_t> bad(space.num_sparse());
  std::iota(bad.begin(), bad.end(), 0);
  const auto sp = space.slot_of(*space.index_of("sp")), tp = space.slot_of(*space.index_of("tp"));
  std::swap(bad[sp], bad[tp]);
  CHECK_FALSE(is_valid_ordering(space, bad));
}

TEST_CASE("orderings load from feature-name arrays") {
  const auto& space = megatron();
  const json doc = {{"mbs", "ar", "cp", "ep", "dp", "tp", "sp", "pp"}};
  const auto o = orderings_from_json(space, doc);
  REQUIRE(o.size() == 1);
  CHECK(space.feature(space.sparse_feature(o[0].order.front())).name == "mbs");
  CHECK_THROWS(orderings_from_json(space, json{{"sp", "tp"}}));
}

TEST_CASE("property: proposals are feasible, reproducible and grow the tree by at most one node") {
  const auto& space = megatron();
  const auto orders = candidate_orderings(space, 3, 7);
  for (const auto& o : orders) {
    MctsTree a(space, o, 1.414, 123), b(space, o, 1.414, 123);
    for (int i = 0; i < 400; ++i) {
      const auto before = a.node_count();
      const auto s = a.propose();
      REQUIRE(a.node_count() <= before + 1);
      REQUIRE(b.propose() == s);
      Configuration c{s, project(space, DenseAssignment{std::vector<Value>(space.num_dense())}, mask(space, s))};
      REQUIRE(is_feasible(space, c));
      const double r = 1.0 / (1.0 + (i % 7));
      a.backpropagate(s, r);
      b.backpropagate(s, r);
    }
    CHECK(a.export_stats() == b.export_stats());
  }
}

TEST_CASE("best_path follows the highest mean reward") {
  const auto space = chain(2, {1, 2});
  MctsTree t(space, {{0, 1}}, 1.0, 0);
  CHECK_FALSE(t.best_path().has_value());
  t.backpropagate(assign({1, 1}), 0.2);
  t.backpropagate(assign({2, 2}), 0.9);
  t.backpropagate(assign({2, 1}), 0.7);
  CHECK(*t.best_path() == assign({2, 2}));
}

TEST_CASE("tournament zigzag order") {
  Tournament t(4);
  CHECK(t.round_order() == std::vector<std::size_t>{0, 1, 2, 3});
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(t.next() == i);
    t.record(i, 1.0);
  }
  CHECK(t.survivors().size() == 2);
  CHECK(t.round_order() == std::vector<std::size_t>{1, 0});
}

TEST_CASE("tournament halving keeps the top cumulative half") {
  Tournament t(4);
  const double r[] = {2.0, 1.0, 3.0, 0.5};
  for (std::size_t i = 0; i < 4; ++i) t.record(t.next(), r[t.next()]);
  CHECK(t.survivors() == std::vector<std::size_t>{0, 2});
  CHECK(t.halvings() == 1);
}

TEST_CASE("tournament ties go to the lower index") {
  Tournament t(4);
  for (std::size_t i = 0; i < 4; ++i) t.record(t.next(), 1.0);
  CHECK(t.survivors() == std::vector<std::size_t>{0, 1});
}

TEST_CASE("tournament K=8 performs three halvings in 2K-2 proposals") {
  Tournament t(8);
  std::size_t proposals = 0;
  std::vector<std::size_t> sizes;
  while (!t.complete()) {
    if (sizes.empty() || t.round() + 1 > sizes.size()) sizes.push_back(t.survivors().size());
    const auto p = t.next();
    t.record(p, static_cast<double>(p));  // higher index, higher reward
    ++proposals;
  }
  CHECK(sizes == std::vector<std::size_t>{8, 4, 2});
  CHECK(t.halvings() == 3);
  CHECK(proposals == 14);
  CHECK(t.winner() == 7);
}

TEST_CASE("tournament with one candidate is already complete") {
  Tournament t(1);
  CHECK(t.complete());
  CHECK(t.next() == 0);
  CHECK(t.winner() == 0);
}
