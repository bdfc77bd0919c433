#include <doctest.h>

#include <random>

#include "autoscout/dense_optimizer.hpp"
#include "support.hpp"

using namespace autoscout;
using nlohmann::json;
using testing::make_config;
using testing::megatron;

namespace {

std::size_t slot_of(const std::string& name) { return megatron().slot_of(*megatron().index_of(name)); }

Mask mask_for(const json& values) { return mask(megatron(), make_config(megatron(), values).sparse); }

/// Mask with only tp_comm and ddp_bucket live.
Mask comm_and_bucket() {
  const auto& space = megatron();
  Mask m;
  m.active.assign(space.num_dense(), false);
  m.grids.assign(space.num_dense(), {});
  for (const char* n : {"tp_comm", "ddp_bucket"}) {
    m.active[slot_of(n)] = true;
    m.grids[slot_of(n)] = space.feature(*space.index_of(n)).domain;
  }
  return m;
}

}  // namespace

TEST_CASE("init_state projects defaults onto the mask") {
  const auto st = init_dense_state(megatron(), comm_and_bucket());
  CHECK(st.current.values[slot_of("tp_comm")] == 12);
  CHECK(st.current.values[slot_of("ddp_bucket")] == 1);
  CHECK_FALSE(st.current.values[slot_of("ddp")].has_value());
  CHECK(st.coords == std::vector<std::size_t>{slot_of("tp_comm"), slot_of("ddp_bucket")});
  CHECK(st.last_outcome == Outcome::Fresh);
}

TEST_CASE("empty mask gives an empty state and proposals return current") {
  const auto m = mask_for({{"tp", 1}, {"dp", 1}});
  auto st = init_dense_state(megatron(), m);
  CHECK(st.coords.empty());
  CHECK(propose_dense(st, m) == st.current);
}

TEST_CASE("off-grid default is clamped through project") {
  auto m = comm_and_bucket();
  m.grids[slot_of("tp_comm")] = {16, 20};
  const auto st = init_dense_state(megatron(), m);
  CHECK(st.current.values[slot_of("tp_comm")] == 16);
}

TEST_CASE("propose moves the active coordinate") {
  const auto m = comm_and_bucket();
  auto st = init_dense_state(megatron(), m);
  CHECK(propose_dense(st, m).values[slot_of("tp_comm")] == 13);

  st.current.values[slot_of("tp_comm")] = 20;
  const auto c = propose_dense(st, m);
  CHECK(c.values[slot_of("tp_comm")] == 19);
  CHECK(st.direction[slot_of("tp_comm")] == -1);

  st = init_dense_state(megatron(), m);
  st.active_coord = 1;
  st.current.values[slot_of("ddp_bucket")] = 2;
  st.step[slot_of("ddp_bucket")] = 4;
  CHECK(propose_dense(st, m).values[slot_of("ddp_bucket")] == 6);
}

TEST_CASE("update rules") {
  const auto m = comm_and_bucket();
  const auto comm = slot_of("tp_comm");
  auto st = init_dense_state(megatron(), m);

  auto c = propose_dense(st, m);
  update_dense(st, true, c);
  CHECK(st.step[comm] == 2);
  CHECK(st.current == c);
  CHECK(st.active_coord == 0);

  c = propose_dense(st, m);
  update_dense(st, false, c);
  CHECK(st.step[comm] == 1);
  CHECK(st.direction[comm] == -1);
  CHECK(st.active_coord == 0);
  CHECK(st.flip_used);

  c = propose_dense(st, m);
  update_dense(st, false, c);
  CHECK(st.active_coord == 1);
  CHECK_FALSE(st.flip_used);
}

TEST_CASE("step doubling is capped") {
  const auto m = mask_for({{"tp", 2}, {"dp", 1}});
  auto st = init_dense_state(megatron(), m, 2);
  for (int i = 0; i < 3; ++i) update_dense(st, true, propose_dense(st, m));
  CHECK(st.step[slot_of("tp_comm")] == 2);
}

TEST_CASE("reproject follows structure changes") {
  const auto& space = megatron();
  const auto m_all = mask_for({{"tp", 2}, {"dp", 2}});
  auto st = init_dense_state(space, m_all);
  st.current.values[slot_of("tp_comm")] = 17;
  st.current.values[slot_of("ddp")] = 4;

  SUBCASE("deactivating ddp keeps tp_comm") {
    const auto m = mask_for({{"tp", 2}, {"dp", 1}});
    reproject_dense(st, space, m);
    CHECK_FALSE(st.current.values[slot_of("ddp")].has_value());
    CHECK(st.current.values[slot_of("tp_comm")] == 17);
    CHECK(st.coords == std::vector<std::size_t>{slot_of("tp_comm")});
  }
  SUBCASE("identical mask leaves the state unchanged") {
    const auto before = st;
    reproject_dense(st, space, m_all);
    CHECK(st == before);
  }
  SUBCASE("activating ddp adds it at its default") {
    const auto m1 = mask_for({{"tp", 2}, {"dp", 1}});
    auto s1 = init_dense_state(space, m1);
    reproject_dense(s1, space, m_all);
    CHECK(s1.current.values[slot_of("ddp")] == 1);
    CHECK(s1.coords.size() == 3);
  }
}

TEST_CASE("property: proposals stay on the mask's grid") {
  const auto& space = megatron();
  const auto all = enumerate_sparse(space);
  std::mt19937_64 rng(3);
  std::size_t checked = 0;
  while (checked < 10'000) {
    const auto& s = all[rng() % all.size()];
    const auto m = mask(space, s);
    auto st = init_dense_state(space, m);
    for (int i = 0; i < 20; ++i) {
      const auto x = propose_dense(st, m);
      REQUIRE(is_feasible(space, Configuration{s, x}));
      update_dense(st, rng() % 2 == 0, x);
      ++checked;
    }
  }
}

TEST_CASE("V-shaped single-coordinate objective reaches the grid optimum") {
  json doc = {{"features",
               {{{"name", "s"}, {"kind", "sparse"}, {"domain", {1}}},
                {{"name", "x"}, {"kind", "dense"}, {"domain", json::array()}, {"default", 0}}}}};
  for (int i = 0; i < 64; ++i) doc["features"][1]["domain"].push_back(i);
  const auto space = ConfigSpace::from_json(doc);
  const SparseAssignment s{{1}};
  const auto m = mask(space, s);
  for (int target : {0, 5, 37, 63}) {
    auto f = [&](const DenseAssignment& x) { return std::abs(*x.values[0] - target); };
    auto st = init_dense_state(space, m, 8);
    int proposals = 0;
    while (f(st.current) != 0 && proposals < 200) {
      const auto c = propose_dense(st, m);
      update_dense(st, f(c) < f(st.current), c);
      ++proposals;
    }
    CHECK(f(st.current) == 0);
    // log2(64) + 64
    CHECK(proposals <= 70);
  }
}

TEST_CASE("identical improvement sequences give identical trajectories") {
  const auto m = mask_for({{"tp", 2}, {"dp", 4}});
  auto a = init_dense_state(megatron(), m), b = init_dense_state(megatron(), m);
  const bool seq[] = {true, true, false, false, true, false, false, true, true, true, false};
  for (bool ok : seq) {
    update_dense(a, ok, propose_dense(a, m));
    update_dense(b, ok, propose_dense(b, m));
    CHECK(a == b);
  }
}
