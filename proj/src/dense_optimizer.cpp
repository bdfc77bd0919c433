#include "autoscout/dense_optimizer.hpp"

#include <algorithm>

namespace autoscout {

DenseSearchState init_dense_state(const ConfigSpace& space, const Mask& m, int step_cap) {
  DenseSearchState st;
  DenseAssignment defaults;
  defaults.values.resize(space.num_dense());
  for (std::size_t slot = 0; slot < space.num_dense(); ++slot)
    defaults.values[slot] = space.feature(space.dense_feature(slot)).default_value;
  st.current = project(space, defaults, m);
  st.coords = m.active_slots();
  st.direction.assign(space.num_dense(), +1);
  st.step.assign(space.num_dense(), 1);
  st.step_cap = std::max(step_cap, 1);
  return st;
}

namespace {

std::size_t grid_index(const std::vector<std::int64_t>& grid, std::int64_t v) {
  auto it = std::lower_bound(grid.begin(), grid.end(), v);
  if (it == grid.end() || *it != v) it = std::lower_bound(grid.begin(), grid.end(), nearest_on_grid(grid, v));
  return static_cast<std::size_t>(it - grid.begin());
}

std::size_t moved(std::size_t i, int dir, int step, std::size_t n) {
  const auto target = static_cast<long long>(i) + static_cast<long long>(dir) * step;
  return static_cast<std::size_t>(std::clamp<long long>(target, 0, static_cast<long long>(n) - 1));
}

}  // namespace

DenseAssignment propose_dense(DenseSearchState& state, const Mask& m) {
  auto slot = state.active_slot();
  if (!slot || !m.active[*slot] || !state.current.values[*slot]) return state.current;
  const auto& grid = m.grids[*slot];
  const auto i = grid_index(grid, *state.current.values[*slot]);
  auto j = moved(i, state.direction[*slot], state.step[*slot], grid.size());
  if (j == i) {
    state.direction[*slot] = -state.direction[*slot];
    j = moved(i, state.direction[*slot], state.step[*slot], grid.size());
  }
  DenseAssignment cand = state.current;
  cand.values[*slot] = grid[j];
  return cand;
}

void update_dense(DenseSearchState& state, bool improved, const DenseAssignment& candidate) {
  auto slot = state.active_slot();
  if (!slot) return;
  if (improved) {
    state.current = candidate;
    state.step[*slot] = std::min(2 * state.step[*slot], state.step_cap);
    state.flip_used = false;
    state.last_outcome = Outcome::Improved;
    return;
  }
  state.last_outcome = Outcome::Failed;
  state.step[*slot] = 1;
  if (!state.flip_used) {
    state.direction[*slot] = -state.direction[*slot];
    state.flip_used = true;
  } else {
    state.active_coord = (state.active_coord + 1) % state.coords.size();
    state.flip_used = false;
  }
}

void reproject_dense(DenseSearchState& state, const ConfigSpace& space, const Mask& m_new) {
  const auto old_slot = state.active_slot();
  const auto new_coords = m_new.active_slots();
  for (auto s : new_coords) {
    if (!state.current.values[s]) {
      state.direction[s] = +1;
      state.step[s] = 1;
    }
  }
  state.current = project(space, state.current, m_new);
  if (new_coords == state.coords) return;
  state.coords = new_coords;
  state.active_coord = 0;
  if (old_slot) {
    auto it = std::find(state.coords.begin(), state.coords.end(), *old_slot);
    if (it != state.coords.end()) {
      state.active_coord = static_cast<std::size_t>(it - state.coords.begin());
      return;
    }
  }
  state.flip_used = false;
}

}  // namespace autoscout
