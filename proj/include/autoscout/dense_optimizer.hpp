#pragma once

#include <vector>

#include "autoscout/config_space.hpp"

namespace autoscout {

enum class Outcome { Fresh, Improved, Failed };

/// Coordinate-wise momentum search over the active dense grid.
///
/// One coordinate is refined at a time. A success keeps the coordinate and
/// direction and doubles the step (capped); a failure resets the step to one
/// grid position and flips the direction once before moving on to the next
/// active coordinate. Grid boundaries reflect the direction.
struct DenseSearchState {
  DenseAssignment current;
  std::vector<std::size_t> coords;  // active dense slots, declaration order
  std::size_t active_coord = 0;     // index into coords
  std::vector<int> direction;       // per dense slot, +1 / -1
  std::vector<int> step;            // per dense slot, grid positions
  Outcome last_outcome = Outcome::Fresh;
  bool flip_used = false;
  int step_cap = 8;

  bool operator==(const DenseSearchState&) const = default;

  /// Dense slot currently being refined, if any.
  std::optional<std::size_t> active_slot() const {
    if (coords.empty()) return std::nullopt;
    return coords[active_coord];
  }
};

DenseSearchState init_dense_state(const ConfigSpace& space, const Mask& m, int step_cap = 8);

/// Candidate with the active coordinate moved `step` grid positions along its
/// direction. Flips the direction first when the boundary would leave the
/// value unchanged.
DenseAssignment propose_dense(DenseSearchState& state, const Mask& m);

void update_dense(DenseSearchState& state, bool improved, const DenseAssignment& candidate);

/// Re-anchors the state on a new structure: values are projected onto the new
/// grid, newly inactive coordinates leave the cycle, newly active ones join at
/// their defaults.
void reproject_dense(DenseSearchState& state, const ConfigSpace& space, const Mask& m_new);

}  // namespace autoscout
