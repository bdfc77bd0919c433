#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "autoscout/config_space.hpp"

namespace testing {

inline std::filesystem::path data_dir() { return AUTOSCOUT_DATA_DIR; }

inline const autoscout::ConfigSpace& megatron() {
  static const auto space = autoscout::ConfigSpace::load((data_dir() / "spaces" / "megatron.json").string());
  return space;
}

/// Full configuration from a partial name -> value map: sparse features not
/// named take their default when active, dense features are projected.
inline autoscout::Configuration make_config(const autoscout::ConfigSpace& space, const nlohmann::json& values) {
  using namespace autoscout;
  SparseAssignment s;
  s.values.resize(space.num_sparse());
  for (std::size_t slot = 0; slot < space.num_sparse(); ++slot) {
    const auto& f = space.feature(space.sparse_feature(slot));
    if (!space.sparse_active(slot, s)) continue;
    if (values.contains(f.name))
      s.values[slot] = values.at(f.name).is_boolean() ? std::int64_t(values.at(f.name).get<bool>())
                                                     : values.at(f.name).get<std::int64_t>();
    else
      s.values[slot] = f.default_value;
  }
  DenseAssignment x;
  x.values.resize(space.num_dense());
  for (std::size_t slot = 0; slot < space.num_dense(); ++slot) {
    const auto& f = space.feature(space.dense_feature(slot));
    x.values[slot] = values.contains(f.name) ? values.at(f.name).get<std::int64_t>() : f.default_value;
  }
  return {s, project(space, x, mask(space, s))};
}

}  // namespace testing
