#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace autoscout {

/// A feature value. `std::nullopt` marks an inactive (gated-off) feature.
using Value = std::optional<std::int64_t>;

/// Cost sentinel for configurations that cannot run (e.g. out of memory).
inline constexpr double kInfeasible = std::numeric_limits<double>::infinity();

inline bool is_infeasible(double cost) { return !(cost < kInfeasible); }

class SpaceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FeatureKind { Sparse, Dense };

enum class CompareOp { Greater, GreaterEqual, Less, LessEqual, Equal, NotEqual };

/// One atomic comparison `feature op value`. False whenever the referenced
/// feature is inactive.
struct Predicate {
  std::size_t feature = 0;  // global feature index
  CompareOp op = CompareOp::Greater;
  std::int64_t value = 0;

  bool holds(const Value& v) const;
};

/// A narrowed grid used while every predicate in `when` holds.
struct SubGrid {
  std::vector<Predicate> when;
  std::vector<std::int64_t> domain;
};

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::Sparse;
  bool boolean = false;
  std::vector<std::int64_t> domain;
  std::int64_t default_value = 0;
  std::vector<Predicate> requires_;  // conjunction
  std::vector<SubGrid> subgrids;     // first match wins
};

struct DeviceClass {
  std::string name;
  int count = 0;
  double mem_gb = 0.0;
  double rel_throughput = 1.0;
};

struct Hardware {
  std::vector<DeviceClass> devices;  // declaration order
  int total_devices() const;
};

struct Constraint {
  enum class Type { ProductLeDevices, Divides };
  Type type = Type::ProductLeDevices;
  std::vector<std::size_t> features;  // ProductLeDevices: factors; Divides: {a, b}
};

/// Values of the sparse features, indexed by sparse slot.
struct SparseAssignment {
  std::vector<Value> values;
  bool operator==(const SparseAssignment&) const = default;
  auto operator<=>(const SparseAssignment&) const = default;
};

/// Values of the dense features, indexed by dense slot.
struct DenseAssignment {
  std::vector<Value> values;
  bool operator==(const DenseAssignment&) const = default;
  auto operator<=>(const DenseAssignment&) const = default;
};

struct Configuration {
  SparseAssignment sparse;
  DenseAssignment dense;
  bool operator==(const Configuration&) const = default;
};

/// Result of the masking function M(s): which dense features are live under a
/// sparse assignment and the grid each one may take.
struct Mask {
  std::vector<bool> active;                        // per dense slot
  std::vector<std::vector<std::int64_t>> grids;   // per dense slot; empty when inactive
  bool operator==(const Mask&) const = default;

  std::vector<std::size_t> active_slots() const;
};

/// Number of devices of each class a configuration occupies (fastest class first).
struct DeviceAllocation {
  std::vector<int> per_class;  // aligned with Hardware::devices
  int world = 1;
  double min_throughput = 1.0;
  double min_mem_gb = 0.0;
};

/// Ordered set of features with activation predicates, global constraints and
/// hardware. Immutable once constructed.
class ConfigSpace {
 public:
  ConfigSpace(std::vector<FeatureSpec> features, Hardware hardware,
              std::vector<Constraint> constraints);

  static ConfigSpace from_json(const nlohmann::json& doc);
  static ConfigSpace load(const std::string& path);
  nlohmann::json to_json() const;

  const std::vector<FeatureSpec>& features() const { return features_; }
  const FeatureSpec& feature(std::size_t i) const { return features_.at(i); }
  const Hardware& hardware() const { return hardware_; }
  const std::vector<Constraint>& constraints() const { return constraints_; }

  std::size_t num_sparse() const { return sparse_ids_.size(); }
  std::size_t num_dense() const { return dense_ids_.size(); }
  /// Global feature index of a sparse / dense slot.
  std::size_t sparse_feature(std::size_t slot) const { return sparse_ids_.at(slot); }
  std::size_t dense_feature(std::size_t slot) const { return dense_ids_.at(slot); }
  std::size_t slot_of(std::size_t feature) const { return slot_.at(feature); }
  std::optional<std::size_t> index_of(std::string_view name) const;

  /// Value of a feature (by global index) inside a configuration.
  Value value_of(const Configuration& c, std::size_t feature) const;
  Value value_of(const Configuration& c, std::string_view name) const;

  /// True when every predicate of `feature` holds; `lookup` returns the value
  /// of a feature referenced by a predicate.
  bool predicates_hold(const std::vector<Predicate>& preds,
                       const std::function<Value(std::size_t)>& lookup) const;

  /// Whether sparse slot `slot` is active under the (possibly partial)
  /// assignment. Only features earlier in the dependency order are consulted.
  bool sparse_active(std::size_t slot, const SparseAssignment& s) const;

  /// Partial-assignment pruning: false when the assigned values already
  /// violate a global constraint. `assigned[slot]` marks assigned slots.
  bool partial_consistent(const SparseAssignment& s, const std::vector<bool>& assigned) const;

  /// Every global constraint on a complete sparse assignment.
  bool constraints_hold(const SparseAssignment& s) const;

  /// Device allocation for a configuration, using the product constraint's
  /// factors as the world size.
  DeviceAllocation allocate_devices(const SparseAssignment& s) const;

  /// Sparse assignment with every active feature at its default.
  SparseAssignment default_sparse() const;

  /// Deterministic serialization; inactive features serialize as `null`.
  std::string canonical_key(const Configuration& c) const;
  nlohmann::json config_to_json(const Configuration& c) const;
  Configuration config_from_json(const nlohmann::json& j) const;
  nlohmann::json sparse_to_json(const SparseAssignment& s) const;

  /// Topological constraints of sparse features: `deps[slot]` lists sparse slots
  /// referenced by the slot's activation predicate.
  const std::vector<std::vector<std::size_t>>& sparse_dependencies() const { return sparse_deps_; }

  /// A copy of this space keeping only the named features. Predicates and
  /// constraint factors referring to dropped features are removed.
  ConfigSpace restrict_to(const std::vector<std::string>& keep) const;

 private:
  void validate() const;

  std::vector<FeatureSpec> features_;
  Hardware hardware_;
  std::vector<Constraint> constraints_;
  std::vector<std::size_t> sparse_ids_, dense_ids_, slot_;
  std::map<std::string, std::size_t, std::less<>> by_name_;
  std::vector<std::vector<std::size_t>> sparse_deps_;
};

/// M(s).
Mask mask(const ConfigSpace& space, const SparseAssignment& s);

/// Nearest grid value; ties resolve to the smaller value.
std::int64_t nearest_on_grid(const std::vector<std::int64_t>& grid, std::int64_t v);

/// Projection onto X(s): inactive dimensions become inactive, active ones are
/// clamped to the nearest value of their grid (defaults fill previously
/// inactive dimensions).
DenseAssignment project(const ConfigSpace& space, const DenseAssignment& x, const Mask& m);

bool is_feasible(const ConfigSpace& space, const Configuration& c);

/// Calls `sink` for every feasible configuration in deterministic order;
/// stops early when `sink` returns false.
void enumerate(const ConfigSpace& space, const std::function<bool(const Configuration&)>& sink);

/// Every feasible sparse assignment, in enumeration order.
std::vector<SparseAssignment> enumerate_sparse(const ConfigSpace& space);

std::vector<Configuration> enumerate_all(const ConfigSpace& space, std::size_t limit);

std::size_t count_feasible(const ConfigSpace& space);

}  // namespace autoscout
