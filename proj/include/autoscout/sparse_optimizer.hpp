#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <json.hpp>

#include "autoscout/config_space.hpp"

namespace autoscout {

/// A sparse assignment under construction; `assigned[slot]` distinguishes
/// "not decided yet" from "decided inactive".
struct PartialAssignment {
  SparseAssignment values;
  std::vector<bool> assigned;

  explicit PartialAssignment(std::size_t n) : assigned(n, false) { values.values.resize(n); }
};

/// Feature ordering of one search tree (a permutation of sparse slots).
struct TreeStructure {
  std::vector<std::size_t> order;
  bool operator==(const TreeStructure&) const = default;
};

/// True if `order` is a permutation of the sparse slots in which every gated
/// feature comes after the features its predicate references.
bool is_valid_ordering(const ConfigSpace& space, const std::vector<std::size_t>& order);

/// Up to `k` topologically valid orderings: declaration order, reverse,
/// parallelism degrees first, then seeded random shuffles. Duplicates are only
/// produced when the space admits fewer than `k` distinct orderings.
std::vector<TreeStructure> candidate_orderings(const ConfigSpace& space, std::size_t k, std::uint64_t seed);

/// Orderings from a JSON array of feature-name arrays (warm start from past runs).
std::vector<TreeStructure> orderings_from_json(const ConfigSpace& space, const nlohmann::json& doc);

/// Whether the partial assignment (decided along `order[0..depth)`) extends to
/// a complete assignment satisfying every global constraint.
bool extensible(const ConfigSpace& space, PartialAssignment& partial, const std::vector<std::size_t>& order,
                std::size_t depth);

/// Random feasible completion of `partial`, deciding `order[depth..]` with
/// uniformly shuffled value orders. Returns false if no completion exists.
bool complete_random(const ConfigSpace& space, PartialAssignment& partial, const std::vector<std::size_t>& order,
                     std::size_t depth, std::mt19937_64& rng);

struct MctsNode {
  std::size_t depth = 0;
  Value edge;                 // value of order[depth-1] leading here
  std::int64_t parent = -1;
  std::vector<std::pair<Value, std::size_t>> children;
  std::vector<Value> candidates;  // extensible values of order[depth]
  bool candidates_ready = false;
  std::int64_t visits = 0;
  double reward = 0.0;  // cumulative

  double mean() const { return visits > 0 ? reward / static_cast<double>(visits) : 0.0; }
};

/// UCT score of a child; +inf for unvisited children.
double uct_score(double child_reward, std::int64_t child_visits, std::int64_t parent_visits, double c_uct);

class SpaceInfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Monte Carlo search tree over sparse features in a fixed order.
class MctsTree {
 public:
  /// Completes a partial assignment (decided along the tree's order up to
  /// `depth`) into a full feasible sparse assignment.
  using Completer = std::function<SparseAssignment(const PartialAssignment&, std::size_t depth)>;

  MctsTree(const ConfigSpace& space, TreeStructure structure, double c_uct, std::uint64_t seed);

  /// UCT descent, single-node expansion, rollout via `completer`.
  SparseAssignment propose(const Completer& completer);
  /// Same, with the seeded uniform-random rollout.
  SparseAssignment propose();

  /// Adds one visit and `reward` to every node on the path of `s`, creating
  /// missing nodes.
  void backpropagate(const SparseAssignment& s, double reward);

  /// Greedy descent by mean reward over visited children; nullopt while the
  /// tree holds no complete path.
  std::optional<SparseAssignment> best_path() const;

  const TreeStructure& structure() const { return structure_; }
  const MctsNode& root() const { return nodes_.front(); }
  const std::vector<MctsNode>& nodes() const { return nodes_; }
  std::size_t node_count() const { return nodes_.size(); }
  double c_uct() const { return c_uct_; }

  /// (assignment, visits, cumulative reward) for every complete path.
  struct Leaf {
    SparseAssignment assignment;
    std::int64_t visits;
    double reward;
  };
  std::vector<Leaf> leaves() const;

  /// Node path -> {N, W}.
  nlohmann::json export_stats() const;

 private:
  void ensure_candidates(std::size_t node, PartialAssignment& partial);
  std::optional<std::size_t> find_child(std::size_t node, const Value& v) const;
  std::size_t add_child(std::size_t node, const Value& v);
  std::string path_label(std::size_t node) const;

  const ConfigSpace* space_;
  TreeStructure structure_;
  double c_uct_;
  std::mt19937_64 rng_;
  std::vector<MctsNode> nodes_;
};

/// Successive-halving tournament over K candidate trees with a zigzag
/// proposal schedule (ascending on even rounds, descending on odd rounds).
class Tournament {
 public:
  explicit Tournament(std::size_t k);

  bool complete() const { return survivors_.size() <= 1; }
  /// Index (0-based, original numbering) of the tree proposing next.
  std::size_t next() const;
  /// Credits `reward` to `proposer`; at the end of a round keeps the top
  /// ceil(n/2) survivors by cumulative reward (ties: lower index).
  void record(std::size_t proposer, double reward);

  std::size_t winner() const;
  std::size_t k() const { return cumulative_.size(); }
  std::size_t round() const { return round_; }
  std::size_t halvings() const { return halvings_; }
  const std::vector<std::size_t>& survivors() const { return survivors_; }
  std::vector<std::size_t> round_order() const;
  double cumulative(std::size_t i) const { return cumulative_.at(i); }

 private:
  std::vector<double> cumulative_;
  std::vector<std::size_t> survivors_;  // ascending original index
  std::size_t round_ = 0;
  std::size_t position_ = 0;
  std::size_t halvings_ = 0;
};

}  // namespace autoscout
