#include "autoscout/sparse_optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace autoscout {

bool is_valid_ordering(const ConfigSpace& space, const std::vector<std::size_t>& order) {
  const auto n = space.num_sparse();
  if (order.size() != n) return false;
  std::vector<std::size_t> pos(n, SIZE_MAX);
  for (std::size_t i = 0; i < n; ++i) {
    if (order[i] >= n || pos[order[i]] != SIZE_MAX) return false;
    pos[order[i]] = i;
  }
  const auto& deps = space.sparse_dependencies();
  for (std::size_t slot = 0; slot < n; ++slot)
    for (auto d : deps[slot])
      if (pos[d] > pos[slot]) return false;
  return true;
}

namespace {

// Kahn's algorithm; among ready slots the one with the lowest key goes first.
std::vector<std::size_t> topo_order(const ConfigSpace& space, const std::vector<double>& key) {
  const auto n = space.num_sparse();
  const auto& deps = space.sparse_dependencies();
  std::vector<std::size_t> indeg(n, 0);
  std::vector<std::vector<std::size_t>> out(n);
  for (std::size_t s = 0; s < n; ++s)
    for (auto d : deps[s]) {
      ++indeg[s];
      out[d].push_back(s);
    }
  std::vector<std::size_t> order;
  std::vector<bool> done(n, false);
  while (order.size() < n) {
    std::size_t pick = SIZE_MAX;
    for (std::size_t s = 0; s < n; ++s)
      if (!done[s] && indeg[s] == 0 && (pick == SIZE_MAX || key[s] < key[pick])) pick = s;
    done[pick] = true;
    order.push_back(pick);
    for (auto t : out[pick]) --indeg[t];
  }
  return order;
}

}  // namespace

std::vector<TreeStructure> candidate_orderings(const ConfigSpace& space, std::size_t k, std::uint64_t seed) {
  const auto n = space.num_sparse();
  std::vector<TreeStructure> out;
  std::set<std::vector<std::size_t>> seen;
  auto offer = [&](std::vector<std::size_t> order) {
    if (out.size() < k && seen.insert(order).second) out.push_back({std::move(order)});
  };

  std::vector<double> key(n);
  std::iota(key.begin(), key.end(), 0.0);
  offer(topo_order(space, key));
  for (std::size_t s = 0; s < n; ++s) key[s] = -static_cast<double>(s);
  offer(topo_order(space, key));
  // Integer-valued (parallelism degree style) features first, widest domain first.
  for (std::size_t s = 0; s < n; ++s) {
    const auto& f = space.feature(space.sparse_feature(s));
    key[s] = (f.boolean ? 1000.0 : 0.0) - static_cast<double>(f.domain.size()) + 1e-3 * static_cast<double>(s);
  }
  offer(topo_order(space, key));

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int attempt = 0; out.size() < k && attempt < 200; ++attempt) {
    for (auto& x : key) x = u(rng);
    offer(topo_order(space, key));
  }
  while (out.size() < k) out.push_back(out[out.size() % std::max<std::size_t>(seen.size(), 1)]);
  return out;
}

std::vector<TreeStructure> orderings_from_json(const ConfigSpace& space, const nlohmann::json& doc) {
  if (!doc.is_array()) throw SpaceError("orderings file must be a JSON array of name arrays");
  std::vector<TreeStructure> out;
  for (const auto& arr : doc) {
    TreeStructure t;
    for (const auto& name : arr) {
      auto idx = space.index_of(name.get<std::string>());
      if (!idx || space.feature(*idx).kind != FeatureKind::Sparse)
        throw SpaceError("ordering references unknown sparse feature '" + name.get<std::string>() + "'");
      t.order.push_back(space.slot_of(*idx));
    }
    if (!is_valid_ordering(space, t.order)) throw SpaceError("ordering violates activation dependencies");
    out.push_back(std::move(t));
  }
  return out;
}

namespace {

template <class ValueOrder>
bool extend(const ConfigSpace& space, PartialAssignment& p, const std::vector<std::size_t>& order, std::size_t depth,
            ValueOrder&& value_order) {
  if (depth == order.size()) return space.constraints_hold(p.values);
  const auto slot = order[depth];
  p.assigned[slot] = true;
  if (!space.sparse_active(slot, p.values)) {
    p.values.values[slot] = std::nullopt;
    if (extend(space, p, order, depth + 1, value_order)) return true;
  } else {
    for (auto v : value_order(space.feature(space.sparse_feature(slot)).domain)) {
      p.values.values[slot] = v;
      if (space.partial_consistent(p.values, p.assigned) && extend(space, p, order, depth + 1, value_order))
        return true;
    }
  }
  p.values.values[slot] = std::nullopt;
  p.assigned[slot] = false;
  return false;
}

}  // namespace

bool extensible(const ConfigSpace& space, PartialAssignment& partial, const std::vector<std::size_t>& order,
                std::size_t depth) {
  if (!space.partial_consistent(partial.values, partial.assigned)) return false;
  PartialAssignment scratch = partial;
  return extend(space, scratch, order, depth, [](const std::vector<std::int64_t>& d) { return d; });
}

bool complete_random(const ConfigSpace& space, PartialAssignment& partial, const std::vector<std::size_t>& order,
                     std::size_t depth, std::mt19937_64& rng) {
  return extend(space, partial, order, depth, [&rng](std::vector<std::int64_t> d) {
    std::shuffle(d.begin(), d.end(), rng);
    return d;
  });
}

double uct_score(double child_reward, std::int64_t child_visits, std::int64_t parent_visits, double c_uct) {
  if (child_visits <= 0) return std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(child_visits);
  const double lnp = std::log(static_cast<double>(std::max<std::int64_t>(parent_visits, 1)));
  return child_reward / n + c_uct * std::sqrt(lnp / n);
}

MctsTree::MctsTree(const ConfigSpace& space, TreeStructure structure, double c_uct, std::uint64_t seed)
    : space_(&space), structure_(std::move(structure)), c_uct_(c_uct), rng_(seed) {
  if (!is_valid_ordering(space, structure_.order))
    throw SpaceError("tree ordering is not a dependency-consistent permutation of the sparse features");
  nodes_.push_back(MctsNode{});
}

void MctsTree::ensure_candidates(std::size_t node, PartialAssignment& partial) {
  if (nodes_[node].candidates_ready) return;
  const auto depth = nodes_[node].depth;
  const auto slot = structure_.order[depth];
  std::vector<Value> cands;
  partial.assigned[slot] = true;
  if (!space_->sparse_active(slot, partial.values)) {
    partial.values.values[slot] = std::nullopt;
    if (extensible(*space_, partial, structure_.order, depth + 1)) cands.push_back(std::nullopt);
  } else {
    for (auto v : space_->feature(space_->sparse_feature(slot)).domain) {
      partial.values.values[slot] = v;
      if (extensible(*space_, partial, structure_.order, depth + 1)) cands.push_back(v);
    }
  }
  partial.values.values[slot] = std::nullopt;
  partial.assigned[slot] = false;
  nodes_[node].candidates = std::move(cands);
  nodes_[node].candidates_ready = true;
}

std::optional<std::size_t> MctsTree::find_child(std::size_t node, const Value& v) const {
  for (const auto& [val, idx] : nodes_[node].children)
    if (val == v) return idx;
  return std::nullopt;
}

std::size_t MctsTree::add_child(std::size_t node, const Value& v) {
  MctsNode child;
  child.depth = nodes_[node].depth + 1;
  child.edge = v;
  child.parent = static_cast<std::int64_t>(node);
  nodes_.push_back(std::move(child));
  const auto idx = nodes_.size() - 1;
  nodes_[node].children.emplace_back(v, idx);
  return idx;
}

SparseAssignment MctsTree::propose() {
  return propose([this](const PartialAssignment& p, std::size_t depth) {
    PartialAssignment work = p;
    if (!complete_random(*space_, work, structure_.order, depth, rng_))
      throw SpaceInfeasibleError("no feasible completion of the partial assignment");
    return work.values;
  });
}

SparseAssignment MctsTree::propose(const Completer& completer) {
  const auto& order = structure_.order;
  const auto n = order.size();
  PartialAssignment partial(space_->num_sparse());
  std::size_t node = 0;
  while (nodes_[node].depth < n) {
    ensure_candidates(node, partial);
    const auto& cands = nodes_[node].candidates;
    if (cands.empty()) throw SpaceInfeasibleError("no feasible extension from the search tree root");
    const auto slot = order[nodes_[node].depth];

    std::vector<Value> unexpanded;
    for (const auto& v : cands)
      if (!find_child(node, v)) unexpanded.push_back(v);
    if (!unexpanded.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, unexpanded.size() - 1);
      const auto v = unexpanded[pick(rng_)];
      const auto child = add_child(node, v);
      partial.values.values[slot] = v;
      partial.assigned[slot] = true;
      return completer(partial, nodes_[child].depth);
    }

    // Fully expanded: unvisited children first, then UCT; ties to the lowest index.
    std::size_t best = SIZE_MAX;
    double best_score = -std::numeric_limits<double>::infinity();
    for (const auto& v : cands) {
      const auto c = *find_child(node, v);
      const double score = uct_score(nodes_[c].reward, nodes_[c].visits, nodes_[node].visits, c_uct_);
      if (best == SIZE_MAX || score > best_score) {
        best = c;
        best_score = score;
      }
    }
    partial.values.values[slot] = nodes_[best].edge;
    partial.assigned[slot] = true;
    node = best;
  }
  return partial.values;
}

void MctsTree::backpropagate(const SparseAssignment& s, double reward) {
  std::size_t node = 0;
  nodes_[node].visits += 1;
  nodes_[node].reward += reward;
  for (std::size_t depth = 0; depth < structure_.order.size(); ++depth) {
    const auto& v = s.values.at(structure_.order[depth]);
    auto child = find_child(node, v);
    node = child ? *child : add_child(node, v);
    nodes_[node].visits += 1;
    nodes_[node].reward += reward;
  }
}

std::optional<SparseAssignment> MctsTree::best_path() const {
  SparseAssignment s;
  s.values.resize(space_->num_sparse());
  std::size_t node = 0;
  while (nodes_[node].depth < structure_.order.size()) {
    std::size_t best = SIZE_MAX;
    for (const auto& [v, c] : nodes_[node].children) {
      if (nodes_[c].visits <= 0) continue;
      if (best == SIZE_MAX || nodes_[c].mean() > nodes_[best].mean()) best = c;
    }
    if (best == SIZE_MAX) return std::nullopt;
    s.values[structure_.order[nodes_[node].depth]] = nodes_[best].edge;
    node = best;
  }
  return s;
}

std::vector<MctsTree::Leaf> MctsTree::leaves() const {
  std::vector<Leaf> out;
  const auto n = structure_.order.size();
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].depth != n) continue;
    SparseAssignment s;
    s.values.resize(space_->num_sparse());
    for (auto cur = static_cast<std::int64_t>(i); nodes_[cur].parent >= 0; cur = nodes_[cur].parent)
      s.values[structure_.order[nodes_[cur].depth - 1]] = nodes_[cur].edge;
    out.push_back({std::move(s), nodes_[i].visits, nodes_[i].reward});
  }
  std::sort(out.begin(), out.end(), [](const Leaf& a, const Leaf& b) { return a.assignment < b.assignment; });
  return out;
}

std::string MctsTree::path_label(std::size_t node) const {
  std::vector<std::string> parts;
  for (auto cur = static_cast<std::int64_t>(node); nodes_[cur].parent >= 0; cur = nodes_[cur].parent) {
    const auto& f = space_->feature(space_->sparse_feature(structure_.order[nodes_[cur].depth - 1]));
    const auto& v = nodes_[cur].edge;
    parts.push_back(f.name + "=" + (v ? std::to_string(*v) : std::string("null")));
  }
  std::string label = "/";
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (label.size() > 1) label += '/';
    label += *it;
  }
  return label;
}

nlohmann::json MctsTree::export_stats() const {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    j[path_label(i)] = {{"N", nodes_[i].visits}, {"W", nodes_[i].reward}};
  return j;
}

// ---------------------------------------------------------------------------

Tournament::Tournament(std::size_t k) : cumulative_(std::max<std::size_t>(k, 1), 0.0) {
  survivors_.resize(cumulative_.size());
  std::iota(survivors_.begin(), survivors_.end(), 0);
}

std::vector<std::size_t> Tournament::round_order() const {
  auto order = survivors_;
  if (round_ % 2 == 1) std::reverse(order.begin(), order.end());
  return order;
}

std::size_t Tournament::next() const {
  if (complete()) return winner();
  return round_order()[position_];
}

void Tournament::record(std::size_t proposer, double reward) {
  if (complete()) return;
  if (proposer != next()) throw std::logic_error("tournament: proposal out of schedule");
  cumulative_[proposer] += reward;
  if (++position_ < survivors_.size()) return;

  auto ranked = survivors_;
  std::stable_sort(ranked.begin(), ranked.end(),
                   [&](std::size_t a, std::size_t b) { return cumulative_[a] > cumulative_[b]; });
  ranked.resize((ranked.size() + 1) / 2);
  std::sort(ranked.begin(), ranked.end());
  survivors_ = std::move(ranked);
  ++round_;
  ++halvings_;
  position_ = 0;
}

std::size_t Tournament::winner() const {
  if (!complete()) throw std::logic_error("tournament still running");
  return survivors_.front();
}

}  // namespace autoscout
