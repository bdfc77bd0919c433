#include "autoscout/config_space.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace autoscout {

using nlohmann::json;

bool Predicate::holds(const Value& v) const {
  if (!v) return false;
  switch (op) {
    case CompareOp::Greater: return *v > value;
    case CompareOp::GreaterEqual: return *v >= value;
    case CompareOp::Less: return *v < value;
    case CompareOp::LessEqual: return *v <= value;
    case CompareOp::Equal: return *v == value;
    case CompareOp::NotEqual: return *v != value;
  }
  return false;
}

int Hardware::total_devices() const {
  int n = 0;
  for (const auto& d : devices) n += d.count;
  return n;
}

std::vector<std::size_t> Mask::active_slots() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < active.size(); ++i)
    if (active[i]) out.push_back(i);
  return out;
}

namespace {

CompareOp parse_op(const std::string& op) {
  if (op == ">") return CompareOp::Greater;
  if (op == ">=") return CompareOp::GreaterEqual;
  if (op == "<") return CompareOp::Less;
  if (op == "<=") return CompareOp::LessEqual;
  if (op == "==") return CompareOp::Equal;
  if (op == "!=") return CompareOp::NotEqual;
  throw SpaceError("unknown comparison operator '" + op + "'");
}

const char* op_name(CompareOp op) {
  switch (op) {
    case CompareOp::Greater: return ">";
    case CompareOp::GreaterEqual: return ">=";
    case CompareOp::Less: return "<";
    case CompareOp::LessEqual: return "<=";
    case CompareOp::Equal: return "==";
    case CompareOp::NotEqual: return "!=";
  }
  return "?";
}

std::int64_t parse_scalar(const json& v, const std::string& where) {
  if (v.is_boolean()) return v.get<bool>() ? 1 : 0;
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d == static_cast<double>(static_cast<std::int64_t>(d))) return static_cast<std::int64_t>(d);
  }
  throw SpaceError(where + ": values must be integers or booleans");
}

json scalar_json(const FeatureSpec& f, std::int64_t v) {
  if (f.boolean) return json(v != 0);
  return json(v);
}

// Raw predicate before names are resolved.
struct RawPred {
  std::string feature;
  CompareOp op;
  std::int64_t value;
};

std::vector<RawPred> parse_requires(const json& arr, const std::string& owner) {
  std::vector<RawPred> out;
  if (arr.is_null()) return out;
  if (!arr.is_array()) throw SpaceError(owner + ": 'requires' must be an array");
  for (const auto& p : arr) {
    if (!p.is_object() || !p.contains("feature") || !p.contains("op") || !p.contains("value"))
      throw SpaceError(owner + ": predicate needs 'feature', 'op' and 'value'");
    out.push_back({p.at("feature").get<std::string>(), parse_op(p.at("op").get<std::string>()),
                   parse_scalar(p.at("value"), owner)});
  }
  return out;
}

}  // namespace

ConfigSpace::ConfigSpace(std::vector<FeatureSpec> features, Hardware hardware,
                         std::vector<Constraint> constraints)
    : features_(std::move(features)),
      hardware_(std::move(hardware)),
      constraints_(std::move(constraints)) {
  slot_.resize(features_.size());
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (!by_name_.emplace(features_[i].name, i).second)
      throw SpaceError("duplicate feature name '" + features_[i].name + "'");
    if (features_[i].kind == FeatureKind::Sparse) {
      slot_[i] = sparse_ids_.size();
      sparse_ids_.push_back(i);
    } else {
      slot_[i] = dense_ids_.size();
      dense_ids_.push_back(i);
    }
  }
  validate();
  sparse_deps_.resize(sparse_ids_.size());
  for (std::size_t s = 0; s < sparse_ids_.size(); ++s) {
    std::set<std::size_t> deps;
    for (const auto& p : features_[sparse_ids_[s]].requires_) deps.insert(slot_[p.feature]);
    sparse_deps_[s].assign(deps.begin(), deps.end());
  }
  bool any = false;
  enumerate(*this, [&](const Configuration&) {
    any = true;
    return false;
  });
  if (!any) throw SpaceError("no configuration satisfies the constraints");
}

void ConfigSpace::validate() const {
  if (features_.empty()) throw SpaceError("space has no features");
  const std::size_t n = features_.size();

  // Cycle detection over the activation graph (edge: referenced -> gated).
  std::vector<std::vector<std::size_t>> refs(n);
  auto check_ref = [&](const Predicate& p, const std::string& owner) {
    if (p.feature >= n) throw SpaceError(owner + ": predicate references an unknown feature");
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& p : features_[i].requires_) {
      check_ref(p, features_[i].name);
      refs[i].push_back(p.feature);
    }
    for (const auto& g : features_[i].subgrids)
      for (const auto& p : g.when) {
        check_ref(p, features_[i].name);
        refs[i].push_back(p.feature);
      }
  }
  std::vector<int> color(n, 0);
  std::function<void(std::size_t)> dfs = [&](std::size_t u) {
    color[u] = 1;
    for (auto v : refs[u]) {
      if (color[v] == 1)
        throw SpaceError("cyclic activation dependency involving '" + features_[u].name + "' and '" +
                         features_[v].name + "'");
      if (color[v] == 0) dfs(v);
    }
    color[u] = 2;
  };
  for (std::size_t i = 0; i < n; ++i)
    if (color[i] == 0) dfs(i);

  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = features_[i];
    if (f.domain.empty()) throw SpaceError("feature '" + f.name + "' has an empty domain");
    if (std::find(f.domain.begin(), f.domain.end(), f.default_value) == f.domain.end())
      throw SpaceError("feature '" + f.name + "': default is not in the domain");
    if (f.kind == FeatureKind::Dense) {
      for (std::size_t k = 1; k < f.domain.size(); ++k)
        if (!(f.domain[k - 1] < f.domain[k]))
          throw SpaceError("dense feature '" + f.name + "': domain must be strictly increasing");
    } else {
      std::set<std::int64_t> uniq(f.domain.begin(), f.domain.end());
      if (uniq.size() != f.domain.size())
        throw SpaceError("feature '" + f.name + "': duplicate domain values");
    }
    auto check_upstream = [&](const Predicate& p) {
      const auto& g = features_[p.feature];
      if (p.feature >= i)
        throw SpaceError("feature '" + f.name + "' is gated on '" + g.name + "', which is declared later");
      if (g.kind == FeatureKind::Dense)
        throw SpaceError("feature '" + f.name + "' is gated on dense feature '" + g.name + "'");
    };
    for (const auto& p : f.requires_) check_upstream(p);
    for (const auto& sg : f.subgrids) {
      if (f.kind != FeatureKind::Dense)
        throw SpaceError("feature '" + f.name + "': sub-grids are only supported on dense features");
      if (sg.domain.empty()) throw SpaceError("feature '" + f.name + "': empty sub-grid");
      for (auto v : sg.domain)
        if (std::find(f.domain.begin(), f.domain.end(), v) == f.domain.end())
          throw SpaceError("feature '" + f.name + "': sub-grid value outside the domain");
      for (const auto& p : sg.when) check_upstream(p);
    }
  }

  for (const auto& c : constraints_) {
    for (auto fi : c.features) {
      if (fi >= n) throw SpaceError("constraint references an unknown feature");
      if (features_[fi].kind != FeatureKind::Sparse)
        throw SpaceError("constraint references dense feature '" + features_[fi].name + "'");
      if (c.type == Constraint::Type::ProductLeDevices)
        for (auto v : features_[fi].domain)
          if (v < 1)
            throw SpaceError("product constraint factor '" + features_[fi].name + "' must be positive");
    }
    if (c.type == Constraint::Type::Divides && c.features.size() != 2)
      throw SpaceError("divides constraint needs exactly two features");
  }
  for (const auto& d : hardware_.devices)
    if (d.count < 0) throw SpaceError("device class '" + d.name + "' has a negative count");
}

ConfigSpace ConfigSpace::from_json(const json& doc) {
  if (!doc.is_object()) throw SpaceError("space definition must be a JSON object");
  Hardware hw;
  if (doc.contains("hardware")) {
    const auto& h = doc.at("hardware");
    if (!h.is_object() || !h.contains("devices") || !h.at("devices").is_array())
      throw SpaceError("'hardware.devices' must be an array");
    for (const auto& d : h.at("devices")) {
      if (!d.is_object() || !d.contains("class") || !d.contains("count"))
        throw SpaceError("device entries need 'class' and 'count'");
      DeviceClass dc;
      dc.name = d.at("class").get<std::string>();
      dc.count = d.at("count").get<int>();
      dc.mem_gb = d.value("mem_gb", 0.0);
      dc.rel_throughput = d.value("rel_throughput", 1.0);
      hw.devices.push_back(dc);
    }
  }
  if (!doc.contains("features") || !doc.at("features").is_array())
    throw SpaceError("'features' must be an array");

  std::vector<FeatureSpec> feats;
  std::vector<std::vector<RawPred>> raw_requires;
  std::vector<std::vector<std::pair<std::vector<RawPred>, std::vector<std::int64_t>>>> raw_subgrids;
  std::map<std::string, std::size_t> names;
  for (const auto& fj : doc.at("features")) {
    if (!fj.is_object() || !fj.contains("name") || !fj.contains("kind") || !fj.contains("domain"))
      throw SpaceError("features need 'name', 'kind' and 'domain'");
    FeatureSpec f;
    f.name = fj.at("name").get<std::string>();
    const auto kind = fj.at("kind").get<std::string>();
    if (kind == "sparse")
      f.kind = FeatureKind::Sparse;
    else if (kind == "dense")
      f.kind = FeatureKind::Dense;
    else
      throw SpaceError(f.name + ": kind must be 'sparse' or 'dense'");
    const auto& dom = fj.at("domain");
    if (!dom.is_array()) throw SpaceError(f.name + ": domain must be an array");
    bool all_bool = !dom.empty();
    for (const auto& v : dom) {
      all_bool = all_bool && v.is_boolean();
      f.domain.push_back(parse_scalar(v, f.name));
    }
    f.boolean = all_bool;
    if (f.domain.empty()) throw SpaceError("feature '" + f.name + "' has an empty domain");
    if (fj.contains("default"))
      f.default_value = parse_scalar(fj.at("default"), f.name);
    else
      f.default_value = f.boolean ? 0 : *std::min_element(f.domain.begin(), f.domain.end());
    raw_requires.push_back(parse_requires(fj.value("requires", json()), f.name));
    raw_subgrids.emplace_back();
    if (fj.contains("subgrids")) {
      for (const auto& sg : fj.at("subgrids")) {
        std::vector<std::int64_t> d;
        for (const auto& v : sg.at("domain")) d.push_back(parse_scalar(v, f.name));
        raw_subgrids.back().emplace_back(parse_requires(sg.value("requires", json()), f.name), std::move(d));
      }
    }
    names.emplace(f.name, feats.size());
    feats.push_back(std::move(f));
  }
  if (feats.empty()) throw SpaceError("space has no features");

  auto resolve = [&](const std::vector<RawPred>& raws, const std::string& owner) {
    std::vector<Predicate> out;
    for (const auto& r : raws) {
      auto it = names.find(r.feature);
      if (it == names.end())
        throw SpaceError(owner + ": predicate references unknown feature '" + r.feature + "'");
      out.push_back({it->second, r.op, r.value});
    }
    return out;
  };
  for (std::size_t i = 0; i < feats.size(); ++i) {
    feats[i].requires_ = resolve(raw_requires[i], feats[i].name);
    for (auto& [preds, dom] : raw_subgrids[i]) feats[i].subgrids.push_back({resolve(preds, feats[i].name), dom});
  }

  std::vector<Constraint> cons;
  if (doc.contains("constraints")) {
    for (const auto& cj : doc.at("constraints")) {
      const auto type = cj.at("type").get<std::string>();
      auto lookup = [&](const std::string& n) {
        auto it = names.find(n);
        if (it == names.end()) throw SpaceError("constraint references unknown feature '" + n + "'");
        return it->second;
      };
      Constraint c;
      if (type == "product_le_devices") {
        c.type = Constraint::Type::ProductLeDevices;
        for (const auto& n : cj.at("features")) c.features.push_back(lookup(n.get<std::string>()));
      } else if (type == "divides") {
        c.type = Constraint::Type::Divides;
        c.features = {lookup(cj.at("a").get<std::string>()), lookup(cj.at("b").get<std::string>())};
      } else {
        throw SpaceError("unknown constraint type '" + type + "'");
      }
      cons.push_back(std::move(c));
    }
  }
  try {
    return ConfigSpace(std::move(feats), std::move(hw), std::move(cons));
  } catch (const json::exception& e) {
    throw SpaceError(std::string("schema violation: ") + e.what());
  }
}

ConfigSpace ConfigSpace::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpaceError("cannot open space definition '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw SpaceError("malformed JSON in '" + path + "': " + e.what());
  }
  try {
    return from_json(doc);
  } catch (const json::exception& e) {
    throw SpaceError(std::string("schema violation: ") + e.what());
  }
}

json ConfigSpace::to_json() const {
  json doc;
  json devs = json::array();
  for (const auto& d : hardware_.devices)
    devs.push_back({{"class", d.name}, {"count", d.count}, {"mem_gb", d.mem_gb}, {"rel_throughput", d.rel_throughput}});
  doc["hardware"] = {{"devices", devs}};
  auto preds_json = [&](const std::vector<Predicate>& ps) {
    json arr = json::array();
    for (const auto& p : ps)
      arr.push_back({{"feature", features_[p.feature].name}, {"op", op_name(p.op)},
                     {"value", scalar_json(features_[p.feature], p.value)}});
    return arr;
  };
  json fs = json::array();
  for (const auto& f : features_) {
    json fj;
    fj["name"] = f.name;
    fj["kind"] = f.kind == FeatureKind::Sparse ? "sparse" : "dense";
    json dom = json::array();
    for (auto v : f.domain) dom.push_back(scalar_json(f, v));
    fj["domain"] = dom;
    fj["default"] = scalar_json(f, f.default_value);
    if (!f.requires_.empty()) fj["requires"] = preds_json(f.requires_);
    if (!f.subgrids.empty()) {
      json sgs = json::array();
      for (const auto& sg : f.subgrids) sgs.push_back({{"requires", preds_json(sg.when)}, {"domain", sg.domain}});
      fj["subgrids"] = sgs;
    }
    fs.push_back(fj);
  }
  doc["features"] = fs;
  json cs = json::array();
  for (const auto& c : constraints_) {
    if (c.type == Constraint::Type::ProductLeDevices) {
      json names = json::array();
      for (auto fi : c.features) names.push_back(features_[fi].name);
      cs.push_back({{"type", "product_le_devices"}, {"features", names}});
    } else {
      cs.push_back({{"type", "divides"}, {"a", features_[c.features[0]].name}, {"b", features_[c.features[1]].name}});
    }
  }
  doc["constraints"] = cs;
  return doc;
}

std::optional<std::size_t> ConfigSpace::index_of(std::string_view name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

Value ConfigSpace::value_of(const Configuration& c, std::size_t feature) const {
  const auto slot = slot_[feature];
  return features_[feature].kind == FeatureKind::Sparse ? c.sparse.values.at(slot) : c.dense.values.at(slot);
}

Value ConfigSpace::value_of(const Configuration& c, std::string_view name) const {
  auto i = index_of(name);
  if (!i) return std::nullopt;
  return value_of(c, *i);
}

bool ConfigSpace::predicates_hold(const std::vector<Predicate>& preds,
                                  const std::function<Value(std::size_t)>& lookup) const {
  return std::all_of(preds.begin(), preds.end(), [&](const Predicate& p) { return p.holds(lookup(p.feature)); });
}

bool ConfigSpace::sparse_active(std::size_t slot, const SparseAssignment& s) const {
  const auto& f = features_[sparse_ids_[slot]];
  for (const auto& p : f.requires_)
    if (!p.holds(s.values[slot_[p.feature]])) return false;
  return true;
}

bool ConfigSpace::partial_consistent(const SparseAssignment& s, const std::vector<bool>& assigned) const {
  const int devices = hardware_.total_devices();
  for (const auto& c : constraints_) {
    if (c.type == Constraint::Type::ProductLeDevices) {
      // Factors are positive, so the partial product is a lower bound.
      std::int64_t prod = 1;
      for (auto fi : c.features) {
        const auto slot = slot_[fi];
        if (assigned[slot] && s.values[slot]) prod *= *s.values[slot];
        if (prod > devices) return false;
      }
    } else {
      const auto a = slot_[c.features[0]], b = slot_[c.features[1]];
      if (assigned[a] && assigned[b] && s.values[a] && s.values[b]) {
        if (*s.values[a] == 0 || *s.values[b] % *s.values[a] != 0) return false;
      }
    }
  }
  return true;
}

bool ConfigSpace::constraints_hold(const SparseAssignment& s) const {
  return partial_consistent(s, std::vector<bool>(sparse_ids_.size(), true));
}

DeviceAllocation ConfigSpace::allocate_devices(const SparseAssignment& s) const {
  DeviceAllocation out;
  std::int64_t world = 1;
  for (const auto& c : constraints_) {
    if (c.type != Constraint::Type::ProductLeDevices) continue;
    world = 1;
    for (auto fi : c.features)
      if (auto v = s.values[slot_[fi]]) world *= *v;
    break;
  }
  out.world = static_cast<int>(world);
  out.per_class.assign(hardware_.devices.size(), 0);
  std::vector<std::size_t> order(hardware_.devices.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return hardware_.devices[a].rel_throughput > hardware_.devices[b].rel_throughput;
  });
  std::int64_t remaining = world;
  out.min_throughput = std::numeric_limits<double>::infinity();
  out.min_mem_gb = std::numeric_limits<double>::infinity();
  for (auto k : order) {
    if (remaining <= 0) break;
    const auto& d = hardware_.devices[k];
    const auto take = std::min<std::int64_t>(d.count, remaining);
    if (take <= 0) continue;
    out.per_class[k] = static_cast<int>(take);
    remaining -= take;
    out.min_throughput = std::min(out.min_throughput, d.rel_throughput);
    out.min_mem_gb = std::min(out.min_mem_gb, d.mem_gb);
  }
  if (!std::isfinite(out.min_throughput)) out.min_throughput = 1.0;
  if (!std::isfinite(out.min_mem_gb)) out.min_mem_gb = 0.0;
  return out;
}

SparseAssignment ConfigSpace::default_sparse() const {
  SparseAssignment s;
  s.values.resize(sparse_ids_.size());
  for (std::size_t slot = 0; slot < sparse_ids_.size(); ++slot)
    s.values[slot] = sparse_active(slot, s) ? Value(features_[sparse_ids_[slot]].default_value) : std::nullopt;
  return s;
}

std::string ConfigSpace::canonical_key(const Configuration& c) const {
  std::string key;
  key.reserve(features_.size() * 8);
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (i) key += ',';
    key += features_[i].name;
    key += '=';
    const auto v = value_of(c, i);
    key += v ? std::to_string(*v) : std::string("null");
  }
  return key;
}

json ConfigSpace::config_to_json(const Configuration& c) const {
  json j = json::object();
  for (std::size_t i = 0; i < features_.size(); ++i) {
    const auto v = value_of(c, i);
    j[features_[i].name] = v ? scalar_json(features_[i], *v) : json(nullptr);
  }
  return j;
}

json ConfigSpace::sparse_to_json(const SparseAssignment& s) const {
  json j = json::object();
  for (std::size_t slot = 0; slot < sparse_ids_.size(); ++slot) {
    const auto& f = features_[sparse_ids_[slot]];
    j[f.name] = s.values[slot] ? scalar_json(f, *s.values[slot]) : json(nullptr);
  }
  return j;
}

Configuration ConfigSpace::config_from_json(const json& j) const {
  Configuration c;
  c.sparse.values.resize(sparse_ids_.size());
  c.dense.values.resize(dense_ids_.size());
  for (std::size_t i = 0; i < features_.size(); ++i) {
    const auto& f = features_[i];
    Value v;
    if (j.contains(f.name) && !j.at(f.name).is_null()) v = parse_scalar(j.at(f.name), f.name);
    (f.kind == FeatureKind::Sparse ? c.sparse.values : c.dense.values)[slot_[i]] = v;
  }
  return c;
}

ConfigSpace ConfigSpace::restrict_to(const std::vector<std::string>& keep) const {
  std::set<std::string> k(keep.begin(), keep.end());
  std::vector<std::size_t> remap(features_.size(), SIZE_MAX);
  std::vector<FeatureSpec> out;
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (!k.count(features_[i].name)) continue;
    remap[i] = out.size();
    out.push_back(features_[i]);
  }
  auto fix = [&](std::vector<Predicate> ps) {
    std::vector<Predicate> r;
    for (auto p : ps)
      if (remap[p.feature] != SIZE_MAX) {
        p.feature = remap[p.feature];
        r.push_back(p);
      }
    return r;
  };
  for (auto& f : out) {
    f.requires_ = fix(f.requires_);
    for (auto& sg : f.subgrids) sg.when = fix(sg.when);
  }
  std::vector<Constraint> cons;
  for (auto c : constraints_) {
    std::vector<std::size_t> fs;
    for (auto fi : c.features)
      if (remap[fi] != SIZE_MAX) fs.push_back(remap[fi]);
    if (c.type == Constraint::Type::Divides && fs.size() != 2) continue;
    if (fs.empty()) continue;
    c.features = fs;
    cons.push_back(c);
  }
  return ConfigSpace(std::move(out), hardware_, std::move(cons));
}

// ---------------------------------------------------------------------------

Mask mask(const ConfigSpace& space, const SparseAssignment& s) {
  Mask m;
  const auto nd = space.num_dense();
  m.active.assign(nd, false);
  m.grids.assign(nd, {});
  auto lookup = [&](std::size_t fi) { return s.values[space.slot_of(fi)]; };
  for (std::size_t slot = 0; slot < nd; ++slot) {
    const auto& f = space.feature(space.dense_feature(slot));
    if (!space.predicates_hold(f.requires_, lookup)) continue;
    m.active[slot] = true;
    m.grids[slot] = f.domain;
    for (const auto& sg : f.subgrids) {
      if (space.predicates_hold(sg.when, lookup)) {
        m.grids[slot] = sg.domain;
        std::sort(m.grids[slot].begin(), m.grids[slot].end());
        break;
      }
    }
  }
  return m;
}

std::int64_t nearest_on_grid(const std::vector<std::int64_t>& grid, std::int64_t v) {
  std::int64_t best = grid.front();
  for (auto g : grid) {
    const auto d = g > v ? g - v : v - g;
    const auto bd = best > v ? best - v : v - best;
    if (d < bd || (d == bd && g < best)) best = g;
  }
  return best;
}

DenseAssignment project(const ConfigSpace& space, const DenseAssignment& x, const Mask& m) {
  DenseAssignment out;
  out.values.resize(space.num_dense());
  for (std::size_t slot = 0; slot < space.num_dense(); ++slot) {
    if (!m.active[slot]) continue;
    const auto& grid = m.grids[slot];
    const auto v = (slot < x.values.size() && x.values[slot]) ? *x.values[slot]
                                                                : space.feature(space.dense_feature(slot)).default_value;
    out.values[slot] = nearest_on_grid(grid, v);
  }
  return out;
}

bool is_feasible(const ConfigSpace& space, const Configuration& c) {
  if (c.sparse.values.size() != space.num_sparse() || c.dense.values.size() != space.num_dense()) return false;
  for (std::size_t slot = 0; slot < space.num_sparse(); ++slot) {
    const auto& f = space.feature(space.sparse_feature(slot));
    const bool active = space.sparse_active(slot, c.sparse);
    const auto& v = c.sparse.values[slot];
    if (active != v.has_value()) return false;
    if (v && std::find(f.domain.begin(), f.domain.end(), *v) == f.domain.end()) return false;
  }
  if (!space.constraints_hold(c.sparse)) return false;
  const auto m = mask(space, c.sparse);
  for (std::size_t slot = 0; slot < space.num_dense(); ++slot) {
    const auto& v = c.dense.values[slot];
    if (m.active[slot] != v.has_value()) return false;
    if (v && !std::binary_search(m.grids[slot].begin(), m.grids[slot].end(), *v)) return false;
  }
  return true;
}

namespace {

// Depth-first walk over sparse slots in declaration order.
bool walk_sparse(const ConfigSpace& space, SparseAssignment& s, std::vector<bool>& assigned, std::size_t slot,
                 const std::function<bool(const SparseAssignment&)>& sink) {
  if (slot == space.num_sparse()) return sink(s);
  assigned[slot] = true;
  if (!space.sparse_active(slot, s)) {
    s.values[slot] = std::nullopt;
    const bool go = walk_sparse(space, s, assigned, slot + 1, sink);
    assigned[slot] = false;
    return go;
  }
  for (auto v : space.feature(space.sparse_feature(slot)).domain) {
    s.values[slot] = v;
    if (!space.partial_consistent(s, assigned)) continue;
    if (!walk_sparse(space, s, assigned, slot + 1, sink)) {
      assigned[slot] = false;
      return false;
    }
  }
  s.values[slot] = std::nullopt;
  assigned[slot] = false;
  return true;
}

bool walk_dense(const Mask& m, DenseAssignment& x, std::size_t slot, const Configuration& base,
                const std::function<bool(const Configuration&)>& sink) {
  if (slot == m.active.size()) {
    Configuration c{base.sparse, x};
    return sink(c);
  }
  if (!m.active[slot]) {
    x.values[slot] = std::nullopt;
    return walk_dense(m, x, slot + 1, base, sink);
  }
  for (auto v : m.grids[slot]) {
    x.values[slot] = v;
    if (!walk_dense(m, x, slot + 1, base, sink)) return false;
  }
  return true;
}

}  // namespace

void enumerate(const ConfigSpace& space, const std::function<bool(const Configuration&)>& sink) {
  SparseAssignment s;
  s.values.resize(space.num_sparse());
  std::vector<bool> assigned(space.num_sparse(), false);
  walk_sparse(space, s, assigned, 0, [&](const SparseAssignment& full) {
    const auto m = mask(space, full);
    DenseAssignment x;
    x.values.resize(space.num_dense());
    Configuration base{full, {}};
    return walk_dense(m, x, 0, base, sink);
  });
}

std::vector<SparseAssignment> enumerate_sparse(const ConfigSpace& space) {
  std::vector<SparseAssignment> out;
  SparseAssignment s;
  s.values.resize(space.num_sparse());
  std::vector<bool> assigned(space.num_sparse(), false);
  walk_sparse(space, s, assigned, 0, [&](const SparseAssignment& full) {
    out.push_back(full);
    return true;
  });
  return out;
}

std::vector<Configuration> enumerate_all(const ConfigSpace& space, std::size_t limit) {
  std::vector<Configuration> out;
  bool overflow = false;
  enumerate(space, [&](const Configuration& c) {
    if (out.size() >= limit) {
      overflow = true;
      return false;
    }
    out.push_back(c);
    return true;
  });
  if (overflow) throw SpaceError("space exceeds the enumeration limit of " + std::to_string(limit));
  return out;
}

std::size_t count_feasible(const ConfigSpace& space) {
  std::size_t n = 0;
  enumerate(space, [&](const Configuration&) {
    ++n;
    return true;
  });
  return n;
}

}  // namespace autoscout
