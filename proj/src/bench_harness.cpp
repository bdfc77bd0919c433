#include "autoscout/bench_harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

namespace autoscout {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

Hardware paper_cluster() {
  return Hardware{{{"a100", 8, 80.0, 1.0}, {"a40", 4, 48.0, 0.55}}};
}

SyntheticClusterModel preset(std::string name, double p_mem, double a_mem) {
  SyntheticClusterModel m;
  m.name = std::move(name);
  m.hardware = paper_cluster();
  m.p_mem = p_mem;
  m.a_mem = a_mem;
  return m;
}

}  // namespace

SyntheticClusterModel SyntheticClusterModel::from_json(const json& j) {
  SyntheticClusterModel m;
  m.name = j.value("name", std::string("custom"));
  if (j.contains("hardware")) {
    for (const auto& d : j.at("hardware").at("devices"))
      m.hardware.devices.push_back({d.at("class").get<std::string>(), d.at("count").get<int>(),
                                    d.at("mem_gb").get<double>(), d.value("rel_throughput", 1.0)});
  } else {
    m.hardware = paper_cluster();
  }
  m.f_work = j.value("f_work", m.f_work);
  m.p_mem = j.value("p_mem", m.p_mem);
  m.a_mem = j.value("a_mem", m.a_mem);
  m.global_batch = j.value("global_batch", m.global_batch);
  m.alpha_tp = j.value("alpha_tp", m.alpha_tp);
  m.alpha_dp = j.value("alpha_dp", m.alpha_dp);
  m.r_ar = j.value("r_ar", m.r_ar);
  m.sp_discount = j.value("sp_discount", m.sp_discount);
  for (double v : {m.f_work, m.p_mem, m.a_mem, m.global_batch, m.alpha_tp, m.alpha_dp, m.r_ar, m.sp_discount})
    if (!(v > 0.0)) throw std::invalid_argument("preset '" + m.name + "': constants must be positive");
  if (m.hardware.devices.empty()) throw std::invalid_argument("preset '" + m.name + "': no devices");
  return m;
}

SyntheticClusterModel SyntheticClusterModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open preset file: " + path);
  return from_json(json::parse(in));
}

json SyntheticClusterModel::to_json() const {
  json devs = json::array();
  for (const auto& d : hardware.devices)
    devs.push_back({{"class", d.name}, {"count", d.count}, {"mem_gb", d.mem_gb}, {"rel_throughput", d.rel_throughput}});
  return {{"name", name},
          {"hardware", {{"devices", devs}}},
          {"f_work", f_work},
          {"p_mem", p_mem},
          {"a_mem", a_mem},
          {"global_batch", global_batch},
          {"alpha_tp", alpha_tp},
          {"alpha_dp", alpha_dp},
          {"r_ar", r_ar},
          {"sp_discount", sp_discount}};
}

std::string SyntheticClusterModel::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : to_json().dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> builtin_preset_names() { return {"dense-3B", "vl-8B", "moe-30B"}; }

SyntheticClusterModel builtin_preset(const std::string& name) {
  if (name == "dense-3B") return preset(name, 48.0, 8.0);
  if (name == "vl-8B") return preset(name, 128.0, 8.0);
  if (name == "moe-30B") return preset(name, 480.0, 6.0);
  throw std::invalid_argument("unknown builtin preset: " + name);
}

SyntheticClusterModel resolve_preset(const std::string& ref, const fs::path& base_dir) {
  constexpr std::string_view prefix = "builtin:";
  if (ref.rfind(prefix, 0) == 0) return builtin_preset(ref.substr(prefix.size()));
  const auto names = builtin_preset_names();
  if (std::find(names.begin(), names.end(), ref) != names.end()) return builtin_preset(ref);
  fs::path p(ref);
  if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
  return SyntheticClusterModel::load(p.string());
}

// ---------------------------------------------------------------------------

double synthetic_cost(const SyntheticClusterModel& m, const ConfigSpace& space, const Configuration& c) {
  auto get = [&](std::string_view name, double fallback) {
    const auto v = space.index_of(name) ? space.value_of(c, name) : Value{};
    return v ? static_cast<double>(*v) : fallback;
  };
  const double pp = get("pp", 1), tp = get("tp", 1), dp = get("dp", 1), ep = get("ep", 1), cp = get("cp", 1);
  const bool sp = get("sp", 0) != 0.0, ar = get("ar", 0) != 0.0;
  const double mbs = get("mbs", 1), tp_comm = get("tp_comm", 12), bucket = get("ddp_bucket", 1);

  // Fastest class first; the slowest participating class sets the pace.
  const double world = pp * tp * dp * cp;
  std::vector<const DeviceClass*> classes;
  for (const auto& d : m.hardware.devices) classes.push_back(&d);
  std::stable_sort(classes.begin(), classes.end(),
                   [](const DeviceClass* a, const DeviceClass* b) { return a->rel_throughput > b->rel_throughput; });
  double remaining = world, eff = std::numeric_limits<double>::infinity(), mem_limit = eff;
  for (const auto* d : classes) {
    if (remaining <= 0) break;
    if (d->count <= 0) continue;
    remaining -= d->count;
    eff = std::min(eff, d->rel_throughput);
    mem_limit = std::min(mem_limit, d->mem_gb);
  }
  if (remaining > 0) return kInfeasible;

  const double micro_steps = m.global_batch / (dp * mbs);
  const double r = ar ? m.r_ar : 1.0;
  const double t_comp = m.f_work * r / (world * eff * (1.0 + 0.1 * std::log2(mbs)));
  const double t_bubble = t_comp * (pp - 1.0) / micro_steps;
  const double overlap = tp > 1 ? std::clamp((tp_comm - 12.0) / 16.0, 0.0, 0.5) : 0.0;
  const double t_tp = m.alpha_tp * (tp - 1.0) / tp * (1.0 - overlap) * (sp && tp > 1 ? m.sp_discount : 1.0);
  const double bucket_pen = dp > 1 ? 1.0 + 0.1 * std::pow(std::log2(bucket) - 2.0, 2) : 0.0;
  const double t_dp = m.alpha_dp * (dp - 1.0) / dp * bucket_pen;
  const double t_ep = m.alpha_tp * 0.5 * (ep - 1.0) / ep;

  const double mem = m.p_mem / (pp * tp) + m.a_mem * mbs * (ar ? 0.3 : 1.0) / cp;
  if (mem > mem_limit) return kInfeasible;
  return t_comp + t_bubble + t_tp + t_dp + t_ep;
}

Oracle make_oracle(const SyntheticClusterModel& m, const ConfigSpace& space) {
  return [m, &space](const Configuration& c) { return synthetic_cost(m, space, c); };
}

Optimum brute_force_optimum(const ConfigSpace& space, const Oracle& oracle, std::size_t guard) {
  Optimum opt;
  bool found = false;
  enumerate(space, [&](const Configuration& c) {
    if (++opt.enumerated > guard) throw std::length_error("brute force: space exceeds the enumeration guard");
    const double cost = oracle(c);
    if (is_infeasible(cost)) return true;
    ++opt.feasible;
    if (!found || cost < opt.cost) {
      opt.config = c;
      opt.cost = cost;
      found = true;
    }
    return true;
  });
  if (!found) throw std::runtime_error("brute force: no configuration has a finite cost");
  return opt;
}

RunResult baseline_random_search(const ConfigSpace& space, const Oracle& oracle, std::size_t budget,
                                 std::uint64_t seed, bool without_replacement) {
  if (budget < 1) throw std::invalid_argument("random search budget must be >= 1");
  auto all = enumerate_all(space, 1'000'000);
  std::mt19937_64 rng(seed);
  if (without_replacement) std::shuffle(all.begin(), all.end(), rng);
  RunResult res;
  std::uniform_int_distribution<std::size_t> pick(0, all.size() - 1);
  double clock = 0.0;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 1; i <= budget; ++i) {
    if (without_replacement && i > all.size()) break;
    const auto& c = without_replacement ? all[i - 1] : all[pick(rng)];
    TraceRecord rec;
    rec.iteration = i;
    rec.arm = "none";
    rec.fidelity = Fidelity::Real;
    rec.delta_sparse = rec.delta_dense = nan;
    rec.costs = {nan, nan, nan, nan};
    try {
      const double cost = oracle(c);
      rec.costs[0] = cost;
      res.real_history.push_back({i, c, cost});
      if (!is_infeasible(cost)) {
        clock += cost;
        if (cost < res.best_cost) {
          res.best_cost = cost;
          res.best = c;
        }
      }
    } catch (const std::exception&) {
      ++res.failures;
      rec.failed = true;
    }
    rec.wall_seconds = clock;
    rec.best_cost = res.best_cost;
    rec.real_evals = i;
    res.trace.push_back(rec);
    ++res.iterations;
  }
  res.real_evals = res.iterations;
  res.clock = clock;
  return res;
}

RunResult baseline_ablations(const ConfigSpace& space, const Oracle& oracle, const Simulator& simulator,
                             std::size_t budget, std::uint64_t seed, Variant variant, RunConfig base) {
  base.budget_iters = budget;
  base.seed = seed;
  base.variant = variant;
  return run(space, oracle, simulator, base);
}

// ---------------------------------------------------------------------------

SimulatorEnsemble train_ensemble(const ConfigSpace& space, const Oracle& oracle,
                                 const std::vector<SimulatorSpec>& specs, std::size_t samples, std::uint64_t seed) {
  const auto all = enumerate_all(space, 1'000'000);
  std::mt19937_64 rng(seed ^ 0x5eed5eedULL);
  std::uniform_int_distribution<std::size_t> pick(0, all.size() - 1);
  std::vector<std::pair<Configuration, double>> data;
  // Draw until `samples` configurations have a finite cost.
  const std::size_t max_draws = 100 * samples + all.size();
  for (std::size_t draws = 0; data.size() < samples && draws < max_draws; ++draws) {
    const auto& c = all[pick(rng)];
    const double cost = oracle(c);
    if (!is_infeasible(cost)) data.emplace_back(c, cost);
  }
  return fit_ensemble(space, specs, data, seed);
}

Simulator make_simulator(const ConfigSpace& space, SimulatorEnsemble ensemble, double noise_pct, std::uint64_t seed) {
  auto shared = std::make_shared<const SimulatorEnsemble>(std::move(ensemble));
  Simulator sim = [shared, &space](const Configuration& c) { return shared->predict(space, c); };
  if (noise_pct > 0.0) sim = wrap_noisy(space, std::move(sim), noise_pct, seed);
  return sim;
}

std::optional<std::size_t> evals_to_threshold(const std::vector<RealRecord>& history, double threshold) {
  for (const auto& r : history)
    if (!is_infeasible(r.cost) && r.cost <= threshold) return r.index;
  return std::nullopt;
}

std::vector<std::string> scenario_features(const std::string& name) {
  if (name == "3dp") return {"pp", "tp", "dp", "mbs"};
  if (name == "5dp") return {"pp", "tp", "dp", "mbs", "ep", "cp", "sp"};
  if (name == "full") return {};
  throw std::invalid_argument("unknown scenario name: " + name);
}

std::vector<std::string> all_methods() {
  return {"autoscout", "random_search", "sparse_only", "dense_only", "no_orchestrator", "no_simulators"};
}

Scenario Scenario::from_json(const json& j, const fs::path& base_dir) {
  Scenario sc;
  sc.name = j.at("name").get<std::string>();
  scenario_features(sc.name);  // validates the name
  sc.space = j.at("space").get<std::string>();
  if (sc.space.is_relative() && !base_dir.empty()) sc.space = base_dir / sc.space;
  sc.model_preset = j.at("model_preset").get<std::string>();
  if (sc.model_preset.rfind("builtin:", 0) != 0 && fs::path(sc.model_preset).is_relative() && !base_dir.empty()) {
    const auto names = builtin_preset_names();
    if (std::find(names.begin(), names.end(), sc.model_preset) == names.end())
      sc.model_preset = (base_dir / sc.model_preset).string();
  }
  sc.noise_pct = j.value("noise_pct", 0.0);
  if (sc.noise_pct < 0.0) throw std::invalid_argument("noise_pct must be >= 0");
  if (j.contains("K")) {
    const auto& k = j.at("K");
    sc.k_values = k.is_array() ? k.get<std::vector<std::size_t>>() : std::vector<std::size_t>{k.get<std::size_t>()};
  }
  if (sc.k_values.empty()) throw std::invalid_argument("K list is empty");
  sc.seeds = j.value("seeds", sc.seeds);
  sc.seed_base = j.value("seed_base", sc.seed_base);
  sc.budget_iters = j.value("budget_iters", sc.budget_iters);
  if (j.contains("budget_seconds") && !j.at("budget_seconds").is_null())
    sc.budget_seconds = j.at("budget_seconds").get<double>();
  if (j.contains("methods")) {
    sc.methods = j.at("methods").get<std::vector<std::string>>();
    const auto known = all_methods();
    for (const auto& m : sc.methods)
      if (std::find(known.begin(), known.end(), m) == known.end())
        throw std::invalid_argument("unknown method: " + m);
  } else {
    sc.methods = all_methods();
  }
  sc.sim_samples = j.value("sim_samples", sc.sim_samples);
  sc.random_budget = j.value("random_budget", sc.random_budget);

  json knobs = json::object();
  for (const char* key : {"tau", "epsilon", "c0", "gamma", "c_uct", "step_cap", "K_reval", "lambda", "max_parallel"})
    if (j.contains(key)) knobs[key] = j.at(key);
  sc.run = RunConfig::from_json(knobs);
  sc.run.budget_seconds = sc.budget_seconds;
  return sc;
}

Scenario Scenario::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open scenario file: " + path);
  return from_json(json::parse(in), fs::path(path).parent_path());
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  if (n % 2 == 1) return v[n / 2];
  const double a = v[n / 2 - 1], b = v[n / 2];
  return std::isinf(a) || std::isinf(b) ? std::max(a, b) : 0.5 * (a + b);
}

const SummaryRow* ExperimentResult::row(const std::string& method, std::size_t k) const {
  for (const auto& r : summary)
    if (r.method == method && r.k == k) return &r;
  return nullptr;
}

std::vector<const SeedOutcome*> ExperimentResult::seeds_of(const std::string& method, std::size_t k) const {
  std::vector<const SeedOutcome*> out;
  for (const auto& o : outcomes)
    if (o.method == method && o.k == k) out.push_back(&o);
  return out;
}

ExperimentResult run_experiment(const Scenario& sc, const fs::path& out_dir) {
  const auto full = ConfigSpace::load(sc.space.string());
  const auto keep = scenario_features(sc.name);
  std::vector<std::string> names = keep;
  if (names.empty())
    for (const auto& f : full.features()) names.push_back(f.name);
  const auto space = full.restrict_to(names);
  const auto model = resolve_preset(sc.model_preset);
  const auto oracle = make_oracle(model, space);

  ExperimentResult res;
  res.optimum = brute_force_optimum(space, oracle);
  res.preset_hash = model.hash();
  const double threshold = 1.05 * res.optimum.cost;
  spdlog::info("scenario {}: {} configurations, optimum {:.4f}, preset {} ({})", sc.name, res.optimum.enumerated,
               res.optimum.cost, model.name, res.preset_hash);
  if (!out_dir.empty()) fs::create_directories(out_dir);

  const auto specs = default_simulator_specs();
  for (std::size_t si = 0; si < sc.seeds; ++si) {
    const auto seed = sc.seed_base + si;
    std::optional<Simulator> sim;
    for (const auto k : sc.k_values) {
      for (const auto& method : sc.methods) {
        SeedOutcome o;
        o.method = method;
        o.k = k;
        o.seed = seed;
        const auto t0 = std::chrono::steady_clock::now();
        try {
          RunResult r;
          if (method == "random_search") {
            r = baseline_random_search(space, oracle, sc.random_budget ? sc.random_budget : 4 * sc.budget_iters, seed);
          } else {
            if (!sim) sim = make_simulator(space, train_ensemble(space, oracle, specs, sc.sim_samples, seed),
                                           sc.noise_pct, seed + 1000003);
            RunConfig cfg = sc.run;
            cfg.k_tournament = k;
            const auto variant = method == "autoscout" ? Variant::Full : variant_from_name(method);
            r = baseline_ablations(space, oracle, *sim, sc.budget_iters, seed, variant, cfg);
          }
          o.completed = r.succeeded();
          if (!o.completed) o.error = "no successful evaluation";
          o.best_cost = r.best_cost;
          o.evals_to_5pct = evals_to_threshold(r.real_history, threshold);
          o.real_evals = r.real_evals;
          o.sim_evals = r.sim_evals;
          o.switched = r.switch_info.has_value();
          if (!out_dir.empty()) {
            std::ofstream f(out_dir / ("trace_" + method + "_K" + std::to_string(k) + "_seed" + std::to_string(seed) + ".csv"));
            write_trace_csv(f, r.trace);
          }
        } catch (const std::exception& e) {
          o.error = e.what();
          spdlog::warn("{} seed {}: {}", method, seed, e.what());
        }
        o.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        res.outcomes.push_back(std::move(o));
      }
    }
  }

  for (const auto k : sc.k_values)
    for (const auto& method : sc.methods) {
      SummaryRow row;
      row.method = method;
      row.k = k;
      std::vector<double> best, evals, reals;
      double wall = 0.0, sum = 0.0;
      for (const auto* o : res.seeds_of(method, k)) {
        ++row.seeds;
        wall += o->wall_seconds;
        if (!o->completed) continue;
        ++row.completed;
        best.push_back(o->best_cost);
        sum += o->best_cost;
        evals.push_back(o->evals_to_5pct ? static_cast<double>(*o->evals_to_5pct) : kInfeasible);
        reals.push_back(static_cast<double>(o->real_evals));
      }
      if (!best.empty()) {
        row.median_best_cost = median(best);
        row.mean_best_cost = sum / static_cast<double>(best.size());
        row.median_evals_to_5pct = median(evals);
        row.median_real_evals = median(reals);
      }
      row.mean_wall_seconds = row.seeds ? wall / static_cast<double>(row.seeds) : 0.0;
      res.summary.push_back(row);
    }

  if (!out_dir.empty()) {
    std::ofstream f(out_dir / "summary.csv");
    f << "method,K,seeds,completed,median_best_cost,mean_best_cost,median_evals_to_5pct,median_real_evals,"
         "mean_wall_seconds,optimum_cost,preset_hash,incomplete\n";
    for (const auto& r : res.summary)
      f << r.method << ',' << r.k << ',' << r.seeds << ',' << r.completed << ',' << format_cost(r.median_best_cost)
        << ',' << format_cost(r.mean_best_cost) << ',' << format_cost(r.median_evals_to_5pct) << ','
        << format_cost(r.median_real_evals) << ',' << format_cost(r.mean_wall_seconds) << ','
        << format_cost(res.optimum.cost) << ',' << res.preset_hash << ','
        << (r.completed < r.seeds ? "yes" : "no") << '\n';
  }
  return res;
}

}  // namespace autoscout
