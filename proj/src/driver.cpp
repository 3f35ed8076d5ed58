#include "qco/driver.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

namespace qco {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::vector<int> param_ids(const Circuit& circuit) {
  std::vector<int> ids;
  ids.reserve(circuit.params.size());
  for (const auto& [id, g] : circuit.params) ids.push_back(id);
  return ids;
}

std::optional<Charge> sector_opt(const RunConfig& cfg) {
  if (cfg.model.symmetry == Symmetry::None) return std::nullopt;
  return config_sector(cfg);
}

// E_T oracle: explicit override, ED at dense scale, DMRG beyond.
double reference_energy(const RunConfig& cfg) {
  if (cfg.energy_target) return *cfg.energy_target;
  const int d = cfg.model.model == Model::Potts3 ? 3 : 2;
  double dim = 1;
  for (int i = 0; i < cfg.model.length && dim <= 4096; ++i) dim *= d;
  if (dim <= 4096) return exact_eigs(cfg.model, sector_opt(cfg), 1).front().energy;
  return two_site_dmrg(cfg.model, {64, 1e-12}, 50, 1e-10, sector_opt(cfg)).energy;
}

struct RunContext {
  RunConfig cfg;
  MpsState init;
  CostFunction cost;
  double e_t = kNan;
};

RunContext make_context(const RunConfig& cfg) {
  validate(cfg.model);
  if (cfg.tol <= 0 || cfg.subtol <= 0) throw std::invalid_argument("config: tol/subtol must be > 0");
  if (cfg.maxdepth < 1) throw std::invalid_argument("config: maxdepth must be >= 1");
  RunContext ctx;
  ctx.cfg = cfg;
  const IndexSpace phys = model_phys(cfg.model);
  const std::vector<int> config = cfg.initial.empty() ? default_initial(cfg.model) : cfg.initial;
  if (static_cast<int>(config.size()) != cfg.model.length)
    throw std::invalid_argument("config: initial state length mismatch");
  std::optional<Charge> sec = sector_opt(cfg);
  ctx.init = product_state(phys, config, sec);
  switch (cfg.cost) {
    case CostFunction::Kind::Energy:
      ctx.cost = energy_cost(model_mpo(cfg.model));
      ctx.e_t = reference_energy(cfg);
      break;
    case CostFunction::Kind::NegLogTotalFidelity:
    case CostFunction::Kind::MeanNegLogSubspaceFidelity: {
      MpsState target = cfg.target_override
                            ? *cfg.target_override
                            : target_mps(cfg.model, sec, cfg.target_n,
                                         {cfg.policy.chi_max, 1e-14});
      if (sec && target.sector() != *sec)
        throw std::invalid_argument("config: target sector differs from the run sector");
      ctx.cost = cfg.cost == CostFunction::Kind::NegLogTotalFidelity
                     ? neg_log_total_fidelity_cost(std::move(target))
                     : mean_neg_log_subspace_cost(std::move(target));
      break;
    }
  }
  return ctx;
}

// Per-iteration convergence metric: relative energy error for energy runs,
// total infidelity for fidelity runs.
double iteration_metric(const RunContext& ctx, const Circuit& circuit, double cost_value) {
  switch (ctx.cfg.cost) {
    case CostFunction::Kind::Energy:
      return rel_energy_error(cost_value, ctx.e_t);
    case CostFunction::Kind::NegLogTotalFidelity:
      return -std::expm1(-cost_value);
    case CostFunction::Kind::MeanNegLogSubspaceFidelity: {
      ApplyResult r = apply_circuit(ctx.init, circuit, ctx.cfg.policy);
      return 1.0 - total_fidelity(ctx.cost.target, r.state);
    }
  }
  throw std::logic_error("iteration_metric: unreachable");
}

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::mt19937_64 rng_from_string(const std::string& s) {
  std::mt19937_64 rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw std::runtime_error("checkpoint: invalid rng state");
  return rng;
}

RunReport run_loop(RunContext& ctx, Circuit& circuit, AdamState& adam, std::mt19937_64& rng,
                   std::vector<IterationRecord> trace, std::vector<GrowthEvent> growth) {
  const RunConfig& cfg = ctx.cfg;
  RunReport report;
  report.energy_target = ctx.e_t;
  // metric history since the last growth event
  std::vector<double> hist;
  const int last_growth = growth.empty() ? 0 : growth.back().iteration;
  for (const auto& rec : trace)
    if (rec.iteration > last_growth)
      hist.push_back(cfg.cost == CostFunction::Kind::Energy ? rec.rel_energy_error
                                                            : rec.total_infidelity);
  bool finished = false;
  for (int it = static_cast<int>(trace.size()) + 1; it <= cfg.max_iters && !finished; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    CostGradient cg;
    try {
      cg = cost_and_gradient(ctx.cost, circuit, ctx.init, cfg.policy);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error(std::string(e.what()) +
                               " (check that the initial state's sector matches the target)");
    }
    const double metric = iteration_metric(ctx, circuit, cg.value);
    IterationRecord rec;
    rec.iteration = it;
    rec.depth = circuit.depth();
    rec.cost = cg.value;
    rec.rel_energy_error = cfg.cost == CostFunction::Kind::Energy ? metric : kNan;
    rec.total_infidelity = cfg.cost == CostFunction::Kind::Energy ? kNan : metric;
    rec.discarded = cg.total_discarded;
    hist.push_back(metric);
    switch (convergence_check(hist, cfg.tol, cfg.subtol, cfg.window)) {
      case Decision::Converged:
        report.status = RunStatus::Converged;
        finished = true;
        break;
      case Decision::Stalled:
        if (circuit.depth() + 1 > cfg.maxdepth) {
          report.status = RunStatus::MaxdepthExhausted;
          finished = true;
          break;
        }
        grow(circuit, cfg.gate_eps, rng);
        growth.push_back({it, circuit.depth()});
        adam = make_adam_state(param_ids(circuit), cfg.adam);
        hist.clear();
        break;
      case Decision::Continue: {
        std::map<int, BlockTensor> lifted;
        for (const auto& [id, g] : cg.grads)
          lifted[id] = lift(circuit.params.at(id), g);
        adam_step(adam, lifted, circuit.params);
        break;
      }
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    trace.push_back(rec);
    if (!finished && cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() &&
        it % cfg.checkpoint_every == 0) {
      Checkpoint c{cfg, circuit, adam, rng_to_string(rng), trace, growth};
      checkpoint_save(cfg.checkpoint_path, c);
    }
  }
  report.trace = std::move(trace);
  report.growth = std::move(growth);
  report.circuit = circuit;
  report.final_cost = report.trace.empty() ? kNan : report.trace.back().cost;
  report.final_metric = hist.empty() ? kNan : hist.back();
  return report;
}

}  // namespace

std::vector<int> default_initial(const ModelSpec& spec) {
  std::vector<int> cfg(static_cast<std::size_t>(spec.length), 0);
  if (spec.model == Model::Schwinger)
    for (int n = 1; n < spec.length; n += 2) cfg[static_cast<std::size_t>(n)] = 1;
  return cfg;
}

Charge config_sector(const RunConfig& cfg) {
  const IndexSpace phys = model_phys(cfg.model);
  if (cfg.sector) return phys.group.canon(*cfg.sector);
  if (cfg.model.symmetry == Symmetry::U1Ztot) {
    const std::vector<int> config = cfg.initial.empty() ? default_initial(cfg.model) : cfg.initial;
    Charge q = 0;
    for (int dg : config) q += dg == 0 ? -1 : 1;
    return q;
  }
  return 0;
}

Decision convergence_check(const std::vector<double>& history, double tol, double subtol,
                           int window) {
  if (!history.empty() && history.back() < tol) return Decision::Converged;
  if (static_cast<int>(history.size()) > window) {
    double acc = 0.0;
    const std::size_t n = history.size();
    for (int i = 0; i < window; ++i)
      acc += std::abs(history[n - 1 - static_cast<std::size_t>(i)] -
                      history[n - 2 - static_cast<std::size_t>(i)]);
    if (acc / window < subtol) return Decision::Stalled;
  }
  return Decision::Continue;
}

RunReport optimize(const RunConfig& cfg) {
  RunContext ctx = make_context(cfg);
  std::mt19937_64 rng(cfg.seed);
  Circuit circuit = make_circuit(cfg.model.length, model_phys(cfg.model), cfg.inversion_symmetric);
  grow(circuit, cfg.gate_eps, rng);
  AdamState adam = make_adam_state(param_ids(circuit), cfg.adam);
  return run_loop(ctx, circuit, adam, rng, {}, {});
}

RunReport resume(const Checkpoint& c) {
  RunContext ctx = make_context(c.config);
  std::mt19937_64 rng = rng_from_string(c.rng_state);
  Circuit circuit = c.circuit;
  AdamState adam = c.adam;
  return run_loop(ctx, circuit, adam, rng, c.trace, c.growth);
}

EvalMetrics evaluate(const RunConfig& cfg, const Circuit& circuit) {
  RunContext ctx = make_context(cfg);
  ApplyResult r = apply_circuit(ctx.init, circuit, cfg.policy);
  EvalMetrics m;
  m.total_discarded = r.total_discarded;
  m.energy = expectation(r.state, model_mpo(cfg.model));
  m.cost = evaluate_cost(ctx.cost, r.state);
  if (cfg.cost == CostFunction::Kind::Energy) {
    m.rel_energy_error = rel_energy_error(m.energy, ctx.e_t);
    m.total_fidelity = kNan;
  } else {
    m.rel_energy_error = kNan;
    m.total_fidelity = total_fidelity(ctx.cost.target, r.state);
    m.profile = subspace_fidelity_profile(ctx.cost.target, r.state);
  }
  return m;
}

namespace {

std::string model_name(Model m) {
  switch (m) {
    case Model::Ising: return "ising";
    case Model::Potts3: return "potts3";
    case Model::Schwinger: return "schwinger";
  }
  return "?";
}

Model model_from_name(const std::string& s) {
  if (s == "ising") return Model::Ising;
  if (s == "potts3") return Model::Potts3;
  if (s == "schwinger") return Model::Schwinger;
  throw std::invalid_argument("config: unknown model '" + s + "'");
}

std::string symmetry_name(Symmetry s) {
  switch (s) {
    case Symmetry::None: return "none";
    case Symmetry::Z2Parity: return "z2";
    case Symmetry::U1Ztot: return "u1";
  }
  return "?";
}

Symmetry symmetry_from_name(const std::string& s) {
  if (s == "none") return Symmetry::None;
  if (s == "z2") return Symmetry::Z2Parity;
  if (s == "u1") return Symmetry::U1Ztot;
  throw std::invalid_argument("config: unknown symmetry '" + s + "'");
}

std::string cost_name(CostFunction::Kind k) {
  switch (k) {
    case CostFunction::Kind::Energy: return "energy";
    case CostFunction::Kind::NegLogTotalFidelity: return "total_fidelity";
    case CostFunction::Kind::MeanNegLogSubspaceFidelity: return "subspace_fidelity";
  }
  return "?";
}

CostFunction::Kind cost_from_name(const std::string& s) {
  if (s == "energy") return CostFunction::Kind::Energy;
  if (s == "total_fidelity") return CostFunction::Kind::NegLogTotalFidelity;
  if (s == "subspace_fidelity") return CostFunction::Kind::MeanNegLogSubspaceFidelity;
  throw std::invalid_argument("config: unknown cost '" + s + "'");
}

std::string status_name(RunStatus s) {
  switch (s) {
    case RunStatus::Converged: return "converged";
    case RunStatus::MaxdepthExhausted: return "maxdepth_exhausted";
    case RunStatus::Stalled: return "stalled";
  }
  return "?";
}

}  // namespace

nlohmann::json config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["model"] = model_name(cfg.model.model);
  j["length"] = cfg.model.length;
  j["g"] = cfg.model.g;
  j["h"] = cfg.model.h;
  j["m"] = cfg.model.m;
  j["symmetry"] = symmetry_name(cfg.model.symmetry);
  if (cfg.sector) j["sector"] = *cfg.sector;
  j["cost"] = cost_name(cfg.cost);
  j["target_n"] = cfg.target_n;
  j["initial"] = cfg.initial;
  j["chi_max"] = cfg.policy.chi_max;
  j["cutoff"] = cfg.policy.cutoff;
  j["tol"] = cfg.tol;
  j["subtol"] = cfg.subtol;
  j["window"] = cfg.window;
  j["maxdepth"] = cfg.maxdepth;
  j["max_iters"] = cfg.max_iters;
  j["inversion"] = cfg.inversion_symmetric;
  j["gate_eps"] = cfg.gate_eps;
  j["eta"] = cfg.adam.eta;
  j["beta1"] = cfg.adam.beta1;
  j["beta2"] = cfg.adam.beta2;
  j["adam_eps"] = cfg.adam.eps;
  j["seed"] = cfg.seed;
  if (cfg.energy_target) j["energy_target"] = *cfg.energy_target;
  j["out_dir"] = cfg.out_dir;
  j["checkpoint_every"] = cfg.checkpoint_every;
  j["checkpoint_path"] = cfg.checkpoint_path;
  return j;
}

RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  cfg.model.model = model_from_name(j.at("model").get<std::string>());
  cfg.model.length = j.at("length").get<int>();
  cfg.model.g = j.at("g").get<double>();
  cfg.model.h = j.at("h").get<double>();
  cfg.model.m = j.at("m").get<double>();
  cfg.model.symmetry = symmetry_from_name(j.at("symmetry").get<std::string>());
  if (j.contains("sector")) cfg.sector = j.at("sector").get<Charge>();
  cfg.cost = cost_from_name(j.at("cost").get<std::string>());
  cfg.target_n = j.at("target_n").get<int>();
  cfg.initial = j.at("initial").get<std::vector<int>>();
  cfg.policy.chi_max = j.at("chi_max").get<std::int64_t>();
  cfg.policy.cutoff = j.at("cutoff").get<double>();
  cfg.tol = j.at("tol").get<double>();
  cfg.subtol = j.at("subtol").get<double>();
  cfg.window = j.at("window").get<int>();
  cfg.maxdepth = j.at("maxdepth").get<int>();
  cfg.max_iters = j.at("max_iters").get<int>();
  cfg.inversion_symmetric = j.at("inversion").get<bool>();
  cfg.gate_eps = j.at("gate_eps").get<double>();
  cfg.adam.eta = j.at("eta").get<double>();
  cfg.adam.beta1 = j.at("beta1").get<double>();
  cfg.adam.beta2 = j.at("beta2").get<double>();
  cfg.adam.eps = j.at("adam_eps").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("energy_target")) cfg.energy_target = j.at("energy_target").get<double>();
  cfg.out_dir = j.at("out_dir").get<std::string>();
  cfg.checkpoint_every = j.at("checkpoint_every").get<int>();
  cfg.checkpoint_path = j.at("checkpoint_path").get<std::string>();
  return cfg;
}

nlohmann::json report_to_json(const RunReport& report) {
  nlohmann::json j;
  j["status"] = status_name(report.status);
  j["energy_target"] = report.energy_target;
  j["final_cost"] = report.final_cost;
  j["final_metric"] = report.final_metric;
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& r : report.trace) {
    trace.push_back({{"iteration", r.iteration},
                     {"depth", r.depth},
                     {"cost", r.cost},
                     {"rel_energy_error", r.rel_energy_error},
                     {"total_infidelity", r.total_infidelity},
                     {"discarded", r.discarded},
                     {"wall_ms", r.wall_ms}});
  }
  j["trace"] = std::move(trace);
  nlohmann::json growth = nlohmann::json::array();
  for (const auto& g : report.growth)
    growth.push_back({{"iteration", g.iteration}, {"new_depth", g.new_depth}});
  j["growth"] = std::move(growth);
  j["circuit"] = circuit_to_json(report.circuit);
  return j;
}

std::string trace_csv(const std::vector<IterationRecord>& trace) {
  std::ostringstream os;
  os << "iteration, depth, cost, rel_energy_error, total_infidelity, wall_ms\n";
  os << std::setprecision(17);
  for (const auto& r : trace)
    os << r.iteration << ", " << r.depth << ", " << r.cost << ", " << r.rel_energy_error << ", "
       << r.total_infidelity << ", " << r.wall_ms << "\n";
  return os.str();
}

nlohmann::json gate_list_json(const Circuit& circuit) {
  nlohmann::json j;
  j["format"] = "gatelist1";
  j["length"] = circuit.length;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : circuit.layers) {
    nlohmann::json jl;
    for (const char* part : {"odd", "even"}) {
      const auto& placements = std::string(part) == "odd" ? layer.odd : layer.even;
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& p : placements) {
        BlockTensor g = circuit.params.at(p.param);
        if (p.mirrored) g = mirror_transform(g);
        arr.push_back({{"bond", p.bond},
                       {"param", p.param},
                       {"mirrored", p.mirrored},
                       {"gate", tensor_to_json(g)}});
      }
      jl[part] = std::move(arr);
    }
    layers.push_back(std::move(jl));
  }
  j["layers"] = std::move(layers);
  return j;
}

void checkpoint_save(const std::string& path, const Checkpoint& c) {
  nlohmann::json j;
  j["format"] = "qcochk1";
  j["config"] = config_to_json(c.config);
  j["circuit"] = circuit_to_json(c.circuit);
  j["adam"] = adam_to_json(c.adam);
  j["rng"] = c.rng_state;
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& r : c.trace)
    trace.push_back({{"iteration", r.iteration},
                     {"depth", r.depth},
                     {"cost", r.cost},
                     {"rel_energy_error", r.rel_energy_error},
                     {"total_infidelity", r.total_infidelity},
                     {"discarded", r.discarded},
                     {"wall_ms", r.wall_ms}});
  j["trace"] = std::move(trace);
  nlohmann::json growth = nlohmann::json::array();
  for (const auto& g : c.growth)
    growth.push_back({{"iteration", g.iteration}, {"new_depth", g.new_depth}});
  j["growth"] = std::move(growth);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  out << j.dump();
  out.flush();
  if (!out) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
}

namespace {

// NaN round-trips through JSON as null
double json_double(const nlohmann::json& j) {
  return j.is_null() ? kNan : j.get<double>();
}

}  // namespace

Checkpoint checkpoint_load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != std::string("qcochk1"))
    throw std::runtime_error("checkpoint: version tag mismatch");
  Checkpoint c;
  c.config = config_from_json(j.at("config"));
  c.circuit = circuit_from_json(j.at("circuit"));
  c.adam = adam_from_json(j.at("adam"));
  c.rng_state = j.at("rng").get<std::string>();
  for (const auto& e : j.at("trace")) {
    IterationRecord r;
    r.iteration = e.at("iteration").get<int>();
    r.depth = e.at("depth").get<int>();
    r.cost = json_double(e.at("cost"));
    r.rel_energy_error = json_double(e.at("rel_energy_error"));
    r.total_infidelity = json_double(e.at("total_infidelity"));
    r.discarded = json_double(e.at("discarded"));
    r.wall_ms = json_double(e.at("wall_ms"));
    c.trace.push_back(r);
  }
  for (const auto& e : j.at("growth"))
    c.growth.push_back({e.at("iteration").get<int>(), e.at("new_depth").get<int>()});
  return c;
}

namespace {

struct TomlValue {
  enum class Kind { String, Number, Boolean } kind;
  std::string str;
  double num = 0.0;
  bool boolean = false;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

TomlValue parse_value(const std::string& raw, int line_no) {
  TomlValue v{};
  if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') {
    v.kind = TomlValue::Kind::String;
    v.str = raw.substr(1, raw.size() - 2);
    return v;
  }
  if (raw == "true" || raw == "false") {
    v.kind = TomlValue::Kind::Boolean;
    v.boolean = raw == "true";
    return v;
  }
  std::size_t pos = 0;
  try {
    v.num = std::stod(raw, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != raw.size())
    throw std::invalid_argument("config line " + std::to_string(line_no) + ": bad value '" + raw +
                                "'");
  v.kind = TomlValue::Kind::Number;
  return v;
}

double as_number(const TomlValue& v, const std::string& key) {
  if (v.kind != TomlValue::Kind::Number)
    throw std::invalid_argument("config: key '" + key + "' expects a number");
  return v.num;
}

std::string as_string(const TomlValue& v, const std::string& key) {
  if (v.kind != TomlValue::Kind::String)
    throw std::invalid_argument("config: key '" + key + "' expects a string");
  return v.str;
}

bool as_bool(const TomlValue& v, const std::string& key) {
  if (v.kind != TomlValue::Kind::Boolean)
    throw std::invalid_argument("config: key '" + key + "' expects a boolean");
  return v.boolean;
}

}  // namespace

RunConfig config_from_toml(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const TomlValue v = parse_value(trim(line.substr(eq + 1)), line_no);
    if (key == "model")
      cfg.model.model = model_from_name(as_string(v, key));
    else if (key == "length")
      cfg.model.length = static_cast<int>(as_number(v, key));
    else if (key == "g")
      cfg.model.g = as_number(v, key);
    else if (key == "h")
      cfg.model.h = as_number(v, key);
    else if (key == "m")
      cfg.model.m = as_number(v, key);
    else if (key == "symmetry")
      cfg.model.symmetry = symmetry_from_name(as_string(v, key));
    else if (key == "sector")
      cfg.sector = static_cast<Charge>(as_number(v, key));
    else if (key == "cost")
      cfg.cost = cost_from_name(as_string(v, key));
    else if (key == "target_n")
      cfg.target_n = static_cast<int>(as_number(v, key));
    else if (key == "initial") {
      cfg.initial.clear();
      for (char c : as_string(v, key)) {
        if (c < '0' || c > '9')
          throw std::invalid_argument("config: 'initial' must be a digit string");
        cfg.initial.push_back(c - '0');
      }
    } else if (key == "chi_max")
      cfg.policy.chi_max = static_cast<std::int64_t>(as_number(v, key));
    else if (key == "cutoff")
      cfg.policy.cutoff = as_number(v, key);
    else if (key == "tol")
      cfg.tol = as_number(v, key);
    else if (key == "subtol")
      cfg.subtol = as_number(v, key);
    else if (key == "window")
      cfg.window = static_cast<int>(as_number(v, key));
    else if (key == "maxdepth")
      cfg.maxdepth = static_cast<int>(as_number(v, key));
    else if (key == "max_iters")
      cfg.max_iters = static_cast<int>(as_number(v, key));
    else if (key == "inversion")
      cfg.inversion_symmetric = as_bool(v, key);
    else if (key == "gate_eps")
      cfg.gate_eps = as_number(v, key);
    else if (key == "eta")
      cfg.adam.eta = as_number(v, key);
    else if (key == "beta1")
      cfg.adam.beta1 = as_number(v, key);
    else if (key == "beta2")
      cfg.adam.beta2 = as_number(v, key);
    else if (key == "adam_eps")
      cfg.adam.eps = as_number(v, key);
    else if (key == "seed")
      cfg.seed = static_cast<std::uint64_t>(as_number(v, key));
    else if (key == "energy_target")
      cfg.energy_target = as_number(v, key);
    else if (key == "out_dir")
      cfg.out_dir = as_string(v, key);
    else if (key == "checkpoint_every")
      cfg.checkpoint_every = static_cast<int>(as_number(v, key));
    else if (key == "checkpoint_path")
      cfg.checkpoint_path = as_string(v, key);
    else
      throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  return cfg;
}

RunConfig config_from_toml_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return config_from_toml(os.str());
}

}  // namespace qco
