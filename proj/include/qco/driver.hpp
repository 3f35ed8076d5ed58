#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qco/cost.hpp"
#include "qco/manifold.hpp"
#include "qco/models.hpp"

namespace qco {

// Everything needed to reproduce a run; identical config + seed gives a
// bit-identical cost trace.
struct RunConfig {
  ModelSpec model;
  std::optional<Charge> sector;  // defaults: Z2 -> 0, U1 -> initial-state charge
  CostFunction::Kind cost = CostFunction::Kind::Energy;
  int target_n = 0;               // eigenstate index for fidelity costs
  std::vector<int> initial;       // product configuration; empty -> model default
  TruncationPolicy policy{64, 1e-10};
  // Energy runs: tol in relative-error units against E_T; fidelity runs: tol
  // on the total infidelity 1 - F_T.
  double tol = 1e-4;
  double subtol = 1e-7;
  int window = 10;
  int maxdepth = 16;
  int max_iters = 20000;
  bool inversion_symmetric = true;
  double gate_eps = 0.01;
  AdamConfig adam;
  std::uint64_t seed = 1;
  std::optional<double> energy_target;  // E_T override; else ED / DMRG oracle
  std::optional<MpsState> target_override;  // custom fidelity target; not serialized
  std::string out_dir;
  int checkpoint_every = 0;  // iterations; 0 disables
  std::string checkpoint_path;
};

std::vector<int> default_initial(const ModelSpec& spec);
Charge config_sector(const RunConfig& cfg);

struct IterationRecord {
  int iteration = 0;
  int depth = 0;
  double cost = 0.0;
  double rel_energy_error = 0.0;  // NaN when no E_T is available
  double total_infidelity = 0.0;  // NaN for energy runs
  double discarded = 0.0;
  double wall_ms = 0.0;
};

struct GrowthEvent {
  int iteration = 0;  // iteration after which the layer was added
  int new_depth = 0;
};

enum class RunStatus { Converged, MaxdepthExhausted, Stalled };

struct RunReport {
  std::vector<IterationRecord> trace;
  std::vector<GrowthEvent> growth;
  RunStatus status = RunStatus::Stalled;
  Circuit circuit;
  double energy_target = 0.0;  // NaN when unavailable
  double final_cost = 0.0;
  double final_metric = 0.0;  // the quantity compared against tol
};

enum class Decision { Converged, Stalled, Continue };

// `history` is the per-iteration convergence metric (relative energy error or
// total infidelity). Converged when the latest entry is below tol; stalled
// when the mean absolute change over the last `window` steps drops below
// subtol (needs window+1 entries).
Decision convergence_check(const std::vector<double>& history, double tol, double subtol,
                           int window);

RunReport optimize(const RunConfig& cfg);

// Resumable snapshot; "qcochk1" JSON container.
struct Checkpoint {
  RunConfig config;
  Circuit circuit;
  AdamState adam;
  std::string rng_state;
  std::vector<IterationRecord> trace;
  std::vector<GrowthEvent> growth;
};

void checkpoint_save(const std::string& path, const Checkpoint& c);
Checkpoint checkpoint_load(const std::string& path);
RunReport resume(const Checkpoint& c);

struct EvalMetrics {
  double energy = 0.0;
  double rel_energy_error = 0.0;  // NaN without E_T
  double total_fidelity = 0.0;    // NaN without a target
  std::vector<double> profile;    // empty without a target
  double cost = 0.0;
  double total_discarded = 0.0;
};

EvalMetrics evaluate(const RunConfig& cfg, const Circuit& circuit);

nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json report_to_json(const RunReport& report);

// "iteration, depth, cost, rel_energy_error, total_infidelity, wall_ms"
std::string trace_csv(const std::vector<IterationRecord>& trace);

// Flat gate-list export: per layer and sublayer the bond, parameter id, and
// materialized dense gate.
nlohmann::json gate_list_json(const Circuit& circuit);

// TOML-subset config: flat `key = value` lines (strings, numbers, booleans,
// comments); unknown keys are errors.
RunConfig config_from_toml(const std::string& text);
RunConfig config_from_toml_file(const std::string& path);

}  // namespace qco
