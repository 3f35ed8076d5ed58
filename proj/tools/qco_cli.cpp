#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "qco/driver.hpp"

namespace {

using namespace qco;

int status_code(RunStatus s) {
  switch (s) {
    case RunStatus::Converged: return 0;
    case RunStatus::MaxdepthExhausted: return 2;
    case RunStatus::Stalled: return 3;
  }
  return 1;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << content;
  if (!out.flush()) throw std::runtime_error("write to '" + path + "' failed");
}

int emit_run_outputs(const RunConfig& cfg, const RunReport& report) {
  const std::filesystem::path dir = cfg.out_dir.empty() ? "." : cfg.out_dir;
  std::filesystem::create_directories(dir);
  write_file((dir / "report.json").string(), report_to_json(report).dump(2));
  write_file((dir / "trace.csv").string(), trace_csv(report.trace));
  write_file((dir / "circuit.json").string(), circuit_to_json(report.circuit).dump());
  write_file((dir / "gates.json").string(), gate_list_json(report.circuit).dump());
  std::cout << "status: " << report_to_json(report)["status"].get<std::string>()
            << "  iterations: " << report.trace.size() << "  depth: " << report.circuit.depth()
            << "  final_cost: " << report.final_cost << "  final_metric: " << report.final_metric
            << "\n";
  return status_code(report.status);
}

int cmd_spectrum(const RunConfig& cfg, int levels) {
  const ModelSpec& spec = cfg.model;
  std::vector<std::optional<Charge>> sectors;
  switch (spec.symmetry) {
    case Symmetry::None:
      sectors.push_back(std::nullopt);
      break;
    case Symmetry::Z2Parity:
      sectors.push_back(0);
      sectors.push_back(1);
      break;
    case Symmetry::U1Ztot:
      for (Charge q = -spec.length; q <= spec.length; q += 2) sectors.push_back(q);
      break;
  }
  std::ostringstream params;
  params << "g=" << spec.g << ";h=" << spec.h << ";m=" << spec.m;
  std::cout << "model, L, params, sector, n, energy\n";
  const int d = spec.model == Model::Potts3 ? 3 : 2;
  std::int64_t dim = 1;
  for (int i = 0; i < spec.length; ++i) dim *= d;
  for (const auto& sec : sectors) {
    std::int64_t sec_dim = dim;
    if (sec) {
      sec_dim = 0;
      for (std::int64_t b = 0; b < dim; ++b)
        if (basis_charge(spec, b) == *sec) ++sec_dim;
      if (sec_dim == 0) continue;
    }
    const int k = static_cast<int>(std::min<std::int64_t>(levels, sec_dim));
    auto eigs = exact_eigs(spec, sec, k);
    for (int n = 0; n < k; ++n) {
      std::cout << (spec.model == Model::Ising ? "ising"
                    : spec.model == Model::Potts3 ? "potts3"
                                                  : "schwinger")
                << ", " << spec.length << ", " << params.str() << ", "
                << (sec ? std::to_string(*sec) : std::string("-")) << ", " << n << ", "
                << std::setprecision(15) << eigs[static_cast<std::size_t>(n)].energy << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"variational brick-wall circuit optimizer for 1d lattice models"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, circuit_path, vary;
  int levels = 10;

  auto* run = app.add_subcommand("run", "optimize a circuit from a config file");
  run->add_option("--config", config_path, "TOML config")->required();

  auto* res = app.add_subcommand("resume", "continue from a checkpoint");
  res->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();

  auto* ev = app.add_subcommand("evaluate", "evaluate a stored circuit");
  ev->add_option("--circuit", circuit_path, "ckt1 circuit file")->required();
  ev->add_option("--config", config_path, "TOML config")->required();

  auto* sp = app.add_subcommand("spectrum", "dump sector-resolved energies as CSV");
  sp->add_option("--config", config_path, "TOML config")->required();
  sp->add_option("--levels", levels, "levels per sector");

  auto* sw = app.add_subcommand("sweep", "run over a list of parameter values");
  sw->add_option("--config", config_path, "TOML config")->required();
  sw->add_option("--vary", vary, "key=v1,v2,... applied on top of the config")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      RunConfig cfg = config_from_toml_file(config_path);
      return emit_run_outputs(cfg, optimize(cfg));
    }
    if (res->parsed()) {
      Checkpoint c = checkpoint_load(checkpoint_path);
      return emit_run_outputs(c.config, resume(c));
    }
    if (ev->parsed()) {
      RunConfig cfg = config_from_toml_file(config_path);
      std::ifstream in(circuit_path);
      if (!in) throw std::runtime_error("cannot open '" + circuit_path + "'");
      nlohmann::json j;
      in >> j;
      EvalMetrics m = evaluate(cfg, circuit_from_json(j));
      nlohmann::json out{{"energy", m.energy},
                         {"rel_energy_error", m.rel_energy_error},
                         {"total_fidelity", m.total_fidelity},
                         {"subspace_profile", m.profile},
                         {"cost", m.cost},
                         {"total_discarded", m.total_discarded}};
      std::cout << out.dump(2) << "\n";
      return 0;
    }
    if (sp->parsed()) return cmd_spectrum(config_from_toml_file(config_path), levels);
    if (sw->parsed()) {
      const auto eq = vary.find('=');
      if (eq == std::string::npos) throw std::runtime_error("--vary expects key=v1,v2,...");
      const std::string key = vary.substr(0, eq);
      std::ifstream in(config_path);
      if (!in) throw std::runtime_error("cannot open '" + config_path + "'");
      std::ostringstream base;
      base << in.rdbuf();
      std::cout << "iteration, depth, cost, rel_energy_error, total_infidelity, wall_ms\n";
      std::stringstream values(vary.substr(eq + 1));
      std::string value;
      while (std::getline(values, value, ',')) {
        RunConfig cfg = config_from_toml(base.str() + "\n" + key + " = " + value + "\n");
        RunReport report = optimize(cfg);
        std::cout << "# " << key << " = " << value << " ("
                  << report_to_json(report)["status"].get<std::string>() << ")\n";
        if (!report.trace.empty()) {
          std::string csv = trace_csv({report.trace.back()});
          std::cout << csv.substr(csv.find('\n') + 1);
        }
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
