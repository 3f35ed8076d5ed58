#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <string>

#include "qco/driver.hpp"
#include "test_support.hpp"

using namespace qco;

namespace {

RunConfig small_ising(int L = 6, double g = 1.2) {
  RunConfig cfg;
  cfg.model = {Model::Ising, L, g, 0.0, 0.0, Symmetry::Z2Parity};
  cfg.cost = CostFunction::Kind::Energy;
  cfg.seed = 11;
  cfg.max_iters = 2000;
  return cfg;
}

bool same_trace(const std::vector<IterationRecord>& a, const std::vector<IterationRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].iteration != b[i].iteration || a[i].depth != b[i].depth) return false;
    if (a[i].cost != b[i].cost) return false;
    const bool rel_eq = a[i].rel_energy_error == b[i].rel_energy_error ||
                        (std::isnan(a[i].rel_energy_error) && std::isnan(b[i].rel_energy_error));
    const bool inf_eq = a[i].total_infidelity == b[i].total_infidelity ||
                        (std::isnan(a[i].total_infidelity) && std::isnan(b[i].total_infidelity));
    if (!rel_eq || !inf_eq || a[i].discarded != b[i].discarded) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("convergence_check") {
  SUBCASE("monotone fast descent continues") {
    std::vector<double> h;
    for (int i = 0; i < 30; ++i) h.push_back(1.0 / (i + 1.0));
    CHECK(convergence_check(h, 1e-3, 1e-7, 10) == Decision::Continue);
  }
  SUBCASE("flat trace stalls") {
    std::vector<double> h(15, 0.42);
    CHECK(convergence_check(h, 1e-3, 1e-7, 10) == Decision::Stalled);
  }
  SUBCASE("converged at the first crossing of tol") {
    std::vector<double> h{0.5, 0.1, 0.01, 0.0009};
    CHECK(convergence_check(h, 1e-3, 1e-7, 10) == Decision::Converged);
    h.pop_back();
    CHECK(convergence_check(h, 1e-3, 1e-7, 10) == Decision::Continue);
  }
  SUBCASE("stall needs a full window") {
    std::vector<double> h(10, 0.42);
    CHECK(convergence_check(h, 1e-3, 1e-7, 10) == Decision::Continue);
  }
}

TEST_CASE("config parsing") {
  SUBCASE("toml subset round trip") {
    const std::string text = R"(
# comment line
model = "schwinger"   # trailing comment
length = 8
g = 0.8
m = 0.5
symmetry = "u1"
sector = 0
cost = "energy"
initial = "01010101"
chi_max = 32
cutoff = 1e-12
tol = 1e-3
subtol = 1e-6
window = 5
maxdepth = 4
max_iters = 100
inversion = false
gate_eps = 0.02
eta = 0.005
seed = 99
)";
    RunConfig cfg = config_from_toml(text);
    CHECK(cfg.model.model == Model::Schwinger);
    CHECK(cfg.model.length == 8);
    CHECK(cfg.model.g == 0.8);
    CHECK(cfg.model.m == 0.5);
    CHECK(cfg.model.symmetry == Symmetry::U1Ztot);
    CHECK(cfg.sector == Charge{0});
    CHECK(cfg.initial == std::vector<int>{0, 1, 0, 1, 0, 1, 0, 1});
    CHECK(cfg.policy.chi_max == 32);
    CHECK(cfg.policy.cutoff == 1e-12);
    CHECK(cfg.tol == 1e-3);
    CHECK(cfg.window == 5);
    CHECK(cfg.maxdepth == 4);
    CHECK_FALSE(cfg.inversion_symmetric);
    CHECK(cfg.adam.eta == 0.005);
    CHECK(cfg.seed == 99);
    // json round trip preserves every field
    RunConfig back = config_from_json(config_to_json(cfg));
    CHECK(config_to_json(back) == config_to_json(cfg));
  }
  SUBCASE("unknown keys and malformed values error") {
    CHECK_THROWS_AS(static_cast<void>(config_from_toml("bogus_key = 1\n")), std::invalid_argument);
    CHECK_THROWS_AS(static_cast<void>(config_from_toml("tol = fast\n")), std::invalid_argument);
    CHECK_THROWS_AS(static_cast<void>(config_from_toml("tol\n")), std::invalid_argument);
    CHECK_THROWS_AS(static_cast<void>(config_from_toml("model = 3\n")), std::invalid_argument);
  }
  SUBCASE("defaults") {
    RunConfig cfg;
    CHECK(cfg.policy.chi_max == 64);
    CHECK(cfg.policy.cutoff == 1e-10);
    CHECK(cfg.tol == 1e-4);
    CHECK(cfg.subtol == 1e-7);
    CHECK(cfg.window == 10);
    CHECK(cfg.maxdepth == 16);
    CHECK(cfg.gate_eps == 0.01);
  }
  SUBCASE("default initial states and sectors") {
    CHECK(default_initial({Model::Ising, 4, 1.0, 0.0, 0.0, Symmetry::None}) ==
          std::vector<int>{0, 0, 0, 0});
    CHECK(default_initial({Model::Schwinger, 4, 1.0, 0.0, 0.0, Symmetry::U1Ztot}) ==
          std::vector<int>{0, 1, 0, 1});
    RunConfig cfg;
    cfg.model = {Model::Schwinger, 6, 1.0, 0.0, 0.5, Symmetry::U1Ztot};
    CHECK(config_sector(cfg) == 0);  // Neel charge
    cfg.sector = 2;
    CHECK(config_sector(cfg) == 2);
  }
}

TEST_CASE("optimize basics") {
  SUBCASE("target equal to the initial state converges at iteration 1") {
    RunConfig cfg;
    cfg.model = {Model::Ising, 4, 1.0, 0.0, 0.0, Symmetry::Z2Parity};
    cfg.cost = CostFunction::Kind::NegLogTotalFidelity;
    cfg.gate_eps = 0.0;
    cfg.target_override = product_state(model_phys(cfg.model), {0, 0, 0, 0}, 0);
    RunReport report = optimize(cfg);
    CHECK(report.status == RunStatus::Converged);
    REQUIRE(report.trace.size() == 1);
    CHECK(report.trace[0].depth == 1);
    CHECK(report.final_cost <= 1e-12);
  }
  SUBCASE("deep paramagnet converges at depth 1 in a few iterations") {
    RunConfig cfg = small_ising(6, 50.0);
    RunReport report = optimize(cfg);
    CHECK(report.status == RunStatus::Converged);
    CHECK(report.circuit.depth() == 1);
    CHECK(report.trace.size() < 100);
  }
  SUBCASE("trace is complete, depth non-decreasing, growth steps by one") {
    RunConfig cfg = small_ising(6, 1.2);
    cfg.tol = 1e-7;  // forces at least one growth event
    cfg.maxdepth = 3;
    RunReport report = optimize(cfg);
    REQUIRE(!report.trace.empty());
    for (std::size_t i = 0; i < report.trace.size(); ++i) {
      CHECK(report.trace[i].iteration == static_cast<int>(i) + 1);
      if (i > 0) CHECK(report.trace[i].depth >= report.trace[i - 1].depth);
    }
    CHECK(!report.growth.empty());
    int d = 1;
    for (const auto& ev : report.growth) {
      CHECK(ev.new_depth == d + 1);
      d = ev.new_depth;
    }
    CHECK(report.circuit.depth() == d);
    // the final status is justified by the trace
    if (report.status == RunStatus::Converged)
      CHECK(report.final_metric < cfg.tol);
    else
      CHECK(report.final_metric >= cfg.tol);
  }
  SUBCASE("determinism: identical config and seed, bit-identical trace") {
    RunConfig cfg = small_ising(6, 1.0);
    cfg.tol = 1e-3;
    RunReport a = optimize(cfg);
    RunReport b = optimize(cfg);
    CHECK(same_trace(a.trace, b.trace));
    CHECK(a.status == b.status);
  }
  SUBCASE("charge conservation: final state stays in the initial sector") {
    RunConfig cfg;
    cfg.model = {Model::Schwinger, 6, 0.8, 0.0, 0.5, Symmetry::U1Ztot};
    cfg.max_iters = 40;
    cfg.tol = 1e-12;
    cfg.subtol = 1e-300;
    RunReport report = optimize(cfg);
    MpsState init = product_state(model_phys(cfg.model), default_initial(cfg.model), 0);
    ApplyResult r = apply_circuit(init, report.circuit, cfg.policy);
    CHECK(r.state.sector() == 0);
  }
  SUBCASE("sector mismatch between target and initial state errors") {
    RunConfig cfg;
    cfg.model = {Model::Ising, 4, 1.0, 0.0, 0.0, Symmetry::Z2Parity};
    cfg.cost = CostFunction::Kind::NegLogTotalFidelity;
    cfg.sector = 1;
    cfg.initial = {1, 0, 0, 0};
    cfg.target_override = product_state(model_phys(cfg.model), {0, 0, 0, 0}, 0);
    CHECK_THROWS_AS(static_cast<void>(optimize(cfg)), std::invalid_argument);
  }
  SUBCASE("vanishing overlap surfaces with a remediation hint") {
    RunConfig cfg;
    cfg.model = {Model::Ising, 4, 1.0, 0.5, 0.0, Symmetry::None};
    cfg.cost = CostFunction::Kind::NegLogTotalFidelity;
    cfg.gate_eps = 0.0;  // identity circuit: overlap with the flipped target is exactly 0
    cfg.target_override = product_state(model_phys(cfg.model), {1, 1, 1, 1});
    try {
      static_cast<void>(optimize(cfg));
      FAIL("expected a vanishing-overlap error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("vanishing overlap") != std::string::npos);
      CHECK(std::string(e.what()).find("sector") != std::string::npos);
    }
  }
}

TEST_CASE("checkpointing") {
  const std::string path = "/tmp/qco_test_checkpoint.json";
  SUBCASE("resume equals uninterrupted execution") {
    RunConfig cfg = small_ising(6, 1.0);
    cfg.tol = 1e-12;  // never converges in 20 iterations
    cfg.subtol = 1e-300;
    cfg.max_iters = 20;
    cfg.checkpoint_every = 7;
    cfg.checkpoint_path = path;
    RunReport full = optimize(cfg);
    REQUIRE(full.trace.size() == 20);

    // the last checkpoint of a truncated run sits at iteration 14
    RunConfig head = cfg;
    head.max_iters = 16;
    static_cast<void>(optimize(head));
    Checkpoint c = checkpoint_load(path);
    REQUIRE(c.trace.size() == 14);
    c.config.max_iters = 20;
    RunReport resumed = resume(c);
    CHECK(resumed.trace.size() == 20);
    CHECK(same_trace(full.trace, resumed.trace));
    CHECK(full.status == resumed.status);
  }
  SUBCASE("save/load round trip and version tag") {
    RunConfig cfg = small_ising(4, 1.2);
    cfg.max_iters = 3;
    cfg.tol = 1e-12;
    cfg.subtol = 1e-300;
    cfg.checkpoint_every = 2;
    cfg.checkpoint_path = path;
    static_cast<void>(optimize(cfg));
    Checkpoint c = checkpoint_load(path);
    CHECK(c.trace.size() == 2);
    checkpoint_save(path, c);
    Checkpoint c2 = checkpoint_load(path);
    CHECK(same_trace(c.trace, c2.trace));
    CHECK(c2.rng_state == c.rng_state);

    FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("{\"format\":\"other\"}", f);
    std::fclose(f);
    CHECK_THROWS_AS(static_cast<void>(checkpoint_load(path)), std::runtime_error);
    CHECK_THROWS_AS(static_cast<void>(checkpoint_load("/nonexistent/nope.json")),
                    std::runtime_error);
  }
}

TEST_CASE("evaluate") {
  SUBCASE("reproduces the final recorded metrics of a converged run") {
    RunConfig cfg = small_ising(6, 1.2);
    RunReport report = optimize(cfg);
    REQUIRE(report.status == RunStatus::Converged);
    EvalMetrics m = evaluate(cfg, report.circuit);
    CHECK(std::abs(m.cost - report.final_cost) < 1e-12);
    CHECK(std::abs(m.rel_energy_error - report.final_metric) < 1e-12);
  }
  SUBCASE("identity circuit on the paramagnetic product state") {
    RunConfig cfg = small_ising(6, 50.0);
    Circuit circuit = make_circuit(6, model_phys(cfg.model), true);
    std::mt19937_64 rng(1);
    grow(circuit, 0.0, rng);
    EvalMetrics m = evaluate(cfg, circuit);
    CHECK(std::abs(m.energy - (-6.0 * 50.0)) < 1e-10);  // <0...0| H |0...0>
  }
  SUBCASE("subspace profile of a converged excited-state run") {
    RunConfig cfg;
    cfg.model = {Model::Ising, 6, 1.2, 0.0, 0.0, Symmetry::Z2Parity};
    cfg.cost = CostFunction::Kind::MeanNegLogSubspaceFidelity;
    cfg.target_n = 1;
    cfg.tol = 1e-4;
    cfg.maxdepth = 6;
    cfg.seed = 3;
    cfg.max_iters = 4000;
    RunReport report = optimize(cfg);
    REQUIRE(report.status == RunStatus::Converged);
    EvalMetrics m = evaluate(cfg, report.circuit);
    REQUIRE(m.profile.size() == 6);
    for (double f : m.profile) CHECK(f >= 1.0 - 10.0 * cfg.tol);
  }
}

TEST_CASE("serialization helpers") {
  RunConfig cfg = small_ising(4, 1.2);
  cfg.max_iters = 5;
  cfg.tol = 1e-12;
  cfg.subtol = 1e-300;
  RunReport report = optimize(cfg);
  SUBCASE("csv header and row count") {
    const std::string csv = trace_csv(report.trace);
    CHECK(csv.rfind("iteration, depth, cost, rel_energy_error, total_infidelity, wall_ms\n", 0) ==
          0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
  }
  SUBCASE("report json carries the trace and circuit") {
    nlohmann::json j = report_to_json(report);
    CHECK(j["status"] == "stalled");
    CHECK(j["trace"].size() == 5);
    CHECK(j["circuit"]["format"] == "ckt1");
  }
  SUBCASE("gate list export materializes mirrored gates") {
    nlohmann::json j = gate_list_json(report.circuit);
    CHECK(j["format"] == "gatelist1");
    REQUIRE(j["layers"].size() == 1);
    CHECK(j["layers"][0]["odd"].size() == 2);
    CHECK(j["layers"][0]["even"].size() == 1);
    bool any_mirrored = false;
    for (const auto& e : j["layers"][0]["odd"]) {
      CHECK(e.contains("gate"));
      if (e["mirrored"].get<bool>()) any_mirrored = true;
    }
    CHECK(any_mirrored);
  }
}
