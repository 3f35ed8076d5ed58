#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "qco/mps.hpp"

namespace qco {

enum class Model { Ising, Potts3, Schwinger };
enum class Symmetry { None, Z2Parity, U1Ztot };

// H_Ising = -sum X X - sum (g Z + h X)           (d = 2)
// H_Potts = -sum (s s'^dag + h.c.) - g sum (t + t^dag) - h sum (s + s^dag)
//                                                (d = 3)
// H_MS    = m sum P_i + 1/2 sum (XX + YY)
//           + g^2/2 sum_i (sum_{k<=i} (-1)^k P_k)^2,  P_k = (1 + (-1)^k Z_k)/2
struct ModelSpec {
  Model model = Model::Ising;
  int length = 2;
  double g = 0.0;
  double h = 0.0;
  double m = 0.0;
  Symmetry symmetry = Symmetry::None;
};

// Validates the (model, symmetry) combination; throws on nonsense such as
// Z2 parity with a longitudinal field.
void validate(const ModelSpec& spec);

// Graded physical space. Z2: |0> -> charge 0, |1> -> charge 1 (parity +1 is
// total charge 0). U1: dense order (Z=-1, Z=+1) with charges (-1, +1).
IndexSpace model_phys(const ModelSpec& spec);

MpoOperator ising_mpo(int L, double g, double h, Symmetry sym = Symmetry::None);
MpoOperator potts3_mpo(int L, double g, double h);
MpoOperator schwinger_mpo(int L, double m, double g, Symmetry sym = Symmetry::U1Ztot);
MpoOperator model_mpo(const ModelSpec& spec);

// Dense oracle in the site-major, sector-ordered basis (guard d^L <= 2^20).
Eigen::MatrixXcd dense_hamiltonian(const ModelSpec& spec);

// Total charge of a dense basis index under the model's symmetry.
Charge basis_charge(const ModelSpec& spec, std::int64_t index);

struct EigPair {
  double energy = 0.0;
  Eigen::VectorXcd vector;  // full dense basis, sector-supported
};

// k lowest eigenpairs, restricted to `sector` when given; deterministic
// ordering with a lexicographic tie-break inside degenerate levels.
std::vector<EigPair> exact_eigs(const ModelSpec& spec, std::optional<Charge> sector, int k);

// n-th eigenstate (n = 0 ground) as a normalized MPS; errors if the
// compression fidelity drops below 1 - 1e-10.
MpsState target_mps(const ModelSpec& spec, std::optional<Charge> sector, int n,
                    const TruncationPolicy& policy);

struct DmrgResult {
  double energy = 0.0;
  MpsState state;
  int sweeps = 0;
};

// Two-site DMRG ground-state oracle for sizes beyond the dense limit;
// converged when the energy moves less than `conv` over a full sweep.
// `sector` defaults to the model's natural ground sector.
DmrgResult two_site_dmrg(const ModelSpec& spec, const TruncationPolicy& policy,
                         int max_sweeps = 50, double conv = 1e-10,
                         std::optional<Charge> sector = std::nullopt);

// |E - E_T| / |E_T|
double rel_energy_error(double e, double e_t);

}  // namespace qco
