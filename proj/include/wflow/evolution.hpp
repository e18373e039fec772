// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "wflow/models.hpp"
#include "wflow/spectral.hpp"
#include "wflow/state.hpp"

namespace wflow {

// ---------------------------------------------------------------------------
// Resource planning

struct PlanInputs {
  double T = 1.0;
  double epsilon = 0.1;
  int s = 2;
  double c_s = 1.0;
  double L = 1.0;
  std::size_t d = 1;
  double v_max = 0.0;
  double vdot_max = 0.0;
  /// ||psi_0 - phi_0||, the initial state-preparation error.
  double prep_error = 0.0;
};

struct SimulationPlan {
  PlanInputs in;
  /// Ld (2 T c_s / eps)^{1/(2s)}, before rounding up to a power of two.
  double n_bound = 0.0;
  std::uint64_t N = 0;
  std::uint64_t n = 0;
  /// The unrounded step-count bound and its ceiling.
  double r_bound = 0.0;
  std::uint64_t r = 0;
  double dt = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double delta = 0.0;
  bool feasible = false;
};

/// Grid size, qubit count, step count and spatial error for a target
/// accuracy. Throws a parameter error when s or eps is out of range.
SimulationPlan plan(const PlanInputs& in);

// ---------------------------------------------------------------------------
// Product formula

struct Angles {
  double alpha;
  double beta;
};

/// alpha = (L / (pi N)) sqrt(dt / d), beta = (pi N / (2L)) sqrt(d dt).
Angles pf_angles(double L, std::size_t N, std::size_t d, double dt);

/// One step of the eight-factor group-commutator formula W(t0) with the
/// potential frozen at t0. The rightmost factor e^{i alpha K} acts first.
StateVector pf_step(const StateVector& state, const PotentialModel& model, double t0, double dt);
void pf_step_inplace(StateVector& state, std::span<const double> potential, double alpha, double beta);

struct EvolveOptions {
  /// Replaces the plan's step count.
  std::optional<std::uint64_t> r_override;
  /// Upper limit on r * N^d amplitude updates.
  double work_budget = 4e9;
};

struct EvolutionReport {
  StateVector final_state;
  std::vector<double> step_norms;
  double max_norm_drift = 0.0;
  std::uint64_t steps = 0;
  double dt = 0.0;
  double seconds = 0.0;
};

/// Applies pf_step at t = 0, dt, ..., (r-1) dt on the plan's grid.
EvolutionReport evolve(const SimulationPlan& p, const PotentialModel& model, const StateVector& initial,
                       const EvolveOptions& opts = {});
/// Same, for r equal steps over [t0, t1] on the initial state's grid.
EvolutionReport evolve_steps(const PotentialModel& model, const StateVector& initial, double t0, double t1,
                             std::uint64_t r, double work_budget = 4e9);

/// [3 pi^4/4 d^2 N^4/L^4 (1 + ||V_t0||)^4 + pi^2/2 d N^2/L^2 max ||dV/dt||] dt^2.
double local_error_bound(const PotentialModel& model, const GridSpec& grid, double t0, double dt);

// ---------------------------------------------------------------------------
// Reference propagator

enum class ReferenceScheme { magnus4, midpoint };

struct ReferenceOptions {
  ReferenceScheme scheme = ReferenceScheme::magnus4;
  /// Use dense eigendecompositions up to this many amplitudes, matrix-free beyond.
  std::size_t dense_limit = 256;
  std::uint64_t initial_steps = 1;
  int max_halvings = 20;
};

struct ReferenceResult {
  StateVector state;
  std::uint64_t micro_steps = 0;
  double last_change = 0.0;
};

/// U(t1, t0) initial, refined by step halving until successive results
/// differ by less than tol / 10. Throws a tolerance error otherwise.
ReferenceResult reference_evolve(const PotentialModel& model, const GridSpec& grid, const StateVector& initial,
                                 double t0, double t1, double tol, const ReferenceOptions& opts = {});

/// Dense U(t1, t0) with the same refinement rule, in spectral norm.
Eigen::MatrixXcd reference_propagator(const PotentialModel& model, const GridSpec& grid, double t0, double t1,
                                      double tol, const ReferenceOptions& opts = {},
                                      std::size_t cap = kDefaultDenseCap);

/// exp(-i H dt) for Hermitian H.
Eigen::MatrixXcd expm_hermitian(const Eigen::MatrixXcd& H, double dt);

/// Dense W(t0) on the grid.
Eigen::MatrixXcd dense_W(const PotentialModel& model, const GridSpec& grid, double t0, double dt,
                         std::size_t cap = kDefaultDenseCap);

// ---------------------------------------------------------------------------
// Norms

/// Largest singular value by SVD.
double spectral_norm(const Eigen::MatrixXcd& A);
/// Largest singular value by power iteration on A^dagger A.
double spectral_norm_power(const Eigen::MatrixXcd& A, double rel_tol = 1e-3, int max_iter = 500,
                           std::uint64_t seed = 1);

// ---------------------------------------------------------------------------
// Time-stepping lemmas on random dense instances

struct LemmaCheck {
  double measured = 0.0;
  double bound = 0.0;
  bool holds() const { return measured <= bound; }
};

/// Random Hermitian matrix with standard normal entries scaled by `scale`.
Eigen::MatrixXcd random_hermitian(std::size_t dim, double scale, std::uint64_t seed);

/// ||U(t0+dt, t0) - exp(-i H(t0) dt)|| vs dt^2/2 max||H'|| for H(t) = A + t B.
LemmaCheck time_freeze_check(const Eigen::MatrixXcd& A, const Eigen::MatrixXcd& B, double t0, double dt);

/// ||S(sqrt(dt/2)) S(-sqrt(dt/2)) - exp(-i H dt)|| with H = i[A, B] vs
/// [8/3 (||A|| + ||B||)^4 + ||H||^2 / 2] dt^2.
LemmaCheck group_commutator_check(const Eigen::MatrixXcd& A, const Eigen::MatrixXcd& B, double dt);

}  // namespace wflow
