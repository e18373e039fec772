// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "wflow/evolution.hpp"
#include "wflow/grid.hpp"
#include "wflow/models.hpp"
#include "wflow/state.hpp"

namespace wflow {

/// One Fourier mode c e^{i k.x} with k = 2 pi n / L.
struct TrigMode {
  std::vector<std::int64_t> n;
  cplx c;
};

/// Test function on the torus: either a finite trigonometric sum with known
/// coefficients or a smooth periodic closed form.
class TestFunction {
 public:
  using Fn = std::function<cplx(std::span<const double>)>;

  static TestFunction trig(double L, std::size_t d, std::vector<TrigMode> modes, std::string name = "trig");
  /// `smoothness` is the number of continuous derivatives; the default means C-infinity.
  static TestFunction smooth(double L, std::size_t d, Fn f, std::string name,
                             int smoothness = std::numeric_limits<int>::max());

  double length() const { return L_; }
  std::size_t dims() const { return d_; }
  const std::string& name() const { return name_; }
  bool is_trig() const { return !fn_; }
  int smoothness() const { return smoothness_; }
  const std::vector<TrigMode>& modes() const { return modes_; }

  cplx operator()(std::span<const double> x) const;
  std::vector<cplx> samples(const GridSpec& grid) const;

  /// ||laplacian^p f||_{L2}: exact for trig sums, spectral on a grid of
  /// `fine_N` points per axis otherwise.
  double laplacian_power_norm(int p, std::size_t fine_N = 256) const;

 private:
  TestFunction() = default;
  double L_ = 1.0;
  std::size_t d_ = 1;
  std::string name_;
  std::vector<TrigMode> modes_;
  Fn fn_;
  int smoothness_ = std::numeric_limits<int>::max();
};

/// Band-limited interpolant through the grid samples, as a trig sum over the
/// grid's band (per-axis modes -N/2 .. N/2-1).
TestFunction oblique_project(const TestFunction& f, const GridSpec& grid);

/// Largest gap between the interpolant's coefficients and the folded sum
/// of f's coefficients over each alias class. Trig functions only.
double aliasing_error(const TestFunction& f, const GridSpec& grid);

struct LatticeSumReport {
  double partial_sum = 0.0;
  /// Certified upper bound on the terms with ||x||_inf > R.
  double tail_bound = 0.0;
  double bound = 0.0;
  bool holds() const { return partial_sum + tail_bound <= bound; }
};

/// Sum over nonzero integer x of ||x + y||^{-q} against [(1 + sqrt d) sqrt(d + 3)]^q.
/// Terms with 0 < ||x||_inf <= R are summed; the rest are bounded by an
/// integral over shells. Requires q >= d + 2 pi and ||y||_inf <= 1/2.
LatticeSumReport lattice_sum_check(std::size_t d, double q, std::span<const double> y, int R = 40);

struct ProjectionReport {
  double measured = 0.0;
  double bound = 0.0;
  double commutator_measured = 0.0;
  double commutator_bound = 0.0;
  /// Change in `measured` between the two quadrature grids (zero for trig sums).
  double refinement_change = 0.0;
  bool holds() const { return measured <= bound && commutator_measured <= commutator_bound; }
};

/// ||laplacian^m (Pf - f)|| against (Ld/N)^{2s} ||laplacian^{m+s} f||, and
/// the commutator [laplacian^m, P] f against twice that bound. Smooth
/// functions are measured on grids `fine_factor` and 2 * `fine_factor` times
/// finer, which must agree to 1e-6 relative (oracle error otherwise).
ProjectionReport projection_error_check(const TestFunction& f, const GridSpec& grid, int m, int s,
                                        std::size_t fine_factor = 8);

struct VectorDeOptions {
  double T = 1.0;
  bool zero_forcing = false;
  bool zero_hamiltonian = false;
  bool constant_forcing = false;
  /// Start along -i b_0, the equality case when H = 0 and b is constant.
  bool aligned_start = false;
  double tol = 1e-12;
};

struct VectorDeReport {
  double norm_0 = 0.0;
  double norm_T = 0.0;
  double forcing_integral = 0.0;
  double bound = 0.0;
  /// Allowance for the integrator's own error.
  double integration_slack = 1e-10;
  bool holds() const { return norm_T <= bound + integration_slack; }
};

/// i dz/dt = H_t z + b_t with H_t = H0 + t H1 + t^2 H2 Hermitian and
/// b_t = b0 + t b1, from a random unit z_0. Checks ||z_T|| <= ||z_0|| + int ||b_t|| dt.
VectorDeReport vector_de_bound_check(std::size_t dim, std::uint64_t seed, const VectorDeOptions& opts = {});

struct Theorem1Row {
  std::size_t N = 0;
  double delta = 0.0;
  double measured = 0.0;
  bool feasible = false;  // delta <= T
  bool asserted = false;  // feasible and the family meets the hypotheses
  bool holds() const { return !asserted || measured <= delta; }
};

struct Theorem1Options {
  /// Time samples for the maximum over [0, T] in c_s.
  std::size_t time_samples = 17;
  /// Quadrature grid for c_s, as a multiple of the largest N.
  std::size_t fine_factor = 4;
  double reference_tol = 1e-10;
  ReferenceOptions reference;
  /// Families whose seam mass exceeds this are reported but not asserted.
  double boundary_mass_limit = 1e-3;
};

struct Theorem1Report {
  std::string family;
  int s = 2;
  double T = 1.0;
  double c_s = 0.0;
  double max_boundary_mass = 0.0;
  bool hypotheses_met = true;
  std::vector<Theorem1Row> rows;
  /// All asserted rows hold and the error at the last N is below the first.
  bool holds() const;
};

/// c_s = 3 max_t [(||V_t||_inf + 1) ||lap^{s+1} sqrt p_t|| + ||lap^{s+1}(V_t sqrt p_t)||] + 1,
/// with each norm from the smoothness oracle on `fine` and t sampled.
double theorem1_constant(const Family& family, int s, const GridSpec& fine, std::size_t time_samples);

/// For each N: evolve the exact initial qsample with the reference
/// propagator over [0, T] and compare with the ideal final qsample.
Theorem1Report theorem1_experiment(const Family& family, int s, std::span<const std::size_t> Ns,
                                   const Theorem1Options& opts = {});

}  // namespace wflow
