// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "wflow/grid.hpp"

namespace wflow {

/// Time-dependent scalar potential V_t on the torus; the velocity field is
/// its gradient.
class PotentialModel {
 public:
  virtual ~PotentialModel() = default;

  virtual std::size_t dims() const = 0;
  virtual double length() const = 0;
  virtual double horizon() const = 0;
  virtual std::string name() const = 0;

  virtual double value(double t, std::span<const double> x) const = 0;
  virtual double time_derivative(double t, std::span<const double> x) const = 0;
  virtual void gradient(double t, std::span<const double> x, std::span<double> out) const = 0;
  /// Divergence of the velocity field.
  virtual double laplacian(double t, std::span<const double> x) const = 0;

  /// Upper bound on sup_x |V_t(x)|.
  virtual double sup_norm(double t) const = 0;
  /// Upper bound on max over [t0, t1] of sup_x |dV/dt|.
  virtual double sup_time_derivative(double t0, double t1) const = 0;

  /// max over [0, T] of sup_x |V_t|.
  virtual double v_max() const;
  double vdot_max() const { return sup_time_derivative(0.0, horizon()); }

  /// V_t at every grid point in flat order.
  std::vector<double> sample(double t, const GridSpec& grid) const;
};

enum class PathKind { analytic, reference_computed };

/// Family of densities p_t on the torus.
class ProbabilityPath {
 public:
  virtual ~ProbabilityPath() = default;

  virtual std::size_t dims() const = 0;
  virtual double length() const = 0;
  virtual double horizon() const = 0;
  virtual PathKind kind() const = 0;

  /// Density at time t. Evaluation slightly outside [0, T] is permitted so
  /// that time derivatives can be formed by differencing.
  virtual double density(double t, std::span<const double> x) const = 0;
  virtual double sqrt_density(double t, std::span<const double> x) const;
  /// Probability mass within L/10 of the torus seam on any axis.
  virtual double boundary_mass(double t) const = 0;

  std::vector<double> sample(double t, const GridSpec& grid) const;
};

/// Matched (path, potential) pair plus the tolerance its continuity residual
/// must meet.
struct Family {
  std::string name;
  std::shared_ptr<const PotentialModel> potential;
  std::shared_ptr<const ProbabilityPath> path;
  double residual_tolerance = 1e-6;
  /// Smooth on the torus: no wrapped non-periodic pieces.
  bool periodic = false;
};

// ---------------------------------------------------------------------------
// Trigonometric torus family

struct TrigTerm {
  std::vector<int> modes;  // integer wave numbers per axis
  double amplitude = 0.0;  // coefficient at t = 0
  double slope = 0.0;      // d(coefficient)/dt
  double phase = 0.0;
};

struct TrigTorusParams {
  double L = 6.283185307179586;
  std::size_t d = 1;
  double T = 1.0;
  /// Concentration of the von Mises initial density exp(kappa cos(2 pi x / L)) per axis.
  double kappa = 1.0;
  std::vector<TrigTerm> terms;
};

/// V_t(x) = sum_m (a_m + b_m t) cos(2 pi n_m . x / L + phase_m).
class TrigTorusPotential final : public PotentialModel {
 public:
  explicit TrigTorusPotential(TrigTorusParams p);

  std::size_t dims() const override { return p_.d; }
  double length() const override { return p_.L; }
  double horizon() const override { return p_.T; }
  std::string name() const override { return "trig_torus"; }

  double value(double t, std::span<const double> x) const override;
  double time_derivative(double t, std::span<const double> x) const override;
  void gradient(double t, std::span<const double> x, std::span<double> out) const override;
  double laplacian(double t, std::span<const double> x) const override;
  double sup_norm(double t) const override;
  double sup_time_derivative(double t0, double t1) const override;
  double v_max() const override;

  int band_limit() const;
  const TrigTorusParams& params() const { return p_; }

 private:
  TrigTorusParams p_;
};

/// Density path of a TrigTorus potential, computed by transporting the von
/// Mises initial density along characteristics of the flow ODE.
class TrigTorusPath final : public ProbabilityPath {
 public:
  /// `steps` fixed Dormand-Prince steps per characteristic, so the density
  /// is a smooth function of t (adaptive control would add step-selection noise).
  TrigTorusPath(std::shared_ptr<const PotentialModel> potential, double kappa, std::size_t steps = 256);

  std::size_t dims() const override { return potential_->dims(); }
  double length() const override { return potential_->length(); }
  double horizon() const override { return potential_->horizon(); }
  PathKind kind() const override { return PathKind::reference_computed; }
  double density(double t, std::span<const double> x) const override;
  double boundary_mass(double) const override { return 0.0; }

  double initial_density(std::span<const double> x) const;

 private:
  std::shared_ptr<const PotentialModel> potential_;
  double kappa_;
  std::size_t steps_;
  double log_norm_;
};

Family make_trig_torus(const TrigTorusParams& p);

// ---------------------------------------------------------------------------
// Gaussian families, wrapped onto a torus whose center carries the origin

struct GaussianLinearParams {
  double L = 16.0;
  std::size_t d = 1;
  std::vector<double> mu_star{0.0};  // target mean per axis
  double sigma_star = 1.0;
};

/// Linear interpolation path from N(0, I) to N(mu*, sigma*^2 I) on [0, 1].
class GaussianLinearPotential final : public PotentialModel {
 public:
  explicit GaussianLinearPotential(GaussianLinearParams p);

  std::size_t dims() const override { return p_.d; }
  double length() const override { return p_.L; }
  double horizon() const override { return 1.0; }
  std::string name() const override { return "gaussian_linear"; }

  double value(double t, std::span<const double> x) const override;
  double time_derivative(double t, std::span<const double> x) const override;
  void gradient(double t, std::span<const double> x, std::span<double> out) const override;
  double laplacian(double t, std::span<const double> x) const override;
  double sup_norm(double t) const override;
  double sup_time_derivative(double t0, double t1) const override;

  double mean(double t, std::size_t axis) const;
  double stddev(double t) const;
  const GaussianLinearParams& params() const { return p_; }

 private:
  GaussianLinearParams p_;
};

/// Affine noise schedule beta_t = beta_min + (beta_max - beta_min) t / T.
struct BetaSchedule {
  double beta_min = 0.1;
  double beta_max = 1.0;
  double T = 1.0;

  double beta(double t) const { return beta_min + (beta_max - beta_min) * t / T; }
  double slope() const { return (beta_max - beta_min) / T; }
  /// Integral of beta over [0, t].
  double integral(double t) const { return beta_min * t + 0.5 * slope() * t * t; }

  /// Builds a schedule from tabulated (t, beta) samples, rejecting tables
  /// that are not affine and non-decreasing.
  static BetaSchedule from_samples(std::span<const double> ts, std::span<const double> betas);
};

struct DdpmParams {
  double L = 16.0;
  std::size_t d = 1;
  BetaSchedule schedule;
  std::vector<double> target_mean{0.0};
  double target_std = 1.0;
  /// Run the path backwards (noise to data) instead of the forward diffusion direction.
  bool generative = false;
};

/// Probability-flow potential of the variance-preserving diffusion with
/// drift -x beta/2 and diffusion sqrt(beta), for a Gaussian data distribution.
class DdpmFlowPotential final : public PotentialModel {
 public:
  explicit DdpmFlowPotential(DdpmParams p);

  std::size_t dims() const override { return p_.d; }
  double length() const override { return p_.L; }
  double horizon() const override { return p_.schedule.T; }
  std::string name() const override { return "ddpm_flow"; }

  double value(double t, std::span<const double> x) const override;
  double time_derivative(double t, std::span<const double> x) const override;
  void gradient(double t, std::span<const double> x, std::span<double> out) const override;
  double laplacian(double t, std::span<const double> x) const override;
  double sup_norm(double t) const override;
  double sup_time_derivative(double t0, double t1) const override;

  /// Marginal mean and variance in diffusion time (t = 0 is the data).
  double diffusion_mean(double tau, std::size_t axis) const;
  double diffusion_variance(double tau) const;
  /// Linear coefficient c with velocity = -beta/2 y + beta/(2 var) (y - m), per axis at path time t.
  double velocity_slope(double t) const;
  const DdpmParams& params() const { return p_; }

 private:
  double tau(double t) const { return p_.generative ? p_.schedule.T - t : t; }
  double forward_value(double tau, std::span<const double> y) const;
  double forward_time_derivative(double tau, std::span<const double> y) const;

  DdpmParams p_;
};

/// Isotropic Gaussian path with per-axis mean and common standard deviation,
/// centered on the torus.
class GaussianPath final : public ProbabilityPath {
 public:
  using MeanFn = std::function<double(double t, std::size_t axis)>;
  using StdFn = std::function<double(double t)>;

  GaussianPath(double L, std::size_t d, double horizon, MeanFn mean, StdFn stddev);

  std::size_t dims() const override { return d_; }
  double length() const override { return L_; }
  double horizon() const override { return T_; }
  PathKind kind() const override { return PathKind::analytic; }
  double density(double t, std::span<const double> x) const override;
  double boundary_mass(double t) const override;

  double mean(double t, std::size_t axis) const { return mean_(t, axis); }
  double stddev(double t) const { return std_(t); }

 private:
  double L_;
  std::size_t d_;
  double T_;
  MeanFn mean_;
  StdFn std_;
};

Family make_gaussian_linear(const GaussianLinearParams& p);
Family make_ddpm_flow(const DdpmParams& p);
/// Potential of a DDPM probability-flow ODE (the path comes with make_ddpm_flow).
std::shared_ptr<const PotentialModel> ddpm_flow_potential(const BetaSchedule& schedule, const DdpmParams& p);

/// Maps a torus coordinate to the centered coordinate in [-L/2, L/2).
double centered(double x, double L);

// ---------------------------------------------------------------------------
// Simple reference models

/// V_t(x) = c everywhere, with a uniform density.
class ConstantPotential final : public PotentialModel {
 public:
  ConstantPotential(double L, std::size_t d, double T, double c) : L_(L), d_(d), T_(T), c_(c) {}
  std::size_t dims() const override { return d_; }
  double length() const override { return L_; }
  double horizon() const override { return T_; }
  std::string name() const override { return "constant"; }
  double value(double, std::span<const double>) const override { return c_; }
  double time_derivative(double, std::span<const double>) const override { return 0.0; }
  void gradient(double, std::span<const double>, std::span<double> out) const override;
  double laplacian(double, std::span<const double>) const override { return 0.0; }
  double sup_norm(double) const override { return std::abs(c_); }
  double sup_time_derivative(double, double) const override { return 0.0; }

 private:
  double L_;
  std::size_t d_;
  double T_;
  double c_;
};

class UniformPath final : public ProbabilityPath {
 public:
  UniformPath(double L, std::size_t d, double T) : L_(L), d_(d), T_(T) {}
  std::size_t dims() const override { return d_; }
  double length() const override { return L_; }
  double horizon() const override { return T_; }
  PathKind kind() const override { return PathKind::analytic; }
  double density(double, std::span<const double>) const override;
  double boundary_mass(double) const override { return 0.0; }

 private:
  double L_;
  std::size_t d_;
  double T_;
};

Family make_static_uniform(double L, std::size_t d, double T, double c = 0.0);

/// Potential tabulated on an N_tab^d lattice at n_t equally spaced time
/// slices over [0, T]; multilinear (periodic) in space and linear in time.
class TabulatedPotential final : public PotentialModel {
 public:
  TabulatedPotential(double L, std::size_t N_tab, std::size_t d, std::size_t n_t, double T,
                     std::vector<double> values);

  /// Text form: header line "L N_tab d n_t T" followed by the values, slice-major.
  static std::shared_ptr<TabulatedPotential> read_text(const std::string& path);
  /// Binary form: L (f64), N_tab, d, n_t (u64), T (f64), then f64 values, little-endian.
  static std::shared_ptr<TabulatedPotential> read_binary(const std::string& path);
  void write_binary(const std::string& path) const;

  std::size_t dims() const override { return d_; }
  double length() const override { return L_; }
  double horizon() const override { return T_; }
  std::string name() const override { return "tabulated"; }
  double value(double t, std::span<const double> x) const override;
  double time_derivative(double t, std::span<const double> x) const override;
  void gradient(double t, std::span<const double> x, std::span<double> out) const override;
  double laplacian(double t, std::span<const double> x) const override;
  double sup_norm(double t) const override;
  double sup_time_derivative(double t0, double t1) const override;

 private:
  double slice_value(std::size_t slice, std::span<const double> x) const;
  std::pair<std::size_t, double> locate_time(double t) const;

  double L_;
  std::size_t N_;
  std::size_t d_;
  std::size_t n_t_;
  double T_;
  std::vector<double> values_;
};

// ---------------------------------------------------------------------------
// Operations

/// Velocity grad V_t(x); t must lie in [0, T].
std::vector<double> eval_velocity(const PotentialModel& model, double t, std::span<const double> x);

/// max over probe points of |dp/dt + div(grad V_t p_t)|, using spectral
/// differentiation in space and a fourth-order central difference in time.
double continuity_residual(const ProbabilityPath& path, const PotentialModel& model, double t, const GridSpec& probe);

struct Trajectory {
  std::vector<double> times;
  std::vector<std::vector<double>> points;
  std::size_t steps = 0;
};

/// Integrates dx/dt = grad V_t(x) from t_start to each requested time with an
/// adaptive Dormand-Prince 5(4) stepper. Coordinates are not wrapped.
Trajectory solve_flow_ode(const PotentialModel& model, std::span<const double> x0, std::span<const double> times,
                          double tol, double t_start = 0.0);

/// Linear-in-parameters velocity ansatz v(t, x) = sum_j theta_j phi_j(t, x),
/// applied per axis.
struct VelocityAnsatz {
  enum class Kind { affine, ground_truth, affine_time } kind = Kind::affine;
  std::size_t parameter_count() const;
  /// Feature vector at (t, x_axis); `truth` is the exact velocity component.
  void features(double t, double x, double truth, std::span<double> out) const;
};

struct CfmGradientReport {
  std::vector<double> grad_fm;
  std::vector<double> grad_cfm;
  std::vector<double> difference;
  std::vector<double> standard_error;  // of the difference, per component
  bool within_three_se = false;
  std::size_t samples = 0;
};

/// Monte Carlo estimates of the flow-matching and conditional flow-matching
/// loss gradients for the Gaussian linear path, with shared random numbers.
CfmGradientReport cfm_gradient_check(const GaussianLinearParams& target, const VelocityAnsatz& ansatz,
                                     std::span<const double> theta, std::size_t samples, std::uint64_t seed);

}  // namespace wflow
