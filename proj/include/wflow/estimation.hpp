// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wflow/evolution.hpp"
#include "wflow/models.hpp"
#include "wflow/qsample.hpp"

namespace wflow {

/// Real observable on [0, L]^d with its sup norm and Lipschitz constant.
struct ObservableSpec {
  std::string name;
  std::function<double(std::span<const double>)> eval;
  double sup_norm = 0.0;
  double lipschitz = 0.0;
};

/// f(x) = x_0 on [0, L).
ObservableSpec observable_coordinate(double L);
/// f(x) = cos(2 pi x_0 / L).
ObservableSpec observable_cosine(double L);
/// f(x) = (x_0 - L/2)^2.
ObservableSpec observable_centered_square(double L);
ObservableSpec observable_constant(double c);

/// Checks |f| <= M and the difference quotients against the Lipschitz
/// constant (with 1e-6 relative slack) at every point of `probe`.
void validate_observable(const ObservableSpec& f, const GridSpec& probe);

struct MeanVar {
  double mean = 0.0;
  double variance = 0.0;
};

/// Exact weighted mean and variance of f over the grid distribution.
MeanVar grid_mean_var(const DiscretizedDistribution& dist, const ObservableSpec& f);

/// ceil(8 ln(1/delta)).
std::size_t mom_groups(double delta);

/// Median of group means. The samples are sorted and then shuffled with a
/// fixed-seed permutation before grouping, so the result depends only on
/// the multiset of values. Earlier groups take one extra sample each when
/// the count does not divide evenly.
double median_of_means(std::span<const double> samples, double delta, std::uint64_t partition_seed = 0);

struct ErrorBudget {
  double eps_mean = 0.0;
  double eps_var = 0.0;
  double M = 0.0;
  double lp = 0.0;
  double lf = 0.0;
  std::size_t d = 1;
  double L = 1.0;
  std::size_t N = 1;
  double eps = 0.0;
};

/// eps_mean = 2M lp sqrt(d) L^{d+1}/N + lf sqrt(d) L/N + 2 eps M and
/// eps_var = 6M^2 lp sqrt(d) L^{d+1}/N + 4M lf sqrt(d) L/N + 6 eps M^2.
ErrorBudget error_budget(double M, double lp, double lf, std::size_t d, double L, std::size_t N, double eps);

struct ContinuousMoments {
  double mean = 0.0;
  double variance = 0.0;
  /// Integral of p itself, for reference.
  double mass = 0.0;
};

/// Moments of f under the continuous density p_t by adaptive Gauss-Kronrod
/// quadrature over [0, L]. One-dimensional paths only; throws an oracle
/// error when the quadrature misses `tol`.
ContinuousMoments continuous_mean_var(const ProbabilityPath& path, double t, const ObservableSpec& f,
                                      double tol = 1e-11);

/// Largest difference quotient of p_t between neighbours of `fine`
/// (periodically wrapped), times 1.05.
double estimate_density_lipschitz(const ProbabilityPath& path, double t, const GridSpec& fine);

struct TvPerturbation {
  double eps = 0.0;
  double tv = 0.0;
  double mean_gap = 0.0;
  double mean_bound = 0.0;
  double var_gap = 0.0;
  double var_bound = 0.0;
  // TV equals eps (1 - mass at the perturbed point) up to rounding.
  bool holds() const { return tv <= eps * (1.0 + 1e-12) && mean_gap <= mean_bound && var_gap <= var_bound; }
};

struct LemmaDReport {
  std::string observable;
  std::size_t N = 0;
  double t = 0.0;
  double lp = 0.0;
  ContinuousMoments continuous;
  MeanVar discrete;
  double mean_gap = 0.0;
  double mean_bound = 0.0;
  double var_gap = 0.0;
  double var_bound = 0.0;
  std::vector<TvPerturbation> tv;
  bool holds() const;
};

/// Discretization bounds for |mu(p) - mu(pbar_N)| and the variance, plus
/// TV-perturbation bounds for Q = (1 - eps) pbar_N + eps R with R a point
/// mass at the grid point where f is furthest from its mean. `lp` is
/// estimated on `fine` when absent.
LemmaDReport lemma_d_checks(const ProbabilityPath& path, double t, const ObservableSpec& f, const GridSpec& grid,
                            const GridSpec& fine, std::optional<double> lp = std::nullopt,
                            std::span<const double> tv_eps = {});

struct MeanTrial {
  std::uint64_t seed = 0;
  double estimate = 0.0;
  double deviation = 0.0;
  double allowed = 0.0;
  bool holds() const { return deviation <= allowed; }
};

struct MeanExperimentReport {
  std::string family;
  std::string observable;
  std::size_t N = 0;
  std::uint64_t r = 0;
  std::size_t m = 0;
  double delta = 0.0;
  double C = 4.0;
  /// ||psi_T - phi_T|| of the evolved state against the ideal final qsample.
  double prep_error = 0.0;
  double lp = 0.0;
  ContinuousMoments target;
  ErrorBudget budget;
  std::vector<MeanTrial> trials;
  std::size_t passes() const;
};

struct MeanExperimentOptions {
  std::size_t m = 10000;
  double delta = 0.01;
  std::size_t trials = 1;
  /// Sub-Gaussian constant in the deviation allowance.
  double C = 4.0;
  std::optional<std::uint64_t> r_override;
  /// Fine grid size for the density Lipschitz estimate.
  std::size_t fine_N = 4096;
};

/// Evolves the exact initial qsample with the product formula, then per
/// trial draws m Born samples of f, forms the median-of-means estimate and
/// tests |estimate - mu(p_T)| <= sqrt(sigma^2 + eps_var) C sqrt(ln(1/delta)/m) + eps_mean,
/// with the budget evaluated at eps = prep_error.
MeanExperimentReport end_to_end_mean_experiment(const Family& family, const SimulationPlan& plan,
                                                const ObservableSpec& f, std::uint64_t seed,
                                                const MeanExperimentOptions& opts = {});

}  // namespace wflow
