// SPDX-License-Identifier: Apache-2.0
#include "wflow/evolution.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "wflow/error.hpp"

namespace wflow {

using std::numbers::pi;

namespace {

constexpr double kSqrt3 = 1.7320508075688772;

using HamiltonianFn = std::function<Eigen::MatrixXcd(double)>;

// One micro-step generator M with U_step = exp(-i M).
Eigen::MatrixXcd step_generator(const HamiltonianFn& H, double tau, double h, ReferenceScheme scheme) {
  if (scheme == ReferenceScheme::midpoint) return h * H(tau + 0.5 * h);
  const double c1 = 0.5 - kSqrt3 / 6.0;
  const double c2 = 0.5 + kSqrt3 / 6.0;
  Eigen::MatrixXcd H1 = H(tau + c1 * h);
  Eigen::MatrixXcd H2 = H(tau + c2 * h);
  Eigen::MatrixXcd comm = H2 * H1 - H1 * H2;
  Eigen::MatrixXcd M = 0.5 * h * (H1 + H2) - cplx(0.0, kSqrt3 / 12.0 * h * h) * comm;
  return 0.5 * (M + M.adjoint());
}

Eigen::MatrixXcd dense_product(const HamiltonianFn& H, std::size_t dim, double t0, double t1, std::uint64_t m,
                               ReferenceScheme scheme) {
  Eigen::MatrixXcd U = Eigen::MatrixXcd::Identity(dim, dim);
  const double h = (t1 - t0) / static_cast<double>(m);
  for (std::uint64_t k = 0; k < m; ++k) {
    U = expm_hermitian(step_generator(H, t0 + h * k, h, scheme), 1.0) * U;
  }
  return U;
}

Eigen::MatrixXcd refine_dense(const HamiltonianFn& H, std::size_t dim, double t0, double t1, double tol,
                              const ReferenceOptions& opts) {
  std::uint64_t m = std::max<std::uint64_t>(1, opts.initial_steps);
  Eigen::MatrixXcd prev = dense_product(H, dim, t0, t1, m, opts.scheme);
  for (int k = 0; k < opts.max_halvings; ++k) {
    m *= 2;
    Eigen::MatrixXcd next = dense_product(H, dim, t0, t1, m, opts.scheme);
    if (spectral_norm(next - prev) < tol / 10.0) return next;
    prev = std::move(next);
  }
  throw Error(ErrorKind::tolerance, "reference propagator did not converge after step halving");
}

// Dense H(t) = i (K D - D K) for the grid, with K materialized once.
HamiltonianFn grid_hamiltonian(const PotentialModel& model, const GridSpec& grid, std::size_t cap) {
  auto K = std::make_shared<Eigen::MatrixXcd>(dense_K(grid, cap));
  return [K, &model, grid](double t) {
    auto v = model.sample(t, grid);
    const auto n = K->rows();
    Eigen::MatrixXcd H(n, n);
    for (Eigen::Index c = 0; c < n; ++c)
      for (Eigen::Index r = 0; r < n; ++r) H(r, c) = cplx(0.0, 1.0) * (*K)(r, c) * (v[c] - v[r]);
    return H;
  };
}

// Matrix-free micro-step: exp(-i M) psi by a sub-stepped Taylor series.
class MatrixFreeStepper {
 public:
  MatrixFreeStepper(const PotentialModel& model, const GridSpec& grid, ReferenceScheme scheme)
      : model_(model), grid_(grid), scheme_(scheme) {
    kmax_ = 0.0;
    for (double k2 : kinetic_diagonal(grid)) kmax_ = std::max(kmax_, 0.5 * k2);
    kmax_ *= static_cast<double>(grid.dims());
  }

  void step(StateVector& psi, double tau, double h) const {
    std::vector<std::vector<double>> vs;
    std::vector<double> nodes;
    if (scheme_ == ReferenceScheme::midpoint) {
      nodes = {tau + 0.5 * h};
    } else {
      nodes = {tau + (0.5 - kSqrt3 / 6.0) * h, tau + (0.5 + kSqrt3 / 6.0) * h};
    }
    double hbound = 0.0;
    for (double t : nodes) {
      vs.push_back(model_.sample(t, grid_));
      auto [lo, hi] = std::minmax_element(vs.back().begin(), vs.back().end());
      // [K, D_V] does not see constant shifts of V.
      hbound = std::max(hbound, 2.0 * kmax_ * 0.5 * (*hi - *lo));
    }
    auto applyM = [&](const StateVector& x) {
      if (vs.size() == 1) {
        StateVector y = apply_H(x, vs[0]);
        y *= h;
        return y;
      }
      StateVector h1 = apply_H(x, vs[0]);
      StateVector h2 = apply_H(x, vs[1]);
      StateVector comm = apply_H(h1, vs[1]) - apply_H(h2, vs[0]);
      StateVector y = h1 + h2;
      y *= 0.5 * h;
      comm *= cplx(0.0, -kSqrt3 / 12.0 * h * h);
      y += comm;
      return y;
    };
    double mbound = h * hbound + (vs.size() == 2 ? kSqrt3 / 6.0 * h * h * hbound * hbound : 0.0);
    auto sub = static_cast<std::uint64_t>(std::ceil(mbound / 0.5));
    sub = std::max<std::uint64_t>(sub, 1);
    for (std::uint64_t k = 0; k < sub; ++k) {
      // exp(-i M / sub) psi
      StateVector term = psi;
      StateVector acc = psi;
      for (int j = 1; j <= 60; ++j) {
        term = applyM(term);
        term *= cplx(0.0, -1.0 / (static_cast<double>(sub) * j));
        acc += term;
        if (term.norm() < 1e-17 * acc.norm()) break;
      }
      psi = std::move(acc);
    }
  }

 private:
  const PotentialModel& model_;
  GridSpec grid_;
  ReferenceScheme scheme_;
  double kmax_;
};

}  // namespace

// ---------------------------------------------------------------------------

SimulationPlan plan(const PlanInputs& in) {
  if (!(in.T > 0.0)) throw Error(ErrorKind::parameter, "horizon T must be positive");
  if (!(in.epsilon > 0.0 && in.epsilon <= 2.0 * in.T)) throw Error(ErrorKind::parameter, "epsilon must lie in (0, 2T]");
  if (in.d == 0) throw Error(ErrorKind::parameter, "dimension must be positive");
  if (4.0 * in.s < static_cast<double>(in.d) + 7.0) throw Error(ErrorKind::parameter, "smoothness s must be >= (d+7)/4");
  if (!(in.c_s > 0.0) || !(in.L > 0.0)) throw Error(ErrorKind::parameter, "c_s and L must be positive");
  if (in.v_max < 0.0 || in.vdot_max < 0.0 || in.prep_error < 0.0) {
    throw Error(ErrorKind::parameter, "norms must be nonnegative");
  }

  SimulationPlan p;
  p.in = in;
  const double d = static_cast<double>(in.d);
  const double ratio = 2.0 * in.T * in.c_s / in.epsilon;
  p.n_bound = in.L * d * std::pow(ratio, 1.0 / (2.0 * in.s));
  if (!(p.n_bound < 0x1p62)) throw Error(ErrorKind::parameter, "grid bound overflows");
  p.N = 2;
  while (static_cast<double>(p.N) < p.n_bound) p.N *= 2;
  p.n = in.d * static_cast<std::uint64_t>(std::countr_zero(p.N));

  const double one_v = 1.0 + in.v_max;
  p.r_bound = 4.0 * pi * pi *
              (3.0 * pi * pi * std::pow(one_v, 4) * std::pow(d, 6) * std::pow(ratio, 2.0 / in.s) +
               in.vdot_max * std::pow(d, 3) * std::pow(ratio, 1.0 / in.s)) *
              in.T * in.T / in.epsilon;
  double rc = std::ceil(p.r_bound);
  p.r = rc < 0x1p63 ? static_cast<std::uint64_t>(rc) : std::numeric_limits<std::uint64_t>::max();
  p.dt = in.T / rc;
  auto ang = pf_angles(in.L, p.N, in.d, p.dt);
  p.alpha = ang.alpha;
  p.beta = ang.beta;
  p.delta = in.prep_error + in.T * in.c_s * std::pow(in.L * d / static_cast<double>(p.N), 2.0 * in.s);
  p.feasible = p.delta <= in.T;
  return p;
}

Angles pf_angles(double L, std::size_t N, std::size_t d, double dt) {
  const double dd = static_cast<double>(d);
  const double NN = static_cast<double>(N);
  return {L / (pi * NN) * std::sqrt(dt / dd), pi * NN / (2.0 * L) * std::sqrt(dd * dt)};
}

void pf_step_inplace(StateVector& s, std::span<const double> v, double alpha, double beta) {
  exp_kinetic_inplace(s, alpha);
  exp_diagonal_inplace(s, v, beta);
  exp_kinetic_inplace(s, -alpha);
  exp_diagonal_inplace(s, v, -beta);
  exp_kinetic_inplace(s, -alpha);
  exp_diagonal_inplace(s, v, -beta);
  exp_kinetic_inplace(s, alpha);
  exp_diagonal_inplace(s, v, beta);
}

StateVector pf_step(const StateVector& state, const PotentialModel& model, double t0, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorKind::parameter, "time step must be positive");
  const auto& g = state.grid();
  auto ang = pf_angles(g.length(), g.points_per_axis(), g.dims(), dt);
  StateVector out = state;
  pf_step_inplace(out, model.sample(t0, g), ang.alpha, ang.beta);
  return out;
}

EvolutionReport evolve_steps(const PotentialModel& model, const StateVector& initial, double t0, double t1,
                             std::uint64_t r, double work_budget) {
  if (r == 0) throw Error(ErrorKind::parameter, "step count must be positive");
  if (!(t1 > t0)) throw Error(ErrorKind::parameter, "evolution interval must be nonempty");
  const auto& g = initial.grid();
  if (static_cast<double>(r) * static_cast<double>(g.size()) > work_budget) {
    throw Error(ErrorKind::budget, "r * N^d = " + std::to_string(static_cast<double>(r) * g.size()) +
                                       " exceeds the work budget; override r for sweeps");
  }
  const double n0 = initial.norm();
  if (std::abs(n0 - 1.0) > 1e-10) throw Error(ErrorKind::normalization, "initial state must have unit norm");

  auto start = std::chrono::steady_clock::now();
  EvolutionReport rep{initial, {}, 0.0, r, (t1 - t0) / static_cast<double>(r), 0.0};
  const bool record = r <= 100000;
  if (record) rep.step_norms.reserve(r);
  auto ang = pf_angles(g.length(), g.points_per_axis(), g.dims(), rep.dt);
  for (std::uint64_t k = 0; k < r; ++k) {
    double t = t0 + rep.dt * static_cast<double>(k);
    pf_step_inplace(rep.final_state, model.sample(t, g), ang.alpha, ang.beta);
    double nk = rep.final_state.norm();
    rep.max_norm_drift = std::max(rep.max_norm_drift, std::abs(nk - n0));
    if (record) rep.step_norms.push_back(nk);
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

EvolutionReport evolve(const SimulationPlan& p, const PotentialModel& model, const StateVector& initial,
                       const EvolveOptions& opts) {
  if (p.N > (std::uint64_t{1} << 22)) throw Error(ErrorKind::size, "planned grid is too large to simulate");
  GridSpec g(p.in.L, p.N, p.in.d);
  if (!(initial.grid() == g)) throw Error(ErrorKind::shape, "initial state is not on the planned grid");
  std::uint64_t r = opts.r_override.value_or(p.r);
  return evolve_steps(model, initial, 0.0, p.in.T, r, opts.work_budget);
}

double local_error_bound(const PotentialModel& model, const GridSpec& grid, double t0, double dt) {
  const double d = static_cast<double>(grid.dims());
  const double N = static_cast<double>(grid.points_per_axis());
  const double L = grid.length();
  const double v = model.sup_norm(t0);
  const double vdot = model.sup_time_derivative(t0, t0 + dt);
  return (3.0 * std::pow(pi, 4) / 4.0 * d * d * std::pow(N / L, 4) * std::pow(1.0 + v, 4) +
          pi * pi / 2.0 * d * (N / L) * (N / L) * vdot) *
         dt * dt;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXcd expm_hermitian(const Eigen::MatrixXcd& H, double dt) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
  if (es.info() != Eigen::Success) throw Error(ErrorKind::evaluation, "Hermitian eigensolver failed");
  Eigen::VectorXcd ph(H.rows());
  for (Eigen::Index i = 0; i < H.rows(); ++i) ph(i) = std::polar(1.0, -es.eigenvalues()(i) * dt);
  return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

Eigen::MatrixXcd reference_propagator(const PotentialModel& model, const GridSpec& grid, double t0, double t1,
                                      double tol, const ReferenceOptions& opts, std::size_t cap) {
  if (!(tol > 0.0)) throw Error(ErrorKind::parameter, "tolerance must be positive");
  if (t1 == t0) return Eigen::MatrixXcd::Identity(grid.size(), grid.size());
  return refine_dense(grid_hamiltonian(model, grid, cap), grid.size(), t0, t1, tol, opts);
}

ReferenceResult reference_evolve(const PotentialModel& model, const GridSpec& grid, const StateVector& initial,
                                 double t0, double t1, double tol, const ReferenceOptions& opts) {
  if (!(tol > 0.0)) throw Error(ErrorKind::parameter, "tolerance must be positive");
  if (!(initial.grid() == grid)) throw Error(ErrorKind::shape, "initial state is not on the grid");
  if (t1 == t0) return {initial, 0, 0.0};

  std::function<StateVector(std::uint64_t)> run;
  if (grid.size() <= opts.dense_limit) {
    auto H = grid_hamiltonian(model, grid, grid.size());
    Eigen::VectorXcd x0(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) x0(i) = initial[i];
    run = [H, x0, &grid, t0, t1, &opts](std::uint64_t m) {
      Eigen::VectorXcd x = x0;
      const double h = (t1 - t0) / static_cast<double>(m);
      for (std::uint64_t k = 0; k < m; ++k) x = expm_hermitian(step_generator(H, t0 + h * k, h, opts.scheme), 1.0) * x;
      StateVector s(grid);
      for (std::size_t i = 0; i < grid.size(); ++i) s[i] = x(i);
      return s;
    };
  } else {
    auto stepper = std::make_shared<MatrixFreeStepper>(model, grid, opts.scheme);
    run = [stepper, &initial, t0, t1](std::uint64_t m) {
      StateVector x = initial;
      const double h = (t1 - t0) / static_cast<double>(m);
      for (std::uint64_t k = 0; k < m; ++k) stepper->step(x, t0 + h * k, h);
      return x;
    };
  }

  std::uint64_t m = std::max<std::uint64_t>(1, opts.initial_steps);
  StateVector prev = run(m);
  for (int k = 0; k < opts.max_halvings; ++k) {
    m *= 2;
    StateVector next = run(m);
    double change = (next - prev).norm();
    if (change < tol / 10.0) return {std::move(next), m, change};
    prev = std::move(next);
  }
  throw Error(ErrorKind::tolerance, "reference evolution did not converge after step halving");
}

Eigen::MatrixXcd dense_W(const PotentialModel& model, const GridSpec& grid, double t0, double dt, std::size_t cap) {
  auto v = model.sample(t0, grid);
  auto ang = pf_angles(grid.length(), grid.points_per_axis(), grid.dims(), dt);
  return dense(
      [&](const StateVector& s) {
        StateVector out = s;
        pf_step_inplace(out, v, ang.alpha, ang.beta);
        return out;
      },
      grid, cap);
}

// ---------------------------------------------------------------------------

double spectral_norm(const Eigen::MatrixXcd& A) {
  if (A.size() == 0) return 0.0;
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(A);
  return svd.singularValues()(0);
}

double spectral_norm_power(const Eigen::MatrixXcd& A, double rel_tol, int max_iter, std::uint64_t seed) {
  if (A.size() == 0) return 0.0;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Eigen::VectorXcd x(A.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = cplx(n(rng), n(rng));
  x.normalize();
  double sigma = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXcd y = A.adjoint() * (A * x);
    double lambda = y.norm();
    if (lambda == 0.0) return 0.0;
    double next = std::sqrt(lambda);
    x = y / lambda;
    if (it > 0 && std::abs(next - sigma) <= rel_tol * next) return next;
    sigma = next;
  }
  return sigma;
}

Eigen::MatrixXcd random_hermitian(std::size_t dim, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Eigen::MatrixXcd G(dim, dim);
  for (Eigen::Index c = 0; c < G.cols(); ++c)
    for (Eigen::Index r = 0; r < G.rows(); ++r) G(r, c) = cplx(n(rng), n(rng));
  return 0.5 * scale * (G + G.adjoint());
}

LemmaCheck time_freeze_check(const Eigen::MatrixXcd& A, const Eigen::MatrixXcd& B, double t0, double dt) {
  HamiltonianFn H = [&](double t) -> Eigen::MatrixXcd { return A + t * B; };
  ReferenceOptions opts;
  Eigen::MatrixXcd U = refine_dense(H, A.rows(), t0, t0 + dt, 1e-11, opts);
  LemmaCheck c;
  c.measured = spectral_norm(U - expm_hermitian(H(t0), dt));
  c.bound = 0.5 * dt * dt * spectral_norm(B);
  return c;
}

LemmaCheck group_commutator_check(const Eigen::MatrixXcd& A, const Eigen::MatrixXcd& B, double dt) {
  // e^{i t X} = expm_hermitian(X, -t)
  auto S = [&](double t) -> Eigen::MatrixXcd {
    return expm_hermitian(B, -t) * expm_hermitian(A, -t) * expm_hermitian(B, t) * expm_hermitian(A, t);
  };
  const double tau = std::sqrt(0.5 * dt);
  Eigen::MatrixXcd H = cplx(0.0, 1.0) * (A * B - B * A);
  H = 0.5 * (H + H.adjoint());
  LemmaCheck c;
  c.measured = spectral_norm(S(tau) * S(-tau) - expm_hermitian(H, dt));
  double ab = spectral_norm(A) + spectral_norm(B);
  double hn = spectral_norm(H);
  c.bound = (8.0 / 3.0 * std::pow(ab, 4) + 0.5 * hn * hn) * dt * dt;
  return c;
}

}  // namespace wflow
