// SPDX-License-Identifier: Apache-2.0
#include "wflow/bounds.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include "wflow/error.hpp"
#include "wflow/qsample.hpp"
#include "wflow/spectral.hpp"

namespace wflow {

using std::numbers::pi;

namespace {

double k_squared(const std::vector<std::int64_t>& n, double L) {
  double acc = 0.0;
  for (auto v : n) {
    const double k = 2.0 * pi * static_cast<double>(v) / L;
    acc += k * k;
  }
  return acc;
}

// Per-axis representative of n modulo N in [-N/2, N/2).
std::vector<std::int64_t> fold(const std::vector<std::int64_t>& n, std::size_t N) {
  const auto NN = static_cast<std::int64_t>(N);
  std::vector<std::int64_t> out(n.size());
  for (std::size_t a = 0; a < n.size(); ++a) {
    std::int64_t r = ((n[a] + NN / 2) % NN + NN) % NN;
    out[a] = r - NN / 2;
  }
  return out;
}

bool in_band(const std::vector<std::int64_t>& n, std::size_t N) {
  const auto h = static_cast<std::int64_t>(N / 2);
  return std::all_of(n.begin(), n.end(), [h](std::int64_t v) { return v >= -h && v < h; });
}

// Flat grid slot of band mode n.
std::size_t band_slot(const GridSpec& g, const std::vector<std::int64_t>& n) {
  MultiIndex idx(std::vector<std::int64_t>(n.size()));
  for (std::size_t a = 0; a < n.size(); ++a) idx[a] = n[a] + static_cast<std::int64_t>(g.points_per_axis() / 2);
  return g.flatten(idx);
}

std::vector<std::int64_t> slot_mode(const GridSpec& g, std::size_t flat) {
  auto idx = g.unflatten(flat);
  std::vector<std::int64_t> n(g.dims());
  for (std::size_t a = 0; a < g.dims(); ++a) n[a] = idx[a] - static_cast<std::int64_t>(g.points_per_axis() / 2);
  return n;
}

double lp_factor(double L, std::size_t d) { return std::pow(L, static_cast<double>(d)); }

}  // namespace

// ---------------------------------------------------------------------------

TestFunction TestFunction::trig(double L, std::size_t d, std::vector<TrigMode> modes, std::string name) {
  std::map<std::vector<std::int64_t>, cplx> merged;
  for (auto& m : modes) {
    if (m.n.size() != d) throw Error(ErrorKind::shape, "mode has the wrong dimension");
    merged[m.n] += m.c;
  }
  TestFunction f;
  f.L_ = L;
  f.d_ = d;
  f.name_ = std::move(name);
  for (auto& [n, c] : merged) f.modes_.push_back({n, c});
  return f;
}

TestFunction TestFunction::smooth(double L, std::size_t d, Fn fn, std::string name, int smoothness) {
  TestFunction f;
  f.L_ = L;
  f.d_ = d;
  f.name_ = std::move(name);
  f.fn_ = std::move(fn);
  f.smoothness_ = smoothness;
  return f;
}

cplx TestFunction::operator()(std::span<const double> x) const {
  if (fn_) return fn_(x);
  cplx acc = 0.0;
  for (const auto& m : modes_) {
    double phase = 0.0;
    for (std::size_t a = 0; a < d_; ++a) phase += 2.0 * pi * static_cast<double>(m.n[a]) * x[a] / L_;
    acc += m.c * std::polar(1.0, phase);
  }
  return acc;
}

std::vector<cplx> TestFunction::samples(const GridSpec& grid) const {
  if (grid.dims() != d_ || grid.length() != L_) throw Error(ErrorKind::shape, "grid does not match the function");
  std::vector<cplx> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    auto x = grid.point(i);
    out[i] = (*this)(x);
  }
  return out;
}

double TestFunction::laplacian_power_norm(int p, std::size_t fine_N) const {
  if (p < 0) throw Error(ErrorKind::parameter, "laplacian power must be nonnegative");
  double acc = 0.0;
  if (!fn_) {
    for (const auto& m : modes_) acc += std::pow(k_squared(m.n, L_), 2 * p) * std::norm(m.c);
    return std::sqrt(lp_factor(L_, d_) * acc);
  }
  GridSpec fine(L_, fine_N, d_);
  auto coef = fourier_coefficients(samples(fine), fine);
  for (std::size_t i = 0; i < fine.size(); ++i) {
    acc += std::pow(k_squared(slot_mode(fine, i), L_), 2 * p) * std::norm(coef[i]);
  }
  return std::sqrt(lp_factor(L_, d_) * acc);
}

TestFunction oblique_project(const TestFunction& f, const GridSpec& grid) {
  auto coef = fourier_coefficients(f.samples(grid), grid);
  std::vector<TrigMode> modes;
  modes.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) modes.push_back({slot_mode(grid, i), coef[i]});
  return TestFunction::trig(f.length(), f.dims(), std::move(modes), "P" + f.name());
}

double aliasing_error(const TestFunction& f, const GridSpec& grid) {
  if (!f.is_trig()) throw Error(ErrorKind::parameter, "aliasing formula needs known coefficients");
  std::vector<cplx> folded(grid.size(), 0.0);
  for (const auto& m : f.modes()) folded[band_slot(grid, fold(m.n, grid.points_per_axis()))] += m.c;
  auto coef = fourier_coefficients(f.samples(grid), grid);
  double err = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) err = std::max(err, std::abs(coef[i] - folded[i]));
  return err;
}

// ---------------------------------------------------------------------------

LatticeSumReport lattice_sum_check(std::size_t d, double q, std::span<const double> y, int R) {
  const double dd = static_cast<double>(d);
  if (d == 0 || y.size() != d) throw Error(ErrorKind::parameter, "offset must have one entry per axis");
  if (q < dd + 2.0 * pi) throw Error(ErrorKind::parameter, "exponent must be at least d + 2 pi");
  for (double v : y) {
    if (!(std::abs(v) <= 0.5)) throw Error(ErrorKind::parameter, "offset must satisfy ||y||_inf <= 1/2");
  }
  if (R < 1) throw Error(ErrorKind::parameter, "radius must be at least 1");

  LatticeSumReport rep;
  const std::size_t side = static_cast<std::size_t>(2 * R + 1);
  std::size_t total = 1;
  for (std::size_t a = 0; a < d; ++a) total *= side;
  std::vector<std::int64_t> x(d);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    bool zero = true;
    double r2 = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      x[a] = static_cast<std::int64_t>(rem % side) - R;
      rem /= side;
      zero = zero && x[a] == 0;
      const double c = static_cast<double>(x[a]) + y[a];
      r2 += c * c;
    }
    if (zero) continue;
    rep.partial_sum += std::pow(r2, -0.5 * q);
  }
  // Shell n = ||x||_inf holds at most 2d(2n+1)^{d-1} points, each with
  // ||x + y|| >= n - 1/2. That count is decreasing in n, and for u >= 1,
  // 2u + 1 <= 6 (u - 1/2), so the tail is at most
  // int_R^inf 2d 6^{d-1} (u - 1/2)^{d-1-q} du.
  const double Rd = static_cast<double>(R);
  rep.tail_bound = 2.0 * dd * std::pow(6.0, dd - 1.0) * std::pow(Rd - 0.5, dd - q) / (q - dd);
  rep.bound = std::pow((1.0 + std::sqrt(dd)) * std::sqrt(dd + 3.0), q);
  return rep;
}

// ---------------------------------------------------------------------------

ProjectionReport projection_error_check(const TestFunction& f, const GridSpec& grid, int m, int s,
                                        std::size_t fine_factor) {
  const std::size_t d = grid.dims();
  if (m < 0) throw Error(ErrorKind::parameter, "m must be nonnegative");
  if (4 * s < static_cast<int>(d) + 7) throw Error(ErrorKind::parameter, "s must be at least (d+7)/4");
  if (f.smoothness() < 2 * (m + s)) throw Error(ErrorKind::parameter, "function is not smooth enough for m + s");
  if (fine_factor < 2 || !is_power_of_two(fine_factor)) {
    throw Error(ErrorKind::parameter, "fine factor must be a power of two >= 2");
  }
  const double L = grid.length();
  const std::size_t N = grid.points_per_axis();
  const double Ld = lp_factor(L, d);
  ProjectionReport rep;

  auto Pf = fourier_coefficients(f.samples(grid), grid);
  auto lap_m = [&](const std::vector<std::int64_t>& n) { return std::pow(-k_squared(n, L), m); };

  if (f.is_trig()) {
    double err2 = 0.0;
    std::vector<cplx> folded_lap(grid.size(), 0.0);
    std::vector<cplx> own(grid.size(), 0.0);
    for (const auto& md : f.modes()) {
      folded_lap[band_slot(grid, fold(md.n, N))] += lap_m(md.n) * md.c;
      if (in_band(md.n, N)) {
        own[band_slot(grid, md.n)] = md.c;
      } else {
        err2 += std::pow(k_squared(md.n, L), 2 * m) * std::norm(md.c);
      }
    }
    double comm2 = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      auto n = slot_mode(grid, i);
      err2 += std::pow(k_squared(n, L), 2 * m) * std::norm(Pf[i] - own[i]);
      comm2 += std::norm(lap_m(n) * Pf[i] - folded_lap[i]);
    }
    rep.measured = std::sqrt(Ld * err2);
    rep.commutator_measured = std::sqrt(Ld * comm2);
  } else {
    auto measure = [&](std::size_t factor, double& comm) {
      GridSpec fine(L, N * factor, d);
      auto fc = fourier_coefficients(f.samples(fine), fine);
      std::vector<cplx> g = fc;
      for (std::size_t i = 0; i < grid.size(); ++i) g[band_slot(fine, slot_mode(grid, i))] -= Pf[i];
      double err2 = 0.0;
      std::vector<cplx> lapf(fine.size());
      for (std::size_t i = 0; i < fine.size(); ++i) {
        auto n = slot_mode(fine, i);
        err2 += std::pow(k_squared(n, L), 2 * m) * std::norm(g[i]);
        lapf[i] = lap_m(n) * fc[i];
      }
      // P applied to samples of lap^m f at the coarse points.
      auto lap_samples = synthesize(lapf, fine);
      std::vector<cplx> coarse(grid.size());
      for (std::size_t i = 0; i < grid.size(); ++i) {
        auto idx = grid.unflatten(i);
        for (std::size_t a = 0; a < d; ++a) idx[a] *= static_cast<std::int64_t>(factor);
        coarse[i] = lap_samples[fine.flatten(idx)];
      }
      auto Plap = fourier_coefficients(coarse, grid);
      double comm2 = 0.0;
      for (std::size_t i = 0; i < grid.size(); ++i) comm2 += std::norm(lap_m(slot_mode(grid, i)) * Pf[i] - Plap[i]);
      comm = std::sqrt(Ld * comm2);
      return std::sqrt(Ld * err2);
    };
    double comm_a = 0.0;
    double comm_b = 0.0;
    const double a = measure(fine_factor, comm_a);
    const double b = measure(2 * fine_factor, comm_b);
    rep.refinement_change = std::abs(a - b);
    const double scale = std::max({std::abs(b), 1e-300});
    if (rep.refinement_change > 1e-6 * scale && rep.refinement_change > 1e-13) {
      throw Error(ErrorKind::oracle, "projection error not converged on the quadrature grid");
    }
    rep.measured = b;
    rep.commutator_measured = comm_b;
  }

  const double norm = f.laplacian_power_norm(m + s, 2 * fine_factor * N);
  const double factor = std::pow(L * static_cast<double>(d) / static_cast<double>(N), 2.0 * s);
  rep.bound = factor * norm;
  rep.commutator_bound = 2.0 * factor * norm;
  return rep;
}

// ---------------------------------------------------------------------------

VectorDeReport vector_de_bound_check(std::size_t dim, std::uint64_t seed, const VectorDeOptions& opts) {
  if (dim == 0 || dim > 64) throw Error(ErrorKind::parameter, "dimension must lie in 1..64");
  if (!(opts.T > 0.0)) throw Error(ErrorKind::parameter, "horizon must be positive");
  const auto D = static_cast<Eigen::Index>(dim);
  Eigen::MatrixXcd H0 = Eigen::MatrixXcd::Zero(D, D);
  Eigen::MatrixXcd H1 = H0;
  Eigen::MatrixXcd H2 = H0;
  if (!opts.zero_hamiltonian) {
    H0 = random_hermitian(dim, 1.0, substream_seed(seed, 0));
    H1 = random_hermitian(dim, 0.5, substream_seed(seed, 1));
    H2 = random_hermitian(dim, 0.25, substream_seed(seed, 2));
  }
  std::mt19937_64 rng(substream_seed(seed, 3));
  std::normal_distribution<double> nd;
  auto random_vec = [&] {
    Eigen::VectorXcd v(D);
    for (Eigen::Index i = 0; i < D; ++i) v[i] = cplx(nd(rng), nd(rng));
    return v;
  };
  Eigen::VectorXcd z0 = random_vec();
  z0.normalize();
  Eigen::VectorXcd b0 = Eigen::VectorXcd::Zero(D);
  Eigen::VectorXcd b1 = b0;
  if (!opts.zero_forcing) {
    b0 = 0.5 * random_vec() / std::sqrt(static_cast<double>(dim));
    if (!opts.constant_forcing) b1 = 0.5 * random_vec() / std::sqrt(static_cast<double>(dim));
    if (opts.aligned_start) z0 = cplx(0.0, -1.0) * b0.normalized();
  }

  using Vec = std::vector<double>;
  auto rhs = [&](const Vec& x, Vec& dxdt, double t) {
    Eigen::VectorXcd z(D);
    for (Eigen::Index i = 0; i < D; ++i) z[i] = cplx(x[2 * i], x[2 * i + 1]);
    Eigen::VectorXcd w = (H0 + t * H1 + t * t * H2) * z + b0 + t * b1;
    w *= cplx(0.0, -1.0);
    for (Eigen::Index i = 0; i < D; ++i) {
      dxdt[2 * i] = w[i].real();
      dxdt[2 * i + 1] = w[i].imag();
    }
  };
  Vec x(2 * dim);
  for (Eigen::Index i = 0; i < D; ++i) {
    x[2 * i] = z0[i].real();
    x[2 * i + 1] = z0[i].imag();
  }
  namespace ode = boost::numeric::odeint;
  try {
    ode::integrate_adaptive(ode::make_controlled(opts.tol, opts.tol, ode::runge_kutta_dopri5<Vec>()), rhs, x, 0.0,
                            opts.T, opts.T / 64.0);
  } catch (const std::exception& e) {
    throw Error(ErrorKind::tolerance, std::string("vector ODE integration failed: ") + e.what());
  }
  VectorDeReport rep;
  rep.norm_0 = z0.norm();
  double acc = 0.0;
  for (double v : x) acc += v * v;
  rep.norm_T = std::sqrt(acc);
  double err = 0.0;
  rep.forcing_integral = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      [&](double t) { return (b0 + t * b1).norm(); }, 0.0, opts.T, 15, 1e-13, &err);
  rep.bound = rep.norm_0 + rep.forcing_integral;
  return rep;
}

// ---------------------------------------------------------------------------

bool Theorem1Report::holds() const {
  if (rows.empty()) return false;
  for (const auto& r : rows) {
    if (!r.holds()) return false;
  }
  return rows.size() < 2 || rows.back().measured < rows.front().measured || rows.front().measured == 0.0;
}

double theorem1_constant(const Family& family, int s, const GridSpec& fine, std::size_t time_samples) {
  const auto& model = *family.potential;
  const auto& path = *family.path;
  const double T = path.horizon();
  if (time_samples < 2) throw Error(ErrorKind::parameter, "need at least two time samples");
  double worst = 0.0;
  for (std::size_t i = 0; i < time_samples; ++i) {
    const double t = T * static_cast<double>(i) / static_cast<double>(time_samples - 1);
    auto root = [&](std::span<const double> x) { return path.sqrt_density(t, x); };
    auto weighted = [&](std::span<const double> x) { return model.value(t, x) * path.sqrt_density(t, x); };
    const double term =
        (model.sup_norm(t) + 1.0) * smoothness_oracle(root, fine, s) + smoothness_oracle(weighted, fine, s);
    worst = std::max(worst, term);
  }
  return 3.0 * worst + 1.0;
}

Theorem1Report theorem1_experiment(const Family& family, int s, std::span<const std::size_t> Ns,
                                   const Theorem1Options& opts) {
  const auto& model = *family.potential;
  const auto& path = *family.path;
  if (Ns.empty()) throw Error(ErrorKind::parameter, "need at least one grid size");
  const std::size_t d = path.dims();
  if (4 * s < static_cast<int>(d) + 7) throw Error(ErrorKind::parameter, "s must be at least (d+7)/4");
  const double L = path.length();
  const double T = path.horizon();

  Theorem1Report rep;
  rep.family = family.name;
  rep.s = s;
  rep.T = T;
  const std::size_t nmax = *std::max_element(Ns.begin(), Ns.end());
  rep.c_s = theorem1_constant(family, s, GridSpec(L, opts.fine_factor * nmax, d), opts.time_samples);
  for (std::size_t i = 0; i < opts.time_samples; ++i) {
    const double t = T * static_cast<double>(i) / static_cast<double>(opts.time_samples - 1);
    rep.max_boundary_mass = std::max(rep.max_boundary_mass, path.boundary_mass(t));
  }
  rep.hypotheses_met = rep.max_boundary_mass <= opts.boundary_mass_limit;

  for (std::size_t N : Ns) {
    GridSpec grid(L, N, d);
    Theorem1Row row;
    row.N = N;
    // The initial state is prepared exactly, so only the spatial term remains.
    row.delta = T * rep.c_s * std::pow(L * static_cast<double>(d) / static_cast<double>(N), 2.0 * s);
    row.feasible = row.delta <= T;
    row.asserted = row.feasible && rep.hypotheses_met;
    auto psi0 = ideal_state(path, 0.0, grid).state;
    auto phiT = reference_evolve(model, grid, psi0, 0.0, T, opts.reference_tol, opts.reference).state;
    auto psiT = ideal_state(path, T, grid).state;
    row.measured = l2_distance(psiT, phiT);
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace wflow
