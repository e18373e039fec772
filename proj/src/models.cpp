// SPDX-License-Identifier: Apache-2.0
#include "wflow/models.hpp"

#include <algorithm>
#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "wflow/error.hpp"
#include "wflow/spectral.hpp"

namespace wflow {

namespace odeint = boost::numeric::odeint;
using std::numbers::pi;

namespace {

// Upper bound on max |c2 y^2 + c1 y + c0| over y in [-h, h].
double quadratic_sup(double c2, double c1, double c0, double h) {
  auto q = [&](double y) { return std::abs((c2 * y + c1) * y + c0); };
  double m = std::max(q(-h), q(h));
  if (c2 != 0.0) {
    double v = -c1 / (2.0 * c2);
    if (std::abs(v) <= h) m = std::max(m, q(v));
  }
  return m;
}

// Max of f over a uniform sample of [t0, t1], inflated slightly because the
// supremum between samples is not bracketed.
template <typename Fn>
double sampled_time_max(double t0, double t1, Fn&& f) {
  constexpr int kSamples = 256;
  double m = 0.0;
  for (int i = 0; i <= kSamples; ++i) m = std::max(m, f(t0 + (t1 - t0) * i / kSamples));
  return 1.02 * m;
}

void check_point(std::size_t d, std::span<const double> x) {
  if (x.size() != d) throw Error(ErrorKind::shape, "point dimension does not match model");
}

double std_normal_upper(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

}  // namespace

double centered(double x, double L) {
  double y = std::fmod(x - 0.5 * L, L);
  if (y < -0.5 * L) y += L;
  if (y >= 0.5 * L) y -= L;
  return y;
}

// ---------------------------------------------------------------------------

double PotentialModel::v_max() const {
  return sampled_time_max(0.0, horizon(), [&](double t) { return sup_norm(t); });
}

std::vector<double> PotentialModel::sample(double t, const GridSpec& grid) const {
  if (grid.dims() != dims()) throw Error(ErrorKind::shape, "grid dimension does not match model");
  std::vector<double> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    Point x = grid.point(i);
    out[i] = value(t, x);
  }
  return out;
}

double ProbabilityPath::sqrt_density(double t, std::span<const double> x) const {
  return std::sqrt(std::max(0.0, density(t, x)));
}

std::vector<double> ProbabilityPath::sample(double t, const GridSpec& grid) const {
  if (grid.dims() != dims()) throw Error(ErrorKind::shape, "grid dimension does not match path");
  std::vector<double> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    Point x = grid.point(i);
    out[i] = density(t, x);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trigonometric torus

TrigTorusPotential::TrigTorusPotential(TrigTorusParams p) : p_(std::move(p)) {
  if (!(p_.L > 0.0) || p_.d == 0 || !(p_.T > 0.0)) throw Error(ErrorKind::parameter, "invalid trig torus geometry");
  for (const auto& term : p_.terms) {
    if (term.modes.size() != p_.d) throw Error(ErrorKind::configuration, "trig term mode count must equal d");
  }
}

double TrigTorusPotential::value(double t, std::span<const double> x) const {
  check_point(p_.d, x);
  double v = 0.0;
  for (const auto& m : p_.terms) {
    double arg = m.phase;
    for (std::size_t a = 0; a < p_.d; ++a) arg += 2.0 * pi * m.modes[a] * x[a] / p_.L;
    v += (m.amplitude + m.slope * t) * std::cos(arg);
  }
  return v;
}

double TrigTorusPotential::time_derivative(double, std::span<const double> x) const {
  check_point(p_.d, x);
  double v = 0.0;
  for (const auto& m : p_.terms) {
    double arg = m.phase;
    for (std::size_t a = 0; a < p_.d; ++a) arg += 2.0 * pi * m.modes[a] * x[a] / p_.L;
    v += m.slope * std::cos(arg);
  }
  return v;
}

void TrigTorusPotential::gradient(double t, std::span<const double> x, std::span<double> out) const {
  check_point(p_.d, x);
  std::fill(out.begin(), out.end(), 0.0);
  for (const auto& m : p_.terms) {
    double arg = m.phase;
    for (std::size_t a = 0; a < p_.d; ++a) arg += 2.0 * pi * m.modes[a] * x[a] / p_.L;
    double s = -(m.amplitude + m.slope * t) * std::sin(arg);
    for (std::size_t a = 0; a < p_.d; ++a) out[a] += s * 2.0 * pi * m.modes[a] / p_.L;
  }
}

double TrigTorusPotential::laplacian(double t, std::span<const double> x) const {
  check_point(p_.d, x);
  double v = 0.0;
  for (const auto& m : p_.terms) {
    double arg = m.phase;
    double k2 = 0.0;
    for (std::size_t a = 0; a < p_.d; ++a) {
      arg += 2.0 * pi * m.modes[a] * x[a] / p_.L;
      double k = 2.0 * pi * m.modes[a] / p_.L;
      k2 += k * k;
    }
    v -= (m.amplitude + m.slope * t) * k2 * std::cos(arg);
  }
  return v;
}

double TrigTorusPotential::sup_norm(double t) const {
  double s = 0.0;
  for (const auto& m : p_.terms) s += std::abs(m.amplitude + m.slope * t);
  return s;
}

double TrigTorusPotential::sup_time_derivative(double, double) const {
  double s = 0.0;
  for (const auto& m : p_.terms) s += std::abs(m.slope);
  return s;
}

// sum_m |a_m + b_m t| is convex in t, so its maximum sits at an endpoint.
double TrigTorusPotential::v_max() const { return std::max(sup_norm(0.0), sup_norm(p_.T)); }

int TrigTorusPotential::band_limit() const {
  int b = 0;
  for (const auto& m : p_.terms) {
    for (int n : m.modes) b = std::max(b, std::abs(n));
  }
  return b;
}

TrigTorusPath::TrigTorusPath(std::shared_ptr<const PotentialModel> potential, double kappa, std::size_t steps)
    : potential_(std::move(potential)), kappa_(kappa), steps_(steps) {
  if (!potential_) throw Error(ErrorKind::parameter, "missing potential");
  if (!(kappa_ >= 0.0) || steps_ == 0) throw Error(ErrorKind::parameter, "invalid von Mises parameters");
  log_norm_ = static_cast<double>(potential_->dims()) * std::log(potential_->length() * std::cyl_bessel_i(0.0, kappa_));
}

double TrigTorusPath::initial_density(std::span<const double> x) const {
  double e = 0.0;
  for (double xa : x) e += kappa_ * std::cos(2.0 * pi * xa / potential_->length());
  return std::exp(e - log_norm_);
}

double TrigTorusPath::density(double t, std::span<const double> x) const {
  const std::size_t d = potential_->dims();
  check_point(d, x);
  if (t == 0.0) return initial_density(x);

  // Backward characteristic: y' = grad V, l' = laplacian V, l(t) = 0, so
  // p_t(x) = p_0(y(0)) exp(l(0)).
  using State = std::vector<double>;
  State z(x.begin(), x.end());
  z.push_back(0.0);
  auto rhs = [&](const State& s, State& ds, double tau) {
    std::span<const double> y(s.data(), d);
    potential_->gradient(tau, y, std::span<double>(ds.data(), d));
    ds[d] = potential_->laplacian(tau, y);
  };
  odeint::integrate_n_steps(odeint::runge_kutta_dopri5<State>(), rhs, z, t, -t / static_cast<double>(steps_), steps_);
  double v = initial_density(std::span<const double>(z.data(), d)) * std::exp(z[d]);
  if (!std::isfinite(v)) throw Error(ErrorKind::evaluation, "non-finite density");
  return v;
}

Family make_trig_torus(const TrigTorusParams& p) {
  auto pot = std::make_shared<TrigTorusPotential>(p);
  auto path = std::make_shared<TrigTorusPath>(pot, p.kappa);
  return Family{"trig_torus", pot, path, 1e-6, true};
}

// ---------------------------------------------------------------------------
// Gaussian linear path

GaussianLinearPotential::GaussianLinearPotential(GaussianLinearParams p) : p_(std::move(p)) {
  if (!(p_.L > 0.0) || p_.d == 0) throw Error(ErrorKind::parameter, "invalid Gaussian geometry");
  if (p_.mu_star.size() != p_.d) throw Error(ErrorKind::configuration, "target mean must have d components");
  if (!(p_.sigma_star > 0.0)) throw Error(ErrorKind::parameter, "target std must be positive");
}

double GaussianLinearPotential::mean(double t, std::size_t axis) const { return t * p_.mu_star[axis]; }

double GaussianLinearPotential::stddev(double t) const {
  double s2 = (1.0 - t) * (1.0 - t) + t * t * p_.sigma_star * p_.sigma_star;
  return std::sqrt(s2);
}

namespace {

struct LinearCoeffs {
  double a;        // sigma_dot / sigma
  double a_prime;  // d a / dt
};

LinearCoeffs linear_coeffs(double t, double sigma_star) {
  double ss = sigma_star * sigma_star;
  double s2 = (1.0 - t) * (1.0 - t) + t * t * ss;
  double a = (-(1.0 - t) + t * ss) / s2;
  return {a, (1.0 + ss) / s2 - 2.0 * a * a};
}

}  // namespace

double GaussianLinearPotential::value(double t, std::span<const double> x) const {
  check_point(p_.d, x);
  auto c = linear_coeffs(t, p_.sigma_star);
  double v = 0.0;
  for (std::size_t a = 0; a < p_.d; ++a) {
    double u = centered(x[a], p_.L) - mean(t, a);
    v += p_.mu_star[a] * u + 0.5 * c.a * u * u;
  }
  return v;
}

double GaussianLinearPotential::time_derivative(double t, std::span<const double> x) const {
  check_point(p_.d, x);
  auto c = linear_coeffs(t, p_.sigma_star);
  double v = 0.0;
  for (std::size_t a = 0; a < p_.d; ++a) {
    double m = p_.mu_star[a];
    double u = centered(x[a], p_.L) - mean(t, a);
    v += -m * m + 0.5 * c.a_prime * u * u - c.a * m * u;
  }
  return v;
}

void GaussianLinearPotential::gradient(double t, std::span<const double> x, std::span<double> out) const {
  check_point(p_.d, x);
  auto c = linear_coeffs(t, p_.sigma_star);
  for (std::size_t a = 0; a < p_.d; ++a) out[a] = p_.mu_star[a] + c.a * (centered(x[a], p_.L) - mean(t, a));
}

double GaussianLinearPotential::laplacian(double t, std::span<const double> x) const {
  check_point(p_.d, x);
  return static_cast<double>(p_.d) * linear_coeffs(t, p_.sigma_star).a;
}

double GaussianLinearPotential::sup_norm(double t) const {
  auto c = linear_coeffs(t, p_.sigma_star);
  double s = 0.0;
  for (std::size_t a = 0; a < p_.d; ++a) {
    // In y: 0.5 a (y - mu)^2 + m (y - mu); each part is convex in y.
    double m = p_.mu_star[a];
    double mu = mean(t, a);
    double reach = 0.5 * p_.L + std::abs(mu);
    s += std::abs(m) * reach + 0.5 * std::abs(c.a) * reach * reach;
  }
  return s;
}

double GaussianLinearPotential::sup_time_derivative(double t0, double t1) const {
  return sampled_time_max(t0, t1, [&](double t) {
    auto c = linear_coeffs(t, p_.sigma_star);
    double s = 0.0;
    for (std::size_t a = 0; a < p_.d; ++a) {
      double m = p_.mu_star[a];
      double mu = mean(t, a);
      // -m^2 + (a'/2)(y-mu)^2 - a m (y-mu) expanded in y
      double c2 = 0.5 * c.a_prime;
      double c1 = -c.a_prime * mu - c.a * m;
      double c0 = -m * m + 0.5 * c.a_prime * mu * mu + c.a * m * mu;
      s += quadratic_sup(c2, c1, c0, 0.5 * p_.L);
    }
    return s;
  });
}

GaussianPath::GaussianPath(double L, std::size_t d, double horizon, MeanFn mean, StdFn stddev)
    : L_(L), d_(d), T_(horizon), mean_(std::move(mean)), std_(std::move(stddev)) {}

double GaussianPath::density(double t, std::span<const double> x) const {
  check_point(d_, x);
  double s = std_(t);
  double e = 0.0;
  for (std::size_t a = 0; a < d_; ++a) {
    double u = (centered(x[a], L_) - mean_(t, a)) / s;
    e += u * u;
  }
  return std::exp(-0.5 * e) / std::pow(std::sqrt(2.0 * pi) * s, static_cast<double>(d_));
}

double GaussianPath::boundary_mass(double t) const {
  double s = std_(t);
  double inside = 1.0;
  for (std::size_t a = 0; a < d_; ++a) {
    double m = mean_(t, a);
    double edge = 0.4 * L_;
    double q = std_normal_upper((edge - m) / s) + std_normal_upper((edge + m) / s);
    inside *= (1.0 - q);
  }
  return 1.0 - inside;
}

Family make_gaussian_linear(const GaussianLinearParams& p) {
  auto pot = std::make_shared<GaussianLinearPotential>(p);
  auto path = std::make_shared<GaussianPath>(
      p.L, p.d, 1.0, [pot](double t, std::size_t a) { return pot->mean(t, a); },
      [pot](double t) { return pot->stddev(t); });
  return Family{"gaussian_linear", pot, path, 1e-6, false};
}

// ---------------------------------------------------------------------------
// DDPM probability flow

BetaSchedule BetaSchedule::from_samples(std::span<const double> ts, std::span<const double> betas) {
  if (ts.size() != betas.size() || ts.size() < 2) {
    throw Error(ErrorKind::configuration, "beta table needs at least two matching (t, beta) rows");
  }
  for (std::size_t i = 1; i < ts.size(); ++i) {
    if (!(ts[i] > ts[i - 1])) throw Error(ErrorKind::configuration, "beta table times must increase");
  }
  double t0 = ts.front();
  double t1 = ts.back();
  double slope = (betas.back() - betas.front()) / (t1 - t0);
  double scale = std::max({1.0, std::abs(betas.front()), std::abs(betas.back())});
  for (std::size_t i = 0; i < ts.size(); ++i) {
    double line = betas.front() + slope * (ts[i] - t0);
    if (std::abs(line - betas[i]) > 1e-9 * scale) throw Error(ErrorKind::configuration, "beta schedule is not affine");
  }
  if (slope < 0.0) throw Error(ErrorKind::configuration, "beta schedule must be non-decreasing");
  if (t0 != 0.0) throw Error(ErrorKind::configuration, "beta table must start at t = 0");
  BetaSchedule s;
  s.beta_min = betas.front();
  s.beta_max = betas.back();
  s.T = t1;
  return s;
}

DdpmFlowPotential::DdpmFlowPotential(DdpmParams p) : p_(std::move(p)) {
  const auto& s = p_.schedule;
  if (!(p_.L > 0.0) || p_.d == 0) throw Error(ErrorKind::parameter, "invalid DDPM geometry");
  if (!(s.T > 0.0) || s.beta_min < 0.0 || s.beta_max < s.beta_min) {
    throw Error(ErrorKind::configuration, "beta schedule must be non-negative, affine and non-decreasing");
  }
  if (p_.target_mean.size() != p_.d) throw Error(ErrorKind::configuration, "target mean must have d components");
  if (!(p_.target_std > 0.0)) throw Error(ErrorKind::parameter, "target std must be positive");
}

double DdpmFlowPotential::diffusion_mean(double tau, std::size_t axis) const {
  return p_.target_mean[axis] * std::exp(-0.5 * p_.schedule.integral(tau));
}

double DdpmFlowPotential::diffusion_variance(double tau) const {
  double s0 = p_.target_std * p_.target_std;
  return 1.0 + (s0 - 1.0) * std::exp(-p_.schedule.integral(tau));
}

double DdpmFlowPotential::velocity_slope(double t) const {
  double tt = tau(t);
  double b = p_.schedule.beta(tt);
  double c = -0.5 * b * (1.0 - 1.0 / diffusion_variance(tt));
  return p_.generative ? -c : c;
}

double DdpmFlowPotential::forward_value(double tau, std::span<const double> y) const {
  double b = p_.schedule.beta(tau);
  double s2 = diffusion_variance(tau);
  double v = 0.0;
  for (std::size_t a = 0; a < p_.d; ++a) {
    double u = y[a] - diffusion_mean(tau, a);
    v += -0.25 * b * y[a] * y[a] + 0.25 * b * u * u / s2;
  }
  return v;
}

double DdpmFlowPotential::forward_time_derivative(double tau, std::span<const double> y) const {
  double b = p_.schedule.beta(tau);
  double bp = p_.schedule.slope();
  double s2 = diffusion_variance(tau);
  double s2p = -b * (s2 - 1.0);
  double v = 0.0;
  for (std::size_t a = 0; a < p_.d; ++a) {
    double m = diffusion_mean(tau, a);
    double mp = -0.5 * b * m;
    double u = y[a] - m;
    v += bp * (-0.25 * y[a] * y[a] + 0.25 * u * u / s2);
    v += b * (-0.5 * u * mp / s2 - 0.25 * u * u * s2p / (s2 * s2));
  }
  return v;
}

double DdpmFlowPotential::value(double t, std::span<const double> x) const {
  check_point(p_.d, x);
  std::vector<double> y(p_.d);
  for (std::size_t a = 0; a < p_.d; ++a) y[a] = centered(x[a], p_.L);
  double v = forward_value(tau(t), y);
  return p_.generative ? -v : v;
}

double DdpmFlowPotential::time_derivative(double t, std::span<const double> x) const {
  check_point(p_.d, x);
  std::vector<double> y(p_.d);
  for (std::size_t a = 0; a < p_.d; ++a) y[a] = centered(x[a], p_.L);
  // Reversing time flips the sign of V and of d/dt, so the derivative keeps its sign.
  return forward_time_derivative(tau(t), y);
}

void DdpmFlowPotential::gradient(double t, std::span<const double> x, std::span<double> out) const {
  check_point(p_.d, x);
  double tt = tau(t);
  double b = p_.schedule.beta(tt);
  double s2 = diffusion_variance(tt);
  double sign = p_.generative ? -1.0 : 1.0;
  for (std::size_t a = 0; a < p_.d; ++a) {
    double y = centered(x[a], p_.L);
    out[a] = sign * (-0.5 * b * y + 0.5 * b * (y - diffusion_mean(tt, a)) / s2);
  }
}

double DdpmFlowPotential::laplacian(double t, std::span<const double> x) const {
  check_point(p_.d, x);
  return static_cast<double>(p_.d) * velocity_slope(t);
}

double DdpmFlowPotential::sup_norm(double t) const {
  double tt = tau(t);
  double b = p_.schedule.beta(tt);
  double s2 = diffusion_variance(tt);
  double s = 0.0;
  for (std::size_t a = 0; a < p_.d; ++a) {
    double m = diffusion_mean(tt, a);
    s += quadratic_sup(0.25 * b * (1.0 / s2 - 1.0), -0.5 * b * m / s2, 0.25 * b * m * m / s2, 0.5 * p_.L);
  }
  return s;
}

double DdpmFlowPotential::sup_time_derivative(double t0, double t1) const {
  return sampled_time_max(t0, t1, [&](double t) {
    double tt = tau(t);
    double b = p_.schedule.beta(tt);
    double bp = p_.schedule.slope();
    double s2 = diffusion_variance(tt);
    double s2p = -b * (s2 - 1.0);
    double s = 0.0;
    for (std::size_t a = 0; a < p_.d; ++a) {
      double m = diffusion_mean(tt, a);
      double mp = -0.5 * b * m;
      // Collect the y^2, y and constant coefficients of forward_time_derivative.
      double k_uu = 0.25 * bp / s2 - 0.25 * b * s2p / (s2 * s2);
      double k_u = -0.5 * b * mp / s2;
      double c2 = -0.25 * bp + k_uu;
      double c1 = -2.0 * k_uu * m + k_u;
      double c0 = k_uu * m * m - k_u * m;
      s += quadratic_sup(c2, c1, c0, 0.5 * p_.L);
    }
    return s;
  });
}

std::shared_ptr<const PotentialModel> ddpm_flow_potential(const BetaSchedule& schedule, const DdpmParams& p) {
  DdpmParams q = p;
  q.schedule = schedule;
  return std::make_shared<DdpmFlowPotential>(q);
}

Family make_ddpm_flow(const DdpmParams& p) {
  auto pot = std::make_shared<DdpmFlowPotential>(p);
  auto tau = [pot](double t) { return pot->params().generative ? pot->params().schedule.T - t : t; };
  auto path = std::make_shared<GaussianPath>(
      p.L, p.d, p.schedule.T, [pot, tau](double t, std::size_t a) { return pot->diffusion_mean(tau(t), a); },
      [pot, tau](double t) { return std::sqrt(pot->diffusion_variance(tau(t))); });
  return Family{"ddpm_flow", pot, path, 1e-6, false};
}

// ---------------------------------------------------------------------------
// Simple models

void ConstantPotential::gradient(double, std::span<const double>, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
}

double UniformPath::density(double, std::span<const double>) const {
  return std::pow(L_, -static_cast<double>(d_));
}

Family make_static_uniform(double L, std::size_t d, double T, double c) {
  return Family{"static_uniform", std::make_shared<ConstantPotential>(L, d, T, c),
                std::make_shared<UniformPath>(L, d, T), 1e-12, true};
}

// ---------------------------------------------------------------------------
// Tabulated potential

TabulatedPotential::TabulatedPotential(double L, std::size_t N_tab, std::size_t d, std::size_t n_t, double T,
                                       std::vector<double> values)
    : L_(L), N_(N_tab), d_(d), n_t_(n_t), T_(T), values_(std::move(values)) {
  if (!(L_ > 0.0) || N_ < 2 || d_ == 0 || n_t_ == 0 || !(T_ > 0.0)) {
    throw Error(ErrorKind::configuration, "invalid tabulated potential header");
  }
  std::size_t per_slice = 1;
  for (std::size_t a = 0; a < d_; ++a) per_slice *= N_;
  if (values_.size() != per_slice * n_t_) throw Error(ErrorKind::configuration, "tabulated value count mismatch");
  for (double v : values_) {
    if (!std::isfinite(v)) throw Error(ErrorKind::configuration, "tabulated potential has non-finite values");
  }
}

std::shared_ptr<TabulatedPotential> TabulatedPotential::read_text(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::io, "cannot open " + path);
  double L = 0.0, T = 0.0;
  std::size_t N = 0, d = 0, n_t = 0;
  if (!(is >> L >> N >> d >> n_t >> T)) throw Error(ErrorKind::configuration, "bad tabulated header in " + path);
  std::vector<double> values;
  double v;
  while (is >> v) values.push_back(v);
  if (!is.eof()) throw Error(ErrorKind::configuration, "non-numeric entry in " + path);
  return std::make_shared<TabulatedPotential>(L, N, d, n_t, T, std::move(values));
}

namespace {

template <typename T>
T read_le(std::istream& is) {
  char buf[sizeof(T)];
  if (!is.read(buf, sizeof(T))) throw Error(ErrorKind::io, "truncated tabulated potential");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

template <typename T>
void write_le(std::ostream& os, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  os.write(buf, sizeof(T));
}

}  // namespace

std::shared_ptr<TabulatedPotential> TabulatedPotential::read_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::io, "cannot open " + path);
  double L = read_le<double>(is);
  auto N = read_le<std::uint64_t>(is);
  auto d = read_le<std::uint64_t>(is);
  auto n_t = read_le<std::uint64_t>(is);
  double T = read_le<double>(is);
  if (N < 2 || d == 0 || d > 8 || n_t == 0 || N > (1U << 24)) {
    throw Error(ErrorKind::configuration, "bad tabulated header in " + path);
  }
  std::size_t count = n_t;
  for (std::size_t a = 0; a < d; ++a) count *= N;
  std::vector<double> values(count);
  for (auto& v : values) v = read_le<double>(is);
  return std::make_shared<TabulatedPotential>(L, N, d, n_t, T, std::move(values));
}

void TabulatedPotential::write_binary(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::io, "cannot open " + path);
  write_le<double>(os, L_);
  write_le<std::uint64_t>(os, N_);
  write_le<std::uint64_t>(os, d_);
  write_le<std::uint64_t>(os, n_t_);
  write_le<double>(os, T_);
  for (double v : values_) write_le<double>(os, v);
}

std::pair<std::size_t, double> TabulatedPotential::locate_time(double t) const {
  if (n_t_ == 1) return {0, 0.0};
  double u = std::clamp(t / T_, 0.0, 1.0) * static_cast<double>(n_t_ - 1);
  auto i = std::min(static_cast<std::size_t>(u), n_t_ - 2);
  return {i, u - static_cast<double>(i)};
}

double TabulatedPotential::slice_value(std::size_t slice, std::span<const double> x) const {
  std::size_t per_slice = values_.size() / n_t_;
  const double* base = values_.data() + slice * per_slice;
  const double h = L_ / static_cast<double>(N_);
  std::vector<std::size_t> lo(d_), hi(d_);
  std::vector<double> w(d_);
  for (std::size_t a = 0; a < d_; ++a) {
    double u = x[a] / h;
    double f = std::floor(u);
    w[a] = u - f;
    auto i = static_cast<std::int64_t>(f) % static_cast<std::int64_t>(N_);
    if (i < 0) i += static_cast<std::int64_t>(N_);
    lo[a] = static_cast<std::size_t>(i);
    hi[a] = (lo[a] + 1) % N_;
  }
  double v = 0.0;
  for (std::size_t corner = 0; corner < (std::size_t{1} << d_); ++corner) {
    double weight = 1.0;
    std::size_t flat = 0;
    for (std::size_t a = 0; a < d_; ++a) {
      bool up = (corner >> (d_ - 1 - a)) & 1U;
      weight *= up ? w[a] : 1.0 - w[a];
      flat = flat * N_ + (up ? hi[a] : lo[a]);
    }
    v += weight * base[flat];
  }
  return v;
}

double TabulatedPotential::value(double t, std::span<const double> x) const {
  check_point(d_, x);
  auto [i, f] = locate_time(t);
  if (n_t_ == 1) return slice_value(0, x);
  return (1.0 - f) * slice_value(i, x) + f * slice_value(i + 1, x);
}

double TabulatedPotential::time_derivative(double t, std::span<const double> x) const {
  check_point(d_, x);
  if (n_t_ == 1) return 0.0;
  auto [i, f] = locate_time(t);
  double dt = T_ / static_cast<double>(n_t_ - 1);
  return (slice_value(i + 1, x) - slice_value(i, x)) / dt;
}

void TabulatedPotential::gradient(double t, std::span<const double> x, std::span<double> out) const {
  check_point(d_, x);
  // Derivative of the multilinear interpolant, taken as a one-cell difference.
  const double h = L_ / static_cast<double>(N_);
  std::vector<double> p(x.begin(), x.end());
  for (std::size_t a = 0; a < d_; ++a) {
    double base = std::floor(x[a] / h) * h;
    p[a] = base;
    double v0 = value(t, p);
    p[a] = base + h;
    double v1 = value(t, p);
    p[a] = x[a];
    out[a] = (v1 - v0) / h;
  }
}

double TabulatedPotential::laplacian(double, std::span<const double>) const {
  throw Error(ErrorKind::evaluation, "piecewise-linear tabulated potential has no Laplacian");
}

double TabulatedPotential::sup_norm(double t) const {
  std::size_t per_slice = values_.size() / n_t_;
  auto slice_max = [&](std::size_t s) {
    double m = 0.0;
    for (std::size_t i = 0; i < per_slice; ++i) m = std::max(m, std::abs(values_[s * per_slice + i]));
    return m;
  };
  if (n_t_ == 1) return slice_max(0);
  auto [i, f] = locate_time(t);
  return std::max(slice_max(i), slice_max(i + 1));
}

double TabulatedPotential::sup_time_derivative(double t0, double t1) const {
  if (n_t_ == 1) return 0.0;
  std::size_t per_slice = values_.size() / n_t_;
  double dt = T_ / static_cast<double>(n_t_ - 1);
  std::size_t first = locate_time(t0).first;
  std::size_t last = locate_time(t1).first;
  double m = 0.0;
  for (std::size_t s = first; s <= last; ++s) {
    for (std::size_t i = 0; i < per_slice; ++i) {
      m = std::max(m, std::abs(values_[(s + 1) * per_slice + i] - values_[s * per_slice + i]) / dt);
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Operations

std::vector<double> eval_velocity(const PotentialModel& model, double t, std::span<const double> x) {
  if (!(t >= 0.0 && t <= model.horizon())) throw Error(ErrorKind::domain, "time outside the model horizon");
  std::vector<double> v(model.dims());
  model.gradient(t, x, v);
  return v;
}

double continuity_residual(const ProbabilityPath& path, const PotentialModel& model, double t, const GridSpec& probe) {
  if (probe.dims() != model.dims() || probe.dims() != path.dims()) {
    throw Error(ErrorKind::shape, "probe grid dimension does not match the family");
  }
  const std::size_t n = probe.size();
  const double h = 1e-3 * path.horizon();
  auto pm2 = path.sample(t - 2 * h, probe);
  auto pm1 = path.sample(t - h, probe);
  auto pp1 = path.sample(t + h, probe);
  auto pp2 = path.sample(t + 2 * h, probe);
  auto p = path.sample(t, probe);

  std::vector<double> div(n, 0.0);
  std::vector<double> grad(probe.dims());
  std::vector<std::vector<double>> flux(probe.dims(), std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    Point x = probe.point(i);
    model.gradient(t, x, grad);
    for (std::size_t a = 0; a < probe.dims(); ++a) flux[a][i] = grad[a] * p[i];
  }
  for (std::size_t a = 0; a < probe.dims(); ++a) {
    auto da = spectral_derivative(flux[a], probe, a);
    for (std::size_t i = 0; i < n; ++i) div[i] += da[i];
  }

  double r = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double dpdt = (-pp2[i] + 8.0 * pp1[i] - 8.0 * pm1[i] + pm2[i]) / (12.0 * h);
    double res = std::abs(dpdt + div[i]);
    if (!std::isfinite(res)) throw Error(ErrorKind::evaluation, "non-finite continuity residual");
    r = std::max(r, res);
  }
  return r;
}

Trajectory solve_flow_ode(const PotentialModel& model, std::span<const double> x0, std::span<const double> times,
                          double tol, double t_start) {
  if (!(tol > 0.0)) throw Error(ErrorKind::parameter, "tolerance must be positive");
  if (x0.size() != model.dims()) throw Error(ErrorKind::shape, "initial point dimension does not match model");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < t_start || (i > 0 && times[i] < times[i - 1])) {
      throw Error(ErrorKind::parameter, "output times must be non-decreasing and not before the start time");
    }
  }
  using State = std::vector<double>;
  Trajectory out;
  out.times.assign(times.begin(), times.end());
  State x(x0.begin(), x0.end());
  auto rhs = [&](const State& s, State& ds, double t) { model.gradient(t, s, ds); };
  auto stepper = odeint::make_dense_output(tol, tol, odeint::runge_kutta_dopri5<State>());

  std::vector<double> grid;
  grid.push_back(t_start);
  grid.insert(grid.end(), times.begin(), times.end());
  std::vector<State> pts;
  auto observer = [&](const State& s, double) { pts.push_back(s); };
  double span = (grid.back() - t_start);
  double dt0 = span > 0.0 ? std::min(1e-3, span) : 1e-3;
  try {
    out.steps = odeint::integrate_times(stepper, rhs, x, grid.begin(), grid.end(), dt0, observer,
                                        odeint::max_step_checker(1000000));
  } catch (const odeint::step_adjustment_error& e) {
    throw Error(ErrorKind::stiffness, std::string("step size underflow: ") + e.what());
  } catch (const odeint::no_progress_error& e) {
    throw Error(ErrorKind::stiffness, std::string("integrator made no progress: ") + e.what());
  }
  if (pts.size() != grid.size()) throw Error(ErrorKind::stiffness, "integrator did not reach all output times");
  out.points.assign(pts.begin() + 1, pts.end());
  return out;
}

std::size_t VelocityAnsatz::parameter_count() const {
  switch (kind) {
    case Kind::affine:
      return 2;
    case Kind::ground_truth:
      return 1;
    case Kind::affine_time:
      return 4;
  }
  return 0;
}

void VelocityAnsatz::features(double t, double x, double truth, std::span<double> out) const {
  switch (kind) {
    case Kind::affine:
      out[0] = 1.0;
      out[1] = x;
      break;
    case Kind::ground_truth:
      out[0] = truth;
      break;
    case Kind::affine_time:
      out[0] = 1.0;
      out[1] = x;
      out[2] = t;
      out[3] = t * x;
      break;
  }
}

CfmGradientReport cfm_gradient_check(const GaussianLinearParams& target, const VelocityAnsatz& ansatz,
                                     std::span<const double> theta, std::size_t samples, std::uint64_t seed) {
  if (samples < 100) throw Error(ErrorKind::insufficient_samples, "gradient check needs at least 100 samples");
  const std::size_t P = ansatz.parameter_count();
  if (theta.size() != P) throw Error(ErrorKind::parameter, "parameter vector length does not match ansatz");
  if (target.d < 1 || target.d > 2) throw Error(ErrorKind::parameter, "gradient check supports d = 1 or 2");
  GaussianLinearPotential pot(target);
  const std::size_t d = target.d;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> sum_fm(P, 0.0), sum_cfm(P, 0.0), sum_diff(P, 0.0), sum_diff2(P, 0.0);
  std::vector<double> phi(P), g_fm(P), g_cfm(P);
  for (std::size_t i = 0; i < samples; ++i) {
    double t = unif(rng);
    std::fill(g_fm.begin(), g_fm.end(), 0.0);
    std::fill(g_cfm.begin(), g_cfm.end(), 0.0);
    for (std::size_t a = 0; a < d; ++a) {
      double x0 = normal(rng);
      double x1 = target.mu_star[a] + target.sigma_star * normal(rng);
      double xt = (1.0 - t) * x0 + t * x1;
      // Marginal velocity in unwrapped coordinates.
      auto c = linear_coeffs(t, target.sigma_star);
      double u = target.mu_star[a] + c.a * (xt - pot.mean(t, a));
      double cond = x1 - x0;
      ansatz.features(t, xt, u, phi);
      double v = 0.0;
      for (std::size_t j = 0; j < P; ++j) v += theta[j] * phi[j];
      for (std::size_t j = 0; j < P; ++j) {
        g_fm[j] += 2.0 * (v - u) * phi[j];
        g_cfm[j] += 2.0 * (v - cond) * phi[j];
      }
    }
    for (std::size_t j = 0; j < P; ++j) {
      double diff = g_fm[j] - g_cfm[j];
      sum_fm[j] += g_fm[j];
      sum_cfm[j] += g_cfm[j];
      sum_diff[j] += diff;
      sum_diff2[j] += diff * diff;
    }
  }

  CfmGradientReport r;
  r.samples = samples;
  r.within_three_se = true;
  const double M = static_cast<double>(samples);
  for (std::size_t j = 0; j < P; ++j) {
    double mean = sum_diff[j] / M;
    double var = std::max(0.0, (sum_diff2[j] - M * mean * mean) / (M - 1.0));
    double se = std::sqrt(var / M);
    r.grad_fm.push_back(sum_fm[j] / M);
    r.grad_cfm.push_back(sum_cfm[j] / M);
    r.difference.push_back(mean);
    r.standard_error.push_back(se);
    if (std::abs(mean) > 3.0 * se) r.within_three_se = false;
  }
  return r;
}

}  // namespace wflow
