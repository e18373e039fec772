// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "wflow/error.hpp"
#include "wflow/models.hpp"

using namespace wflow;
using std::numbers::pi;

namespace {

// V(x) = c . x, so the velocity is the constant c (not periodic; ODE use only).
class LinearField final : public PotentialModel {
 public:
  explicit LinearField(std::vector<double> c) : c_(std::move(c)) {}
  std::size_t dims() const override { return c_.size(); }
  double length() const override { return 1.0; }
  double horizon() const override { return 2.0; }
  std::string name() const override { return "linear"; }
  double value(double, std::span<const double> x) const override {
    double v = 0;
    for (std::size_t a = 0; a < c_.size(); ++a) v += c_[a] * x[a];
    return v;
  }
  double time_derivative(double, std::span<const double>) const override { return 0; }
  void gradient(double, std::span<const double>, std::span<double> out) const override {
    std::copy(c_.begin(), c_.end(), out.begin());
  }
  double laplacian(double, std::span<const double>) const override { return 0; }
  double sup_norm(double) const override { return 0; }
  double sup_time_derivative(double, double) const override { return 0; }

 private:
  std::vector<double> c_;
};

TrigTorusParams trig1() {
  TrigTorusParams p;
  p.kappa = 0.8;
  p.terms = {{{1}, 0.3, 0.2, 0.0}, {{2}, -0.15, 0.1, 0.7}};
  return p;
}

TrigTorusParams trig2() {
  TrigTorusParams p;
  p.d = 2;
  p.kappa = 0.5;
  p.terms = {{{1, 0}, 0.25, 0.1, 0.0}, {{1, 1}, 0.1, -0.05, 0.3}};
  return p;
}

DdpmParams ddpm(double mean, double std, bool generative = false) {
  DdpmParams p;
  p.schedule = {0.2, 2.0, 1.0};
  p.target_mean = {mean};
  p.target_std = std;
  p.generative = generative;
  return p;
}

double total_mass(const ProbabilityPath& p, double t, const GridSpec& g) {
  auto v = p.sample(t, g);
  double s = 0;
  for (double x : v) s += x;
  return s * std::pow(g.spacing(), double(g.dims()));
}

}  // namespace

TEST_CASE("velocity examples") {
  // Source equals target: the path contracts then expands, so the velocity
  // vanishes at the center and at t = 1/2 only.
  auto still = make_gaussian_linear({});
  for (double t : {0.0, 0.3, 0.5, 1.0}) {
    std::vector<double> center{8.0};
    CHECK(eval_velocity(*still.potential, t, center)[0] == 0.0);
  }
  for (double x : {0.0, 3.0, 15.9}) {
    std::vector<double> xv{x};
    CHECK(eval_velocity(*still.potential, 0.5, xv)[0] == 0.0);
    CHECK(eval_velocity(*still.potential, 0.0, xv)[0] == doctest::Approx(-(x - 8.0)));
  }
  TrigTorusParams p;
  p.terms = {{{1}, 1.7, 0.0, 0.0}};
  TrigTorusPotential cosine(p);
  std::vector<double> zero{0.0};
  CHECK(eval_velocity(cosine, 0.5, zero)[0] == 0.0);

  GaussianLinearParams gp;
  gp.mu_star = {0.5};
  GaussianLinearPotential shifted(gp);
  std::vector<double> at_mean{8.0 + 0.25};
  CHECK(eval_velocity(shifted, 0.5, at_mean)[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK_THROWS_AS(eval_velocity(shifted, 1.5, at_mean), Error);
  try {
    eval_velocity(shifted, -0.1, at_mean);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::domain);
  }
}

TEST_CASE("gradients converge at second order under central differences") {
  std::vector<std::shared_ptr<const PotentialModel>> models = {
      std::make_shared<TrigTorusPotential>(trig1()), std::make_shared<TrigTorusPotential>(trig2()),
      make_gaussian_linear({16.0, 1, {0.7}, 0.9}).potential, make_ddpm_flow(ddpm(1.0, 0.6)).potential,
      make_ddpm_flow(ddpm(-0.5, 1.4, true)).potential};
  for (const auto& m : models) {
    const std::size_t d = m->dims();
    std::vector<double> x(d);
    for (std::size_t a = 0; a < d; ++a) x[a] = 0.37 * m->length() + 0.11 * a;
    std::vector<double> g(d);
    m->gradient(0.4, x, g);
    for (std::size_t a = 0; a < d; ++a) {
      auto fd = [&](double h) {
        auto xp = x, xm = x;
        xp[a] += h;
        xm[a] -= h;
        return (m->value(0.4, xp) - m->value(0.4, xm)) / (2 * h);
      };
      double e1 = std::abs(fd(1e-2) - g[a]);
      double e2 = std::abs(fd(5e-3) - g[a]);
      // Quadratic potentials have exact central differences.
      if (e1 > 1e-11) CHECK(e1 / e2 >= 3.9);
      CHECK(e1 < 1e-3);
    }
    // Time derivative against a central difference in t.
    double h = 1e-5;
    double ft = (m->value(0.4 + h, x) - m->value(0.4 - h, x)) / (2 * h);
    CHECK(m->time_derivative(0.4, x) == doctest::Approx(ft).epsilon(1e-6));
  }
}

TEST_CASE("sup norms bound sampled values") {
  std::vector<Family> fams = {make_trig_torus(trig1()), make_gaussian_linear({16.0, 1, {0.7}, 0.9}),
                              make_ddpm_flow(ddpm(1.0, 0.6)), make_ddpm_flow(ddpm(1.0, 0.6, true))};
  for (const auto& f : fams) {
    GridSpec g(f.potential->length(), 256, 1);
    double vmax = f.potential->v_max();
    double vdot = f.potential->vdot_max();
    for (int k = 0; k <= 10; ++k) {
      double t = f.potential->horizon() * k / 10.0;
      double sn = f.potential->sup_norm(t);
      CHECK(sn <= vmax * (1 + 1e-12));
      for (std::size_t i = 0; i < g.size(); ++i) {
        auto x = g.point(i);
        CHECK(std::abs(f.potential->value(t, x)) <= sn * (1 + 1e-12));
        CHECK(std::abs(f.potential->time_derivative(t, x)) <= vdot * (1 + 1e-12));
      }
    }
  }
}

TEST_CASE("trig fields are periodic") {
  TrigTorusPotential V(trig2());
  std::vector<double> x{0.3, 1.9};
  for (std::size_t a = 0; a < 2; ++a) {
    auto y = x;
    y[a] += V.length();
    CHECK(V.value(0.6, y) == doctest::Approx(V.value(0.6, x)).epsilon(1e-13));
  }
  CHECK(V.band_limit() == 1);
}

TEST_CASE("densities integrate to one and stay nonnegative") {
  std::vector<Family> fams = {make_trig_torus(trig1()), make_gaussian_linear({16.0, 1, {0.7}, 0.9}),
                              make_ddpm_flow(ddpm(1.0, 0.6)), make_static_uniform(3.0, 2, 1.0)};
  for (const auto& f : fams) {
    GridSpec g(f.path->length(), f.path->dims() == 1 ? 256 : 32, f.path->dims());
    for (double t : {0.0, 0.5, 1.0}) {
      CHECK(total_mass(*f.path, t, g) == doctest::Approx(1.0).epsilon(1e-6));
      for (double p : f.path->sample(t, g)) CHECK(p >= 0.0);
      if (!f.periodic) CHECK(f.path->boundary_mass(t) < 1e-8);
    }
  }
  auto tt = make_trig_torus(trig2());
  GridSpec g2(tt.path->length(), 32, 2);
  CHECK(total_mass(*tt.path, 0.7, g2) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("source-equals-target Gaussian path returns to its start") {
  auto f = make_gaussian_linear({});
  GridSpec g(16.0, 64, 1);
  CHECK(f.path->sample(1.0, g) == f.path->sample(0.0, g));
  auto mid = f.path->sample(0.5, g);
  CHECK(mid[32] == doctest::Approx(1.0 / std::sqrt(pi)));  // variance 1/2 at t = 1/2
}

TEST_CASE("continuity residuals") {
  auto uni = make_static_uniform(2.0, 1, 1.0, 0.4);
  CHECK(continuity_residual(*uni.path, *uni.potential, 0.5, GridSpec(2.0, 64, 1)) == 0.0);

  auto gl = make_gaussian_linear({16.0, 1, {0.5}, 1.0});
  GridSpec probe(16.0, 256, 1);
  CHECK(continuity_residual(*gl.path, *gl.potential, 0.5, probe) <= 1e-6);

  // Right path, wrong (zero) potential.
  ConstantPotential zero(16.0, 1, 1.0, 0.0);
  CHECK(continuity_residual(*gl.path, zero, 0.5, probe) > 0.01);

  std::vector<Family> fams = {make_trig_torus(trig1()), gl, make_gaussian_linear({16.0, 1, {-1.0}, 0.6}),
                              make_ddpm_flow(ddpm(1.0, 0.6)), make_ddpm_flow(ddpm(0.5, 1.2, true))};
  for (const auto& f : fams) {
    GridSpec pr(f.path->length(), 128, 1);
    for (int k = 0; k < 5; ++k) {
      double t = f.path->horizon() * (0.1 + 0.2 * k);
      CHECK(continuity_residual(*f.path, *f.potential, t, pr) <= f.residual_tolerance);
    }
  }
  auto t2 = make_trig_torus(trig2());
  CHECK(continuity_residual(*t2.path, *t2.potential, 0.5, GridSpec(t2.path->length(), 32, 2)) <= 1e-6);
}

TEST_CASE("flow ODE") {
  LinearField c({0.3, -1.2});
  std::vector<double> x0{0.1, 0.2};
  std::vector<double> times{0.5, 2.0};
  auto tr = solve_flow_ode(c, x0, times, 1e-10);
  REQUIRE(tr.points.size() == 2);
  CHECK(tr.points[1][0] == doctest::Approx(0.1 + 0.6).epsilon(1e-10));
  CHECK(tr.points[1][1] == doctest::Approx(0.2 - 2.4).epsilon(1e-10));
  CHECK(tr.points[0][0] == doctest::Approx(0.25).epsilon(1e-10));

  auto still = make_gaussian_linear({});
  std::vector<double> y0{5.3};
  std::vector<double> one{1.0};
  // x_t = y0 sigma_t / sigma_0 in centered coordinates, and sigma_1 = sigma_0.
  CHECK(solve_flow_ode(*still.potential, y0, one, 1e-10).points[0][0] == doctest::Approx(5.3).epsilon(1e-9));
  std::vector<double> half{0.5};
  CHECK(solve_flow_ode(*still.potential, y0, half, 1e-10).points[0][0] - 8.0 ==
        doctest::Approx(-2.7 * std::sqrt(0.5)).epsilon(1e-9));
  CHECK_THROWS_AS(solve_flow_ode(c, x0, times, 0.0), Error);
}

TEST_CASE("flow ODE transports N(0,1) to the target mean") {
  GaussianLinearParams gp;
  gp.mu_star = {0.5};
  auto f = make_gaussian_linear(gp);
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n;
  const int M = 100000;
  double sum = 0, sum2 = 0;
  std::vector<double> one{1.0};
  for (int i = 0; i < M; ++i) {
    std::vector<double> x0{8.0 + n(rng)};
    double x1 = solve_flow_ode(*f.potential, x0, one, 1e-8).points[0][0] - 8.0;
    sum += x1;
    sum2 += x1 * x1;
  }
  double mean = sum / M;
  double se = std::sqrt((sum2 / M - mean * mean) / M);
  CHECK(std::abs(mean - 0.5) <= 3 * se);
}

TEST_CASE("DDPM probability flow") {
  auto stat = make_ddpm_flow(ddpm(0.0, 1.0));
  for (double t : {0.0, 0.4, 1.0}) {
    for (double x : {1.0, 8.0, 12.0}) {
      std::vector<double> xv{x};
      CHECK(eval_velocity(*stat.potential, t, xv)[0] == 0.0);
    }
  }
  // Constant beta, target N(0, sigma^2): slope -(beta/2)(1 - 1/sigma_t^2).
  DdpmParams p = ddpm(0.0, 2.0);
  p.schedule = {0.8, 0.8, 1.0};
  DdpmFlowPotential pot(p);
  for (double t : {0.0, 0.5, 1.0}) {
    double var = 1 + 3 * std::exp(-0.8 * t);
    CHECK(pot.velocity_slope(t) == doctest::Approx(-0.4 * (1 - 1 / var)).epsilon(1e-14));
    std::vector<double> x{8.0 + 1.5};
    CHECK(eval_velocity(pot, t, x)[0] == doctest::Approx(1.5 * pot.velocity_slope(t)).epsilon(1e-13));
  }
  DdpmParams unit = ddpm(0.0, 1.0);
  unit.schedule = {0.8, 0.8, 1.0};
  CHECK(DdpmFlowPotential(unit).velocity_slope(0.3) == 0.0);

  std::vector<double> ts{0, 0.5, 1}, ok{0.1, 0.55, 1.0}, bent{0.1, 0.7, 1.0}, down{1.0, 0.5, 0.0};
  auto s = BetaSchedule::from_samples(ts, ok);
  CHECK(s.beta_min == 0.1);
  CHECK(s.beta_max == 1.0);
  CHECK_THROWS_AS(BetaSchedule::from_samples(ts, bent), Error);
  CHECK_THROWS_AS(BetaSchedule::from_samples(ts, down), Error);
  try {
    BetaSchedule::from_samples(ts, bent);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::configuration);
  }
  auto q = ddpm_flow_potential(s, ddpm(1.0, 0.5));
  CHECK(q->horizon() == 1.0);
}

TEST_CASE("generative DDPM reverses the forward flow") {
  auto fwd = make_ddpm_flow(ddpm(1.0, 0.6));
  auto gen = make_ddpm_flow(ddpm(1.0, 0.6, true));
  std::vector<double> x{9.1};
  CHECK(gen.potential->value(0.3, x) == doctest::Approx(-fwd.potential->value(0.7, x)));
  CHECK(gen.path->density(0.3, x) == doctest::Approx(fwd.path->density(0.7, x)));
}

TEST_CASE("CFM gradient identity") {
  GaussianLinearParams gp;
  gp.mu_star = {0.8};
  gp.sigma_star = 0.7;
  VelocityAnsatz truth{VelocityAnsatz::Kind::ground_truth};
  std::vector<double> one{1.0};
  auto r = cfm_gradient_check(gp, truth, one, 100000, 1);
  CHECK(r.within_three_se);
  CHECK(std::abs(r.grad_fm[0]) < 1e-12);
  CHECK(std::abs(r.grad_cfm[0]) <= 3 * r.standard_error[0]);

  VelocityAnsatz affine{VelocityAnsatz::Kind::affine};
  std::vector<double> th{0.2, -0.5};
  auto a = cfm_gradient_check(gp, affine, th, 100000, 2);
  CHECK(a.within_three_se);
  CHECK(a.grad_fm.size() == 2);
  CHECK_THROWS_AS(cfm_gradient_check(gp, affine, th, 10, 2), Error);
  try {
    cfm_gradient_check(gp, affine, th, 10, 2);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::insufficient_samples);
  }
  // Same seed, same report.
  auto b = cfm_gradient_check(gp, affine, th, 1000, 9);
  auto c = cfm_gradient_check(gp, affine, th, 1000, 9);
  CHECK(b.difference == c.difference);
}

TEST_CASE("tabulated potential") {
  // 1D table with 4 lattice points and 2 time slices.
  std::vector<double> vals{0, 1, 2, 3, 1, 1, 1, 1};
  TabulatedPotential tab(2.0, 4, 1, 2, 1.0, vals);
  std::vector<double> x{1.0};
  CHECK(tab.value(0.0, x) == doctest::Approx(2.0));
  CHECK(tab.value(1.0, x) == doctest::Approx(1.0));
  CHECK(tab.value(0.5, x) == doctest::Approx(1.5));
  std::vector<double> wrap{1.75};  // halfway between index 3 and index 0 (periodic)
  CHECK(tab.value(0.0, wrap) == doctest::Approx(1.5));
  CHECK(tab.time_derivative(0.2, x) == doctest::Approx(-1.0));
  CHECK(tab.sup_norm(0.5) == 3.0);
  std::vector<double> g(1);
  tab.gradient(0.0, std::vector<double>{0.7}, g);
  CHECK(g[0] == doctest::Approx(2.0));

  auto dir = std::filesystem::temp_directory_path();
  auto bin = (dir / "wflow_tab.bin").string();
  tab.write_binary(bin);
  auto back = TabulatedPotential::read_binary(bin);
  CHECK(back->value(0.3, x) == tab.value(0.3, x));
  auto txt = (dir / "wflow_tab.txt").string();
  {
    std::ofstream os(txt);
    os << "2.0 4 1 2 1.0\n0 1 2 3\n1 1 1 1\n";
  }
  CHECK(TabulatedPotential::read_text(txt)->value(0.5, x) == doctest::Approx(1.5));
  {
    std::ofstream os(txt);
    os << "2.0 4 1 2 1.0\n0 1 2\n";
  }
  CHECK_THROWS_AS(TabulatedPotential::read_text(txt), Error);
  std::remove(bin.c_str());
  std::remove(txt.c_str());
}
