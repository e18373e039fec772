// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "wflow/bounds.hpp"
#include "wflow/error.hpp"
#include "wflow/spectral.hpp"

using namespace wflow;
using std::numbers::pi;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::usage;
}

TestFunction random_trig(double L, std::size_t d, int lo, int hi, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> mode(lo, hi);
  std::normal_distribution<double> nd;
  std::vector<TrigMode> modes;
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<std::int64_t> n(d);
    for (auto& v : n) v = mode(rng);
    modes.push_back({n, cplx(nd(rng), nd(rng))});
  }
  return TestFunction::trig(L, d, modes);
}

cplx coefficient(const TestFunction& f, std::vector<std::int64_t> n) {
  for (const auto& m : f.modes()) {
    if (m.n == n) return m.c;
  }
  return 0.0;
}

TestFunction exp_sin(double L) {
  return TestFunction::smooth(
      L, 1, [L](std::span<const double> x) { return cplx(std::exp(std::sin(2.0 * pi * x[0] / L)), 0.0); }, "exp_sin");
}

}  // namespace

TEST_CASE("oblique projection") {
  SUBCASE("identity on band-limited functions") {
    for (std::size_t d : {1, 2}) {
      auto f = random_trig(1.5, d, -8, 7, 12, 10 + d);
      GridSpec g(1.5, 16, d);
      auto Pf = oblique_project(f, g);
      for (const auto& m : f.modes()) CHECK(std::abs(coefficient(Pf, m.n) - m.c) < 1e-12);
      double stray = 0.0;
      for (const auto& m : Pf.modes()) stray = std::max(stray, std::abs(m.c - coefficient(f, m.n)));
      CHECK(stray < 1e-12);
    }
  }
  SUBCASE("mode N folds onto the constant") {
    auto f = TestFunction::trig(1.0, 1, {{{4}, 1.0}});
    GridSpec g(1.0, 4, 1);
    auto Pf = oblique_project(f, g);
    CHECK(std::abs(coefficient(Pf, {0}) - 1.0) < 1e-15);
    for (const auto& m : Pf.modes()) {
      if (m.n[0] != 0) CHECK(std::abs(m.c) < 1e-15);
    }
    const double x = 0.3;
    CHECK(std::abs(Pf(std::span<const double>(&x, 1)) - 1.0) < 1e-15);
  }
  SUBCASE("aliasing formula") {
    // Two modes k and k + N in one alias class.
    auto f = TestFunction::trig(2.0, 1, {{{3}, cplx(0.5, 0.1)}, {{3 + 16}, cplx(-0.2, 0.7)}});
    GridSpec g(2.0, 16, 1);
    auto Pf = oblique_project(f, g);
    CHECK(std::abs(coefficient(Pf, {3}) - cplx(0.3, 0.8)) < 1e-12);
    for (std::size_t d : {1, 2}) {
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto h = random_trig(1.0, d, -40, 40, 25, seed);
        CHECK(aliasing_error(h, GridSpec(1.0, 16, d)) < 1e-12);
      }
    }
    CHECK(kind_of([] { aliasing_error(exp_sin(1.0), GridSpec(1.0, 8, 1)); }) == ErrorKind::parameter);
  }
  SUBCASE("projector on samples") {
    auto f = random_trig(1.0, 2, -20, 20, 30, 3);
    GridSpec g(1.0, 8, 2);
    auto Pf = oblique_project(f, g);
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto x = g.point(i);
      CHECK(std::abs(Pf(x) - f(x)) < 1e-11);
    }
    auto PPf = oblique_project(Pf, g);
    for (const auto& m : Pf.modes()) CHECK(std::abs(coefficient(PPf, m.n) - m.c) < 1e-12);
  }
}

TEST_CASE("lattice sum") {
  const double zero[] = {0.0};
  auto r1 = lattice_sum_check(1, 8.0, zero);
  const double two_zeta8 = 2.0 * std::pow(pi, 8) / 9450.0;
  CHECK(r1.partial_sum <= two_zeta8);
  CHECK(r1.partial_sum + r1.tail_bound >= two_zeta8);
  CHECK(r1.bound == doctest::Approx(65536.0));
  CHECK(r1.holds());

  const double half[] = {0.5, 0.5};
  auto r2 = lattice_sum_check(2, 10.0, half, 20);
  auto wide = lattice_sum_check(2, 10.0, half, 120);
  CHECK(r2.partial_sum <= wide.partial_sum);
  CHECK(wide.partial_sum <= r2.partial_sum + r2.tail_bound);
  CHECK(r2.bound == doctest::Approx(std::pow((1.0 + std::sqrt(2.0)) * std::sqrt(5.0), 10)));
  CHECK(r2.holds());

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int i = 0; i < 20; ++i) {
    const double y[] = {u(rng), u(rng), u(rng)};
    CHECK(lattice_sum_check(3, 3.0 + 2.0 * pi + 0.5 * i, y, 12).holds());
  }

  CHECK(kind_of([&] { lattice_sum_check(1, 2.0, zero); }) == ErrorKind::parameter);
  const double far[] = {0.6};
  CHECK(kind_of([&] { lattice_sum_check(1, 8.0, far); }) == ErrorKind::parameter);
}

TEST_CASE("projection error") {
  SUBCASE("band-limited input") {
    auto f = random_trig(1.0, 1, -4, 3, 6, 2);
    auto rep = projection_error_check(f, GridSpec(1.0, 8, 1), 1, 2);
    CHECK(rep.measured < 1e-9);
    CHECK(rep.commutator_measured < 1e-9);
    CHECK(rep.holds());
  }
  SUBCASE("single mode just outside the band") {
    const double L = 1.0;
    const std::size_t N = 8;
    auto f = TestFunction::trig(L, 1, {{{4}, 1.0}});
    for (int m : {0, 1, 2}) {
      auto rep = projection_error_check(f, GridSpec(L, N, 1), m, 2);
      // f - Pf = e^{i 8 pi x} - e^{-i 8 pi x}; both modes have |k| = 8 pi.
      const double k = 8.0 * pi;
      CHECK(rep.measured == doctest::Approx(std::sqrt(2.0) * std::pow(k, 2 * m)).epsilon(1e-12));
      CHECK(rep.commutator_measured < 1e-9 * std::pow(k, 2 * m));
      CHECK(rep.holds());
    }
    // The same function given only pointwise.
    auto g = TestFunction::smooth(
        L, 1, [](std::span<const double> x) { return std::polar(1.0, 8.0 * pi * x[0]); }, "mode4");
    auto a = projection_error_check(f, GridSpec(L, N, 1), 1, 2);
    auto b = projection_error_check(g, GridSpec(L, N, 1), 1, 2);
    CHECK(b.measured == doctest::Approx(a.measured).epsilon(1e-9));
    CHECK(b.bound == doctest::Approx(a.bound).epsilon(1e-9));
  }
  SUBCASE("exp(sin) converges quickly and stays under the bound") {
    double prev = 0.0;
    for (std::size_t N : {8, 16, 32}) {
      auto rep = projection_error_check(exp_sin(1.0), GridSpec(1.0, N, 1), 0, 2);
      CAPTURE(N);
      CHECK(rep.holds());
      if (N > 8) CHECK(rep.measured * 16.0 <= prev);
      prev = rep.measured;
    }
    for (int m : {1, 2}) CHECK(projection_error_check(exp_sin(1.0), GridSpec(1.0, 16, 1), m, 2).holds());
  }
  SUBCASE("two dimensions") {
    auto f = random_trig(1.0, 2, -12, 12, 10, 9);
    for (int m : {0, 1}) CHECK(projection_error_check(f, GridSpec(1.0, 16, 2), m, 3).holds());
  }
  SUBCASE("preconditions") {
    auto rough = TestFunction::smooth(
        1.0, 1, [](std::span<const double> x) { return cplx(std::sin(2 * pi * x[0]), 0.0); }, "rough", 5);
    CHECK_NOTHROW(projection_error_check(rough, GridSpec(1.0, 8, 1), 0, 2));
    CHECK(kind_of([&] { projection_error_check(rough, GridSpec(1.0, 8, 1), 1, 2); }) == ErrorKind::parameter);
    CHECK(kind_of([&] { projection_error_check(exp_sin(1.0), GridSpec(1.0, 8, 1), 0, 1); }) ==
          ErrorKind::parameter);
  }
}

TEST_CASE("vector differential equation bound") {
  VectorDeOptions unforced;
  unforced.zero_forcing = true;
  auto u = vector_de_bound_check(12, 1, unforced);
  CHECK(u.norm_T == doctest::Approx(u.norm_0).epsilon(1e-10));
  CHECK(u.holds());

  VectorDeOptions free;
  free.zero_hamiltonian = true;
  free.constant_forcing = true;
  free.T = 2.0;
  auto f = vector_de_bound_check(8, 2, free);
  CHECK(f.holds());
  CHECK(f.norm_T < f.bound - 1e-6);
  free.aligned_start = true;
  auto a = vector_de_bound_check(8, 2, free);
  CHECK(a.norm_T == doctest::Approx(a.bound).epsilon(1e-10));

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto r = vector_de_bound_check(16, seed);
    CHECK(r.holds());
    CHECK(r.forcing_integral > 0.0);
  }
  CHECK(kind_of([] { vector_de_bound_check(65, 0); }) == ErrorKind::parameter);
}

TEST_CASE("theorem 1 experiment") {
  SUBCASE("static band-limited family") {
    auto fam = make_static_uniform(2.0 * pi, 1, 1.0, 0.3);
    const std::size_t Ns[] = {8, 16};
    auto rep = theorem1_experiment(fam, 2, Ns);
    CHECK(rep.c_s == doctest::Approx(1.0));
    for (const auto& row : rep.rows) {
      CHECK(row.measured < 1e-12);
      CHECK(row.asserted);
    }
    CHECK(rep.holds());
  }
  SUBCASE("trig torus") {
    TrigTorusParams p;
    p.kappa = 1.0;
    p.terms = {{{1}, 0.2, 0.1, 0.0}};
    auto fam = make_trig_torus(p);
    const std::size_t Ns[] = {16, 32};
    auto rep = theorem1_experiment(fam, 2, Ns);
    CHECK(rep.c_s > 1.0);
    CHECK(rep.holds());
    CHECK(rep.rows[1].measured < rep.rows[0].measured);
    CHECK(rep.rows[1].delta == doctest::Approx(rep.rows[0].delta / 16.0));
  }
  SUBCASE("seam mass gates the assertion") {
    auto fam = make_gaussian_linear({4.0, 1, {0.0}, 1.0});
    const std::size_t Ns[] = {16};
    auto rep = theorem1_experiment(fam, 2, Ns);
    CHECK_FALSE(rep.hypotheses_met);
    CHECK_FALSE(rep.rows[0].asserted);
  }
}
