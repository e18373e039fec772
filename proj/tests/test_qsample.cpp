// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "wflow/error.hpp"
#include "wflow/qsample.hpp"

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

StateVector random_unit(const GridSpec& g, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::vector<cplx> a(g.size());
  for (auto& v : a) v = cplx(nd(rng), nd(rng));
  StateVector s(g, a);
  return s.normalize();
}

}  // namespace

TEST_CASE("discretize_density") {
  SUBCASE("constant density gives uniform masses") {
    UniformPath path(2.0, 2, 1.0);
    GridSpec g(2.0, 8, 2);
    auto dist = discretize_density(path, 0.3, g);
    for (double m : dist.masses) CHECK(m == doctest::Approx(1.0 / 64.0).epsilon(1e-14));
    CHECK(dist.normalizer == doctest::Approx(64.0 / 4.0));
  }
  SUBCASE("single supported point") {
    GridSpec g(1.0, 8, 1);
    std::vector<double> w(8, 0.0);
    w[5] = 3.0;
    auto dist = make_distribution(g, w);
    CHECK(dist.masses[5] == 1.0);
    auto q = qsample_vector(dist);
    CHECK(q[5] == cplx(1.0, 0.0));
    CHECK(std::abs(q[4]) == 0.0);
  }
  SUBCASE("standard normal at t = 0 on L = 16, N = 64") {
    auto fam = make_gaussian_linear({16.0, 1, {0.0}, 1.0});
    GridSpec g(16.0, 64, 1);
    auto dist = discretize_density(*fam.path, 0.0, g);
    std::vector<double> w(64);
    double sum = 0.0;
    for (std::size_t j = 0; j < 64; ++j) {
      const double y = 0.25 * static_cast<double>(j) - 8.0;
      w[j] = std::exp(-0.5 * y * y);
      sum += w[j];
    }
    double total = 0.0;
    for (std::size_t j = 0; j < 64; ++j) {
      CHECK(dist.masses[j] == doctest::Approx(w[j] / sum).epsilon(1e-12));
      total += dist.masses[j];
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("errors") {
    GridSpec g(1.0, 4, 1);
    CHECK(kind_of([&] { make_distribution(g, {0, 0, 0, 0}); }) == ErrorKind::degenerate_distribution);
    CHECK(kind_of([&] { make_distribution(g, {0, -1, 2, 0}); }) == ErrorKind::domain);
    CHECK(kind_of([&] { make_distribution(g, {1, 1}); }) == ErrorKind::shape);
  }
}

TEST_CASE("qsample_vector") {
  GridSpec g(1.0, 4, 1);
  auto q = qsample_vector(make_distribution(g, {1, 1, 1, 1}));
  for (std::size_t i = 0; i < 4; ++i) CHECK(q[i] == cplx(0.5, 0.0));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GridSpec g2(1.0, 8, 2);
  std::vector<double> w(g2.size());
  for (auto& v : w) v = u(rng);
  w[7] = 0.0;
  auto dist = make_distribution(g2, w);
  auto s = qsample_vector(dist);
  CHECK(s.norm() == doctest::Approx(1.0).epsilon(1e-14));
  auto born = born_distribution(s);
  for (std::size_t i = 0; i < g2.size(); ++i) {
    CHECK(s[i].imag() == 0.0);
    CHECK(s[i].real() >= 0.0);
    CHECK(born[i] == doctest::Approx(dist.masses[i]).epsilon(1e-14));
  }
}

TEST_CASE("ideal_state") {
  SUBCASE("uniform density has a_t = 1") {
    UniformPath path(3.0, 1, 1.0);
    auto st = ideal_state(path, 0.0, GridSpec(3.0, 16, 1));
    CHECK(st.a_t == doctest::Approx(1.0).epsilon(1e-14));
    for (std::size_t i = 0; i < 16; ++i) CHECK(st.state[i].real() == doctest::Approx(0.25));
  }
  SUBCASE("same direction as the discretized qsample") {
    auto fam = make_gaussian_linear({16.0, 1, {1.0}, 0.9});
    GridSpec g(16.0, 32, 1);
    auto a = ideal_state(*fam.path, 0.4, g).state;
    auto b = qsample_vector(discretize_density(*fam.path, 0.4, g));
    CHECK(l2_distance(a, b) < 1e-14);
  }
  SUBCASE("a_t matches 1/||P sqrt p|| by fine-grid quadrature and tends to 1") {
    // sqrt of the von Mises density exp(kappa cos x) / (2 pi I0(kappa)).
    TrigTorusParams tp;
    tp.kappa = 1.5;
    auto fam = make_trig_torus(tp);
    const double L = 2.0 * pi;
    double prev = 0.0;
    for (std::size_t N : {8, 16, 32}) {
      GridSpec g(L, N, 1);
      auto st = ideal_state(*fam.path, 0.0, g);
      // Naive DFT of sqrt p, then the interpolant on a 4x grid.
      std::vector<cplx> c(N);
      for (std::size_t k = 0; k < N; ++k) {
        const double n = static_cast<double>(k) - static_cast<double>(N) / 2.0;
        for (std::size_t j = 0; j < N; ++j) {
          const double x = L * static_cast<double>(j) / static_cast<double>(N);
          c[k] += fam.path->sqrt_density(0.0, std::span<const double>(&x, 1)) * std::polar(1.0, -n * x);
        }
        c[k] /= static_cast<double>(N);
      }
      const std::size_t F = 4 * N;
      double q = 0.0;
      for (std::size_t j = 0; j < F; ++j) {
        const double x = L * static_cast<double>(j) / static_cast<double>(F);
        cplx v = 0.0;
        for (std::size_t k = 0; k < N; ++k) {
          v += c[k] * std::polar(1.0, (static_cast<double>(k) - static_cast<double>(N) / 2.0) * x);
        }
        q += std::norm(v) * L / static_cast<double>(F);
      }
      CHECK(st.a_t == doctest::Approx(1.0 / std::sqrt(q)).epsilon(1e-6));
      if (N > 8) CHECK(std::abs(st.a_t - 1.0) <= std::abs(prev - 1.0) + 1e-12);
      prev = st.a_t;
    }
    CHECK(prev == doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("born_sample") {
  GridSpec g(1.0, 4, 1);
  SUBCASE("basis state") {
    auto s = StateVector::basis(g, 2);
    for (auto i : born_sample_flat(s, 1000, 11)) CHECK(i == 2);
    auto mi = born_sample(s, 3, 11);
    CHECK(mi[0] == MultiIndex{2});
  }
  SUBCASE("uniform state passes a chi-square test") {
    auto s = qsample_vector(make_distribution(g, {1, 1, 1, 1}));
    auto draws = born_sample_flat(s, 100000, 2024);
    std::vector<double> counts(4, 0.0);
    for (auto i : draws) counts[i] += 1.0;
    double chi2 = 0.0;
    for (double c : counts) chi2 += (c - 25000.0) * (c - 25000.0) / 25000.0;
    // 3 degrees of freedom, upper 0.001 point.
    CHECK(chi2 < 16.266);
  }
  SUBCASE("fixed seed and chunking") {
    std::mt19937_64 rng(5);
    auto s = random_unit(GridSpec(1.0, 16, 1), rng);
    auto a = born_sample_flat(s, 500, 99);
    auto b = born_sample_flat(s, 500, 99);
    CHECK(a == b);
    auto c = born_sample_flat(s, 500, 100);
    CHECK(a != c);
    CHECK(counter_uniform(7, 123) == counter_uniform(7, 123));
    CHECK(counter_uniform(7, 123) != counter_uniform(7, 124));
    CHECK(substream_seed(7, 0) != substream_seed(7, 1));
  }
  SUBCASE("zero-probability slots are never drawn") {
    auto s = qsample_vector(make_distribution(g, {0, 1, 0, 1}));
    for (auto i : born_sample_flat(s, 20000, 4)) CHECK((i == 1 || i == 3));
  }
  SUBCASE("non-unit state") {
    StateVector s(g, {1.0, 1.0, 0.0, 0.0});
    CHECK(kind_of([&] { born_sample_flat(s, 10, 1); }) == ErrorKind::normalization);
  }
}

TEST_CASE("distances") {
  GridSpec g(1.0, 8, 1);
  auto p = make_distribution(g, {1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(tv_distance(p, p) == 0.0);
  auto a = make_distribution(g, {1, 0, 0, 0, 0, 0, 0, 0});
  auto b = make_distribution(g, {0, 0, 0, 1, 0, 0, 0, 0});
  CHECK(tv_distance(a, b) == 1.0);
  CHECK(kind_of([&] { tv_distance(a, make_distribution(GridSpec(1.0, 4, 1), {1, 1, 1, 1})); }) == ErrorKind::shape);
  CHECK(kind_of([&] { l2_distance(StateVector(g), StateVector(GridSpec(2.0, 8, 1))); }) == ErrorKind::shape);

  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    GridSpec h(1.0, 8, trial % 2 == 0 ? 1 : 2);
    auto u = random_unit(h, rng);
    auto v = random_unit(h, rng);
    if (trial % 3 == 0) {
      // A nearby pair, where the chain is closer to tight.
      v = u;
      v[0] += cplx(0.01, -0.02);
      v.normalize();
    }
    const double tv = tv_distance(born_distribution(u), born_distribution(v));
    const double ov = std::abs(inner(u, v));
    const double trace = std::sqrt(std::max(0.0, 1.0 - ov * ov));
    CHECK(tv <= trace + 1e-14);
    CHECK(trace <= l2_distance(u, v) + 1e-14);
  }
}

TEST_CASE("sample CSV") {
  GridSpec g(2.0, 4, 2);
  std::ostringstream os;
  write_samples_csv(os, g, {0, 5});
  CHECK(os.str() == "flat,j0,j1,x0,x1\n0,0,0,0,0\n5,1,1,0.5,0.5\n");
}
