// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <numbers>
#include <random>
#include <unsupported/Eigen/KroneckerProduct>

#include "wflow/error.hpp"
#include "wflow/models.hpp"
#include "wflow/spectral.hpp"

using namespace wflow;
using std::numbers::pi;

namespace {

// Independent dense construction of the one-axis matrices from their entries.
Eigen::MatrixXcd fourier_matrix(std::size_t N) {
  Eigen::MatrixXcd F(N, N);
  for (std::size_t j = 0; j < N; ++j)
    for (std::size_t l = 0; l < N; ++l) F(j, l) = std::polar(1.0 / std::sqrt(double(N)), 2 * pi * double(j * l) / N);
  return F;
}

Eigen::MatrixXcd kinetic_1d(double L, std::size_t N) {
  Eigen::MatrixXcd S = Eigen::MatrixXcd::Zero(N, N);
  Eigen::MatrixXcd D = Eigen::MatrixXcd::Zero(N, N);
  for (std::size_t j = 0; j < N; ++j) {
    S(j, j) = (j % 2) ? -1.0 : 1.0;
    double k = 2 * pi / L * (double(j) - double(N) / 2);
    D(j, j) = k * k;
  }
  auto F = fourier_matrix(N);
  return 0.5 * S * F * D * F.adjoint() * S.adjoint();
}

StateVector random_state(const GridSpec& g, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  StateVector s(g);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = cplx(n(rng), n(rng));
  s.normalize();
  return s;
}

StateVector plane_wave(const GridSpec& g, std::vector<int> k) {
  StateVector s(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    auto x = g.point(i);
    double arg = 0;
    for (std::size_t a = 0; a < g.dims(); ++a) arg += 2 * pi / g.length() * k[a] * x[a];
    s[i] = std::polar(1.0, arg);
  }
  return s;
}

Eigen::VectorXcd to_eigen(const StateVector& s) {
  Eigen::VectorXcd v(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) v(i) = s[i];
  return v;
}

TrigTorusParams trig_params(std::size_t d) {
  TrigTorusParams p;
  p.d = d;
  p.L = 2 * pi;
  if (d == 1) {
    p.terms = {{{1}, 0.7, 0.3, 0.2}, {{2}, -0.4, 0.1, 1.1}};
  } else {
    p.terms = {{{1, 0}, 0.5, 0.2, 0.0}, {{1, -1}, 0.3, -0.1, 0.4}, {{0, 2}, 0.25, 0.0, 0.9}};
  }
  return p;
}

}  // namespace

TEST_CASE("F on basis vectors") {
  GridSpec g(1.0, 4, 1);
  auto f0 = apply_centered_dft(StateVector::basis(g, 0), 0, Direction::forward);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(f0[i] - cplx(0.5, 0)) < 1e-15);
  auto f1 = apply_centered_dft(StateVector::basis(g, 1), 0, Direction::forward);
  cplx expect[] = {{0.5, 0}, {0, 0.5}, {-0.5, 0}, {0, -0.5}};
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(f1[i] - expect[i]) < 1e-15);
}

TEST_CASE("F matches the dense Fourier matrix along each axis") {
  for (std::size_t N : {2u, 4u, 8u, 16u}) {
    GridSpec g(1.0, N, 1);
    auto Fd = dense([](const StateVector& s) { return apply_centered_dft(s, 0, Direction::forward); }, g);
    CHECK((Fd - fourier_matrix(N)).norm() < 1e-13);
    auto Fi = dense([](const StateVector& s) { return apply_centered_dft(s, 0, Direction::inverse); }, g);
    CHECK((Fi - fourier_matrix(N).adjoint()).norm() < 1e-13);
  }
  GridSpec g2(1.0, 4, 2);
  Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(4, 4);
  auto F = fourier_matrix(4);
  Eigen::MatrixXcd F0 = Eigen::kroneckerProduct(F, I);
  Eigen::MatrixXcd F1 = Eigen::kroneckerProduct(I, F);
  auto D0 = dense([](const StateVector& s) { return apply_centered_dft(s, 0, Direction::forward); }, g2);
  auto D1 = dense([](const StateVector& s) { return apply_centered_dft(s, 1, Direction::forward); }, g2);
  CHECK((D0 - F0).norm() < 1e-13);
  CHECK((D1 - F1).norm() < 1e-13);
  CHECK_THROWS_AS(apply_centered_dft(StateVector(g2), 2, Direction::forward), Error);
}

TEST_CASE("F round trip and unitarity") {
  std::mt19937_64 rng(7);
  GridSpec g(3.0, 16, 2);
  auto s = random_state(g, rng);
  for (std::size_t a = 0; a < 2; ++a) {
    auto f = apply_centered_dft(s, a, Direction::forward);
    CHECK(std::abs(f.norm() - 1.0) < 1e-12);
    auto back = apply_centered_dft(f, a, Direction::inverse);
    CHECK((back - s).norm() < 1e-12);
  }
}

TEST_CASE("sign operator") {
  GridSpec g(1.0, 2, 1);
  StateVector u(g, {1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)});
  auto su = apply_sign(u, 0);
  CHECK(su[0].real() == doctest::Approx(1 / std::sqrt(2.0)));
  CHECK(su[1].real() == doctest::Approx(-1 / std::sqrt(2.0)));
  GridSpec g4(1.0, 4, 1);
  auto s3 = apply_sign(StateVector::basis(g4, 3), 0, true);
  CHECK(s3[3] == cplx(-1.0));
  std::mt19937_64 rng(3);
  auto r = random_state(GridSpec(1.0, 8, 2), rng);
  for (std::size_t a = 0; a < 2; ++a) {
    auto twice = apply_sign(apply_sign(r, a), a);
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(twice[i] == r[i]);
  }
}

TEST_CASE("K for N=2 on L=2 pi") {
  // D_K = diag(1, 0); the alternating vector carries the only nonzero mode,
  // and the constant vector must be annihilated.
  GridSpec g(2 * pi, 2, 1);
  auto K = dense_K(g);
  Eigen::MatrixXcd expect(2, 2);
  expect << 0.25, -0.25, -0.25, 0.25;
  CHECK((K - expect).norm() < 1e-15);
}

TEST_CASE("K matches the dense Kronecker sum") {
  for (std::size_t d : {1u, 2u}) {
    GridSpec g(1.7, 8, d);
    Eigen::MatrixXcd k1 = kinetic_1d(1.7, 8);
    Eigen::MatrixXcd expect = k1;
    if (d == 2) {
      Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(8, 8);
      expect = Eigen::kroneckerProduct(k1, I).eval() + Eigen::kroneckerProduct(I, k1).eval();
    }
    CHECK((dense_K(g) - expect).norm() < 1e-11);
  }
}

TEST_CASE("plane waves are eigenvectors of K") {
  GridSpec g(2 * pi, 8, 1);
  auto c = apply_K(plane_wave(g, {0}));
  CHECK(c.norm() < 1e-13);
  auto w = plane_wave(g, {2});
  CHECK((apply_K(w) - cplx(2.0) * w).norm() < 1e-12);
  StateVector cosine(g);
  for (std::size_t i = 0; i < 8; ++i) cosine[i] = std::sqrt(2.0) * std::cos(2 * g.point(i)[0]);
  CHECK((apply_K(cosine) - cplx(2.0) * cosine).norm() < 1e-12);
  // Eigenvalues of dense K are |k|^2 / 2 over the centered band.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(dense_K(g));
  std::vector<double> ev(es.eigenvalues().data(), es.eigenvalues().data() + 8);
  std::vector<double> expect = {0, 0.5, 0.5, 2, 2, 4.5, 4.5, 8};
  for (std::size_t i = 0; i < 8; ++i) CHECK(ev[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("diagonal potential") {
  GridSpec g(1.0, 4, 1);
  StateVector u(g, {0.5, 0.5, 0.5, 0.5});
  std::vector<double> ramp = {0, 0.25, 0.5, 0.75};
  auto r = apply_diagonal(u, ramp);
  for (std::size_t i = 0; i < 4; ++i) CHECK(r[i].real() == doctest::Approx(0.5 * ramp[i]));
  ConstantPotential zero(1.0, 1, 1.0, 0.0);
  CHECK(apply_diag_potential(u, zero, 0.0).norm() == 0.0);
  ConstantPotential c(1.0, 1, 1.0, 2.5);
  CHECK((apply_diag_potential(u, c, 0.0) - cplx(2.5) * u).norm() < 1e-15);
  std::vector<double> bad = {0, NAN, 0, 0};
  CHECK_THROWS_AS(apply_diagonal(u, bad), Error);
}

TEST_CASE("H is Hermitian with imaginary entries") {
  TrigTorusPotential V(trig_params(1));
  GridSpec g(2 * pi, 8, 1);
  auto v = V.sample(0.3, g);
  auto H = dense_H(g, v);
  CHECK((H - H.adjoint()).norm() < 1e-12);
  CHECK(H.real().norm() < 1e-12);
  auto Hd = dense([&](const StateVector& s) { return apply_H(s, V, 0.3); }, g);
  CHECK((Hd - H).norm() < 1e-12);
  ConstantPotential c(2 * pi, 1, 1.0, 3.0);
  CHECK(dense([&](const StateVector& s) { return apply_H(s, c, 0.0); }, g).norm() < 1e-12);
}

TEST_CASE("apply_H agrees with dense H in two dimensions") {
  TrigTorusPotential V(trig_params(2));
  GridSpec g(2 * pi, 16, 2);
  auto v = V.sample(0.5, g);
  auto H = dense_H(g, v);
  std::mt19937_64 rng(11);
  auto s = random_state(g, rng);
  auto hs = apply_H(s, v);
  CHECK((to_eigen(hs) - H * to_eigen(s)).norm() < 1e-12);
  // Real input gives i times a real vector.
  StateVector real(g);
  std::normal_distribution<double> n;
  for (std::size_t i = 0; i < real.size(); ++i) real[i] = n(rng);
  auto hr = apply_H(real, v);
  for (std::size_t i = 0; i < hr.size(); ++i) CHECK(std::abs(hr[i].real()) < 1e-12);
}

TEST_CASE("exp_K") {
  GridSpec g(2 * pi, 8, 1);
  std::mt19937_64 rng(5);
  auto s = random_state(g, rng);
  CHECK((exp_K(s, 0.0) - s).norm() < 1e-14);
  auto w = plane_wave(g, {3});
  double phi = 0.37;
  CHECK((exp_K(w, phi) - std::polar(1.0, phi * 4.5) * w).norm() < 1e-12);
  CHECK(std::abs(exp_K(s, 1.3).norm() - 1.0) < 1e-12);
  // Dense exponential oracle.
  GridSpec g2(1.3, 8, 2);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(dense_K(g2));
  Eigen::VectorXcd ph = (cplx(0, 0.8) * es.eigenvalues().cast<cplx>()).array().exp();
  Eigen::MatrixXcd E = es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
  auto U = dense([](const StateVector& x) { return exp_K(x, 0.8); }, g2);
  CHECK((U - E).norm() < 1e-11);
  CHECK((U.adjoint() * U - Eigen::MatrixXcd::Identity(64, 64)).norm() < 1e-12);
  CHECK_THROWS_AS(exp_K(s, INFINITY), Error);
}

TEST_CASE("exp_diag_potential") {
  GridSpec g(2 * pi, 8, 1);
  std::mt19937_64 rng(9);
  auto s = random_state(g, rng);
  TrigTorusPotential V(trig_params(1));
  CHECK((exp_diag_potential(s, V, 0.2, 0.0) - s).norm() == 0.0);
  ConstantPotential c(2 * pi, 1, 1.0, 1.5);
  CHECK((exp_diag_potential(s, c, 0.0, 0.4) - std::polar(1.0, 0.6) * s).norm() < 1e-15);
  auto back = exp_diag_potential(exp_diag_potential(s, V, 0.2, 0.9), V, 0.2, -0.9);
  CHECK((back - s).norm() < 1e-15);
}

TEST_CASE("dense cap") {
  GridSpec g(1.0, 128, 2);
  try {
    dense_K(g);
    FAIL("expected size error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::size);
  }
  CHECK_NOTHROW(dense_K(GridSpec(1.0, 8, 1), 8));
}

TEST_CASE("Fourier coefficients of a trig polynomial") {
  GridSpec g(2.0, 8, 1);
  // f(x) = 3 + 2 e^{i 2 pi x / L} - e^{-i 3 (2 pi x / L)}
  std::vector<cplx> f(8);
  for (std::size_t i = 0; i < 8; ++i) {
    double th = 2 * pi * g.point(i)[0] / 2.0;
    f[i] = 3.0 + 2.0 * std::polar(1.0, th) - std::polar(1.0, -3 * th);
  }
  auto c = fourier_coefficients(f, g);
  for (std::size_t j = 0; j < 8; ++j) {
    cplx expect = j == 4 ? 3.0 : j == 5 ? 2.0 : j == 1 ? -1.0 : 0.0;
    CHECK(std::abs(c[j] - expect) < 1e-14);
  }
  auto back = synthesize(c, g);
  for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(back[i] - f[i]) < 1e-13);
}

TEST_CASE("spectral derivative and Laplacian power norms") {
  GridSpec g(2 * pi, 32, 1);
  std::vector<double> f(32);
  for (std::size_t i = 0; i < 32; ++i) f[i] = std::sin(3 * g.point(i)[0]);
  auto df = spectral_derivative(f, g, 0);
  for (std::size_t i = 0; i < 32; ++i) CHECK(df[i] == doctest::Approx(3 * std::cos(3 * g.point(i)[0])).epsilon(1e-12));
  // ||lap^m sin(3x)||_{L2} on [0, 2 pi) = 9^m sqrt(pi)
  auto g_fn = [](std::span<const double> x) { return std::sin(3 * x[0]); };
  CHECK(laplacian_power_norm(g_fn, g, 0) == doctest::Approx(std::sqrt(pi)).epsilon(1e-12));
  CHECK(laplacian_power_norm(g_fn, g, 2) == doctest::Approx(81 * std::sqrt(pi)).epsilon(1e-12));
  CHECK(smoothness_oracle(g_fn, g, 1) == doctest::Approx(1.1 * 81 * std::sqrt(pi)).epsilon(1e-12));
}
