// SPDX-License-Identifier: Apache-2.0
#include "wflow/state.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "wflow/error.hpp"

namespace wflow {

namespace {

static_assert(std::endian::native == std::endian::little, "dump format assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  os.write(buf, sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  char buf[sizeof(T)];
  if (!is.read(buf, sizeof(T))) throw Error(ErrorKind::io, "truncated state dump");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

void check_same(const StateVector& a, const StateVector& b) {
  if (!(a.grid() == b.grid())) throw Error(ErrorKind::shape, "states live on different grids");
}

}  // namespace

StateVector::StateVector(GridSpec grid) : grid_(grid), amps_(grid.size()) {}

StateVector::StateVector(GridSpec grid, std::vector<cplx> amplitudes) : grid_(grid), amps_(std::move(amplitudes)) {
  if (amps_.size() != grid_.size()) {
    throw Error(ErrorKind::shape, "amplitude count does not match grid size");
  }
}

StateVector StateVector::basis(GridSpec grid, std::size_t flat) {
  if (flat >= grid.size()) throw Error(ErrorKind::invalid_index, "basis index outside grid");
  StateVector s(grid);
  s.amps_[flat] = 1.0;
  s.normalized_ = true;
  return s;
}

double StateVector::norm() const {
  double acc = 0.0;
  for (const auto& a : amps_) acc += std::norm(a);
  return std::sqrt(acc);
}

StateVector& StateVector::normalize() {
  double n = norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw Error(ErrorKind::normalization, "cannot normalize a zero or non-finite state");
  for (auto& a : amps_) a /= n;
  normalized_ = true;
  return *this;
}

double StateVector::max_abs_imag() const {
  double m = 0.0;
  for (const auto& a : amps_) m = std::max(m, std::abs(a.imag()));
  return m;
}

bool StateVector::all_finite() const {
  return std::all_of(amps_.begin(), amps_.end(),
                     [](const cplx& a) { return std::isfinite(a.real()) && std::isfinite(a.imag()); });
}

StateVector& StateVector::operator+=(const StateVector& o) {
  check_same(*this, o);
  for (std::size_t i = 0; i < amps_.size(); ++i) amps_[i] += o.amps_[i];
  normalized_ = false;
  return *this;
}

StateVector& StateVector::operator-=(const StateVector& o) {
  check_same(*this, o);
  for (std::size_t i = 0; i < amps_.size(); ++i) amps_[i] -= o.amps_[i];
  normalized_ = false;
  return *this;
}

StateVector& StateVector::operator*=(cplx c) {
  for (auto& a : amps_) a *= c;
  normalized_ = normalized_ && std::abs(std::abs(c) - 1.0) == 0.0;
  return *this;
}

StateVector operator-(StateVector a, const StateVector& b) { return a -= b; }
StateVector operator+(StateVector a, const StateVector& b) { return a += b; }
StateVector operator*(cplx c, StateVector a) { return a *= c; }

cplx inner(const StateVector& a, const StateVector& b) {
  check_same(a, b);
  cplx acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::conj(a[i]) * b[i];
  return acc;
}

void StateVector::write(std::ostream& os) const {
  put<double>(os, grid_.length());
  put<std::uint64_t>(os, grid_.points_per_axis());
  put<std::uint64_t>(os, grid_.dims());
  for (const auto& a : amps_) {
    put<double>(os, a.real());
    put<double>(os, a.imag());
  }
}

StateVector StateVector::read(std::istream& is) {
  double L = get<double>(is);
  auto N = get<std::uint64_t>(is);
  auto d = get<std::uint64_t>(is);
  GridSpec g(L, N, d);
  StateVector s(g);
  for (auto& a : s.amps_) {
    double re = get<double>(is);
    double im = get<double>(is);
    a = {re, im};
  }
  return s;
}

void StateVector::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::io, "cannot open " + path);
  write(os);
}

StateVector StateVector::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::io, "cannot open " + path);
  return read(is);
}

}  // namespace wflow
