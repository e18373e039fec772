// SPDX-License-Identifier: Apache-2.0
#include "wflow/grid.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <string>

#include "wflow/error.hpp"

namespace wflow {

bool is_power_of_two(std::size_t n) { return n != 0 && std::has_single_bit(n); }

GridSpec::GridSpec(double L, std::size_t N, std::size_t d, std::size_t cap) : L_(L), N_(N), d_(d) {
  if (!(L > 0.0) || !std::isfinite(L)) {
    throw Error(ErrorKind::parameter, "torus length must be positive and finite");
  }
  if (N < 2 || !is_power_of_two(N)) {
    throw Error(ErrorKind::parameter, "points per axis must be a power of two >= 2, got " + std::to_string(N));
  }
  if (d == 0) throw Error(ErrorKind::parameter, "dimension must be positive");
  total_ = 1;
  for (std::size_t a = 0; a < d; ++a) {
    if (total_ > cap / N) {
      throw Error(ErrorKind::size, "grid with N^d amplitudes exceeds cap " + std::to_string(cap));
    }
    total_ *= N;
  }
}

std::size_t GridSpec::qubits() const { return d_ * static_cast<std::size_t>(std::countr_zero(N_)); }

std::size_t GridSpec::stride(std::size_t axis) const {
  std::size_t s = 1;
  for (std::size_t a = axis + 1; a < d_; ++a) s *= N_;
  return s;
}

void GridSpec::check(const MultiIndex& idx) const {
  if (idx.size() != d_) {
    throw Error(ErrorKind::invalid_index, "index has " + std::to_string(idx.size()) + " components, grid has d=" +
                                              std::to_string(d_));
  }
  for (auto c : idx.components) {
    if (c < 0 || static_cast<std::size_t>(c) >= N_) {
      throw Error(ErrorKind::invalid_index, "component " + std::to_string(c) + " outside [0, " +
                                                std::to_string(N_) + ")");
    }
  }
}

std::size_t GridSpec::flatten(const MultiIndex& idx) const {
  check(idx);
  std::size_t flat = 0;
  for (auto c : idx.components) flat = flat * N_ + static_cast<std::size_t>(c);
  return flat;
}

MultiIndex GridSpec::unflatten(std::size_t flat) const {
  if (flat >= total_) {
    throw Error(ErrorKind::invalid_index, "flat index " + std::to_string(flat) + " outside grid");
  }
  std::vector<std::int64_t> c(d_);
  for (std::size_t a = d_; a-- > 0;) {
    c[a] = static_cast<std::int64_t>(flat % N_);
    flat /= N_;
  }
  return MultiIndex(std::move(c));
}

Point GridSpec::point(const MultiIndex& idx) const {
  check(idx);
  Point x(d_);
  for (std::size_t a = 0; a < d_; ++a) x[a] = coordinate(static_cast<std::size_t>(idx[a]));
  return x;
}

Point GridSpec::point(std::size_t flat) const { return point(unflatten(flat)); }

double GridSpec::wave_number(std::size_t j) const {
  return 2.0 * std::numbers::pi / L_ * (static_cast<double>(j) - static_cast<double>(N_ / 2));
}

WaveVector GridSpec::wave_vector(const MultiIndex& j) const {
  check(j);
  WaveVector k(d_);
  for (std::size_t a = 0; a < d_; ++a) k[a] = wave_number(static_cast<std::size_t>(j[a]));
  return k;
}

}  // namespace wflow
