// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "wflow/grid.hpp"

namespace wflow {

using cplx = std::complex<double>;

/// Amplitudes of a state on a torus grid, in flat-index order.
class StateVector {
 public:
  explicit StateVector(GridSpec grid);
  StateVector(GridSpec grid, std::vector<cplx> amplitudes);

  static StateVector basis(GridSpec grid, std::size_t flat);

  const GridSpec& grid() const { return grid_; }
  std::size_t size() const { return amps_.size(); }

  cplx& operator[](std::size_t i) { return amps_[i]; }
  const cplx& operator[](std::size_t i) const { return amps_[i]; }
  std::span<cplx> amplitudes() { return amps_; }
  std::span<const cplx> amplitudes() const { return amps_; }

  /// Euclidean norm.
  double norm() const;
  /// Rescales to unit norm; throws on a zero vector.
  StateVector& normalize();
  bool is_normalized() const { return normalized_; }

  double max_abs_imag() const;
  bool all_finite() const;

  StateVector& operator+=(const StateVector& o);
  StateVector& operator-=(const StateVector& o);
  StateVector& operator*=(cplx c);

  /// Writes the binary dump: L (f64), N (u64), d (u64), then interleaved
  /// re/im f64 pairs, all little-endian.
  void write(std::ostream& os) const;
  static StateVector read(std::istream& is);
  void save(const std::string& path) const;
  static StateVector load(const std::string& path);

 private:
  GridSpec grid_;
  std::vector<cplx> amps_;
  bool normalized_ = false;
};

StateVector operator-(StateVector a, const StateVector& b);
StateVector operator+(StateVector a, const StateVector& b);
StateVector operator*(cplx c, StateVector a);

cplx inner(const StateVector& a, const StateVector& b);

}  // namespace wflow
