// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace wflow {

/// Largest number of amplitudes a GridSpec may describe unless overridden.
inline constexpr std::size_t kDefaultGridCap = std::size_t{1} << 22;

/// Per-axis integer coordinates of a grid point or wave vector slot.
struct MultiIndex {
  std::vector<std::int64_t> components;

  MultiIndex() = default;
  MultiIndex(std::initializer_list<std::int64_t> c) : components(c) {}
  explicit MultiIndex(std::vector<std::int64_t> c) : components(std::move(c)) {}

  std::size_t size() const { return components.size(); }
  std::int64_t operator[](std::size_t a) const { return components[a]; }
  std::int64_t& operator[](std::size_t a) { return components[a]; }
  friend bool operator==(const MultiIndex&, const MultiIndex&) = default;
};

using Point = std::vector<double>;
using WaveVector = std::vector<double>;

/// Periodic grid on the torus [0, L)^d with N points per axis.
///
/// Flat indices are axis-major: axis 0 is the most significant digit, so the
/// last axis is contiguous in memory.
class GridSpec {
 public:
  GridSpec(double L, std::size_t N, std::size_t d, std::size_t cap = kDefaultGridCap);

  double length() const { return L_; }
  std::size_t points_per_axis() const { return N_; }
  std::size_t dims() const { return d_; }
  std::size_t size() const { return total_; }
  double spacing() const { return L_ / static_cast<double>(N_); }
  /// Number of qubits d*log2(N) needed to hold a state on this grid.
  std::size_t qubits() const;

  /// Distance between consecutive entries along an axis in the flat layout.
  std::size_t stride(std::size_t axis) const;

  std::size_t flatten(const MultiIndex& idx) const;
  MultiIndex unflatten(std::size_t flat) const;

  Point point(const MultiIndex& idx) const;
  Point point(std::size_t flat) const;
  /// Coordinate of per-axis index j (no range check).
  double coordinate(std::size_t j) const { return static_cast<double>(j) * spacing(); }

  WaveVector wave_vector(const MultiIndex& j) const;
  /// Centered wave number (2*pi/L)(j - N/2) for per-axis index j (no range check).
  double wave_number(std::size_t j) const;

  friend bool operator==(const GridSpec& a, const GridSpec& b) {
    return a.L_ == b.L_ && a.N_ == b.N_ && a.d_ == b.d_;
  }

 private:
  void check(const MultiIndex& idx) const;

  double L_;
  std::size_t N_;
  std::size_t d_;
  std::size_t total_;
};

bool is_power_of_two(std::size_t n);

/// Free-function forms mirroring the member API.
inline Point grid_point(const GridSpec& g, const MultiIndex& idx) { return g.point(idx); }
inline WaveVector wave_vector(const GridSpec& g, const MultiIndex& j) { return g.wave_vector(j); }
inline std::size_t flatten(const GridSpec& g, const MultiIndex& idx) { return g.flatten(idx); }
inline MultiIndex unflatten(const GridSpec& g, std::size_t i) { return g.unflatten(i); }

}  // namespace wflow
