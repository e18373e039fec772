// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <span>
#include <vector>

#include "wflow/state.hpp"

namespace wflow {

class PotentialModel;

/// Largest operator dimension the dense materializers accept by default.
inline constexpr std::size_t kDefaultDenseCap = 4096;

enum class Direction { forward, inverse };

// In-place kernels. All transforms are unitary; F carries the positive
// exponent e^{+2 pi i j l / N} / sqrt(N) and F^dagger the negative one.

void centered_dft_inplace(StateVector& s, std::size_t axis, Direction dir);
void sign_inplace(StateVector& s, std::size_t axis);
void kinetic_inplace(StateVector& s);
void exp_kinetic_inplace(StateVector& s, double phi);
void exp_diagonal_inplace(StateVector& s, std::span<const double> values, double phi);

/// Applies F (forward) or F^dagger (inverse) along one axis.
StateVector apply_centered_dft(const StateVector& s, std::size_t axis, Direction dir);
/// Multiplies the amplitude at per-axis index j by (-1)^j; self-inverse.
StateVector apply_sign(const StateVector& s, std::size_t axis, bool adjoint = false);
/// K = 1/2 (S F D_K F^dagger S^dagger) Kronecker-summed over axes.
StateVector apply_K(const StateVector& s);
/// Pointwise multiplication by V_t on the grid.
StateVector apply_diag_potential(const StateVector& s, const PotentialModel& model, double t);
StateVector apply_diagonal(const StateVector& s, std::span<const double> values);
/// i (K D_V - D_V K) applied to the state.
StateVector apply_H(const StateVector& s, const PotentialModel& model, double t);
StateVector apply_H(const StateVector& s, std::span<const double> potential_values);
/// exp(i phi K) via per-axis conjugated phases exp(i phi D_K / 2).
StateVector exp_K(const StateVector& s, double phi);
/// Amplitude at x multiplied by exp(i phi V_t(x)).
StateVector exp_diag_potential(const StateVector& s, const PotentialModel& model, double t, double phi);

/// Eigenvalues of D_K along one axis: (2 pi / L)^2 (j - N/2)^2.
std::vector<double> kinetic_diagonal(const GridSpec& grid);

using LinearMap = std::function<StateVector(const StateVector&)>;

/// Materializes a linear map column by column from basis vectors.
Eigen::MatrixXcd dense(const LinearMap& op, const GridSpec& grid, std::size_t cap = kDefaultDenseCap);
Eigen::MatrixXcd dense_K(const GridSpec& grid, std::size_t cap = kDefaultDenseCap);
Eigen::MatrixXcd dense_H(const GridSpec& grid, std::span<const double> potential_values,
                         std::size_t cap = kDefaultDenseCap);

/// Centered Fourier coefficients fhat(k) = N^{-d} sum_x f(x) e^{-i k.x}, indexed
/// like the grid (per-axis index j stands for k = 2 pi (j - N/2) / L).
std::vector<cplx> fourier_coefficients(std::span<const cplx> samples, const GridSpec& grid);
/// Inverse of fourier_coefficients.
std::vector<cplx> synthesize(std::span<const cplx> coefficients, const GridSpec& grid);

/// Spectral partial derivative d/dx_axis of real periodic samples. The
/// unpaired Nyquist mode is dropped.
std::vector<double> spectral_derivative(std::span<const double> samples, const GridSpec& grid, std::size_t axis);

/// ||laplacian^{power} g||_{L2} over the torus, from samples of g on `fine`.
double laplacian_power_norm(const std::function<double(std::span<const double>)>& g, const GridSpec& fine, int power);

/// ||laplacian^{s+1} g||_{L2} by spectral differentiation, times a 1.1 safety factor.
double smoothness_oracle(const std::function<double(std::span<const double>)>& g, const GridSpec& fine, int s);

}  // namespace wflow
