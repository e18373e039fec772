// SPDX-License-Identifier: Apache-2.0
#include "wflow/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <tuple>

#include "wflow/error.hpp"
#include "wflow/models.hpp"

namespace wflow {

namespace {

// Guru plans for in-place length-N transforms along one axis of an N^d array.
// FFTW planning is not thread-safe, execution with new arrays is.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(std::size_t N, std::size_t d, std::size_t axis, int sign) {
    std::lock_guard lock(mu_);
    auto key = std::make_tuple(N, d, axis, sign);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;

    std::size_t stride = 1;
    for (std::size_t a = axis + 1; a < d; ++a) stride *= N;
    std::size_t outer = 1;
    for (std::size_t a = 0; a < axis; ++a) outer *= N;

    fftw_iodim dim{static_cast<int>(N), static_cast<int>(stride), static_cast<int>(stride)};
    fftw_iodim loops[2] = {
        {static_cast<int>(outer), static_cast<int>(N * stride), static_cast<int>(N * stride)},
        {static_cast<int>(stride), 1, 1},
    };
    std::size_t total = outer * N * stride;
    auto* scratch = fftw_alloc_complex(total);
    fftw_plan plan = fftw_plan_guru_dft(1, &dim, 2, loops, scratch, scratch, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(scratch);
    if (plan == nullptr) throw Error(ErrorKind::evaluation, "FFTW could not build a plan");
    plans_.emplace(key, plan);
    return plan;
  }

  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

 private:
  std::mutex mu_;
  std::map<std::tuple<std::size_t, std::size_t, std::size_t, int>, fftw_plan> plans_;
};

void check_axis(const GridSpec& g, std::size_t axis) {
  if (axis >= g.dims()) throw Error(ErrorKind::invalid_index, "axis outside grid dimension");
}

void raw_dft(std::span<cplx> data, const GridSpec& g, std::size_t axis, int sign) {
  fftw_plan plan = PlanCache::instance().get(g.points_per_axis(), g.dims(), axis, sign);
  auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(plan, ptr, ptr);
}

// Calls fn(flat, j) for every flat index with its per-axis index j along `axis`.
template <typename Fn>
void for_each_axis_index(const GridSpec& g, std::size_t axis, Fn&& fn) {
  const std::size_t N = g.points_per_axis();
  const std::size_t stride = g.stride(axis);
  const std::size_t total = g.size();
  for (std::size_t i = 0; i < total; ++i) fn(i, (i / stride) % N);
}

void scale_per_axis(std::span<cplx> data, double factor) {
  for (auto& a : data) a *= factor;
}

}  // namespace

void centered_dft_inplace(StateVector& s, std::size_t axis, Direction dir) {
  const auto& g = s.grid();
  check_axis(g, axis);
  raw_dft(s.amplitudes(), g, axis, dir == Direction::forward ? FFTW_BACKWARD : FFTW_FORWARD);
  scale_per_axis(s.amplitudes(), 1.0 / std::sqrt(static_cast<double>(g.points_per_axis())));
}

void sign_inplace(StateVector& s, std::size_t axis) {
  check_axis(s.grid(), axis);
  for_each_axis_index(s.grid(), axis, [&](std::size_t i, std::size_t j) {
    if (j & 1U) s[i] = -s[i];
  });
}

std::vector<double> kinetic_diagonal(const GridSpec& grid) {
  const std::size_t N = grid.points_per_axis();
  std::vector<double> dk(N);
  for (std::size_t j = 0; j < N; ++j) {
    double k = grid.wave_number(j);
    dk[j] = k * k;
  }
  return dk;
}

void kinetic_inplace(StateVector& s) {
  const auto& g = s.grid();
  const auto dk = kinetic_diagonal(g);
  StateVector out(g);
  for (std::size_t a = 0; a < g.dims(); ++a) {
    StateVector w = s;
    sign_inplace(w, a);
    centered_dft_inplace(w, a, Direction::inverse);
    for_each_axis_index(g, a, [&](std::size_t i, std::size_t j) { w[i] *= dk[j]; });
    centered_dft_inplace(w, a, Direction::forward);
    sign_inplace(w, a);
    for (std::size_t i = 0; i < g.size(); ++i) out[i] += 0.5 * w[i];
  }
  s = std::move(out);
}

void exp_kinetic_inplace(StateVector& s, double phi) {
  const auto& g = s.grid();
  const auto dk = kinetic_diagonal(g);
  std::vector<cplx> phase(dk.size());
  for (std::size_t j = 0; j < dk.size(); ++j) phase[j] = std::polar(1.0, 0.5 * phi * dk[j]);
  for (std::size_t a = 0; a < g.dims(); ++a) {
    sign_inplace(s, a);
    centered_dft_inplace(s, a, Direction::inverse);
    for_each_axis_index(g, a, [&](std::size_t i, std::size_t j) { s[i] *= phase[j]; });
    centered_dft_inplace(s, a, Direction::forward);
    sign_inplace(s, a);
  }
}

void exp_diagonal_inplace(StateVector& s, std::span<const double> values, double phi) {
  if (values.size() != s.size()) throw Error(ErrorKind::shape, "diagonal length does not match state");
  for (std::size_t i = 0; i < s.size(); ++i) s[i] *= std::polar(1.0, phi * values[i]);
}

StateVector apply_centered_dft(const StateVector& s, std::size_t axis, Direction dir) {
  StateVector out = s;
  centered_dft_inplace(out, axis, dir);
  return out;
}

StateVector apply_sign(const StateVector& s, std::size_t axis, bool /*adjoint*/) {
  StateVector out = s;
  sign_inplace(out, axis);
  return out;
}

StateVector apply_K(const StateVector& s) {
  StateVector out = s;
  kinetic_inplace(out);
  return out;
}

StateVector apply_diagonal(const StateVector& s, std::span<const double> values) {
  if (values.size() != s.size()) throw Error(ErrorKind::shape, "diagonal length does not match state");
  StateVector out = s;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!std::isfinite(values[i])) throw Error(ErrorKind::evaluation, "non-finite potential value");
    out[i] *= values[i];
  }
  return out;
}

StateVector apply_diag_potential(const StateVector& s, const PotentialModel& model, double t) {
  return apply_diagonal(s, model.sample(t, s.grid()));
}

StateVector apply_H(const StateVector& s, std::span<const double> v) {
  StateVector kd = apply_K(apply_diagonal(s, v));
  StateVector dk = apply_diagonal(apply_K(s), v);
  kd -= dk;
  kd *= cplx(0.0, 1.0);
  return kd;
}

StateVector apply_H(const StateVector& s, const PotentialModel& model, double t) {
  return apply_H(s, model.sample(t, s.grid()));
}

StateVector exp_K(const StateVector& s, double phi) {
  if (!std::isfinite(phi)) throw Error(ErrorKind::parameter, "phase must be finite");
  StateVector out = s;
  exp_kinetic_inplace(out, phi);
  return out;
}

StateVector exp_diag_potential(const StateVector& s, const PotentialModel& model, double t, double phi) {
  if (!std::isfinite(phi)) throw Error(ErrorKind::parameter, "phase must be finite");
  auto v = model.sample(t, s.grid());
  for (double x : v) {
    if (!std::isfinite(x)) throw Error(ErrorKind::evaluation, "non-finite potential value");
  }
  StateVector out = s;
  exp_diagonal_inplace(out, v, phi);
  return out;
}

Eigen::MatrixXcd dense(const LinearMap& op, const GridSpec& grid, std::size_t cap) {
  const std::size_t n = grid.size();
  if (n > cap) throw Error(ErrorKind::size, "operator dimension " + std::to_string(n) + " exceeds dense cap");
  Eigen::MatrixXcd m(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    StateVector col = op(StateVector::basis(grid, c));
    for (std::size_t r = 0; r < n; ++r) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = col[r];
  }
  return m;
}

Eigen::MatrixXcd dense_K(const GridSpec& grid, std::size_t cap) {
  return dense([](const StateVector& s) { return apply_K(s); }, grid, cap);
}

Eigen::MatrixXcd dense_H(const GridSpec& grid, std::span<const double> v, std::size_t cap) {
  if (v.size() != grid.size()) throw Error(ErrorKind::shape, "potential length does not match grid");
  Eigen::MatrixXcd K = dense_K(grid, cap);
  const auto n = K.rows();
  Eigen::MatrixXcd H(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index r = 0; r < n; ++r) H(r, c) = cplx(0.0, 1.0) * K(r, c) * (v[c] - v[r]);
  }
  return H;
}

std::vector<cplx> fourier_coefficients(std::span<const cplx> samples, const GridSpec& grid) {
  StateVector s(grid, std::vector<cplx>(samples.begin(), samples.end()));
  for (std::size_t a = 0; a < grid.dims(); ++a) {
    sign_inplace(s, a);
    raw_dft(s.amplitudes(), grid, a, FFTW_FORWARD);
  }
  scale_per_axis(s.amplitudes(), 1.0 / static_cast<double>(grid.size()));
  return {s.amplitudes().begin(), s.amplitudes().end()};
}

std::vector<cplx> synthesize(std::span<const cplx> coefficients, const GridSpec& grid) {
  StateVector s(grid, std::vector<cplx>(coefficients.begin(), coefficients.end()));
  for (std::size_t a = 0; a < grid.dims(); ++a) {
    raw_dft(s.amplitudes(), grid, a, FFTW_BACKWARD);
    sign_inplace(s, a);
  }
  return {s.amplitudes().begin(), s.amplitudes().end()};
}

std::vector<double> spectral_derivative(std::span<const double> samples, const GridSpec& grid, std::size_t axis) {
  check_axis(grid, axis);
  std::vector<cplx> c(samples.begin(), samples.end());
  auto coef = fourier_coefficients(c, grid);
  for_each_axis_index(grid, axis, [&](std::size_t i, std::size_t j) {
    coef[i] *= (j == 0) ? cplx(0.0) : cplx(0.0, grid.wave_number(j));
  });
  auto back = synthesize(coef, grid);
  std::vector<double> out(back.size());
  for (std::size_t i = 0; i < back.size(); ++i) out[i] = back[i].real();
  return out;
}

double laplacian_power_norm(const std::function<double(std::span<const double>)>& g, const GridSpec& fine, int power) {
  if (power < 0) throw Error(ErrorKind::parameter, "laplacian power must be nonnegative");
  std::vector<cplx> samples(fine.size());
  Point x(fine.dims());
  for (std::size_t i = 0; i < fine.size(); ++i) {
    auto idx = fine.unflatten(i);
    for (std::size_t a = 0; a < fine.dims(); ++a) x[a] = fine.coordinate(static_cast<std::size_t>(idx[a]));
    samples[i] = g(x);
  }
  auto coef = fourier_coefficients(samples, fine);
  double acc = 0.0;
  for (std::size_t i = 0; i < fine.size(); ++i) {
    auto idx = fine.unflatten(i);
    double k2 = 0.0;
    for (std::size_t a = 0; a < fine.dims(); ++a) {
      double k = fine.wave_number(static_cast<std::size_t>(idx[a]));
      k2 += k * k;
    }
    acc += std::pow(k2, 2 * power) * std::norm(coef[i]);
  }
  return std::sqrt(std::pow(fine.length(), static_cast<double>(fine.dims())) * acc);
}

double smoothness_oracle(const std::function<double(std::span<const double>)>& g, const GridSpec& fine, int s) {
  return 1.1 * laplacian_power_norm(g, fine, s + 1);
}

}  // namespace wflow
