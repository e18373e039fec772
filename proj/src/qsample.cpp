// SPDX-License-Identifier: Apache-2.0
#include "wflow/qsample.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "wflow/error.hpp"

namespace wflow {

namespace {

// SplitMix64 output function.
std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

DiscretizedDistribution make_distribution(GridSpec grid, std::vector<double> weights) {
  if (weights.size() != grid.size()) throw Error(ErrorKind::shape, "weights do not match the grid");
  double sum = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw Error(ErrorKind::domain, "weights must be finite and nonnegative");
    sum += w;
  }
  if (!(sum > 0.0)) throw Error(ErrorKind::degenerate_distribution, "density vanishes on every grid point");
  for (double& w : weights) w /= sum;
  return {std::move(grid), std::move(weights), sum};
}

DiscretizedDistribution discretize_density(const ProbabilityPath& path, double t, const GridSpec& grid) {
  return make_distribution(grid, path.sample(t, grid));
}

StateVector qsample_vector(const DiscretizedDistribution& dist) {
  std::vector<cplx> amps(dist.masses.size());
  for (std::size_t i = 0; i < amps.size(); ++i) amps[i] = std::sqrt(dist.masses[i]);
  StateVector s(dist.grid, std::move(amps));
  return s.normalize();
}

IdealState ideal_state(const ProbabilityPath& path, double t, const GridSpec& grid) {
  auto p = path.sample(t, grid);
  std::vector<cplx> amps(p.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(p[i]) || p[i] < 0.0) throw Error(ErrorKind::domain, "density must be finite and nonnegative");
    amps[i] = std::sqrt(p[i]);
    sq += p[i];
  }
  if (!(sq > 0.0)) throw Error(ErrorKind::degenerate_distribution, "density vanishes on every grid point");
  const double cell = std::pow(grid.spacing(), static_cast<double>(grid.dims()));
  IdealState out{StateVector(grid, std::move(amps)), 1.0 / std::sqrt(cell * sq)};
  out.state.normalize();
  return out;
}

std::vector<double> born_distribution(const StateVector& state) {
  std::vector<double> p(state.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::norm(state[i]);
  return p;
}

double counter_uniform(std::uint64_t seed, std::uint64_t counter) {
  std::uint64_t z = mix64(seed + 0x9e3779b97f4a7c15ULL) ^ (counter * 0x9e3779b97f4a7c15ULL);
  return static_cast<double>(mix64(z) >> 11) * 0x1.0p-53;
}

std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index) {
  return mix64(mix64(seed) + 0xd1b54a32d192ed03ULL * (index + 1));
}

std::vector<std::size_t> born_sample_flat(const StateVector& state, std::size_t count, std::uint64_t seed) {
  auto p = born_distribution(state);
  std::vector<double> cdf(p.size());
  std::partial_sum(p.begin(), p.end(), cdf.begin());
  const double total = cdf.empty() ? 0.0 : cdf.back();
  if (std::abs(std::sqrt(total) - 1.0) > 1e-9) throw Error(ErrorKind::normalization, "state is not unit norm");
  std::vector<std::size_t> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double u = counter_uniform(seed, i) * total;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    // Never land on a zero-probability slot at the top end.
    std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
    while (p[k] == 0.0 && k > 0) --k;
    out[i] = k;
  }
  return out;
}

std::vector<MultiIndex> born_sample(const StateVector& state, std::size_t count, std::uint64_t seed) {
  auto flat = born_sample_flat(state, count, seed);
  std::vector<MultiIndex> out;
  out.reserve(flat.size());
  for (auto f : flat) out.push_back(state.grid().unflatten(f));
  return out;
}

double tv_distance(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw Error(ErrorKind::shape, "distributions differ in size");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
  return 0.5 * acc;
}

double tv_distance(const DiscretizedDistribution& p, const DiscretizedDistribution& q) {
  if (!(p.grid == q.grid)) throw Error(ErrorKind::shape, "distributions live on different grids");
  return tv_distance(p.masses, q.masses);
}

double l2_distance(const StateVector& a, const StateVector& b) {
  if (!(a.grid() == b.grid())) throw Error(ErrorKind::shape, "states live on different grids");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::norm(a[i] - b[i]);
  return std::sqrt(acc);
}

void write_samples_csv(std::ostream& os, const GridSpec& grid, const std::vector<std::size_t>& flat) {
  const auto d = grid.dims();
  os << "flat";
  for (std::size_t a = 0; a < d; ++a) os << ",j" << a;
  for (std::size_t a = 0; a < d; ++a) os << ",x" << a;
  os << '\n';
  for (auto f : flat) {
    auto idx = grid.unflatten(f);
    os << f;
    for (std::size_t a = 0; a < d; ++a) os << ',' << idx[a];
    for (std::size_t a = 0; a < d; ++a) os << ',' << grid.coordinate(static_cast<std::size_t>(idx[a]));
    os << '\n';
  }
}

}  // namespace wflow
