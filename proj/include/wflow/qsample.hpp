// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "wflow/grid.hpp"
#include "wflow/models.hpp"
#include "wflow/state.hpp"

namespace wflow {

/// Probability mass function on a grid.
struct DiscretizedDistribution {
  GridSpec grid;
  std::vector<double> masses;
  /// Sum of the weights before normalization.
  double normalizer = 1.0;
};

/// Normalizes nonnegative weights. Throws a degenerate-distribution error if
/// they sum to zero and a domain error on negative or non-finite entries.
DiscretizedDistribution make_distribution(GridSpec grid, std::vector<double> weights);

/// masses(x) = p_t(x) / sum over the grid of p_t.
DiscretizedDistribution discretize_density(const ProbabilityPath& path, double t, const GridSpec& grid);

/// Amplitudes sqrt(masses).
StateVector qsample_vector(const DiscretizedDistribution& dist);

struct IdealState {
  StateVector state;
  /// [(L/N)^{d/2} ||sqrt(p_t) samples||]^{-1}; tends to 1 as N grows.
  double a_t = 1.0;
};

/// Normalized sqrt(p_t) samples on the grid.
IdealState ideal_state(const ProbabilityPath& path, double t, const GridSpec& grid);

/// |amplitude|^2 per flat index.
std::vector<double> born_distribution(const StateVector& state);

/// Uniform double in [0, 1) from (seed, counter) alone. Any sub-range of
/// counters can be drawn independently, so chunked runs match serial ones.
double counter_uniform(std::uint64_t seed, std::uint64_t counter);
/// Seed of an independent substream, e.g. one per trial or chunk.
std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index);

/// `count` i.i.d. flat indices drawn with probability |amplitude|^2 by
/// inverse CDF. Draw i uses counter i. Throws a normalization error if the
/// state's norm is off by more than 1e-9.
std::vector<std::size_t> born_sample_flat(const StateVector& state, std::size_t count, std::uint64_t seed);
std::vector<MultiIndex> born_sample(const StateVector& state, std::size_t count, std::uint64_t seed);

/// Half the l1 distance. Shape error on grid mismatch.
double tv_distance(const DiscretizedDistribution& p, const DiscretizedDistribution& q);
double tv_distance(const std::vector<double>& p, const std::vector<double>& q);
double l2_distance(const StateVector& a, const StateVector& b);

/// CSV with a header row: flat index, per-axis indices, then grid coordinates.
void write_samples_csv(std::ostream& os, const GridSpec& grid, const std::vector<std::size_t>& flat);

}  // namespace wflow
