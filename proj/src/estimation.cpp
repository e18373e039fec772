// SPDX-License-Identifier: Apache-2.0
#include "wflow/estimation.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <numbers>

#include "wflow/error.hpp"

namespace wflow {

using std::numbers::pi;

ObservableSpec observable_coordinate(double L) {
  return {"coordinate", [](std::span<const double> x) { return x[0]; }, L, 1.0};
}

ObservableSpec observable_cosine(double L) {
  return {"cosine", [L](std::span<const double> x) { return std::cos(2.0 * pi * x[0] / L); }, 1.0, 2.0 * pi / L};
}

ObservableSpec observable_centered_square(double L) {
  return {"centered_square",
          [L](std::span<const double> x) {
            const double y = x[0] - 0.5 * L;
            return y * y;
          },
          0.25 * L * L, L};
}

ObservableSpec observable_constant(double c) {
  return {"constant", [c](std::span<const double>) { return c; }, std::abs(c), 0.0};
}

void validate_observable(const ObservableSpec& f, const GridSpec& probe) {
  std::vector<double> vals(probe.size());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    auto x = probe.point(i);
    vals[i] = f.eval(x);
    if (!(std::abs(vals[i]) <= f.sup_norm * (1.0 + 1e-12))) {
      throw Error(ErrorKind::domain, "observable " + f.name + " exceeds its sup norm");
    }
  }
  // Neighbours along each axis, without wrapping: the observable lives on the box.
  for (std::size_t i = 0; i < probe.size(); ++i) {
    auto idx = probe.unflatten(i);
    for (std::size_t a = 0; a < probe.dims(); ++a) {
      if (static_cast<std::size_t>(idx[a]) + 1 >= probe.points_per_axis()) continue;
      const double q = std::abs(vals[i + probe.stride(a)] - vals[i]) / probe.spacing();
      if (q > f.lipschitz * (1.0 + 1e-6) + 1e-12) {
        throw Error(ErrorKind::domain, "observable " + f.name + " exceeds its Lipschitz constant");
      }
    }
  }
}

MeanVar grid_mean_var(const DiscretizedDistribution& dist, const ObservableSpec& f) {
  double m1 = 0.0;
  double m2 = 0.0;
  for (std::size_t i = 0; i < dist.masses.size(); ++i) {
    if (dist.masses[i] == 0.0) continue;
    auto x = dist.grid.point(i);
    const double v = f.eval(x);
    m1 += dist.masses[i] * v;
    m2 += dist.masses[i] * v * v;
  }
  return {m1, std::max(0.0, m2 - m1 * m1)};
}

std::size_t mom_groups(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorKind::parameter, "failure probability must lie in (0, 1)");
  return static_cast<std::size_t>(std::ceil(8.0 * std::log(1.0 / delta)));
}

double median_of_means(std::span<const double> samples, double delta, std::uint64_t partition_seed) {
  const std::size_t k = mom_groups(delta);
  const std::size_t m = samples.size();
  if (m < k) throw Error(ErrorKind::insufficient_samples, "need at least ceil(8 ln(1/delta)) samples");
  std::vector<double> v(samples.begin(), samples.end());
  std::sort(v.begin(), v.end());
  for (std::size_t i = m - 1; i > 0; --i) {
    auto j = static_cast<std::size_t>(counter_uniform(partition_seed, i) * static_cast<double>(i + 1));
    std::swap(v[i], v[std::min(j, i)]);
  }
  std::vector<double> means(k);
  const std::size_t base = m / k;
  const std::size_t extra = m % k;
  std::size_t pos = 0;
  for (std::size_t g = 0; g < k; ++g) {
    const std::size_t len = base + (g < extra ? 1 : 0);
    double acc = 0.0;
    for (std::size_t i = 0; i < len; ++i) acc += v[pos + i];
    means[g] = acc / static_cast<double>(len);
    pos += len;
  }
  std::sort(means.begin(), means.end());
  return k % 2 == 1 ? means[k / 2] : 0.5 * (means[k / 2 - 1] + means[k / 2]);
}

ErrorBudget error_budget(double M, double lp, double lf, std::size_t d, double L, std::size_t N, double eps) {
  if (M < 0.0 || lp < 0.0 || lf < 0.0 || L < 0.0 || eps < 0.0) {
    throw Error(ErrorKind::parameter, "budget inputs must be nonnegative");
  }
  if (N == 0 || d == 0) throw Error(ErrorKind::parameter, "N and d must be positive");
  ErrorBudget b{0.0, 0.0, M, lp, lf, d, L, N, eps};
  const double rd = std::sqrt(static_cast<double>(d));
  const double NN = static_cast<double>(N);
  const double density_term = lp * rd * std::pow(L, static_cast<double>(d) + 1.0) / NN;
  const double observable_term = lf * rd * L / NN;
  b.eps_mean = 2.0 * M * density_term + observable_term + 2.0 * eps * M;
  b.eps_var = 6.0 * M * M * density_term + 4.0 * M * observable_term + 6.0 * eps * M * M;
  return b;
}

ContinuousMoments continuous_mean_var(const ProbabilityPath& path, double t, const ObservableSpec& f, double tol) {
  if (path.dims() != 1) throw Error(ErrorKind::parameter, "continuous moments are one-dimensional only");
  using boost::math::quadrature::gauss_kronrod;
  const double L = path.length();
  auto integrate = [&](auto&& g) {
    double err = 0.0;
    double l1 = 0.0;
    const double v = gauss_kronrod<double, 31>::integrate(g, 0.0, L, 20, tol, &err, &l1);
    if (!std::isfinite(v) || err > 10.0 * tol * std::max(l1, 1e-300)) {
      throw Error(ErrorKind::oracle, "quadrature did not converge");
    }
    return v;
  };
  auto p = [&](double x) { return path.density(t, std::span<const double>(&x, 1)); };
  auto fx = [&](double x) { return f.eval(std::span<const double>(&x, 1)); };
  ContinuousMoments out;
  out.mass = integrate(p);
  out.mean = integrate([&](double x) { return fx(x) * p(x); });
  const double m2 = integrate([&](double x) {
    const double v = fx(x);
    return v * v * p(x);
  });
  out.variance = m2 - out.mean * out.mean;
  return out;
}

double estimate_density_lipschitz(const ProbabilityPath& path, double t, const GridSpec& fine) {
  auto p = path.sample(t, fine);
  double q = 0.0;
  for (std::size_t i = 0; i < fine.size(); ++i) {
    auto idx = fine.unflatten(i);
    for (std::size_t a = 0; a < fine.dims(); ++a) {
      auto nb = idx;
      nb[a] = (idx[a] + 1) % static_cast<std::int64_t>(fine.points_per_axis());
      q = std::max(q, std::abs(p[fine.flatten(nb)] - p[i]) / fine.spacing());
    }
  }
  return 1.05 * q;
}

bool LemmaDReport::holds() const {
  bool ok = mean_gap <= mean_bound && var_gap <= var_bound;
  for (const auto& row : tv) ok = ok && row.holds();
  return ok;
}

LemmaDReport lemma_d_checks(const ProbabilityPath& path, double t, const ObservableSpec& f, const GridSpec& grid,
                            const GridSpec& fine, std::optional<double> lp, std::span<const double> tv_eps) {
  if (grid.dims() != path.dims() || fine.dims() != path.dims()) throw Error(ErrorKind::shape, "dimension mismatch");
  LemmaDReport rep;
  rep.observable = f.name;
  rep.N = grid.points_per_axis();
  rep.t = t;
  rep.lp = lp ? *lp : estimate_density_lipschitz(path, t, fine);
  rep.continuous = continuous_mean_var(path, t, f);
  auto dist = discretize_density(path, t, grid);
  rep.discrete = grid_mean_var(dist, f);
  rep.mean_gap = std::abs(rep.continuous.mean - rep.discrete.mean);
  rep.var_gap = std::abs(rep.continuous.variance - rep.discrete.variance);
  // The two lemma bounds are the eps = 0 budget.
  auto b = error_budget(f.sup_norm, rep.lp, f.lipschitz, grid.dims(), grid.length(), grid.points_per_axis(), 0.0);
  rep.mean_bound = b.eps_mean;
  rep.var_bound = b.eps_var;

  static constexpr double kDefaultEps[] = {0.0, 1e-3, 1e-2, 1e-1};
  if (tv_eps.empty()) tv_eps = kDefaultEps;
  std::vector<double> fv(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) fv[i] = f.eval(grid.point(i));
  std::size_t far = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (std::abs(fv[i] - rep.discrete.mean) > std::abs(fv[far] - rep.discrete.mean)) far = i;
  }
  const double M = f.sup_norm;
  for (double eps : tv_eps) {
    DiscretizedDistribution q = dist;
    for (double& w : q.masses) w *= 1.0 - eps;
    q.masses[far] += eps;
    auto mq = grid_mean_var(q, f);
    TvPerturbation row;
    row.eps = eps;
    row.tv = tv_distance(dist, q);
    row.mean_gap = std::abs(mq.mean - rep.discrete.mean);
    row.var_gap = std::abs(mq.variance - rep.discrete.variance);
    row.mean_bound = 2.0 * M * eps;
    row.var_bound = 6.0 * M * M * eps;
    rep.tv.push_back(row);
  }
  return rep;
}

std::size_t MeanExperimentReport::passes() const {
  return static_cast<std::size_t>(std::count_if(trials.begin(), trials.end(), [](const MeanTrial& t) { return t.holds(); }));
}

MeanExperimentReport end_to_end_mean_experiment(const Family& family, const SimulationPlan& plan,
                                                const ObservableSpec& f, std::uint64_t seed,
                                                const MeanExperimentOptions& opts) {
  const auto& path = *family.path;
  const auto& model = *family.potential;
  if (path.length() != plan.in.L || path.dims() != plan.in.d) {
    throw Error(ErrorKind::parameter, "plan does not match the family's torus");
  }
  GridSpec grid(plan.in.L, plan.N, plan.in.d);
  const double T = plan.in.T;
  MeanExperimentReport rep;
  rep.family = family.name;
  rep.observable = f.name;
  rep.N = plan.N;
  rep.r = opts.r_override ? *opts.r_override : plan.r;
  rep.m = opts.m;
  rep.delta = opts.delta;
  rep.C = opts.C;

  auto psi0 = ideal_state(path, 0.0, grid).state;
  auto evo = evolve_steps(model, psi0, 0.0, T, rep.r);
  StateVector psiT = std::move(evo.final_state);
  auto phiT = ideal_state(path, T, grid).state;
  rep.prep_error = l2_distance(psiT, phiT);

  rep.target = continuous_mean_var(path, T, f);
  rep.lp = estimate_density_lipschitz(path, T, GridSpec(plan.in.L, opts.fine_N, plan.in.d));
  rep.budget = error_budget(f.sup_norm, rep.lp, f.lipschitz, plan.in.d, plan.in.L, plan.N, rep.prep_error);

  std::vector<double> fv(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) fv[i] = f.eval(grid.point(i));
  const double spread = std::sqrt(std::max(0.0, rep.target.variance) + rep.budget.eps_var);
  const double allowed =
      spread * opts.C * std::sqrt(std::log(1.0 / opts.delta) / static_cast<double>(opts.m)) + rep.budget.eps_mean;
  std::vector<double> draws(opts.m);
  for (std::size_t k = 0; k < opts.trials; ++k) {
    MeanTrial tr;
    tr.seed = substream_seed(seed, k);
    auto idx = born_sample_flat(psiT, opts.m, tr.seed);
    for (std::size_t i = 0; i < opts.m; ++i) draws[i] = fv[idx[i]];
    tr.estimate = median_of_means(draws, opts.delta);
    tr.deviation = std::abs(tr.estimate - rep.target.mean);
    tr.allowed = allowed;
    rep.trials.push_back(tr);
  }
  return rep;
}

}  // namespace wflow
