// SPDX-License-Identifier: Apache-2.0
// wflow: batch driver for planning, simulation, estimation, sweeps and the
// verification suites.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include "config.hpp"
#include "wflow/bounds.hpp"
#include "wflow/error.hpp"
#include "wflow/estimation.hpp"
#include "wflow/evolution.hpp"
#include "wflow/qsample.hpp"
#include "wflow/suites.hpp"

namespace fs = std::filesystem;
using namespace wflow;
using wflow::cli::Section;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  std::optional<std::size_t> dense_cap;
  std::string out = "out";
  std::string suite;
};

struct Outcome {
  Json result = Json::object();
  std::vector<Check> checks;
  std::vector<Table> tables;
  std::vector<std::pair<std::string, StateVector>> states;
  std::map<std::string, double> timing;
  std::string manifest;
};

// Resolved settings shared by every command.
struct Common {
  std::uint64_t seed = 1;
  unsigned jobs = 1;
  std::size_t dense_cap = kDefaultDenseCap;
};

using Job = std::function<Outcome()>;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ObservableSpec make_observable(const std::string& name, double L) {
  if (name == "coordinate") return observable_coordinate(L);
  if (name == "cosine") return observable_cosine(L);
  if (name == "centered_square") return observable_centered_square(L);
  throw Error(ErrorKind::usage, "unknown observable '" + name + "'");
}

Family family_of(Section& root) {
  if (!root.has("family")) throw Error(ErrorKind::usage, "config: a family section is required");
  auto s = root.child("family");
  auto f = cli::read_family(s);
  root.put("family", s.resolved());
  return f;
}

Job resolve_plan(Section& root) {
  auto s = root.child("plan");
  PlanInputs in;
  std::optional<Family> fam;
  if (root.has("family")) fam = family_of(root);
  in.epsilon = s.number("epsilon", 0.1);
  in.s = static_cast<int>(s.integer("s_order", 2));
  in.prep_error = s.number("prep_error", 0.0);
  if (fam) {
    const auto& V = *fam->potential;
    in.L = s.number("L_length", V.length());
    in.d = s.count("d_dims", V.dims());
    in.T = s.number("T_time", V.horizon());
    in.v_max = s.number("v_max", V.v_max());
    in.vdot_max = s.number("vdot_max", V.vdot_max());
  } else {
    in.L = s.number("L_length", 1.0);
    in.d = s.count("d_dims", 1);
    in.T = s.number("T_time", 1.0);
    in.v_max = s.number("v_max", 0.0);
    in.vdot_max = s.number("vdot_max", 0.0);
  }
  std::optional<double> cs;
  std::size_t fine_N = 0;
  if (s.has("c_s") || !fam) {
    cs = s.number("c_s");
  } else {
    fine_N = s.count("fine_N_points", 256);
  }
  s.finish();
  root.put("plan", s.resolved());
  return [in, cs, fam, fine_N]() mutable {
    Outcome o;
    auto t0 = std::chrono::steady_clock::now();
    in.c_s = cs ? *cs : theorem1_constant(*fam, in.s, GridSpec(in.L, fine_N, in.d), 17);
    auto p = plan(in);
    o.result = {{"op", "evolution.plan"},
                {"c_s_source", cs ? "config" : "bounds_lemmas.theorem1_constant"},
                {"plan",
                 {{"N", p.N},
                  {"n", p.n},
                  {"r", p.r},
                  {"delta", p.delta},
                  {"cs", in.c_s},
                  {"feasible", p.feasible},
                  {"n_bound", p.n_bound},
                  {"r_bound", p.r_bound},
                  {"dt_time", p.dt},
                  {"alpha", p.alpha},
                  {"beta", p.beta}}}};
    o.timing["plan"] = seconds_since(t0);
    return o;
  };
}

Job resolve_simulate(Section& root, const Common&) {
  auto fam = family_of(root);
  auto s = root.child("simulate");
  const auto N = s.count("N_points");
  const auto r = s.count("r_steps", 256);
  const bool reference = s.flag("reference", true);
  const double ref_tol = s.number("reference_tol", 1e-9);
  s.finish();
  root.put("simulate", s.resolved());
  GridSpec grid(fam.potential->length(), N, fam.potential->dims());
  if (r == 0) throw Error(ErrorKind::usage, "simulate.r_steps must be positive");

  return [fam, grid, r, reference, ref_tol]() {
    Outcome o;
    const double T = fam.potential->horizon();
    auto t0 = std::chrono::steady_clock::now();
    auto psi0 = ideal_state(*fam.path, 0.0, grid).state;
    auto phiT = ideal_state(*fam.path, T, grid).state;
    auto ev = evolve_steps(*fam.potential, psi0, 0.0, T, r);
    o.timing["evolve"] = seconds_since(t0);

    const double drift_bound = 8.0 * 1e-12 * static_cast<double>(r);
    o.checks.push_back({"simulate/norm_drift", "evolution.evolve_steps", ev.max_norm_drift, drift_bound,
                        ev.max_norm_drift <= drift_bound, 0, {{"steps", r}}});
    Json result = {{"family", fam.name},
                   {"N", grid.points_per_axis()},
                   {"d", grid.dims()},
                   {"steps", ev.steps},
                   {"dt_time", ev.dt},
                   {"max_norm_drift", ev.max_norm_drift},
                   {"error_vs_ideal_final", l2_distance(ev.final_state, phiT)}};

    o.states.emplace_back("initial", psi0);
    o.states.emplace_back("final", ev.final_state);
    o.states.emplace_back("ideal_final", phiT);

    if (reference) {
      auto t1 = std::chrono::steady_clock::now();
      auto ref = reference_evolve(*fam.potential, grid, psi0, 0.0, T, ref_tol);
      double bound = ref_tol;
      for (std::uint64_t j = 0; j < r; ++j) {
        bound += local_error_bound(*fam.potential, grid, static_cast<double>(j) * ev.dt, ev.dt);
      }
      const double time_err = l2_distance(ev.final_state, ref.state);
      o.checks.push_back({"simulate/time_discretization", "evolution.local_error_bound", time_err, bound,
                          time_err <= bound, 0, {{"reference_tol", ref_tol}}});
      result["time_discretization_error"] = time_err;
      result["time_discretization_bound"] = bound;
      result["spatial_error"] = l2_distance(ref.state, phiT);
      result["reference_imag_max"] = ref.state.max_abs_imag();
      o.states.emplace_back("reference_final", ref.state);
      o.timing["reference"] = seconds_since(t1);
    }

    Table norms{"step_norms", {"step", "norm"}, {}};
    for (std::size_t j = 0; j < ev.step_norms.size(); ++j) norms.rows.push_back({j + 1, ev.step_norms[j]});
    o.tables.push_back(std::move(norms));
    o.result = std::move(result);
    return o;
  };
}

Job resolve_estimate(Section& root, const Common& c) {
  auto fam = family_of(root);
  auto s = root.child("estimate");
  if (fam.path->dims() != 1) throw Error(ErrorKind::usage, "estimate supports one-dimensional families");
  const auto obs_name = s.text("observable", "coordinate");
  auto f = make_observable(obs_name, fam.path->length());
  SimulationPlan p;
  p.in.L = fam.path->length();
  p.in.d = 1;
  p.in.T = fam.path->horizon();
  p.N = s.count("N_points", 64);
  p.r = s.count("r_steps", 256);
  MeanExperimentOptions opts;
  opts.m = s.count("m_samples", 10000);
  opts.delta = s.number("delta_confidence", 0.01);
  opts.trials = s.count("trials", 1);
  opts.C = s.number("C_const", 4.0);
  opts.fine_N = s.count("fine_N_points", 4096);
  const double min_fraction = s.number("min_pass_fraction", 0.98);
  s.finish();
  root.put("estimate", s.resolved());
  GridSpec(p.in.L, p.N, 1);  // rejects a bad N before any work
  if (opts.trials == 0) throw Error(ErrorKind::usage, "estimate.trials must be positive");

  return [fam, f, p, opts, min_fraction, seed = c.seed]() {
    Outcome o;
    auto t0 = std::chrono::steady_clock::now();
    auto rep = end_to_end_mean_experiment(fam, p, f, seed, opts);
    o.timing["experiment"] = seconds_since(t0);
    const double frac = static_cast<double>(rep.passes()) / static_cast<double>(rep.trials.size());
    o.checks.push_back({"estimate/coverage", "estimation.end_to_end_mean_experiment", frac, min_fraction,
                        frac >= min_fraction, seed,
                        {{"passes", rep.passes()}, {"trials", rep.trials.size()}}});
    Table trials{"trials", {"trial", "seed", "estimate", "deviation", "allowed", "holds"}, {}};
    for (std::size_t k = 0; k < rep.trials.size(); ++k) {
      const auto& t = rep.trials[k];
      trials.rows.push_back({k, std::to_string(t.seed), t.estimate, t.deviation, t.allowed, t.holds()});
    }
    o.tables.push_back(std::move(trials));
    o.result = {{"family", rep.family},
                {"observable", rep.observable},
                {"N", rep.N},
                {"r", rep.r},
                {"m", rep.m},
                {"delta", rep.delta},
                {"C", rep.C},
                {"prep_error", rep.prep_error},
                {"density_lipschitz", rep.lp},
                {"target_mean", rep.target.mean},
                {"target_variance", rep.target.variance},
                {"eps_mean", rep.budget.eps_mean},
                {"eps_var", rep.budget.eps_var},
                {"passes", rep.passes()},
                {"trials", rep.trials.size()}};
    return o;
  };
}

Job resolve_sweep(Section& root, const Common& c) {
  auto s = root.child("sweep");
  std::vector<Family> fams;
  Json fam_json = Json::array();
  for (auto& fs : s.children("families")) {
    fams.push_back(cli::read_family(fs));
    fam_json.push_back(fs.resolved());
  }
  s.put("families", fam_json);
  if (fams.empty()) throw Error(ErrorKind::usage, "sweep.families must list at least one family");
  auto Ns = s.integers("N_points", {{16}});
  auto exps = s.integers("dt_exponents", {{6, 7, 8, 9, 10, 11, 12, 13}});
  const double t0_frac = s.number("t0_fraction", 0.3);
  const double ref_tol = s.number("reference_tol", 1e-12);
  const bool assert_slope = s.flag("assert_slope", true);
  const auto window = s.numbers("slope_window", {{1.9, 2.2}});
  s.finish();
  root.put("sweep", s.resolved());
  if (window.size() != 2) throw Error(ErrorKind::usage, "sweep.slope_window needs two numbers");
  if (exps.size() < 2) throw Error(ErrorKind::usage, "sweep.dt_exponents needs at least two entries");
  for (auto N : Ns) {
    if (N < 2 || !is_power_of_two(static_cast<std::size_t>(N))) {
      throw Error(ErrorKind::usage, "sweep.N_points entries must be powers of two");
    }
  }

  return [fams, Ns, exps, t0_frac, ref_tol, assert_slope, window, c]() {
    Outcome o;
    auto t0 = std::chrono::steady_clock::now();
    const std::size_t cells = fams.size() * Ns.size();
    std::vector<OrderFit> fits(cells);
    parallel_for(cells, c.jobs, [&](std::size_t k) {
      const auto& fam = fams[k / Ns.size()];
      const auto N = static_cast<std::size_t>(Ns[k % Ns.size()]);
      const double T = fam.potential->horizon();
      std::vector<double> dts;
      for (auto e : exps) dts.push_back(std::ldexp(T, -static_cast<int>(e)));
      GridSpec g(fam.potential->length(), N, fam.potential->dims());
      fits[k] = trotter_order_fit(*fam.potential, g, t0_frac * T, dts, ref_tol, c.dense_cap);
    });
    Table table{"sweep", {"family", "N", "d", "dt", "measured_error", "theorem2_bound", "slope_window"}, {}};
    Json slopes = Json::array();
    for (std::size_t k = 0; k < cells; ++k) {
      const auto& fam = fams[k / Ns.size()];
      const auto N = Ns[k % Ns.size()];
      const auto& f = fits[k];
      const std::string tag = fam.name + "/N" + std::to_string(N);
      for (std::size_t j = 0; j < f.dt.size(); ++j) {
        Json local = j == 0 ? Json() : Json(std::log(f.error[j] / f.error[j - 1]) / std::log(f.dt[j] / f.dt[j - 1]));
        table.rows.push_back({fam.name, N, fam.potential->dims(), f.dt[j], f.error[j], f.bound[j], local});
        o.checks.push_back({"sweep/" + tag + "/dt2^-" + std::to_string(exps[j]), "evolution.local_error_bound",
                            f.error[j], f.bound[j], f.error[j] + ref_tol <= f.bound[j], 0, {{"dt_time", f.dt[j]}}});
      }
      if (assert_slope) {
        o.checks.push_back({"sweep/" + tag + "/slope", "evolution.pf_step", f.slope, window[1],
                            f.slope >= window[0] && f.slope <= window[1], 0,
                            {{"lower", window[0]}, {"upper", window[1]}}});
      }
      slopes.push_back({{"family", fam.name}, {"N", N}, {"slope", f.slope}});
    }
    o.tables.push_back(std::move(table));
    o.result = {{"slopes", slopes}};
    o.timing["sweep"] = seconds_since(t0);
    return o;
  };
}

Job resolve_verify(Section& root, const Common& c, const std::string& suite_flag) {
  auto s = root.child("verify");
  std::string suite = suite_flag.empty() ? s.text("suite", "") : suite_flag;
  if (!suite_flag.empty() && s.has("suite")) s.text("suite");
  s.put("suite", suite);
  s.finish();
  root.put("verify", s.resolved());
  if (suite.empty()) throw Error(ErrorKind::usage, "verify needs --suite or verify.suite");
  const auto names = suite_names();
  if (std::find(names.begin(), names.end(), suite) == names.end()) {
    throw Error(ErrorKind::usage, "unknown suite '" + suite + "'");
  }
  return [suite, c]() {
    SuiteOptions so{c.seed, c.jobs, c.dense_cap};
    auto res = run_suite(suite, so);
    Outcome o;
    o.checks = res.checks;
    o.tables = res.tables;
    o.timing = res.timing;
    o.result = {{"suite", res.suite}, {"summary", res.summary}};
    std::ostringstream m;
    res.write_manifest(m);
    o.manifest = m.str();
    return o;
  };
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error(ErrorKind::io, "cannot write " + p.string());
  os << text;
}

int run(const std::string& command, const Flags& flags) {
  // Resolve everything before touching the output directory.
  Common common;
  Job job;
  Json resolved;
  try {
    Json cfg = flags.config.empty() ? Json::object() : cli::load_yaml(flags.config);
    Section root(cfg, "config");
    // Flags win over the file; the file's keys are still read so they count as known.
    common.seed = root.count("seed", 1);
    common.jobs = static_cast<unsigned>(root.count("jobs", 1));
    common.dense_cap = root.count("dense_cap", kDefaultDenseCap);
    if (flags.seed) root.put("seed", common.seed = *flags.seed);
    if (flags.jobs) root.put("jobs", common.jobs = *flags.jobs);
    if (flags.dense_cap) root.put("dense_cap", common.dense_cap = *flags.dense_cap);
    if (common.jobs == 0) throw Error(ErrorKind::usage, "jobs must be positive");

    if (command == "plan") job = resolve_plan(root);
    else if (command == "simulate") job = resolve_simulate(root, common);
    else if (command == "estimate") job = resolve_estimate(root, common);
    else if (command == "sweep") job = resolve_sweep(root, common);
    else job = resolve_verify(root, common, flags.suite);

    // Sections for other commands may share the file; they are not validated here.
    for (const char* k : {"family", "plan", "simulate", "estimate", "sweep", "verify"}) {
      if (root.has(k)) root.child(k);
    }
    root.finish();
    resolved = root.resolved();
  } catch (const Error& e) {
    std::cerr << "wflow: " << e.what() << '\n';
    return 2;
  }

  Outcome o;
  auto t0 = std::chrono::steady_clock::now();
  try {
    o = job();
  } catch (const Error& e) {
    std::cerr << "wflow: " << e.what() << '\n';
    return 1;
  }
  o.timing["wall"] = seconds_since(t0);

  bool pass = true;
  Json failures = Json::array();
  Json checks = Json::array();
  for (const auto& c : o.checks) {
    checks.push_back(c.to_json());
    if (!c.pass) {
      pass = false;
      failures.push_back(c.id);
    }
  }
  Json report = {{"command", command}, {"config", resolved}, {"pass", pass}, {"failures", failures},
                 {"result", o.result}, {"checks", checks}};

  const fs::path out(flags.out);
  try {
    fs::create_directories(out);
    write_file(out / "report.json", report.dump(2) + "\n");
    Json timing = {{"command", command}, {"seconds", o.timing}};
    write_file(out / "timing.json", timing.dump(2) + "\n");
    if (!o.manifest.empty()) write_file(out / "manifest.txt", o.manifest);
    if (!o.tables.empty()) {
      fs::create_directories(out / "tables");
      for (const auto& t : o.tables) {
        std::ostringstream os;
        write_csv(os, t);
        write_file(out / "tables" / (t.name + ".csv"), os.str());
      }
    }
    if (!o.states.empty()) {
      fs::create_directories(out / "states");
      for (const auto& [name, st] : o.states) st.save((out / "states" / (name + ".bin")).string());
    }
  } catch (const std::exception& e) {
    std::cerr << "wflow: " << e.what() << '\n';
    return 1;
  }

  if (command == "plan") std::cout << report["result"]["plan"].dump() << '\n';
  std::cout << command << ": " << o.checks.size() << " checks, " << failures.size() << " failed; report in "
            << (out / "report.json").string() << '\n';
  if (!pass) {
    std::cerr << "failing checks:\n";
    for (const auto& f : failures) std::cerr << "  " << f.get<std::string>() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flow-to-Schrodinger simulation planner, simulator and verifier"};
  app.require_subcommand(1);
  Flags flags;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "YAML config file");
    sub->add_option("--seed", flags.seed, "Base seed");
    sub->add_option("--jobs", flags.jobs, "Worker threads");
    sub->add_option("--out", flags.out, "Output directory")->capture_default_str();
    sub->add_option("--dense-cap", flags.dense_cap, "Largest dense operator dimension");
  };
  add_common(app.add_subcommand("plan", "Grid size, qubits and step count for a target accuracy"));
  add_common(app.add_subcommand("simulate", "Evolve the initial qsample with the product formula"));
  add_common(app.add_subcommand("estimate", "End-to-end mean estimation trials"));
  add_common(app.add_subcommand("sweep", "Product-formula error against step size"));
  auto* verify = app.add_subcommand("verify", "Run a verification suite");
  add_common(verify);
  verify->add_option("--suite", flags.suite, "Suite name")
      ->check(CLI::IsMember(suite_names()));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  return run(app.get_subcommands().front()->get_name(), flags);
}
