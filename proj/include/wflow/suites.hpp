// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "wflow/spectral.hpp"
#include "wflow/models.hpp"

namespace wflow {

using Json = nlohmann::ordered_json;

/// One verified inequality (or equality to a tolerance) in a suite report.
struct Check {
  std::string id;
  /// Operation that produced the measured value, as "module.op".
  std::string op;
  double measured = 0.0;
  double bound = 0.0;
  bool pass = false;
  std::uint64_t seed = 0;
  Json params = Json::object();

  Json to_json() const;
};

/// CSV-shaped table; cells are JSON scalars.
struct Table {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<Json>> rows;
};

void write_csv(std::ostream& os, const Table& table);

struct SuiteResult {
  std::string suite;
  std::vector<Check> checks;
  std::vector<Table> tables;
  Json summary = Json::object();
  /// Wall-clock seconds per phase. Kept out of to_json() so reports compare byte for byte.
  std::map<std::string, double> timing;

  bool pass() const;
  std::vector<std::string> failures() const;
  Json to_json() const;
  /// Lines of "id seed expected-pass params" for every check.
  void write_manifest(std::ostream& os) const;
};

struct SuiteOptions {
  std::uint64_t seed = 1;
  unsigned jobs = 1;
  std::size_t dense_cap = kDefaultDenseCap;
};

/// Runs fn(0..n-1) on up to `jobs` threads. Callers write into
/// index-addressed slots, so the merged output does not depend on scheduling.
void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn);

/// Named families shared by the suites and the command-line tool.
std::vector<std::string> suite_family_names();
Family suite_family(std::string_view name);

/// Dense N = 16 trig instances for the order fit; `scale` multiplies the potential.
TrigTorusParams trotter_instance(double scale);

std::vector<std::string> suite_names();
/// Throws a usage error for an unknown name.
SuiteResult run_suite(std::string_view name, const SuiteOptions& opts = {});

SuiteResult run_appendix_b(const SuiteOptions& opts);
SuiteResult run_appendix_c(const SuiteOptions& opts);
SuiteResult run_appendix_d(const SuiteOptions& opts);
SuiteResult run_theorem1(const SuiteOptions& opts);
SuiteResult run_theorem2(const SuiteOptions& opts);
SuiteResult run_trotter_order(const SuiteOptions& opts);
SuiteResult run_flow_matching(const SuiteOptions& opts);

struct OrderFit {
  std::vector<double> dt;
  std::vector<double> error;
  std::vector<double> bound;
  double slope = 0.0;
};

/// ||U(t0 + dt, t0) - W(t0)|| in spectral norm for each dt, with the
/// least-squares slope of log error against log dt.
OrderFit trotter_order_fit(const PotentialModel& model, const GridSpec& grid, double t0,
                           const std::vector<double>& dts, double reference_tol = 1e-12,
                           std::size_t dense_cap = kDefaultDenseCap);

}  // namespace wflow
