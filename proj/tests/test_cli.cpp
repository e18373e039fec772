// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "wflow/state.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

const fs::path& scratch() {
  static const fs::path dir = [] {
    auto p = fs::temp_directory_path() / ("wflow_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string("\"") + WFLOW_CLI + "\" " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string config(const std::string& name) { return std::string(WFLOW_CONFIGS) + "/" + name; }

fs::path write_config(const std::string& name, const std::string& text) {
  auto p = scratch() / name;
  std::ofstream(p) << text;
  return p;
}

Json read_json(const fs::path& p) {
  std::ifstream is(p);
  return Json::parse(is);
}

std::string first_line(const fs::path& p) {
  std::ifstream is(p);
  std::string line;
  std::getline(is, line);
  return line;
}

}  // namespace

TEST_CASE("plan reproduces the worked example") {
  auto out = scratch() / "plan";
  REQUIRE(run("plan --config " + config("plan_example.yaml") + " --out " + out.string()) == 0);
  auto r = read_json(out / "report.json");
  CHECK(r["result"]["plan"]["N"] == 4);
  CHECK(r["result"]["plan"]["n"] == 2);
  CHECK(r["result"]["plan"]["r"] == 7481019);
  CHECK(r["result"]["plan"]["feasible"] == true);
  CHECK(r["config"]["plan"]["c_s"] == 2.0);
  CHECK(r["config"]["seed"] == 1);
  CHECK_FALSE(r.contains("timing"));
  CHECK(read_json(out / "timing.json").contains("seconds"));
}

TEST_CASE("schema violations exit 2 without artifacts") {
  auto typo = write_config("typo.yaml", "plan:\n  c_s: 2\n  epsilon_typo: 0.1\n");
  auto out = scratch() / "typo";
  CHECK(run("plan --config " + typo.string() + " --out " + out.string()) == 2);
  CHECK_FALSE(fs::exists(out));

  auto broken = write_config("broken.yaml", "plan: [1, 2\n");
  CHECK(run("plan --config " + broken.string() + " --out " + out.string()) == 2);
  auto wrong_type = write_config("type.yaml", "simulate:\n  N_points: many\nfamily:\n  preset: trig_torus\n");
  CHECK(run("simulate --config " + wrong_type.string() + " --out " + out.string()) == 2);
  auto bad_family = write_config("fam.yaml", "family:\n  kind: gaussian_linear\n  sigma_star_length: -1\n");
  CHECK(run("simulate --config " + bad_family.string() + " --out " + out.string()) == 2);
  CHECK(run("verify --suite nope --out " + out.string()) == 2);
  CHECK(run("verify --out " + out.string()) == 2);
  CHECK(run("plan --config /nonexistent.yaml --out " + out.string()) == 2);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("verify writes a report and manifest") {
  auto out = scratch() / "verify";
  REQUIRE(run("verify --config " + config("verify.yaml") + " --seed 9 --out " + out.string()) == 0);
  auto r = read_json(out / "report.json");
  CHECK(r["pass"] == true);
  CHECK(r["config"]["seed"] == 9);
  CHECK(r["config"]["verify"]["suite"] == "appendix-b");
  std::ifstream m(out / "manifest.txt");
  std::size_t lines = 0;
  for (std::string l; std::getline(m, l);) ++lines;
  CHECK(lines == r["checks"].size());
  for (const auto& c : r["checks"]) {
    CHECK(c.contains("op"));
    CHECK(c["op"].get<std::string>().find('.') != std::string::npos);
  }
}

TEST_CASE("simulate dumps states and tables") {
  auto out = scratch() / "simulate";
  REQUIRE(run("simulate --config " + config("simulate_trig_torus.yaml") + " --out " + out.string()) == 0);
  auto s = wflow::StateVector::load((out / "states" / "final.bin").string());
  CHECK(s.grid().points_per_axis() == 32);
  CHECK(s.norm() == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(first_line(out / "tables" / "step_norms.csv") == "step,norm");
  auto r = read_json(out / "report.json");
  CHECK(r["result"]["time_discretization_error"].get<double>() <= r["result"]["time_discretization_bound"].get<double>());
}

TEST_CASE("estimate and sweep") {
  auto out = scratch() / "estimate";
  REQUIRE(run("estimate --config " + config("estimate_gaussian.yaml") + " --out " + out.string()) == 0);
  CHECK(first_line(out / "tables" / "trials.csv") == "trial,seed,estimate,deviation,allowed,holds");
  CHECK(read_json(out / "report.json")["result"]["trials"] == 20);

  auto sw = scratch() / "sweep";
  REQUIRE(run("sweep --config " + config("sweep_trotter.yaml") + " --jobs 1 --out " + sw.string()) == 0);
  CHECK(first_line(sw / "tables" / "sweep.csv") == "family,N,d,dt,measured_error,theorem2_bound,slope_window");
}

TEST_CASE("assertion failures exit 1 with the failing checks") {
  auto cfg = write_config("strict.yaml",
                          "sweep:\n  families:\n    - preset: trig_torus\n  N_points: [8]\n"
                          "  dt_exponents: [6, 7, 8]\n  slope_window: [2.5, 3.0]\n");
  auto out = scratch() / "strict";
  CHECK(run("sweep --config " + cfg.string() + " --out " + out.string()) == 1);
  auto r = read_json(out / "report.json");
  CHECK(r["pass"] == false);
  REQUIRE(r["failures"].size() == 1);
  CHECK(r["failures"][0] == "sweep/trig_torus/N8/slope");
}

TEST_CASE("repeated runs are byte-identical") {
  auto a = scratch() / "det_a";
  auto b = scratch() / "det_b";
  REQUIRE(run("verify --suite theorem2 --jobs 2 --out " + a.string()) == 0);
  REQUIRE(run("verify --suite theorem2 --jobs 2 --out " + b.string()) == 0);
  auto slurp = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  CHECK(slurp(a / "report.json") == slurp(b / "report.json"));
  CHECK(slurp(a / "tables" / "theorem2.csv") == slurp(b / "tables" / "theorem2.csv"));
}
