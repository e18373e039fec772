// SPDX-License-Identifier: Apache-2.0
#include "config.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cmath>
#include <numbers>

#include "wflow/error.hpp"

namespace wflow::cli {

namespace {

Json scalar(const YAML::Node& n) {
  const std::string& v = n.Scalar();
  if (n.Tag() == "!") return v;  // quoted
  if (v == "true" || v == "True") return true;
  if (v == "false" || v == "False") return false;
  if (v == "null" || v == "~" || v.empty()) return nullptr;
  std::int64_t i = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), i);
  if (ec == std::errc() && p == v.data() + v.size()) return i;
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  return v;
}

Json convert(const YAML::Node& n) {
  switch (n.Type()) {
    case YAML::NodeType::Map: {
      Json out = Json::object();
      for (const auto& kv : n) {
        auto key = kv.first.as<std::string>();
        if (out.contains(key)) throw Error(ErrorKind::usage, "duplicate key '" + key + "'");
        out[key] = convert(kv.second);
      }
      return out;
    }
    case YAML::NodeType::Sequence: {
      Json out = Json::array();
      for (const auto& v : n) out.push_back(convert(v));
      return out;
    }
    case YAML::NodeType::Scalar:
      return scalar(n);
    default:
      return nullptr;
  }
}

}  // namespace

Json load_yaml(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::BadFile&) {
    throw Error(ErrorKind::usage, "cannot read config '" + path + "'");
  } catch (const YAML::Exception& e) {
    throw Error(ErrorKind::usage, "malformed config: " + std::string(e.what()));
  }
  if (root.IsNull()) return Json::object();
  if (!root.IsMap()) throw Error(ErrorKind::usage, "config must be a mapping");
  return convert(root);
}

Section::Section(const Json& node, std::string where) : node_(node), where_(std::move(where)) {
  if (node_.is_null()) node_ = Json::object();
  if (!node_.is_object()) throw Error(ErrorKind::usage, where_ + " must be a mapping");
}

bool Section::has(const std::string& key) const { return node_.contains(key) && !node_.at(key).is_null(); }

const Json& Section::get(const std::string& key) const { return node_.at(key); }

void Section::fail(const std::string& key, const std::string& why) const {
  throw Error(ErrorKind::usage, where_ + "." + key + ": " + why);
}

double Section::number(const std::string& key, std::optional<double> def) {
  used_.insert(key);
  double v;
  if (!has(key)) {
    if (!def) fail(key, "required");
    v = *def;
  } else {
    const auto& j = get(key);
    if (!j.is_number()) fail(key, "expected a number");
    v = j.get<double>();
    if (!std::isfinite(v)) fail(key, "must be finite");
  }
  out_[key] = v;
  return v;
}

std::int64_t Section::integer(const std::string& key, std::optional<std::int64_t> def) {
  used_.insert(key);
  std::int64_t v;
  if (!has(key)) {
    if (!def) fail(key, "required");
    v = *def;
  } else {
    const auto& j = get(key);
    if (!j.is_number_integer()) fail(key, "expected an integer");
    v = j.get<std::int64_t>();
  }
  out_[key] = v;
  return v;
}

std::uint64_t Section::count(const std::string& key, std::optional<std::uint64_t> def) {
  std::optional<std::int64_t> d;
  if (def) d = static_cast<std::int64_t>(*def);
  auto v = integer(key, d);
  if (v < 0) fail(key, "must be nonnegative");
  return static_cast<std::uint64_t>(v);
}

bool Section::flag(const std::string& key, std::optional<bool> def) {
  used_.insert(key);
  bool v;
  if (!has(key)) {
    if (!def) fail(key, "required");
    v = *def;
  } else {
    if (!get(key).is_boolean()) fail(key, "expected true or false");
    v = get(key).get<bool>();
  }
  out_[key] = v;
  return v;
}

std::string Section::text(const std::string& key, std::optional<std::string> def) {
  used_.insert(key);
  std::string v;
  if (!has(key)) {
    if (!def) fail(key, "required");
    v = *def;
  } else {
    if (!get(key).is_string()) fail(key, "expected a string");
    v = get(key).get<std::string>();
  }
  out_[key] = v;
  return v;
}

std::vector<double> Section::numbers(const std::string& key, std::optional<std::vector<double>> def) {
  used_.insert(key);
  std::vector<double> v;
  if (!has(key)) {
    if (!def) fail(key, "required");
    v = *def;
  } else {
    const auto& j = get(key);
    if (!j.is_array()) fail(key, "expected a list");
    for (const auto& e : j) {
      if (!e.is_number()) fail(key, "expected a list of numbers");
      v.push_back(e.get<double>());
    }
  }
  out_[key] = v;
  return v;
}

std::vector<std::int64_t> Section::integers(const std::string& key, std::optional<std::vector<std::int64_t>> def) {
  used_.insert(key);
  std::vector<std::int64_t> v;
  if (!has(key)) {
    if (!def) fail(key, "required");
    v = *def;
  } else {
    const auto& j = get(key);
    if (!j.is_array()) fail(key, "expected a list");
    for (const auto& e : j) {
      if (!e.is_number_integer()) fail(key, "expected a list of integers");
      v.push_back(e.get<std::int64_t>());
    }
  }
  out_[key] = v;
  return v;
}

Section Section::child(const std::string& key) {
  used_.insert(key);
  return Section(has(key) ? get(key) : Json::object(), where_ + "." + key);
}

std::vector<Section> Section::children(const std::string& key) {
  used_.insert(key);
  std::vector<Section> out;
  if (!has(key)) return out;
  if (!get(key).is_array()) fail(key, "expected a list");
  std::size_t i = 0;
  for (const auto& e : get(key)) out.emplace_back(e, where_ + "." + key + "[" + std::to_string(i++) + "]");
  return out;
}

void Section::put(const std::string& key, Json value) { out_[key] = std::move(value); }

void Section::finish() const {
  for (const auto& [k, v] : node_.items()) {
    if (!used_.count(k)) throw Error(ErrorKind::usage, where_ + ": unknown key '" + k + "'");
  }
}

Family read_family(Section& s) {
  if (s.has("preset")) {
    auto f = suite_family(s.text("preset"));
    f.name = s.text("name", f.name);
    s.finish();
    return f;
  }
  const auto kind = s.text("kind");
  Family f;
  if (kind == "trig_torus") {
    TrigTorusParams p;
    p.L = s.number("L_length", 2.0 * std::numbers::pi);
    p.d = s.count("d_dims", 1);
    p.T = s.number("T_time", 1.0);
    p.kappa = s.number("kappa", 1.0);
    Json terms = Json::array();
    for (auto& t : s.children("terms")) {
      TrigTerm term;
      for (auto m : t.integers("modes")) term.modes.push_back(static_cast<int>(m));
      term.amplitude = t.number("amplitude");
      term.slope = t.number("slope_per_time", 0.0);
      term.phase = t.number("phase_rad", 0.0);
      t.finish();
      terms.push_back(t.resolved());
      p.terms.push_back(term);
    }
    s.put("terms", terms);
    f = make_trig_torus(p);
  } else if (kind == "gaussian_linear") {
    GaussianLinearParams p;
    p.L = s.number("L_length", 16.0);
    p.d = s.count("d_dims", 1);
    p.mu_star = s.numbers("mu_star_length", std::vector<double>(p.d, 0.0));
    p.sigma_star = s.number("sigma_star_length", 1.0);
    f = make_gaussian_linear(p);
  } else if (kind == "ddpm_flow") {
    DdpmParams p;
    p.L = s.number("L_length", 16.0);
    p.d = s.count("d_dims", 1);
    p.schedule.T = s.number("T_time", 1.0);
    p.schedule.beta_min = s.number("beta_min_per_time", 0.1);
    p.schedule.beta_max = s.number("beta_max_per_time", 1.0);
    p.target_mean = s.numbers("target_mean_length", std::vector<double>(p.d, 0.0));
    p.target_std = s.number("target_std_length", 1.0);
    p.generative = s.flag("generative", false);
    f = make_ddpm_flow(p);
  } else if (kind == "static_uniform") {
    const double L = s.number("L_length", 1.0);
    const auto d = s.count("d_dims", 1);
    const double T = s.number("T_time", 1.0);
    f = make_static_uniform(L, d, T, s.number("c_value", 0.0));
  } else {
    throw Error(ErrorKind::usage, s.where() + ".kind: unknown family kind '" + kind + "'");
  }
  f.name = s.text("name", kind);
  s.finish();
  return f;
}

}  // namespace wflow::cli
