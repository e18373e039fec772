// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "wflow/models.hpp"
#include "wflow/suites.hpp"

namespace wflow::cli {

/// Parses a YAML file into JSON. Quoted scalars stay strings; bare scalars
/// become integers, floats or booleans when they parse as such.
Json load_yaml(const std::string& path);

/// Reads one mapping of the config. Every accessor records the key and its
/// resolved value; finish() rejects keys nobody asked for.
class Section {
 public:
  Section(const Json& node, std::string where);

  bool has(const std::string& key) const;
  double number(const std::string& key, std::optional<double> def = std::nullopt);
  std::int64_t integer(const std::string& key, std::optional<std::int64_t> def = std::nullopt);
  std::uint64_t count(const std::string& key, std::optional<std::uint64_t> def = std::nullopt);
  bool flag(const std::string& key, std::optional<bool> def = std::nullopt);
  std::string text(const std::string& key, std::optional<std::string> def = std::nullopt);
  std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> def = std::nullopt);
  std::vector<std::int64_t> integers(const std::string& key,
                                     std::optional<std::vector<std::int64_t>> def = std::nullopt);
  Section child(const std::string& key);
  std::vector<Section> children(const std::string& key);
  /// Stores a resolved child back into this section's output.
  void put(const std::string& key, Json value);

  void finish() const;
  const Json& resolved() const { return out_; }
  const std::string& where() const { return where_; }

 private:
  const Json& get(const std::string& key) const;
  [[noreturn]] void fail(const std::string& key, const std::string& why) const;

  Json node_;
  std::string where_;
  Json out_ = Json::object();
  std::set<std::string> used_;
};

/// Builds a family from a `family` section: either `preset: <name>` alone or
/// `kind` plus the kind's parameters. An optional `name` labels the family in reports.
Family read_family(Section& s);

}  // namespace wflow::cli
