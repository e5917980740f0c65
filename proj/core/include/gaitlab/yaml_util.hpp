#pragma once

// Small helpers over yaml-cpp that turn type/range problems into
// ConfigError with the offending line number.

#include "gaitlab/common.hpp"

#include <yaml-cpp/yaml.h>

#include <set>
#include <string>
#include <vector>

namespace gaitlab::yaml {

inline int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

YAML::Node parse(const std::string& text);
YAML::Node parse_file(const std::string& path);

template <typename T>
T get(const YAML::Node& parent, const std::string& key, const T& fallback) {
  const YAML::Node n = parent[key];
  if (!n) return fallback;
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("key '" + key + "' has an invalid value", line_of(n));
  }
}

template <typename T>
T require(const YAML::Node& parent, const std::string& key) {
  const YAML::Node n = parent[key];
  if (!n) throw ConfigError("missing required key '" + key + "'", line_of(parent));
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("key '" + key + "' has an invalid value", line_of(n));
  }
}

std::vector<double> get_list(const YAML::Node& parent, const std::string& key,
                             std::size_t expected_size, const std::vector<double>& fallback);

/// Rejects keys outside `allowed` so typos do not silently fall back to defaults.
void check_keys(const YAML::Node& map, const std::set<std::string>& allowed,
                const std::string& where);

/// Throws ConfigError at the key's line when `ok` is false.
void expect(bool ok, const YAML::Node& parent, const std::string& key, const std::string& what);

}  // namespace gaitlab::yaml
