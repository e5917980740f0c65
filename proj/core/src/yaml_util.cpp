#include "gaitlab/yaml_util.hpp"

#include <fstream>
#include <sstream>

namespace gaitlab::yaml {

YAML::Node parse(const std::string& text) {
  try {
    return YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(e.msg, e.mark.line >= 0 ? e.mark.line + 1 : 0);
  }
}

YAML::Node parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::vector<double> get_list(const YAML::Node& parent, const std::string& key,
                             std::size_t expected_size, const std::vector<double>& fallback) {
  const YAML::Node n = parent[key];
  if (!n) return fallback;
  if (!n.IsSequence() || (expected_size && n.size() != expected_size))
    throw ConfigError("key '" + key + "' must be a list of " + std::to_string(expected_size) +
                          " numbers",
                      line_of(n));
  std::vector<double> out;
  for (const auto& v : n) {
    try {
      out.push_back(v.as<double>());
    } catch (const YAML::Exception&) {
      throw ConfigError("key '" + key + "' contains a non-numeric entry", line_of(v));
    }
  }
  return out;
}

void check_keys(const YAML::Node& map, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!map) return;
  if (!map.IsMap()) throw ConfigError(where + " must be a mapping", line_of(map));
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key))
      throw ConfigError("unknown key '" + key + "' in " + where, line_of(kv.first));
  }
}

void expect(bool ok, const YAML::Node& parent, const std::string& key, const std::string& what) {
  if (ok) return;
  const YAML::Node n = parent[key];
  throw ConfigError("key '" + key + "': " + what, n ? line_of(n) : line_of(parent));
}

}  // namespace gaitlab::yaml
