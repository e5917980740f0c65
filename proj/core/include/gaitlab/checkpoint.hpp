#pragma once

#include <Eigen/Core>

#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace gaitlab::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

/// Unreadable, truncated, or wrong-version checkpoint.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Self-describing container: 8-byte magic, u32 version, u64 header length,
/// a JSON header (kind, string metadata, array names and sizes), then the raw
/// little-endian doubles of each array in header order.
struct Archive {
  std::string kind;
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Eigen::VectorXd>> arrays;

  void add(const std::string& name, const Eigen::VectorXd& v) { arrays.emplace_back(name, v); }
  const Eigen::VectorXd& array(const std::string& name) const;
  bool has(const std::string& name) const;
  const std::string& get_meta(const std::string& key) const;
};

void write(const Archive& a, std::ostream& os);
Archive read(std::istream& is);
void save(const Archive& a, const std::string& path);
Archive load(const std::string& path);

}  // namespace gaitlab::checkpoint
