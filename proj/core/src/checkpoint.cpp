#include "gaitlab/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>

namespace gaitlab::checkpoint {

namespace {

constexpr char kMagic[8] = {'G', 'A', 'I', 'T', 'L', 'A', 'B', '\0'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw FormatError("checkpoint: truncated file");
  return v;
}

}  // namespace

const Eigen::VectorXd& Archive::array(const std::string& name) const {
  for (const auto& [n, v] : arrays)
    if (n == name) return v;
  throw FormatError("checkpoint: missing array '" + name + "'");
}

bool Archive::has(const std::string& name) const {
  for (const auto& entry : arrays)
    if (entry.first == name) return true;
  return false;
}

const std::string& Archive::get_meta(const std::string& key) const {
  const auto it = meta.find(key);
  if (it == meta.end()) throw FormatError("checkpoint: missing metadata '" + key + "'");
  return it->second;
}

void write(const Archive& a, std::ostream& os) {
  nlohmann::json h;
  h["kind"] = a.kind;
  h["meta"] = a.meta;
  h["arrays"] = nlohmann::json::array();
  for (const auto& [name, v] : a.arrays) h["arrays"].push_back({{"name", name}, {"size", v.size()}});
  const std::string header = h.dump();
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, kFormatVersion);
  put<std::uint64_t>(os, header.size());
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& entry : a.arrays)
    os.write(reinterpret_cast<const char*>(entry.second.data()),
             static_cast<std::streamsize>(entry.second.size() * sizeof(double)));
  if (!os) throw std::runtime_error("checkpoint: write failed");
}

Archive read(std::istream& is) {
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw FormatError("checkpoint: bad magic (not a gaitlab checkpoint)");
  const auto version = take<std::uint32_t>(is);
  if (version != kFormatVersion)
    throw FormatError("checkpoint: unsupported format version " + std::to_string(version) +
                      " (expected " + std::to_string(kFormatVersion) + ")");
  const auto len = take<std::uint64_t>(is);
  if (len > (1u << 24)) throw FormatError("checkpoint: implausible header length");
  std::string header(len, '\0');
  is.read(header.data(), static_cast<std::streamsize>(len));
  if (!is) throw FormatError("checkpoint: truncated header");

  Archive a;
  try {
    const auto h = nlohmann::json::parse(header);
    a.kind = h.at("kind").get<std::string>();
    a.meta = h.at("meta").get<std::map<std::string, std::string>>();
    for (const auto& entry : h.at("arrays")) {
      const auto n = entry.at("size").get<std::int64_t>();
      if (n < 0 || n > (1 << 28)) throw FormatError("checkpoint: implausible array size");
      a.arrays.emplace_back(entry.at("name").get<std::string>(), Eigen::VectorXd(n));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: corrupt header: ") + e.what());
  }
  for (auto& entry : a.arrays) {
    is.read(reinterpret_cast<char*>(entry.second.data()),
            static_cast<std::streamsize>(entry.second.size() * sizeof(double)));
    if (!is) throw FormatError("checkpoint: truncated array '" + entry.first + "'");
  }
  return a;
}

void save(const Archive& a, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  write(a, os);
}

Archive load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("checkpoint: cannot open '" + path + "'");
  return read(is);
}

}  // namespace gaitlab::checkpoint
