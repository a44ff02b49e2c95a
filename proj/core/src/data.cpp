#include "gridcoord/data.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "gridcoord/error.hpp"

#ifndef GRIDCOORD_DEFAULT_DATA_DIR
#define GRIDCOORD_DEFAULT_DATA_DIR "data"
#endif

namespace gridcoord::data {

namespace fs = std::filesystem;

fs::path default_dir() {
  if (const char* env = std::getenv("GRIDCOORD_DATA_DIR"); env != nullptr && *env != '\0') return fs::path(env);
  return fs::path(GRIDCOORD_DEFAULT_DATA_DIR);
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorKind::ChecksumMismatch, "sha256 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

std::map<std::string, std::string> read_checksums(const fs::path& dir) {
  std::ifstream in(dir / "CHECKSUMS");
  if (!in) throw Error(ErrorKind::ChecksumMismatch, (dir / "CHECKSUMS").string() + " is missing");
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string digest, rel;
    ss >> digest >> rel;
    if (digest.size() != 64 || rel.empty()) throw Error(ErrorKind::ChecksumMismatch, "malformed CHECKSUMS line: " + line);
    out[rel] = digest;
  }
  return out;
}

void verify_file(const fs::path& dir, const std::string& rel) {
  const auto sums = read_checksums(dir);
  const auto it = sums.find(rel);
  if (it == sums.end()) throw Error(ErrorKind::ChecksumMismatch, rel + " is not listed in CHECKSUMS");
  const std::string actual = sha256_hex(io::read_text_file(dir / rel));
  if (actual != it->second) throw Error(ErrorKind::ChecksumMismatch, rel + " does not match its recorded digest");
}

void write_checksums(const fs::path& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension().string();
    if (ext != ".json" && ext != ".csv") continue;
    files.push_back(fs::relative(e.path(), dir).generic_string());
  }
  std::sort(files.begin(), files.end());
  std::ofstream out(dir / "CHECKSUMS", std::ios::binary);
  for (const auto& f : files) out << sha256_hex(io::read_text_file(dir / f)) << "  " << f << "\n";
}

std::vector<std::string> list_scenarios(const fs::path& dir) {
  std::vector<std::string> names;
  if (!fs::exists(dir / "scenarios")) return names;
  for (const auto& e : fs::directory_iterator(dir / "scenarios"))
    if (e.path().extension() == ".json") names.push_back(e.path().stem().string());
  std::sort(names.begin(), names.end());
  return names;
}

feeder::FeederModel scale_loads(feeder::FeederModel model, double factor) {
  for (auto& l : model.loads) {
    l.p *= factor;
    l.q *= factor;
  }
  return model;
}

Scenario load_scenario(const std::string& name, const fs::path& dir) {
  const std::string rel = "scenarios/" + name + ".json";
  if (!fs::exists(dir / rel)) throw Error(ErrorKind::ValidationError, "unknown scenario '" + name + "'");
  verify_file(dir, rel);
  const auto doc = io::read_json_file(dir / rel);
  Scenario s;
  s.name = name;
  s.file = dir / rel;
  try {
    s.description = doc.value("description", std::string());
    const auto feeder_rel = doc.at("feeder").get<std::string>();
    verify_file(dir, feeder_rel);
    auto fdoc = io::read_json_file(dir / feeder_rel);
    if (doc.contains("observable")) fdoc["observable"] = doc.at("observable");
    if (doc.contains("substation_v")) {
      const double v = doc.at("substation_v").get<double>();
      fdoc["substation"]["y0"] = std::vector<double>(3, v * v);
    }
    s.feeder = io::feeder_from_json(fdoc);
    s.load_scale = doc.value("load_scale", 1.0);
    if (s.load_scale != 1.0) s.feeder = scale_loads(std::move(s.feeder), s.load_scale);
    s.irradiance = doc.value("irradiance", 1.0);
    if (doc.contains("inverters")) {
      const auto inv_rel = doc.at("inverters").get<std::string>();
      verify_file(dir, inv_rel);
      s.fleet = io::load_fleet(dir / inv_rel, s.feeder.base);
    }
    if (doc.contains("transmission")) {
      const auto t_rel = doc.at("transmission").get<std::string>();
      verify_file(dir, t_rel);
      s.transmission = tso::load_case(dir / t_rel);
    }
    if (doc.contains("outage")) {
      const auto o = doc.at("outage").get<std::vector<int>>();
      if (o.size() != 2) throw Error(ErrorKind::ValidationError, "outage must list two bus ids");
      s.outage = std::make_pair(o[0], o[1]);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ValidationError, rel + ": " + e.what());
  }
  return s;
}

}  // namespace gridcoord::data
