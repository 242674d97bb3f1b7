#include "manifest.hpp"

#include <openssl/sha.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "effdim/error.hpp"

namespace effdim::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string git_blob_sha1(const std::string& content) {
  const std::string blob = "blob " + std::to_string(content.size()) + '\0' + content;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(blob.data()), blob.size(), digest);
  char hex[2 * SHA_DIGEST_LENGTH + 1];
  for (int i = 0; i < SHA_DIGEST_LENGTH; ++i) std::snprintf(hex + 2 * i, 3, "%02x", digest[i]);
  return std::string(hex, 2 * SHA_DIGEST_LENGTH);
}

std::string git_blob_sha1_file(const fs::path& path) { return git_blob_sha1(read_file(path)); }

std::string normalize_key(std::string key) {
  for (char& c : key)
    if (c == '_') c = '-';
  return key;
}

std::map<std::string, std::string> read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidConfig, "cannot open config file " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::InvalidConfig, path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = normalize_key(trim(line.substr(0, eq)));
    if (key.empty()) throw Error(ErrorKind::InvalidConfig, path.string() + ":" + std::to_string(lineno) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

fs::path write_manifest(const fs::path& out_dir, const Manifest& m) {
  nlohmann::ordered_json j;
  j["subcommand"] = m.subcommand;
  j["config"] = m.config;
  j["seeds"] = m.seeds;
  auto files = [&](const std::vector<fs::path>& paths, const fs::path& base) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const fs::path& p : paths)
      arr.push_back({{"path", p.string()}, {"sha1", git_blob_sha1_file(base.empty() ? p : base / p)}});
    return arr;
  };
  j["inputs"] = files(m.inputs, {});
  j["outputs"] = files(m.outputs, out_dir);
  j["timestamp"] = utc_timestamp();

  const fs::path path = out_dir / "manifest.json";
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path.string());
  os << j.dump(2) << '\n';
  return path;
}

}  // namespace effdim::cli
