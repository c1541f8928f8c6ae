#include "cvhct/run_manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <vector>

#include "cvhct/errors.hpp"
#include "cvhct/hash.hpp"
#include "cvhct/slice_io.hpp"
#include "cvhct/version.hpp"

namespace cvhct {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifestName = "run_manifest.json";

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::map<std::string, std::string> hash_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == kManifestName) continue;
    const auto bytes = read_file_bytes(e.path());
    out[fs::relative(e.path(), dir).generic_string()] = sha256_hex(bytes);
  }
  return out;
}

std::string directory_digest(const std::map<std::string, std::string>& files) {
  std::string text;
  for (const auto& [path, digest] : files) text += path + "\t" + digest + "\n";
  return sha256_hex(text);
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j{{"command", command},
                   {"config", config},
                   {"dataset_hashes", dataset_hashes},
                   {"extractor_weights", extractor_weights},
                   {"seed", seed},
                   {"code_version", code_version}};
  j["content_hash"] = content_hash();
  j["created_utc"] = created_utc;
  return j;
}

std::string RunManifest::content_hash() const {
  const nlohmann::json j{{"command", command},     {"config", config}, {"dataset_hashes", dataset_hashes},
                         {"extractor_weights", extractor_weights}, {"seed", seed}, {"code_version", code_version}};
  const auto text = j.dump();
  return sha256_hex(text);
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  try {
    m.command = j.at("command");
    m.config = j.at("config");
    m.dataset_hashes = j.at("dataset_hashes").get<std::map<std::string, std::string>>();
    m.extractor_weights = j.at("extractor_weights");
    m.seed = j.at("seed");
    m.code_version = j.at("code_version");
    m.created_utc = j.value("created_utc", "");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed run manifest: ") + e.what());
  }
  return m;
}

RunManifest make_manifest(const std::string& command, const nlohmann::json& config, std::uint64_t seed) {
  RunManifest m;
  m.command = command;
  m.config = config;
  m.seed = seed;
  m.code_version = kVersion;
  m.created_utc = utc_now();
  return m;
}

void write_manifest(const RunManifest& m, const fs::path& dir) {
  const auto text = m.to_json().dump(2) + "\n";
  write_file_atomic(dir / kManifestName, std::vector<std::uint8_t>(text.begin(), text.end()));
}

RunManifest read_run_manifest(const fs::path& dir) {
  std::ifstream in(dir / kManifestName);
  if (!in) throw IoError("no run manifest in '" + dir.string() + "'");
  try {
    return RunManifest::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("run manifest is not JSON: ") + e.what());
  }
}

}  // namespace cvhct
