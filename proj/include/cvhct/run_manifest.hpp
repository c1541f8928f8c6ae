#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

namespace cvhct {

/// SHA-256 of every regular file under `dir` (relative path -> hex digest),
/// skipping `run_manifest.json` itself.
std::map<std::string, std::string> hash_directory(const std::filesystem::path& dir);

/// Digest over the sorted (path, digest) list of hash_directory.
std::string directory_digest(const std::map<std::string, std::string>& files);

/// Provenance record written next to every artifact.
struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::map<std::string, std::string> dataset_hashes;
  std::string extractor_weights;
  std::uint64_t seed = 0;
  std::string code_version;
  std::string created_utc;

  /// Hash of everything except the timestamp; equal for equal reruns.
  std::string content_hash() const;
  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

RunManifest make_manifest(const std::string& command, const nlohmann::json& config, std::uint64_t seed);
void write_manifest(const RunManifest& m, const std::filesystem::path& dir);
RunManifest read_run_manifest(const std::filesystem::path& dir);

}  // namespace cvhct
