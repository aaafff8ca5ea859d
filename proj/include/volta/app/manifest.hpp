// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace volta::app {

inline constexpr const char* kSoftwareVersion = "0.1.0";
inline constexpr const char* kManifestName = "run_manifest.json";

struct FileDigest {
  std::string path;
  std::string sha256;
};

/// Provenance record written into every artifact directory.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::string config_hash;
  nlohmann::json config;
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;
  nlohmann::json lineage = nlohmann::json::object();  // e.g. source checkpoint and its config hash
  std::string started;
  std::string finished;
  std::string software_version = kSoftwareVersion;

  void add_input(const std::filesystem::path& path);
  /// Digests every regular file under `dir` (recursively) except the manifest.
  void add_outputs(const std::filesystem::path& dir);
  [[nodiscard]] nlohmann::json to_json() const;
  void save(const std::filesystem::path& dir) const;
  static RunManifest load(const std::filesystem::path& dir);
};

/// UTC time as ISO-8601.
std::string utc_now();

/// Digest of a file, or of every file below a directory (sorted by relative path).
std::string digest_path(const std::filesystem::path& path);

}  // namespace volta::app
