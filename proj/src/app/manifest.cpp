// SPDX-License-Identifier: Apache-2.0
#include "volta/app/manifest.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>

#include "volta/common/digest.hpp"
#include "volta/common/error.hpp"

namespace volta::app {

namespace fs = std::filesystem;
using nlohmann::json;

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string digest_path(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("input not found: " + path.string());
  if (!fs::is_directory(path)) return sha256_file(path);
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(path)) {
    if (e.is_regular_file() && e.path().filename() != kManifestName) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string joined;
  for (const auto& f : files) joined += fs::relative(f, path).generic_string() + '\0' + sha256_file(f) + '\n';
  return sha256_hex(std::string_view(joined));
}

void RunManifest::add_input(const fs::path& path) { inputs.push_back({path.string(), digest_path(path)}); }

void RunManifest::add_outputs(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != kManifestName) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) outputs.push_back({fs::relative(f, dir).generic_string(), sha256_file(f)});
}

json RunManifest::to_json() const {
  auto digests = [](const std::vector<FileDigest>& list) {
    json out = json::array();
    for (const auto& d : list) out.push_back({{"path", d.path}, {"sha256", d.sha256}});
    return out;
  };
  return {{"command", command},
          {"argv", argv},
          {"config_hash", config_hash},
          {"config", config},
          {"inputs", digests(inputs)},
          {"outputs", digests(outputs)},
          {"lineage", lineage},
          {"started", started},
          {"finished", finished},
          {"software_version", software_version}};
}

void RunManifest::save(const fs::path& dir) const {
  fs::create_directories(dir);
  std::ofstream out(dir / kManifestName);
  out << to_json().dump(2) << "\n";
  if (!out) throw DataError("cannot write " + (dir / kManifestName).string());
}

RunManifest RunManifest::load(const fs::path& dir) {
  const auto path = fs::is_directory(dir) ? dir / kManifestName : dir;
  std::ifstream in(path);
  if (!in) throw DataError("run manifest not found: " + path.string());
  RunManifest m;
  try {
    const auto doc = json::parse(in);
    m.command = doc.at("command").get<std::string>();
    m.argv = doc.value("argv", std::vector<std::string>{});
    m.config_hash = doc.at("config_hash").get<std::string>();
    m.config = doc.value("config", json::object());
    for (const auto& d : doc.value("inputs", json::array())) m.inputs.push_back({d.at("path"), d.at("sha256")});
    for (const auto& d : doc.value("outputs", json::array())) m.outputs.push_back({d.at("path"), d.at("sha256")});
    m.lineage = doc.value("lineage", json::object());
    m.started = doc.value("started", "");
    m.finished = doc.value("finished", "");
    m.software_version = doc.value("software_version", "");
  } catch (const json::exception& e) {
    throw DataError("malformed run manifest " + path.string() + ": " + e.what());
  }
  return m;
}

}  // namespace volta::app
