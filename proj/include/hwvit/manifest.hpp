#pragma once

// Run manifests: what a command read, wrote and was seeded with.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace hwvit {

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);
/// Files hash their bytes. Directories hash the sorted list of
/// "relative-path digest" lines of every regular file below them.
std::string sha256_path(const std::filesystem::path& path);

struct ManifestEntry {
  std::string role;
  std::string path;
  std::string sha256;
};

struct RunManifest {
  std::string command;
  std::vector<std::string> args;
  std::vector<ManifestEntry> inputs;
  std::vector<ManifestEntry> outputs;
  std::map<std::string, std::uint64_t> seeds;
  nlohmann::json summary = nlohmann::json::object();
  std::string started_at;
  std::string finished_at;

  void add_input(std::string role, const std::filesystem::path& path);
  void add_output(std::string role, const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

/// Current UTC time as ISO 8601 with seconds.
std::string utc_timestamp();

const char* tool_version();

}  // namespace hwvit
