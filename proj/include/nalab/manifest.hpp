#pragma once

// Run manifests: what was run, with which configuration and seeds, and which
// files it produced. Written atomically at start and rewritten at the end.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace nalab {

std::string code_version();
std::string utc_timestamp();

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::filesystem::path archived_config;
  std::vector<std::uint64_t> seeds;
  std::string code_version;
  std::string started;
  std::string finished;
  std::string status = "running";
  std::vector<std::filesystem::path> artifacts;

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
  static RunManifest load(const std::filesystem::path& path);
};

// Writes to a temporary sibling and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);
void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);

}  // namespace nalab
