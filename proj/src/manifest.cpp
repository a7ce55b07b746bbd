#include "nalab/manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "nalab/errors.hpp"

#ifndef NALAB_CODE_VERSION
#define NALAB_CODE_VERSION "unversioned"
#endif

namespace nalab {

std::string code_version() { return NALAB_CODE_VERSION; }

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["config_hash"] = config_hash;
  j["archived_config"] = archived_config.string();
  j["seeds"] = seeds;
  j["code_version"] = code_version;
  j["started"] = started;
  j["finished"] = finished;
  j["status"] = status;
  auto& a = j["artifacts"] = nlohmann::ordered_json::array();
  for (const auto& p : artifacts) a.push_back(p.string());
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  RunManifest m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.command = j.at("command").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.archived_config = j.at("archived_config").get<std::string>();
    m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    m.code_version = j.at("code_version").get<std::string>();
    m.started = j.at("started").get<std::string>();
    m.finished = j.at("finished").get<std::string>();
    m.status = j.at("status").get<std::string>();
    for (const auto& p : j.at("artifacts")) m.artifacts.emplace_back(p.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw StructuralError(std::string("manifest: ") + e.what());
  }
  return m;
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DependencyError("missing manifest: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DependencyError("cannot write " + tmp.string());
    out << text;
    if (!out) throw DependencyError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
  write_file_atomic(path, manifest.to_json());
}

}  // namespace nalab
