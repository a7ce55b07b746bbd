#include "nalab/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "nalab/errors.hpp"

namespace nalab {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    }
    cfg.values_[key] = trim(t.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DependencyError("cannot open config file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void KeyValueConfig::apply_override(const std::string& assignment, const KeyValueConfig& schema) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override must be key=value: " + assignment);
  }
  const std::string key = trim(assignment.substr(0, eq));
  if (!schema.contains(key)) throw ConfigError("unknown config key: " + key);
  values_[key] = trim(assignment.substr(eq + 1));
}

void KeyValueConfig::check_keys(const KeyValueConfig& schema) const {
  for (const auto& [key, value] : values_) {
    if (!schema.contains(key)) throw ConfigError("unknown config key: " + key);
  }
}

std::string KeyValueConfig::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing config key: " + key);
  return it->second;
}

long long KeyValueConfig::get_int(const std::string& key) const {
  const std::string v = get_string(key);
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config key " + key + ": expected integer, got '" + v + "'");
  }
  return out;
}

double KeyValueConfig::get_double(const std::string& key) const {
  const std::string v = get_string(key);
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(out)) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": expected number, got '" + v + "'");
  }
}

bool KeyValueConfig::get_bool(const std::string& key) const {
  const std::string v = get_string(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key " + key + ": expected boolean, got '" + v + "'");
}

std::vector<long long> KeyValueConfig::get_int_list(const std::string& key) const {
  std::vector<long long> out;
  for (const auto& item : split_list(get_string(key))) {
    KeyValueConfig tmp;
    tmp.set(key, item);
    out.push_back(tmp.get_int(key));
  }
  return out;
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(get_string(key))) {
    KeyValueConfig tmp;
    tmp.set(key, item);
    out.push_back(tmp.get_double(key));
  }
  return out;
}

std::vector<std::string> KeyValueConfig::get_string_list(const std::string& key) const {
  return split_list(get_string(key));
}

std::string KeyValueConfig::canonical_text() const {
  std::string out;
  for (const auto& [key, value] : values_) {
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  }
  return out;
}

std::uint64_t KeyValueConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical_text()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

KeyValueConfig KeyValueConfig::section(const std::string& prefix) const {
  KeyValueConfig out;
  const std::string p = prefix + ".";
  for (const auto& [key, value] : values_) {
    if (key.rfind(p, 0) == 0) out.values_[key.substr(p.size())] = value;
  }
  return out;
}

void KeyValueConfig::merge_section(const std::string& prefix, const KeyValueConfig& other) {
  for (const auto& [key, value] : other.values_) values_[prefix + "." + key] = value;
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace nalab
