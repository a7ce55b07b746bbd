#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace nalab {

// Flat "key = value" configuration. Lines starting with '#' are comments.
// Keys are dotted paths ("skirmish.width"); values are kept as text and
// converted on access.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return values_.contains(key); }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void erase(const std::string& key) { values_.erase(key); }

  // Applies "key=value"; throws ConfigError when the key is not in `schema`.
  void apply_override(const std::string& assignment, const KeyValueConfig& schema);
  // Throws ConfigError naming the first key absent from `schema`.
  void check_keys(const KeyValueConfig& schema) const;

  std::string get_string(const std::string& key) const;
  long long get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<long long> get_int_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<std::string> get_string_list(const std::string& key) const;

  const std::map<std::string, std::string>& entries() const { return values_; }

  // Canonical text: sorted "key = value" lines. Hash is FNV-1a 64 over it.
  std::string canonical_text() const;
  std::uint64_t hash() const;

  // Entries whose key starts with `prefix` + ".", with the prefix stripped.
  KeyValueConfig section(const std::string& prefix) const;
  // Inserts every entry of `other` under `prefix` + ".".
  void merge_section(const std::string& prefix, const KeyValueConfig& other);

 private:
  std::map<std::string, std::string> values_;
};

std::string format_double(double value);
std::string hash_hex(std::uint64_t h);

}  // namespace nalab
