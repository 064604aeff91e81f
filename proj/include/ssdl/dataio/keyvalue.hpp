// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace ssdl::data {

/// Flat TOML subset: `key = value`, `[section]` prefixes keys with "section.",
/// quoted strings, '#' comments. Typed getters record which keys were read so
/// unknown keys can be reported.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text);
  static KeyValues load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get(const std::string& key, const std::string& fallback) const;
  double get(const std::string& key, double fallback) const;
  std::int64_t get(const std::string& key, std::int64_t fallback) const;
  std::size_t get(const std::string& key, std::size_t fallback) const;
  bool get(const std::string& key, bool fallback) const;

  /// Throws std::invalid_argument listing keys never read by a getter.
  void reject_unknown() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace ssdl::data
