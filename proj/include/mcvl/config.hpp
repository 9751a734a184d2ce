#pragma once

// `key = value` text configuration files. Lines starting with '#' are
// comments; keys are unique; values keep inner whitespace.

#include <cstdint>
#include <map>
#include <optional>
#include <string>

namespace mcvl {

class KeyValueConfig {
 public:
  KeyValueConfig() = default;
  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueConfig load(const std::string& path);

  void set(const std::string& key, std::string value) { entries_[key] = std::move(value); }
  [[nodiscard]] bool has(const std::string& key) const { return entries_.contains(key); }
  [[nodiscard]] std::optional<std::string> get(const std::string& key) const;

  [[nodiscard]] std::string get_string(const std::string& key, const std::string& fallback) const;
  [[nodiscard]] double get_double(const std::string& key, double fallback) const;
  [[nodiscard]] long long get_int(const std::string& key, long long fallback) const;
  [[nodiscard]] bool get_bool(const std::string& key, bool fallback) const;

  /// Overlays `other` on top of this (other wins).
  void merge(const KeyValueConfig& other);
  /// Canonical text: sorted `key = value` lines.
  [[nodiscard]] std::string dump() const;
  [[nodiscard]] const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace mcvl
