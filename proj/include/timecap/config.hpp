#pragma once

#include "timecap/common.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace timecap {

/// Flat dotted-key configuration ("encoder.model_dim=64"), one entry per
/// line, '#' comments. Keys are kept sorted so canonical serialization is
/// stable for digesting.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse_file(const std::filesystem::path& path);
  static KeyValueConfig parse_string(std::string_view text, const std::string& origin = "<string>");

  bool has(const std::string& key) const;
  void set(const std::string& key, std::string value);

  std::string get_string(const std::string& key) const;  // throws config error when absent
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key) const;  // comma-separated

  /// Sorted "key=value" lines for every key starting with `prefix`.
  /// This is the digest input for artifact provenance.
  std::string canonical(const std::string& prefix = "") const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace timecap
