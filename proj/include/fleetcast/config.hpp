#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace fleetcast {

/// Flat `key = value` settings. Lines starting with '#' are comments. Relative
/// paths resolve against the directory of the file they came from.
class RunConfig {
 public:
  RunConfig() = default;

  static RunConfig load(const std::filesystem::path& file);
  static RunConfig parse(const std::string& text, const std::filesystem::path& base_dir = ".");

  /// Command-line overrides win over file values; their paths resolve against
  /// the working directory.
  void set(const std::string& key, const std::string& value) {
    values_[key] = value;
    overrides_.insert(key);
  }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;

  std::string text(const std::string& key, const std::string& fallback) const;
  double number(const std::string& key, double fallback) const;
  std::int64_t integer(const std::string& key, std::int64_t fallback) const;
  bool flag(const std::string& key, bool fallback) const;
  std::vector<std::string> list(const std::string& key, const std::string& fallback) const;

  /// Path value resolved against the config directory; throws when absent.
  std::filesystem::path path(const std::string& key) const;
  /// Same as path() and also requires the file to exist.
  std::filesystem::path existing_path(const std::string& key) const;
  std::optional<std::filesystem::path> optional_path(const std::string& key) const;

  /// Rejects keys outside `known`, naming the first offender.
  void check_known(const std::set<std::string>& known) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  const std::filesystem::path& base_dir() const { return base_dir_; }

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> overrides_;
  std::filesystem::path base_dir_ = ".";
};

}  // namespace fleetcast
