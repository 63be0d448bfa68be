#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fprl::config {

/// User-facing configuration mistakes: unknown keys, unparsable values,
/// invalid enum choices. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Flat `key = value` configuration with a closed key set.
///
/// Every key has a default, so an empty config is a fully runnable one.
/// Setting a key outside the registry throws ConfigError naming the key;
/// silent typo-absorption is exactly what this is meant to prevent.
class RunConfig {
 public:
  RunConfig();  // all defaults

  /// Parses a config file: blank lines and #-comments skipped, one
  /// `key = value` pair per line.
  static RunConfig from_file(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);

  /// Applies a single "key=value" override (the CLI --set form).
  void apply_override(const std::string& assignment);

  bool is_known(const std::string& key) const;

  const std::string& get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  /// Comma-separated list of doubles; empty value gives an empty vector.
  std::vector<double> get_double_list(const std::string& key) const;

  /// Deterministic dump, sorted by key, parseable by from_file.
  void write(std::ostream& out) const;

  static const std::map<std::string, std::string>& defaults();

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace fprl::config
