#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cafield::cli {

struct KeyInfo {
  std::string key;
  std::string default_value;
  std::string help;
  std::string provenance;  // "published" for settings taken from the published method
};

/// Every accepted key, in display order.
const std::vector<KeyInfo>& config_keys();

/// Flat key/value configuration. Values are resolved with the precedence
/// command line > config file > built-in default.
class RunConfig {
 public:
  RunConfig();

  /// Throws UsageError for an unknown key.
  void set(const std::string& key, const std::string& value, const std::string& source);

  /// Reads "key = value" lines; blank lines and lines starting with '#' are
  /// skipped. Throws IoError if unreadable, UsageError on a malformed line or
  /// unknown key.
  void load_file(const std::filesystem::path& path);

  const std::string& get(const std::string& key) const;
  const std::string& source(const std::string& key) const;
  bool is_default(const std::string& key) const { return source(key) == "default"; }

  // Typed accessors throw UsageError when the value does not parse.
  std::string str(const std::string& key) const { return get(key); }
  double real(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  std::size_t size(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }
  int integer(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<std::string> list(const std::string& key) const;
  std::vector<double> reals(const std::string& key) const;

 private:
  std::map<std::string, std::pair<std::string, std::string>> values_;  // key -> (value, source)
};

/// Defaults, then the file named by cli["config"] if any, then the remaining
/// command-line values.
RunConfig resolve_config(const std::map<std::string, std::string>& cli);

}  // namespace cafield::cli
