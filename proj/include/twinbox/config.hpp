#ifndef TWINBOX_CONFIG_HPP
#define TWINBOX_CONFIG_HPP

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace twinbox {

// Raised for malformed files, unknown keys and unparsable values. `key` names
// the offending entry so the CLI can report it and exit with code 2.
struct ConfigError : std::exception {
  std::string key;
  std::string message;
  ConfigError(std::string k, std::string msg);
  const char* what() const noexcept override { return message.c_str(); }
};

// Flat key=value configuration with [section] headers. Keys are stored as
// "section.key"; '#' and ';' start comments. Later assignments win, which is
// how CLI overrides are merged on top of a file.
class KvConfig {
 public:
  static KvConfig parse(std::istream& in);
  static KvConfig parse_file(const std::string& path);
  static KvConfig parse_string(const std::string& text);

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);
  void merge(const KvConfig& overrides);

  std::string get_str(const std::string& key, const std::string& fallback) const;
  std::string require_str(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;

  // Sorted "key = value" lines; the canonical form that gets hashed and saved.
  std::string canonical() const;

  // FNV-1a over the canonical form.
  std::uint64_t hash() const;

  // Throws ConfigError if a key is present that is not in `known` (exact match
  // or "prefix.*" wildcard).
  void check_known(const std::vector<std::string>& known) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace twinbox

#endif  // TWINBOX_CONFIG_HPP
