#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <string>
#include <vector>

namespace mechreg::cli {

/// Flat `key = value` configuration with `[section]` headers.
///
/// Keys are addressed as `section.key`. Every getter takes the default used
/// when the key is absent and records the effective value, so the canonical
/// text (and its hash) covers defaults too. Errors name the file and line.
class Config {
 public:
  static Config parse(std::istream& in, const std::string& source);
  static Config parse_file(const std::string& path);

  /// `section.key=value` from the command line; replaces file values.
  void set_override(const std::string& assignment);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& def);
  double get_double(const std::string& key, double def);
  long long get_int(const std::string& key, long long def);
  bool get_bool(const std::string& key, bool def);
  /// Comma-separated list; must be non-empty.
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& def);
  std::vector<long long> get_ints(const std::string& key, const std::vector<long long>& def);

  /// Throws for keys that no getter asked for (typos, stale options).
  void reject_unused() const;

  /// Keys that do not change results (output location, worker count) stay
  /// out of the hash so reruns elsewhere produce identical files.
  void exclude_from_hash(const std::string& key) { unhashed_.push_back(key); }

  /// Sorted `key = value` lines of every consulted key.
  std::string canonical() const;
  std::uint64_t hash(const std::string& command) const;

 private:
  struct Entry {
    std::string value;
    std::string origin;  // "file:line" or "override"
    bool used = false;
  };
  const Entry* lookup(const std::string& key);
  [[noreturn]] void fail(const Entry& e, const std::string& key, const std::string& what) const;

  std::map<std::string, Entry> entries_;
  std::map<std::string, std::string> effective_;
  std::vector<std::string> unhashed_;
};

}  // namespace mechreg::cli
