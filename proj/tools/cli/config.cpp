#include "config.hpp"

#include <mechreg/common.hpp>
#include <mechreg/serialize.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace mechreg::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.')) return false;
  return k.front() != '.' && k.back() != '.';
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* b = s.data();
  const char* e = b + s.size();
  if (*b == '+') ++b;
  auto res = std::from_chars(b, e, out);
  return res.ec == std::errc() && res.ptr == e;
}

bool parse_integer(const std::string& s, long long& out) {
  if (s.empty()) return false;
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    if constexpr (std::is_floating_point_v<T>)
      s += format_double(v[i]);
    else
      s += std::to_string(v[i]);
  }
  return s;
}

}  // namespace

Config Config::parse(std::istream& in, const std::string& source) {
  Config c;
  std::string line, section;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(ErrorCode::config, where + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!valid_key(section)) throw Error(ErrorCode::config, where + ": bad section name '" + section + "'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::config, where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string full = section.empty() ? key : section + "." + key;
    if (!valid_key(key)) throw Error(ErrorCode::config, where + ": bad key '" + key + "'");
    if (value.empty()) throw Error(ErrorCode::config, where + ": empty value for '" + full + "'");
    auto [it, inserted] = c.entries_.emplace(full, Entry{value, where, false});
    if (!inserted)
      throw Error(ErrorCode::config, where + ": duplicate key '" + full + "' (first set at " + it->second.origin + ")");
  }
  return c;
}

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::config, "cannot open config file '" + path + "'");
  return parse(in, path);
}

void Config::set_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw Error(ErrorCode::config, "override '" + assignment + "' is not of the form section.key=value");
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  if (!valid_key(key) || value.empty())
    throw Error(ErrorCode::config, "override '" + assignment + "' is not of the form section.key=value");
  entries_[key] = Entry{value, "override '" + assignment + "'", false};
}

const Config::Entry* Config::lookup(const std::string& key) {
  auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  it->second.used = true;
  return &it->second;
}

void Config::fail(const Entry& e, const std::string& key, const std::string& what) const {
  throw Error(ErrorCode::config, e.origin + ": '" + key + "' " + what + " (got '" + e.value + "')");
}

std::string Config::get_string(const std::string& key, const std::string& def) {
  const Entry* e = lookup(key);
  std::string v = e ? e->value : def;
  effective_[key] = v;
  return v;
}

double Config::get_double(const std::string& key, double def) {
  const Entry* e = lookup(key);
  double v = def;
  if (e && !parse_number(e->value, v)) fail(*e, key, "must be a number");
  effective_[key] = format_double(v);
  return v;
}

long long Config::get_int(const std::string& key, long long def) {
  const Entry* e = lookup(key);
  long long v = def;
  if (e && !parse_integer(e->value, v)) fail(*e, key, "must be an integer");
  effective_[key] = std::to_string(v);
  return v;
}

bool Config::get_bool(const std::string& key, bool def) {
  const Entry* e = lookup(key);
  bool v = def;
  if (e) {
    if (e->value == "true" || e->value == "1" || e->value == "yes")
      v = true;
    else if (e->value == "false" || e->value == "0" || e->value == "no")
      v = false;
    else
      fail(*e, key, "must be true or false");
  }
  effective_[key] = v ? "true" : "false";
  return v;
}

std::vector<double> Config::get_doubles(const std::string& key, const std::vector<double>& def) {
  const Entry* e = lookup(key);
  std::vector<double> v = def;
  if (e) {
    v.clear();
    for (const auto& item : split_list(e->value)) {
      double x;
      if (!parse_number(item, x)) fail(*e, key, "must be a comma-separated list of numbers");
      v.push_back(x);
    }
  }
  if (v.empty()) {
    if (e) fail(*e, key, "must not be empty");
    throw Error(ErrorCode::config, "'" + key + "' must not be empty");
  }
  effective_[key] = join(v);
  return v;
}

std::vector<long long> Config::get_ints(const std::string& key, const std::vector<long long>& def) {
  const Entry* e = lookup(key);
  std::vector<long long> v = def;
  if (e) {
    v.clear();
    for (const auto& item : split_list(e->value)) {
      long long x;
      if (!parse_integer(item, x)) fail(*e, key, "must be a comma-separated list of integers");
      v.push_back(x);
    }
  }
  if (v.empty()) {
    if (e) fail(*e, key, "must not be empty");
    throw Error(ErrorCode::config, "'" + key + "' must not be empty");
  }
  effective_[key] = join(v);
  return v;
}

void Config::reject_unused() const {
  for (const auto& [key, e] : entries_)
    if (!e.used) throw Error(ErrorCode::config, e.origin + ": unknown key '" + key + "'");
}

std::string Config::canonical() const {
  std::string s;
  for (const auto& [k, v] : effective_) s += k + " = " + v + "\n";
  return s;
}

std::uint64_t Config::hash(const std::string& command) const {
  std::string s = command + "\n";
  for (const auto& [k, v] : effective_)
    if (std::find(unhashed_.begin(), unhashed_.end(), k) == unhashed_.end()) s += k + " = " + v + "\n";
  return fnv1a(s);
}

}  // namespace mechreg::cli
