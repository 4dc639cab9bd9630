#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace streamgrid {

// Plain-text key=value configuration. '#' starts a comment; values may hold
// several whitespace-separated tokens (vectors, lists).
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config: " + path);
    KeyValueConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      auto h = line.find('#');
      if (h != std::string::npos) line.resize(h);
      std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error(path + " line " + std::to_string(lineno) + ": expected key=value");
      cfg.values_[trim(trimmed.substr(0, eq))] = trim(trimmed.substr(eq + 1));
    }
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }
  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return parse_double(key, it->second);
  }
  int get_int(const std::string& key, int fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return static_cast<int>(parse_double(key, it->second));
  }
  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw std::runtime_error("config key '" + key + "': expected boolean, got '" + v + "'");
  }
  std::vector<double> get_list(const std::string& key, const std::vector<double>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::istringstream ss(it->second);
    std::vector<double> out;
    double v;
    while (ss >> v) out.push_back(v);
    if (out.empty()) throw std::runtime_error("config key '" + key + "': expected numbers");
    return out;
  }

  // Keys present in the file but never listed in `known` indicate typos.
  void check_known(const std::vector<std::string>& known) const {
    for (const auto& [k, v] : values_) {
      bool found = false;
      for (const auto& kk : known)
        if (kk == k) {
          found = true;
          break;
        }
      if (!found) throw std::runtime_error("unknown config key: " + k);
    }
  }

 private:
  static std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
  }
  static double parse_double(const std::string& key, const std::string& v) {
    std::istringstream ss(v);
    double d;
    if (!(ss >> d)) throw std::runtime_error("config key '" + key + "': expected number, got '" + v + "'");
    return d;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace streamgrid
