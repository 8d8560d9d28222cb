#pragma once

// Flat key=value run configuration: a file, then command-line overrides.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sdcm::cli {

/// Bad key, bad value or missing input; always exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string_view strip(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto piece = strip(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (!piece.empty()) out.emplace_back(piece);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

class RunConfig {
 public:
  /// Lines are key=value; blank lines and lines starting with # are skipped.
  void load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
      ++number;
      const auto text = strip(line);
      if (text.empty() || text.front() == '#') continue;
      try {
        set(text);
      } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ":" + std::to_string(number) + ": " + e.what());
      }
    }
  }

  void set(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected key=value, got '" + std::string(assignment) + "'");
    const auto key = strip(assignment.substr(0, eq));
    if (key.empty()) throw ConfigError("empty key in '" + std::string(assignment) + "'");
    values_[std::string(key)] = std::string(strip(assignment.substr(eq + 1)));
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  void require_known(const std::set<std::string>& allowed, std::string_view command) const {
    for (const auto& [key, value] : values_)
      if (!allowed.contains(key)) throw ConfigError("unknown key '" + key + "' for command " + std::string(command));
  }

  bool has(const std::string& key) const { return values_.contains(key); }

  std::string text(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double real(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : parse_real(key, it->second);
  }

  template <class Int>
  Int integer(const std::string& key, Int fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return parse_integer<Int>(key, it->second);
  }

  bool flag(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "1" || it->second == "true" || it->second == "yes") return true;
    if (it->second == "0" || it->second == "false" || it->second == "no") return false;
    throw ConfigError("key '" + key + "' expects a boolean, got '" + it->second + "'");
  }

  std::vector<double> reals(const std::string& key, const std::vector<double>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<double> out;
    for (const auto& piece : split_list(it->second)) out.push_back(parse_real(key, piece));
    if (out.empty()) throw ConfigError("key '" + key + "' needs at least one value");
    return out;
  }

  template <class Int>
  std::vector<Int> integers(const std::string& key, const std::vector<Int>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<Int> out;
    for (const auto& piece : split_list(it->second)) out.push_back(parse_integer<Int>(key, piece));
    if (out.empty()) throw ConfigError("key '" + key + "' needs at least one value");
    return out;
  }

  std::vector<std::string> list(const std::string& key, const std::string& fallback) const {
    auto out = split_list(text(key, fallback));
    if (out.empty()) throw ConfigError("key '" + key + "' needs at least one value");
    return out;
  }

  /// A path that must already exist.
  std::filesystem::path input(const std::string& key, const std::filesystem::path& fallback = {}) const {
    std::filesystem::path p = has(key) ? std::filesystem::path(text(key, "")) : fallback;
    if (p.empty()) throw ConfigError("missing required key '" + key + "'");
    if (!std::filesystem::exists(p)) throw ConfigError("key '" + key + "': no such file " + p.string());
    return p;
  }

 private:
  static double parse_real(const std::string& key, const std::string& value) {
    double out = 0.0;
    const auto* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) throw ConfigError("key '" + key + "' expects a number, got '" + value + "'");
    return out;
  }

  template <class Int>
  static Int parse_integer(const std::string& key, const std::string& value) {
    Int out{};
    const auto* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) throw ConfigError("key '" + key + "' expects an integer, got '" + value + "'");
    return out;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace sdcm::cli
