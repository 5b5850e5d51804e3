#pragma once

// Minimal INI-style configuration reader: [section] headers, key = value
// pairs, '#' comments. Typed getters throw ConfigError naming the missing or
// malformed field as section.key.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace zdshape {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : data) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class ConfigFile {
 public:
  static ConfigFile parse(std::string text, const std::string& name = "<memory>") {
    ConfigFile cfg;
    cfg.name_ = name;
    cfg.raw_ = std::move(text);
    std::istringstream in(cfg.raw_);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw ConfigError(name + ":" + std::to_string(lineno) + ": unterminated section header");
        section = trim(line.substr(1, line.size() - 2));
        cfg.sections_[section];
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(name + ":" + std::to_string(lineno) + ": expected key = value, got '" +
                          line + "'");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty())
        throw ConfigError(name + ":" + std::to_string(lineno) + ": empty key");
      cfg.sections_[section][key] = value;
    }
    return cfg;
  }

  static ConfigFile load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
  }

  bool has(const std::string& section, const std::string& key) const {
    const auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
  }

  std::string text(const std::string& section, const std::string& key) const {
    const auto s = sections_.find(section);
    if (s == sections_.end() || !s->second.count(key))
      throw ConfigError(name_ + ": missing required field " + section + "." + key);
    return s->second.at(key);
  }

  double number(const std::string& section, const std::string& key) const {
    return to_number(section, key, text(section, key));
  }

  double number_or(const std::string& section, const std::string& key, double fallback) const {
    return has(section, key) ? number(section, key) : fallback;
  }

  long integer(const std::string& section, const std::string& key) const {
    const double v = number(section, key);
    const long n = static_cast<long>(v);
    if (static_cast<double>(n) != v)
      throw ConfigError(name_ + ": field " + section + "." + key + " must be an integer");
    return n;
  }

  long integer_or(const std::string& section, const std::string& key, long fallback) const {
    return has(section, key) ? integer(section, key) : fallback;
  }

  std::string text_or(const std::string& section, const std::string& key,
                      const std::string& fallback) const {
    return has(section, key) ? text(section, key) : fallback;
  }

  std::vector<double> numbers(const std::string& section, const std::string& key) const {
    std::istringstream ss(text(section, key));
    std::vector<double> out;
    std::string tok;
    while (ss >> tok) out.push_back(to_number(section, key, tok));
    if (out.empty())
      throw ConfigError(name_ + ": field " + section + "." + key + " has no values");
    return out;
  }

  const std::string& name() const { return name_; }
  const std::string& raw_text() const { return raw_; }
  std::uint64_t hash() const { return fnv1a(raw_); }
  const std::map<std::string, std::map<std::string, std::string>>& sections() const {
    return sections_;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
  }

  double to_number(const std::string& section, const std::string& key,
                   const std::string& value) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(name_ + ": field " + section + "." + key + " = '" + value +
                        "' is not a number");
    }
  }

  std::string name_;
  std::string raw_;
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace zdshape
