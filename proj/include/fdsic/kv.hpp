#pragma once
// Flat "key = value [unit]" text files used for profiles and experiment configs.

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "fdsic/units.hpp"

namespace fdsic {

using KeyValues = std::map<std::string, std::string>;

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline KeyValues parse_kv(std::istream& in, const std::string& origin) {
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) eq = line.find(':');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline KeyValues load_kv_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open file: " + path);
  return parse_kv(f, path);
}

// Parses a number, tolerating a trailing dB/dBm unit and "inf".
inline double parse_number(const std::string& raw, const std::string& key) {
  std::string s = trim(raw);
  for (const char* unit : {"dBm", "dB", "mW"}) {
    const std::string u(unit);
    if (s.size() > u.size() && s.compare(s.size() - u.size(), u.size(), u) == 0) {
      s = trim(s.substr(0, s.size() - u.size()));
      break;
    }
  }
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value for '" + key + "': " + raw);
  }
}

}  // namespace fdsic
