#include "flap/kv_config.hpp"

#include <sstream>

#include "flap/error.hpp"

namespace flap {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::vector<KeyValue> parse_kv(std::string_view text) {
  std::vector<KeyValue> out;
  std::istringstream in{std::string(text)};
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) throw ConfigError("config line " + std::to_string(lineno) + ": bad section header");
      section = trim(std::string_view(t).substr(1, t.size() - 2)) + ".";
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    out.push_back({section + key, trim(std::string_view(t).substr(eq + 1)), lineno});
  }
  return out;
}

}  // namespace flap
