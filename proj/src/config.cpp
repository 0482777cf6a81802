#include "ddcsp/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace ddcsp {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void KeyValues::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : items_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  items_.emplace_back(key, value);
}

void KeyValues::set_int(const std::string& key, long v) { set(key, std::to_string(v)); }

void KeyValues::set_double(const std::string& key, double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  set(key, ss.str());
}

void KeyValues::set_bool(const std::string& key, bool v) { set(key, v ? "true" : "false"); }

bool KeyValues::has(const std::string& key) const {
  return get(key).has_value();
}

std::optional<std::string> KeyValues::get(const std::string& key) const {
  for (const auto& [k, v] : items_)
    if (k == key) return v;
  return std::nullopt;
}

std::string KeyValues::get_or(const std::string& key, const std::string& dflt) const {
  auto v = get(key);
  return v ? *v : dflt;
}

long KeyValues::get_int(const std::string& key, long dflt) const {
  auto v = get(key);
  if (!v) return dflt;
  try {
    size_t used = 0;
    long out = std::stol(*v, &used);
    if (used != v->size()) throw std::invalid_argument("");
    return out;
  } catch (...) {
    throw ConfigError(key + ": expected an integer, got '" + *v + "'");
  }
}

double KeyValues::get_double(const std::string& key, double dflt) const {
  auto v = get(key);
  if (!v) return dflt;
  try {
    size_t used = 0;
    double out = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument("");
    return out;
  } catch (...) {
    throw ConfigError(key + ": expected a number, got '" + *v + "'");
  }
}

bool KeyValues::get_bool(const std::string& key, bool dflt) const {
  auto v = get(key);
  if (!v) return dflt;
  std::string s = *v;
  std::transform(s.begin(), s.end(), s.begin(), ::tolower);
  if (s == "1" || s == "true" || s == "on" || s == "yes") return true;
  if (s == "0" || s == "false" || s == "off" || s == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + *v + "'");
}

KeyValues parse_kv_text(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line, section;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    kv.set(key, trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValues load_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_kv_text(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string format_kv_text(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv.items()) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

}  // namespace ddcsp
