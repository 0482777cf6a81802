#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ddcsp {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Ordered key=value pairs. Parsed from flat text with optional [section]
// headers; keys inside a section are stored as "section.key".
class KeyValues {
 public:
  void set(const std::string& key, const std::string& value);
  void set_int(const std::string& key, long v);
  void set_double(const std::string& key, double v);
  void set_bool(const std::string& key, bool v);

  bool has(const std::string& key) const;
  std::optional<std::string> get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& dflt) const;
  long get_int(const std::string& key, long dflt) const;
  double get_double(const std::string& key, double dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;

  const std::vector<std::pair<std::string, std::string>>& items() const { return items_; }

 private:
  std::vector<std::pair<std::string, std::string>> items_;
};

KeyValues parse_kv_text(const std::string& text);
KeyValues load_kv_file(const std::string& path);
std::string format_kv_text(const KeyValues& kv);

}  // namespace ddcsp
