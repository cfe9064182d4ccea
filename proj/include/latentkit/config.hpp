#pragma once

// Flat `key = value` run configuration with typed keys. Unknown keys are
// rejected; every key has a default so the resolved config is complete.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace latentkit {

enum class ValueType { integer, real, text, boolean, choice };

struct ConfigKey {
  std::string name;
  ValueType type;
  std::string default_value;
  std::vector<std::string> choices;  // ValueType::choice only
  std::string help;
};

// Every accepted key, in echo order.
const std::vector<ConfigKey>& config_keys();
const ConfigKey* find_config_key(const std::string& name);

inline constexpr const char* kConfigHeader = "#latentkit-config 1";

class Config {
 public:
  Config();

  // Lines are `key = value`; `#` starts a comment; blank lines are ignored.
  // Errors name `source` and the line.
  static Config parse(std::istream& in, const std::string& source);
  static Config parse_text(const std::string& text, const std::string& source);
  static Config load(const std::string& path);

  // Validates against the key's type. A dotted key `stage.key` records an
  // override that applies only to the named recipe stage.
  void set(const std::string& key, const std::string& value);
  // `key=value` override as given on a command line.
  void set_assignment(const std::string& assignment);
  bool is_set(const std::string& key) const { return explicit_.count(key) > 0; }

  const std::string& text(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  std::size_t size(const std::string& key) const;  // integer >= 0
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;

  // Copy with the stage's overrides applied and all overrides dropped.
  Config for_stage(const std::string& stage) const;
  bool has_stage_overrides() const { return !overrides_.empty(); }

  // Header line, every key in declaration order, then stage overrides.
  void write(std::ostream& out) const;
  void save(const std::string& path) const;
  std::string to_string() const;

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> explicit_;
  std::vector<std::pair<std::string, std::pair<std::string, std::string>>> overrides_;  // stage, key, value
};

}  // namespace latentkit
