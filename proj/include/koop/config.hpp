#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace koop {

struct ConfigKey {
  std::string key;            // "section.name"
  std::string default_value;  // desk-scale default
  std::string paper_value;    // default under paper_scale (empty = same)
  std::string unit;
  std::string doc;
};

// Declarative run configuration: one INI-style file ([section], key =
// value, # comments), every key defaulted and documented, unknown keys
// rejected. `paper_scale = true` switches the marked sampling/training
// defaults to the published protocol values; explicit settings always
// win.
class RunConfig {
 public:
  static const std::vector<ConfigKey>& registry();
  static std::string describe_keys();  // --help listing

  static RunConfig defaults();
  static RunConfig load(const std::string& path);
  static RunConfig from_text(const std::string& text);

  void set(const std::string& key, const std::string& value);
  bool is_set(const std::string& key) const;  // explicitly set by the user

  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t get_seed(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;

  bool paper_scale() const;

  // Full key=value dump in registry order; written into every run
  // directory as resolved.cfg.
  std::string resolved_text() const;

 private:
  std::string resolve(const std::string& key) const;
  std::map<std::string, std::string> values_;  // explicitly set keys
};

// "t:v;t:v" schedules and "t:v1,v2;..." input schedules.
struct Schedule {
  std::vector<double> times;
  std::vector<std::vector<double>> values;
};
Schedule parse_schedule(const std::string& text, int expected_values);

}  // namespace koop
