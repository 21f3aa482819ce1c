#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "deconvparse/network.hpp"

namespace deconvparse {

// Flat key=value run configuration. '#' starts a comment; unknown keys are
// rejected with the offending line number.
class RunConfig {
 public:
  static RunConfig parse(const std::string& text);
  static RunConfig parse_file(const std::string& path);

  bool has(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;
  std::vector<std::int64_t> get_int_list(const std::string& key) const;
  std::vector<std::string> get_string_list(const std::string& key) const;

  // Throws ConfigError naming the key if it was never set and has no
  // default.
  void require(const std::string& key) const;

  // Assembles the architecture/training configuration from the flat keys.
  NetworkConfig network_config() const;

  void set(const std::string& key, const std::string& value);  // validated

  static const std::vector<std::string>& known_keys();

 private:
  const std::string& raw(const std::string& key) const;
  std::map<std::string, std::string> values_;
};

}  // namespace deconvparse
