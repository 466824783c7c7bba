#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tierkv/cost_model.hpp"
#include "tierkv/elastic_exec.hpp"
#include "tierkv/evaluator.hpp"
#include "tierkv/server.hpp"
#include "tierkv/tier_sync.hpp"

// Flat `section.key = value` configuration. `#` starts a comment line;
// unknown keys are rejected with their line number.
namespace tierkv::config {

// Every accepted key with its default, in file order.
const std::vector<std::pair<std::string, std::string>>& known_keys();
bool is_known_key(std::string_view key);

class Config {
 public:
  Config() = default;

  // Throws kConfigError ("<source>:<line>: ...").
  static Config parse(std::istream& in, const std::string& source = "config");
  static Config parse_string(std::string_view text, const std::string& source = "config");
  static Config load_file(const std::string& path);

  // Throws kConfigError for unknown keys.
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  bool get_bool(const std::string& key) const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::size_t> lines_;
  std::string source_;
};

struct Settings {
  sync::StoreOptions store;
  eval::BackendSpec backend;
  exec::ExecOptions exec;
  // Watermarks set to "auto": derive them from a single-thread
  // calibration run at startup.
  bool calibrate_watermarks = false;
  server::ServerOptions server;
  std::string dict_path;
  eval::EvalConfig eval_config;
  eval::EvalOptions eval_options;
  cost::WorkloadProfile profile;
};

// Resolves every key (defaults for the missing ones) and validates values.
// Throws kConfigError.
Settings resolve(const Config& config);

}  // namespace tierkv::config
