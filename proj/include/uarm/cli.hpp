#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uarm/kinematic_config.hpp"
#include "uarm/mapping_engine.hpp"

namespace uarm {

// Settings shared by every subcommand, merged from defaults, a JSON file
// (--config), UARM_* environment variables and flags, in that order.
struct CliConfig {
  std::string config_id = "config1";
  std::string source = "virtual";  // serial | mock | virtual
  std::string backend = "sim";     // sim | loopback | tcp://host:port
  std::string bind = "127.0.0.1:8787";
  double tau = 0.5;
  int n = 5;
  double alpha = 0.3;
  double rate = 50.0;
  double vmax = 90.0;
  std::string data_dir = "data/episodes";
  std::string descriptor_file;  // optional override of the built-in descriptor

  friend bool operator==(const CliConfig&, const CliConfig&) = default;
};

// One layer of settings; unset fields fall through to the layer below.
struct CliLayer {
  std::optional<std::string> config_id;
  std::optional<std::string> source;
  std::optional<std::string> backend;
  std::optional<std::string> bind;
  std::optional<double> tau;
  std::optional<int> n;
  std::optional<double> alpha;
  std::optional<double> rate;
  std::optional<double> vmax;
  std::optional<std::string> data_dir;
  std::optional<std::string> descriptor_file;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

EnvLookup process_env();

// Keys: config_id, source, backend, bind, tau, N, alpha, rate, vmax, data_dir,
// descriptor_file.
// Unknown keys or wrong types throw ConfigError.
CliLayer layer_from_json(const nlohmann::json& doc);
CliLayer layer_from_file(const std::filesystem::path& path);
// UARM_CONFIG_ID, UARM_SOURCE, UARM_BACKEND, UARM_BIND, UARM_TAU, UARM_N,
// UARM_ALPHA, UARM_RATE, UARM_VMAX, UARM_DATA_DIR, UARM_DESCRIPTOR_FILE.
CliLayer layer_from_env(const EnvLookup& env);

void apply_layer(CliConfig& config, const CliLayer& layer);

// Merges the layers over the defaults and validates the result
// (throws ConfigError or ConfigNotFound).
CliConfig resolve_config(const CliLayer& file, const CliLayer& env, const CliLayer& flags);
void validate(const CliConfig& config);

// Same keys as the JSON settings file; tau = inf is written as "inf".
nlohmann::json settings_to_json(const CliConfig& config);

MappingParams mapping_params(const CliConfig& config);
ConfigDescriptor descriptor(const CliConfig& config);

struct BindAddress {
  std::string host;
  std::uint16_t port = 0;
};
BindAddress parse_bind(const std::string& text);

// Entry point. `args` excludes the program name. Returns 0 (ok),
// 1 (runtime failure) or 2 (usage error).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env);
int run(int argc, char** argv);

}  // namespace uarm
