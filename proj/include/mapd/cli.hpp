#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mapd/orchestrator.hpp"

namespace mapd {

// Names the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct RunConfig {
  std::string map = "small";       // profile name or map file
  int agents = 0;                  // M
  std::vector<Location> starts;    // empty: random non-task endpoints
  std::optional<std::uint64_t> start_seed;  // defaults to seed
  std::string tasks_file;          // empty: generated
  int task_count = 0;
  double frequency = 1.0;
  int goals_min = 2;
  int goals_max = 2;
  std::optional<std::uint64_t> task_seed;   // defaults to seed
  Setting setting = Setting::online();
  Variant variant = Variant::LnsPbs;
  int N = 2;
  int C = 2;
  int w = 10;
  double omega1 = 9.0;
  double omega2 = 3.0;
  LnsBudget budget = LnsBudget::milliseconds(1000);
  std::uint64_t seed = 0;
  Timestep max_timesteps = 0;  // 0: default guard
  bool path_log = true;
  std::string output_dir = "out";
};

// Every key accepted by the config file and as a command-line flag.
const std::vector<std::string>& config_keys();

// One `key = value` assignment (aliases: M for agents).
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);

using Overrides = std::vector<std::pair<std::string, std::string>>;

// Key-value document: one `key = value` per line, `#` starts a comment.
// Unset keys keep their defaults; `overrides` (command-line flags) are
// applied last. Validates the result.
RunConfig parse_config(std::string_view document, const Overrides& overrides = {});
RunConfig parse_config_file(const std::string& path, const Overrides& overrides = {});

void validate(const RunConfig& cfg);

// Everything a run needs, built from a config. The oracle refers to `map`;
// both may be shared between scenarios (the oracle is thread-safe).
struct Scenario {
  std::shared_ptr<const GridMap> map;
  std::shared_ptr<const DistanceOracle> oracle;
  std::vector<Location> starts;
  TaskStream stream;
};

// A profile name or a map file path.
GridMap resolve_map(const std::string& spec);
std::vector<Location> random_starts(const GridMap& map, int count, std::uint64_t seed);
Scenario build_scenario(const RunConfig& cfg);
Scenario build_scenario(const RunConfig& cfg, std::shared_ptr<const GridMap> map,
                        std::shared_ptr<const DistanceOracle> oracle);
SimConfig make_sim_config(const RunConfig& cfg, const Scenario& scenario);

// Shortest round-trip decimal, independent of the C locale.
std::string format_number(double v);

std::string summary_json(const SimResult& r);
std::string tasks_csv(const SimResult& r);
std::string runtime_csv(const SimResult& r);

int exit_code(const SimResult& r);  // 0 ok, 2 solver failure, 3 guard

// Output directory: `flag` if given, else $MAPD_OUTPUT_DIR, else `configured`.
std::string output_directory(const std::string& configured, const std::string& flag);

}  // namespace mapd
