#include "mapd/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace mapd {

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "map",       "agents",     "starts",       "start_seed", "tasks",         "task_count",
      "frequency", "goals_min",  "goals_max",    "task_seed",  "setting",       "horizon",
      "variant",   "N",          "C",            "w",          "omega1",        "omega2",
      "lns_budget_ms", "lns_iterations", "seed", "max_timesteps", "path_log",   "output_dir"};
  return keys;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  v = trim(v);
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw ConfigError(std::string(key), "expected a number, got '" + std::string(v) + "'");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  v = trim(v);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(std::string(key), "expected true/false, got '" + std::string(v) + "'");
}

std::vector<Location> parse_locations(std::string_view key, std::string_view v) {
  std::vector<Location> out;
  std::string cleaned(v);
  std::replace(cleaned.begin(), cleaned.end(), ';', ' ');
  std::istringstream in(cleaned);
  std::string tok;
  while (in >> tok) {
    auto comma = tok.find(',');
    if (comma == std::string::npos)
      throw ConfigError(std::string(key), "expected row,col pairs, got '" + tok + "'");
    Location loc;
    loc.row = parse_number<int>(key, std::string_view(tok).substr(0, comma));
    loc.col = parse_number<int>(key, std::string_view(tok).substr(comma + 1));
    out.push_back(loc);
  }
  return out;
}

Setting parse_setting(std::string_view v, int horizon) {
  v = trim(v);
  if (v == "offline") return Setting::offline();
  if (v == "online") return Setting::online();
  if (v == "semi_online") return Setting::semi_online(horizon);
  if (v.starts_with("semi_online(") && v.ends_with(")"))
    return Setting::semi_online(parse_number<int>("setting", v.substr(12, v.size() - 13)));
  throw ConfigError("setting", "expected offline, online or semi_online, got '" + std::string(v) + "'");
}

}  // namespace

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
  const std::string k(trim(key));
  const std::string_view v = trim(value);
  if (k == "map") {
    if (v.empty()) throw ConfigError(k, "empty value");
    cfg.map = std::string(v);
  } else if (k == "agents" || k == "M") {
    cfg.agents = parse_number<int>("agents", v);
  } else if (k == "starts") {
    cfg.starts = v == "random" ? std::vector<Location>{} : parse_locations(k, v);
  } else if (k == "start_seed") {
    cfg.start_seed = parse_number<std::uint64_t>(k, v);
  } else if (k == "tasks") {
    cfg.tasks_file = std::string(v);
  } else if (k == "task_count") {
    cfg.task_count = parse_number<int>(k, v);
  } else if (k == "frequency") {
    cfg.frequency = parse_number<double>(k, v);
  } else if (k == "goals_min") {
    cfg.goals_min = parse_number<int>(k, v);
  } else if (k == "goals_max") {
    cfg.goals_max = parse_number<int>(k, v);
  } else if (k == "task_seed") {
    cfg.task_seed = parse_number<std::uint64_t>(k, v);
  } else if (k == "setting") {
    cfg.setting = parse_setting(v, cfg.setting.horizon);
  } else if (k == "horizon") {
    cfg.setting.horizon = parse_number<int>(k, v);
  } else if (k == "variant") {
    try {
      cfg.variant = parse_variant(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(k, e.what());
    }
  } else if (k == "N") {
    cfg.N = parse_number<int>(k, v);
  } else if (k == "C") {
    cfg.C = parse_number<int>(k, v);
  } else if (k == "w") {
    cfg.w = parse_number<int>(k, v);
  } else if (k == "omega1") {
    cfg.omega1 = parse_number<double>(k, v);
  } else if (k == "omega2") {
    cfg.omega2 = parse_number<double>(k, v);
  } else if (k == "lns_budget_ms") {
    cfg.budget = LnsBudget::milliseconds(parse_number<std::int64_t>(k, v));
  } else if (k == "lns_iterations") {
    cfg.budget = LnsBudget::iterations(parse_number<std::int64_t>(k, v));
  } else if (k == "seed") {
    cfg.seed = parse_number<std::uint64_t>(k, v);
  } else if (k == "max_timesteps") {
    cfg.max_timesteps = parse_number<int>(k, v);
  } else if (k == "path_log") {
    cfg.path_log = parse_bool(k, v);
  } else if (k == "output_dir") {
    cfg.output_dir = std::string(v);
  } else {
    throw ConfigError(k, "unknown key");
  }
}

void validate(const RunConfig& cfg) {
  if (cfg.agents < 1) throw ConfigError("agents", "must be >= 1");
  if (!cfg.starts.empty() && static_cast<int>(cfg.starts.size()) != cfg.agents)
    throw ConfigError("starts", "lists " + std::to_string(cfg.starts.size()) +
                                    " locations for " + std::to_string(cfg.agents) + " agents");
  if (cfg.task_count < 0) throw ConfigError("task_count", "must be >= 0");
  if (!(cfg.frequency > 0)) throw ConfigError("frequency", "must be > 0");
  if (cfg.goals_min < 1) throw ConfigError("goals_min", "must be >= 1");
  if (cfg.goals_max < cfg.goals_min) throw ConfigError("goals_max", "must be >= goals_min");
  if (cfg.setting.horizon < 0) throw ConfigError("horizon", "must be >= 0");
  if (cfg.N < 1) throw ConfigError("N", "must be >= 1");
  if (cfg.C < 1) throw ConfigError("C", "must be >= 1");
  if (cfg.w < 1) throw ConfigError("w", "must be >= 1");
  if (cfg.omega1 < 0) throw ConfigError("omega1", "must be >= 0");
  if (cfg.omega2 < 0) throw ConfigError("omega2", "must be >= 0");
  if (cfg.budget.amount < 0)
    throw ConfigError(cfg.budget.kind == LnsBudget::Kind::Iterations ? "lns_iterations"
                                                                     : "lns_budget_ms",
                      "must be >= 0");
  if (cfg.max_timesteps < 0) throw ConfigError("max_timesteps", "must be >= 0");
}

RunConfig parse_config(std::string_view document, const Overrides& overrides) {
  RunConfig cfg;
  std::set<std::string> seen;
  int line_no = 0;
  for (size_t pos = 0; pos <= document.size();) {
    size_t nl = document.find('\n', pos);
    if (nl == std::string_view::npos) nl = document.size();
    std::string_view line = document.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("", "line " + std::to_string(line_no) + ": expected key = value");
    std::string key(trim(line.substr(0, eq)));
    if (key == "M") key = "agents";
    if (!seen.insert(key).second)
      throw ConfigError(key, "set twice (line " + std::to_string(line_no) + ")");
    apply_setting(cfg, key, line.substr(eq + 1));
  }
  if (seen.count("lns_budget_ms") && seen.count("lns_iterations"))
    throw ConfigError("lns_iterations", "conflicts with lns_budget_ms; set only one budget");
  for (const auto& [key, value] : overrides) apply_setting(cfg, key, value);
  validate(cfg);
  return cfg;
}

RunConfig parse_config_file(const std::string& path, const Overrides& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", "cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

GridMap resolve_map(const std::string& spec) {
  if (spec == "small" || spec == "medium" || spec == "large")
    return generate_warehouse(parse_profile(spec));
  return load_map_file(spec);
}

std::vector<Location> random_starts(const GridMap& map, int count, std::uint64_t seed) {
  auto pool = map.non_task_endpoints();
  if (count > static_cast<int>(pool.size()))
    throw ConfigError("agents", std::to_string(count) + " agents but the map has only " +
                                    std::to_string(pool.size()) + " non-task endpoints");
  Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    const auto j = rng.uniform(i, static_cast<std::int64_t>(pool.size()) - 1);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

Scenario build_scenario(const RunConfig& cfg) {
  auto map = std::make_shared<const GridMap>(resolve_map(cfg.map));
  auto oracle = std::make_shared<const DistanceOracle>(*map);
  return build_scenario(cfg, std::move(map), std::move(oracle));
}

Scenario build_scenario(const RunConfig& cfg, std::shared_ptr<const GridMap> map,
                        std::shared_ptr<const DistanceOracle> oracle) {
  Scenario sc;
  sc.map = std::move(map);
  sc.oracle = std::move(oracle);
  sc.starts = cfg.starts.empty() ? random_starts(*sc.map, cfg.agents, cfg.start_seed.value_or(cfg.seed))
                                 : cfg.starts;
  for (const Location& s : sc.starts)
    if (!sc.map->in_bounds(s) || sc.map->blocked(s))
      throw ConfigError("starts", to_string(s) + " is not a free map cell");
  if (!cfg.tasks_file.empty()) {
    sc.stream = TaskStream(load_tasks_file(cfg.tasks_file), cfg.frequency, cfg.setting);
  } else {
    TaskGenParams p;
    p.count = cfg.task_count;
    p.frequency = cfg.frequency;
    p.goals_min = cfg.goals_min;
    p.goals_max = cfg.goals_max;
    p.seed = cfg.task_seed.value_or(cfg.seed);
    sc.stream = generate_tasks(*sc.map, p, cfg.setting);
  }
  return sc;
}

SimConfig make_sim_config(const RunConfig& cfg, const Scenario& scenario) {
  SimConfig sim;
  sim.oracle = scenario.oracle.get();
  sim.starts = scenario.starts;
  sim.stream = scenario.stream;
  sim.variant = cfg.variant;
  sim.neighborhood = cfg.N;
  sim.max_sequence = cfg.C;
  sim.window = cfg.w;
  sim.weights = {cfg.omega1, cfg.omega2};
  sim.budget = cfg.budget;
  sim.seed = cfg.seed;
  sim.max_timesteps = cfg.max_timesteps;
  return sim;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string summary_json(const SimResult& r) {
  nlohmann::ordered_json j;
  j["st"] = r.st;
  j["rt"] = r.rt;
  j["makespan"] = r.makespan;
  j["completed"] = r.completed;
  j["deferred_events"] = r.deferred_events;
  j["expanded_pt_nodes_total"] = r.expanded_pt_nodes_total;
  j["tasks_total"] = r.tasks.size();
  j["max_pt_nodes_per_call"] = r.max_pt_nodes_per_call;
  j["pruned_pt_nodes"] = r.pruned_pt_nodes;
  j["status"] = r.status == SimResult::Status::Ok              ? "ok"
                : r.status == SimResult::Status::SolverFailure ? "solver_failure"
                                                               : "nontermination";
  if (!r.message.empty()) j["message"] = r.message;
  return j.dump(2) + "\n";
}

std::string tasks_csv(const SimResult& r) {
  std::string out = "task,release,completion,service\n";
  for (const TaskRecord& t : r.tasks) {
    out += std::to_string(t.id) + "," + std::to_string(t.release) + ",";
    if (t.completion >= 0) out += std::to_string(t.completion) + "," + std::to_string(t.service);
    else out += ",";
    out += "\n";
  }
  return out;
}

std::string runtime_csv(const SimResult& r) {
  std::string out = "t,assign_ms,path_ms\n";
  for (const StepRuntime& s : r.runtime)
    out += std::to_string(s.t) + "," + format_number(s.assign_ms) + "," + format_number(s.path_ms) +
           "\n";
  return out;
}

int exit_code(const SimResult& r) {
  switch (r.status) {
    case SimResult::Status::Ok: return 0;
    case SimResult::Status::SolverFailure: return 2;
    case SimResult::Status::Guard: return 3;
  }
  return 2;
}

std::string output_directory(const std::string& configured, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("MAPD_OUTPUT_DIR"); env && *env) return env;
  return configured;
}

}  // namespace mapd
