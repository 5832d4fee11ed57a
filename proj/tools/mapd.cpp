// mapd: run, bench, gen-map, gen-tasks, validate.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "mapd/cli.hpp"

namespace fs = std::filesystem;
using namespace mapd;

namespace {

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// One flag per config key; single-letter keys become short flags.
struct KeyFlags {
  std::map<std::string, std::string> values;
  std::vector<std::string> sets;  // --set key=value

  void attach(CLI::App* app) {
    for (const std::string& key : config_keys()) {
      std::string name = key.size() == 1 ? "-" + key : "--" + key;
      if (key == "agents") name += ",-M";
      app->add_option(name, values[key], "config key '" + key + "'");
    }
    app->add_option("--set", sets, "extra key=value override (repeatable)");
  }

  Overrides overrides(CLI::App* app) const {
    Overrides out;
    for (const std::string& key : config_keys()) {
      const std::string name = key.size() == 1 ? "-" + key : "--" + key;
      if (app->count(name) > 0) out.emplace_back(key, values.at(key));
    }
    for (const std::string& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError(s, "--set expects key=value");
      out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    return out;
  }
};

RunConfig load_config(const std::string& file, const Overrides& overrides) {
  return file.empty() ? parse_config("", overrides) : parse_config_file(file, overrides);
}

int cmd_run(const std::string& config_file, const Overrides& overrides, const std::string& out_flag) {
  const RunConfig cfg = load_config(config_file, overrides);
  const Scenario sc = build_scenario(cfg);
  const fs::path dir = output_directory(cfg.output_dir, out_flag);
  fs::create_directories(dir);

  const SimResult r = simulate(make_sim_config(cfg, sc));
  write_file(dir / "summary.json", summary_json(r));
  write_file(dir / "tasks.csv", tasks_csv(r));
  write_file(dir / "runtime.csv", runtime_csv(r));
  write_file(dir / "map.txt", serialize(*sc.map));
  write_file(dir / "tasks.txt", serialize_tasks(sc.stream.tasks()));
  if (cfg.path_log) write_file(dir / "paths.log", serialize_path_log(r.log));

  std::cout << summary_json(r);
  if (r.status != SimResult::Status::Ok) std::cerr << "error: " << r.message << "\n";
  return exit_code(r);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  return out;
}

int cmd_bench(const std::string& config_file, const Overrides& base, const std::string& out_flag,
              const std::string& variants, const std::string& freqs, const std::string& agent_list,
              const std::string& horizons, const std::string& seeds, int jobs) {
  struct Row {
    std::string variant, f, M, horizon, seed;
    Overrides overrides;
    SimResult result;
    std::string error;
  };
  std::vector<Row> rows;
  const auto hs = horizons.empty() ? std::vector<std::string>{""} : split_list(horizons);
  for (const auto& v : split_list(variants))
    for (const auto& f : split_list(freqs))
      for (const auto& m : split_list(agent_list))
        for (const auto& h : hs)
          for (const auto& s : split_list(seeds)) {
            Row row{v, f, m, h.empty() ? "-" : h, s, base, {}, {}};
            row.overrides.emplace_back("variant", v);
            row.overrides.emplace_back("frequency", f);
            row.overrides.emplace_back("agents", m);
            row.overrides.emplace_back("seed", s);
            if (!h.empty()) {
              row.overrides.emplace_back("setting", "semi_online");
              row.overrides.emplace_back("horizon", h);
            }
            rows.push_back(std::move(row));
          }

  // Validate every row up front and share one map and oracle.
  std::vector<RunConfig> configs;
  for (const Row& row : rows) configs.push_back(load_config(config_file, row.overrides));
  if (configs.empty()) throw ConfigError("", "empty sweep");
  auto map = std::make_shared<const GridMap>(resolve_map(configs.front().map));
  auto oracle = std::make_shared<const DistanceOracle>(*map);
  for (const RunConfig& c : configs)
    if (c.map != configs.front().map) throw ConfigError("map", "a sweep uses a single map");

  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < rows.size(); i = next++) {
      try {
        const Scenario sc = build_scenario(configs[i], map, oracle);
        rows[i].result = simulate(make_sim_config(configs[i], sc));
      } catch (const std::exception& e) {
        rows[i].error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int j = 0; j < std::max(1, jobs); ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::string table = "variant,f,M,horizon,seed,st,rt,makespan,completed,tasks,status\n";
  struct Agg {
    int runs = 0, ok = 0;
    double st = 0, rt = 0;
  };
  std::map<std::tuple<std::string, std::string, std::string, std::string>, Agg> agg;
  std::vector<std::tuple<std::string, std::string, std::string, std::string>> agg_order;
  for (const Row& row : rows) {
    const SimResult& r = row.result;
    std::string status = !row.error.empty() ? "error: " + row.error
                         : r.status == SimResult::Status::Ok ? "ok"
                         : r.status == SimResult::Status::Guard ? "nontermination"
                                                                : "solver_failure";
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    table += row.variant + "," + row.f + "," + row.M + "," + row.horizon + "," + row.seed + "," +
             format_number(r.st) + "," + format_number(r.rt) + "," + std::to_string(r.makespan) +
             "," + std::to_string(r.completed) + "," + std::to_string(r.tasks.size()) + "," +
             status + "\n";
    const auto key = std::make_tuple(row.variant, row.f, row.M, row.horizon);
    if (!agg.count(key)) agg_order.push_back(key);
    Agg& a = agg[key];
    ++a.runs;
    if (row.error.empty() && r.status == SimResult::Status::Ok) {
      ++a.ok;
      a.st += r.st;
      a.rt += r.rt;
    }
  }
  std::string summary = "variant,f,M,horizon,runs,ok,st,rt\n";
  for (const auto& key : agg_order) {
    const Agg& a = agg[key];
    const auto& [v, f, m, h] = key;
    summary += v + "," + f + "," + m + "," + h + "," + std::to_string(a.runs) + "," +
               std::to_string(a.ok) + "," + format_number(a.ok ? a.st / a.ok : 0.0) + "," +
               format_number(a.ok ? a.rt / a.ok : 0.0) + "\n";
  }

  const fs::path dir = output_directory(configs.front().output_dir, out_flag);
  fs::create_directories(dir);
  write_file(dir / "bench.csv", table);
  write_file(dir / "bench_summary.csv", summary);
  std::cout << table << "\n" << summary;
  return 0;
}

int cmd_validate(const std::string& map_file, const std::string& tasks_file,
                 const std::string& log_file) {
  const GridMap map = resolve_map(map_file);
  const auto tasks = load_tasks_file(tasks_file);
  std::vector<AgentLog> log;
  try {
    log = load_path_log(read_file(log_file));
  } catch (const ParseError& e) {
    throw std::runtime_error(log_file + ":" + e.what());
  }
  const ExecutionReport rep = verify_execution(map, tasks, log);
  if (!rep.ok()) {
    const Violation& v = rep.violations.front();
    std::cout << "INVALID " << rep.violations.size() << " violation(s); first: [" << to_string(v.kind)
              << "] " << v.message << "\n";
    return 1;
  }
  std::cout << "VALID completed=" << rep.completed << "/" << rep.tasks.size()
            << " mean_service=" << format_number(rep.mean_service) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lifelong multi-agent pickup-and-delivery: task assignment + path planning"};
  app.require_subcommand(1);

  std::string config_file, out_flag;

  auto* run = app.add_subcommand("run", "simulate one instance");
  run->add_option("--config", config_file, "key=value config file");
  run->add_option("--out", out_flag, "output directory (overrides MAPD_OUTPUT_DIR and output_dir)");
  KeyFlags run_flags;
  run_flags.attach(run);

  auto* bench = app.add_subcommand("bench", "sweep variants, frequencies, team sizes and seeds");
  std::string variants = "lns_pbs", freqs = "2", agent_list = "10", horizons, seeds = "0";
  int jobs = 1;
  bench->add_option("--config", config_file, "base config file");
  bench->add_option("--out", out_flag, "output directory");
  bench->add_option("--variants", variants, "comma-separated variants");
  bench->add_option("--frequencies", freqs, "comma-separated task frequencies");
  bench->add_option("--agent-counts", agent_list, "comma-separated agent counts");
  bench->add_option("--horizons", horizons, "comma-separated look-ahead horizons (semi-online)");
  bench->add_option("--seeds", seeds, "comma-separated seeds");
  bench->add_option("--jobs", jobs, "concurrent runs");
  std::vector<std::string> bench_sets;
  bench->add_option("--set", bench_sets, "key=value override for every run (repeatable)");

  auto* gen_map = app.add_subcommand("gen-map", "write a warehouse map");
  std::string profile, gen_out;
  gen_map->add_option("--profile", profile, "small, medium or large")->required();
  gen_map->add_option("--out", gen_out, "output file (default: stdout)");

  auto* gen_tasks = app.add_subcommand("gen-tasks", "write a task file");
  std::string gt_map = "small";
  TaskGenParams gt;
  gen_tasks->add_option("--map", gt_map, "profile name or map file");
  gen_tasks->add_option("--count", gt.count, "number of tasks")->required();
  gen_tasks->add_option("--frequency", gt.frequency, "tasks per timestep");
  gen_tasks->add_option("--goals-min", gt.goals_min, "fewest goals per task");
  gen_tasks->add_option("--goals-max", gt.goals_max, "most goals per task");
  gen_tasks->add_option("--seed", gt.seed, "random seed");
  gen_tasks->add_option("--out", gen_out, "output file (default: stdout)");

  auto* validate_cmd = app.add_subcommand("validate", "replay a path log and check it");
  std::string v_map, v_tasks, v_log;
  validate_cmd->add_option("--map", v_map, "profile name or map file")->required();
  validate_cmd->add_option("--tasks", v_tasks, "task file")->required();
  validate_cmd->add_option("--log", v_log, "path log")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help is a "successful" parse error; every usage error exits 1.
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(config_file, run_flags.overrides(run), out_flag);
    if (*bench) {
      Overrides base;
      for (const std::string& s : bench_sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError(s, "--set expects key=value");
        base.emplace_back(s.substr(0, eq), s.substr(eq + 1));
      }
      return cmd_bench(config_file, base, out_flag, variants, freqs, agent_list, horizons, seeds,
                       jobs);
    }
    if (*gen_map) {
      const std::string doc = serialize(generate_warehouse(parse_profile(profile)));
      if (gen_out.empty()) std::cout << doc;
      else write_file(gen_out, doc);
      return 0;
    }
    if (*gen_tasks) {
      const GridMap map = resolve_map(gt_map);
      const std::string doc = serialize_tasks(generate_tasks(map, gt).tasks());
      if (gen_out.empty()) std::cout << doc;
      else write_file(gen_out, doc);
      return 0;
    }
    if (*validate_cmd) return cmd_validate(v_map, v_tasks, v_log);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
