#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "mapd/assignment.hpp"
#include "mapd/grid_world.hpp"
#include "mapd/pathing.hpp"
#include "mapd/tasking.hpp"

namespace mapd {

enum class Variant { LnsPbs, LnsWpbs };

std::string to_string(Variant v);
Variant parse_variant(std::string_view name);

struct SimConfig {
  const DistanceOracle* oracle = nullptr;
  std::vector<Location> starts;
  TaskStream stream;
  Variant variant = Variant::LnsPbs;
  int neighborhood = 2;   // N
  int max_sequence = 2;   // C
  int window = 10;        // w
  ShawWeights weights;
  LnsBudget budget = LnsBudget::milliseconds(1000);
  std::uint64_t seed = 0;
  Timestep max_timesteps = 0;  // 0: default_guard()
  bool record_plans = false;   // keep every planned path set (tests)
};

// 20x a crude makespan lower bound.
Timestep default_guard(const DistanceOracle& oracle, const TaskStream& stream, int agents);

enum class TaskStatus { Hidden, Pending, Assigned, Executing, Completed };

struct AgentState {
  Location location;
  Location start;
  Location dummy;
  std::vector<TaskId> sequence;
  bool executing = false;  // sequence.front() has started
  int goals_done = 0;
  Timestep execution_start = 0;
  Path path;
  std::vector<ExecutedTask> executed;
  std::vector<std::pair<Timestep, Location>> trace;

  bool is_task_agent() const { return !sequence.empty(); }
};

struct SimState {
  Timestep now = 0;
  std::vector<AgentState> agents;
  std::vector<TaskStatus> status;      // by catalog index
  std::vector<Timestep> completion;    // by catalog index, -1 until done
  std::vector<TaskId> deferred;
  int moved_since_replan = 0;
  bool agent_freed = false;
};

// Tasks the assigner may use now. LNS-PBS leaves out tasks with a goal on
// some agent's current dummy endpoint and reports them in `deferred`.
std::vector<TaskId> eligible_task_set(const SimState& state, const TaskCatalog& catalog,
                                      Variant variant, std::vector<TaskId>* deferred = nullptr);

// One dummy endpoint per agent: task agents first, then free agents.
std::vector<Location> assign_dummy_endpoints(const SimState& state, const TaskCatalog& catalog,
                                             const DistanceOracle& oracle, Variant variant);

class SolverFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TaskRecord {
  TaskId id = 0;
  Timestep release = 0;
  Timestep completion = -1;
  Timestep service = -1;
};

struct StepRuntime {
  Timestep t = 0;
  double assign_ms = 0;
  double path_ms = 0;
};

struct TriggerRecord {
  Timestep t = 0;
  double assign_ms = 0;
  double lns_ms = 0;
  std::int64_t lns_iterations = 0;
  Cost initial_objective = 0;  // after Hungarian insertion
  Cost final_objective = 0;    // after LNS
};

struct PlanEvent {
  enum class Kind { Assignment, WindowReplan };
  Kind kind = Kind::Assignment;
  Timestep time = 0;
  Timestep horizon = kForever;
  std::int64_t expanded = 0;
  std::vector<Path> paths;  // only with record_plans
};

struct SimResult {
  enum class Status { Ok, SolverFailure, Guard };
  Status status = Status::Ok;
  std::string message;

  std::vector<TaskRecord> tasks;  // by id
  std::vector<StepRuntime> runtime;
  std::vector<TriggerRecord> triggers;
  std::vector<PlanEvent> plans;
  std::vector<AgentLog> log;

  double st = 0;
  double rt = 0;
  Timestep makespan = 0;
  int completed = 0;
  std::int64_t deferred_events = 0;
  std::int64_t expanded_pt_nodes_total = 0;
  std::int64_t max_pt_nodes_per_call = 0;
  std::int64_t pruned_pt_nodes = 0;
  std::int64_t pt_bound_violations = 0;  // calls expanding more than M(M-1)+1 nodes
  bool well_formed = false;
};

class Simulation {
 public:
  explicit Simulation(SimConfig config);
  ~Simulation();
  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  const SimState& state() const { return state_; }
  const TaskCatalog& catalog() const { return *catalog_; }
  const SimConfig& config() const { return config_; }

  // Release, assignment and planning for the current timestep. Returns true
  // when everything is done (no move follows). Throws SolverFailure.
  bool begin_step();
  // Moves every agent one step along its path; now advances.
  void move();
  bool finished() const;

  SimResult run();

 private:
  void release();
  void assign();
  void plan(PlanEvent::Kind kind);
  void advance_execution(int agent);
  GoalSpec goal_spec(int agent) const;
  SimResult collect() const;

  SimConfig config_;
  std::unique_ptr<TaskCatalog> catalog_;
  SimState state_;
  Rng rng_;
  Timestep visible_cutoff_ = -1;
  bool new_visible_ = false;
  bool strict_ = false;
  SimResult metrics_;
  StepRuntime current_;
};

SimResult simulate(SimConfig config);

struct Violation {
  enum class Kind { Format, Move, VertexCollision, EdgeCollision, Order, Incomplete };
  Kind kind = Kind::Format;
  Timestep time = -1;
  std::string message;
};

std::string to_string(Violation::Kind k);

struct ExecutionReport {
  std::vector<Violation> violations;
  std::vector<TaskRecord> tasks;  // by id, completion -1 when never completed
  int completed = 0;
  double mean_service = 0;

  bool ok() const { return violations.empty(); }
};

// Replays a path log independently of the solver.
ExecutionReport verify_execution(const GridMap& map, const std::vector<Task>& tasks,
                                 const std::vector<AgentLog>& log);

}  // namespace mapd
