#pragma once

#include <chrono>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "mapd/grid_world.hpp"
#include "mapd/tasking.hpp"

namespace mapd {

using Cost = std::int64_t;
inline constexpr Cost kInfiniteCost = std::numeric_limits<Cost>::max() / 4;

class InfeasibleAssignment : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tasks addressable by id. Internally dense: index i is the i-th smallest
// id, so "lower index" and "lower id" order identically. Also caches each
// task's goal-to-goal chain length.
class TaskCatalog {
 public:
  TaskCatalog(std::vector<Task> tasks, const DistanceOracle& oracle);

  size_t size() const { return tasks_.size(); }
  const Task& operator[](TaskId id) const { return tasks_[index_of(id)]; }
  const Task& at_index(int i) const { return tasks_[i]; }
  int index_of(TaskId id) const;
  bool contains(TaskId id) const;

  // Sum of distances between consecutive goals (kUnreachable if broken).
  int chain_length(TaskId id) const { return chain_[index_of(id)]; }
  const std::vector<Task>& tasks() const { return tasks_; }

 private:
  std::vector<Task> tasks_;
  std::vector<int> chain_;
  TaskId min_id_ = 0;
  std::vector<int> dense_;  // id - min_id_ -> index, -1 if absent
};

struct TaskSequence {
  int agent = 0;
  std::vector<TaskId> tasks;
  int executing_prefix = 0;  // 0 or 1; leading tasks LNS may not touch

  friend bool operator==(const TaskSequence&, const TaskSequence&) = default;
};

// Where an agent stands right now and how far it is into the task at the
// head of its sequence (only meaningful when executing_prefix == 1).
struct AgentContext {
  Location location;
  int goals_done = 0;
  Timestep execution_start = 0;
};

struct AssignmentProblem {
  const DistanceOracle* oracle = nullptr;
  const TaskCatalog* catalog = nullptr;
  std::vector<AgentContext> agents;
  Timestep now = 0;

  int agent_count() const { return static_cast<int>(agents.size()); }
};

struct AssignmentState {
  std::vector<TaskSequence> sequences;
  std::vector<TaskId> pool;
  // Per-agent estimated service time, maintained by every operator.
  std::vector<Cost> agent_cost;

  Cost objective() const;
  friend bool operator==(const AssignmentState&, const AssignmentState&) = default;
};

// Sequences hold only the executing prefix; everything else goes to the pool.
AssignmentState make_state(const AssignmentProblem& problem, std::vector<TaskSequence> sequences,
                           std::vector<TaskId> pool);

struct TaskTiming {
  TaskId task = 0;
  Timestep start = 0;       // t(s)
  Timestep completion = 0;  // t(g)
};

struct ScheduleEstimate {
  std::vector<TaskTiming> timings;  // sequence order
  Cost objective = 0;               // sum of completion - release
  bool feasible = true;
};

// Collision-free shortest-path clock: start at `now` at the agent's
// location, reach each task's first goal, wait for release, walk its goals.
ScheduleEstimate estimate_schedule(const AssignmentProblem& problem, const TaskSequence& seq);

// Objective of `seq` with `insert` placed at `position` (no insertion when
// insert < 0). kInfiniteCost if some goal is unreachable.
Cost sequence_cost(const AssignmentProblem& problem, const TaskSequence& seq, TaskId insert = -1,
                   int position = 0);

// Recomputes every agent's cost from scratch.
void refresh_costs(const AssignmentProblem& problem, AssignmentState& state);

class CostMatrix {
 public:
  CostMatrix(int rows, int cols, Cost fill = 0) : rows_(rows), cols_(cols), v_(rows * cols, fill) {}
  CostMatrix(std::initializer_list<std::initializer_list<Cost>> init);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  Cost& operator()(int r, int c) { return v_[r * cols_ + c]; }
  Cost operator()(int r, int c) const { return v_[r * cols_ + c]; }

 private:
  int rows_, cols_;
  std::vector<Cost> v_;
};

// Rows are agents, columns are `candidates`. Entry = estimated completion
// time of the candidate appended to that agent's sequence.
CostMatrix build_cost_matrix(const AssignmentProblem& problem, const AssignmentState& state,
                             std::span<const TaskId> candidates);

struct Matching {
  std::vector<int> col_of_row;  // -1 when unmatched
  Cost total = 0;
};

// Minimum-cost one-to-one matching of size min(rows, cols). Entries equal
// to kInfiniteCost are forbidden; throws InfeasibleAssignment when no
// finite matching of that size exists.
Matching hungarian(const CostMatrix& matrix);

// Repeated rounds of cost matrix + Hungarian, each appending at most one
// task per agent, until the pool is empty.
int hungarian_insertion(const AssignmentProblem& problem, AssignmentState& state);

// Per-task t(s), t(g) for every task currently in a sequence, indexed by
// catalog index (task == -1 for absent entries).
std::vector<TaskTiming> schedule_table(const AssignmentProblem& problem,
                                       const AssignmentState& state);

struct ShawWeights {
  double spatial = 9.0;   // omega_1
  double temporal = 3.0;  // omega_2
};

double relatedness(const AssignmentProblem& problem, TaskId a, TaskId b,
                   std::span<const TaskTiming> schedule, ShawWeights weights);

// Removes a random non-executing task and its N-1 most related peers.
// Returns the removed ids (seed task first, then by decreasing relatedness).
std::vector<TaskId> shaw_removal(const AssignmentProblem& problem, AssignmentState& state,
                                 int neighborhood, ShawWeights weights, Rng& rng);

struct InsertionEvaluation {
  TaskId task = 0;
  Cost best = kInfiniteCost;    // f^(1)
  Cost second = kInfiniteCost;  // f^(2)
  int best_agent = -1;
  int best_position = -1;

  Cost regret() const;  // kInfiniteCost if only one finite position
};

InsertionEvaluation evaluate_insertion(const AssignmentProblem& problem,
                                       const AssignmentState& state, TaskId task);

void regret_reinsertion(const AssignmentProblem& problem, AssignmentState& state,
                        std::vector<TaskId> removed);

struct LnsBudget {
  enum class Kind { Iterations, WallClockMs };
  Kind kind = Kind::WallClockMs;
  std::int64_t amount = 1000;

  static LnsBudget iterations(std::int64_t n) { return {Kind::Iterations, n}; }
  static LnsBudget milliseconds(std::int64_t ms) { return {Kind::WallClockMs, ms}; }
};

struct LnsParams {
  int neighborhood = 2;  // N
  ShawWeights weights;
};

struct LnsStats {
  std::int64_t iterations = 0;
  std::int64_t accepted = 0;
  Cost initial = 0;
  Cost final = 0;
  double elapsed_ms = 0;
};

// Anytime improvement: Shaw removal + regret re-insertion, keep a
// neighborhood only if it lowers the objective. A wall-clock budget is
// always used in full.
LnsStats lns_improve(const AssignmentProblem& problem, AssignmentState& state, LnsBudget budget,
                     const LnsParams& params, Rng& rng);

// Keeps the first `max_size` tasks of every sequence; returns the cut
// suffixes (agent order, then sequence order).
std::vector<TaskId> truncate(const AssignmentProblem& problem, AssignmentState& state,
                             int max_size);

}  // namespace mapd
