#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mapd/grid_world.hpp"

namespace mapd {

inline constexpr Timestep kForever = std::numeric_limits<Timestep>::max() / 2;

// cells[i] is the location at start_time + i; the agent stays at
// cells.back() forever afterwards.
struct Path {
  Timestep start_time = 0;
  std::vector<Location> cells;

  Location at(Timestep t) const {
    if (t <= start_time) return cells.front();
    const auto i = static_cast<size_t>(t - start_time);
    return i < cells.size() ? cells[i] : cells.back();
  }
  Timestep end_time() const { return start_time + static_cast<Timestep>(cells.size()) - 1; }
  bool empty() const { return cells.empty(); }

  static Path stay(Location loc, Timestep t) { return Path{t, {loc}}; }
  // Same trajectory, starting at `t` (t >= start_time).
  Path suffix_from(Timestep t) const;

  friend bool operator==(const Path&, const Path&) = default;
};

struct GoalEntry {
  Location location;
  Timestep earliest = 0;  // may not be serviced before this timestep

  friend bool operator==(const GoalEntry&, const GoalEntry&) = default;
};

// Goals in visiting order; the last entry is the parking spot.
using GoalSpec = std::vector<GoalEntry>;

struct Collision {
  enum class Kind { Vertex, Edge };
  Kind kind = Kind::Vertex;
  int a = 0;  // a < b
  int b = 0;
  Timestep time = 0;      // vertex: both at `first` at time; edge: swap during [time, time+1]
  Location first;         // a's location at `time`
  Location second;        // edge only: a's location at time+1

  friend bool operator==(const Collision&, const Collision&) = default;
};

std::string to_string(const Collision& c);

// Vertex collisions at t < horizon and edge collisions on moves t -> t+1
// with t + 1 < horizon, including against stay-forever tails. Sorted by
// (time, a, b, kind).
std::vector<Collision> detect_collisions(std::span<const Path> paths, Timestep horizon = kForever);

std::optional<Collision> first_collision(std::span<const Path* const> paths,
                                         Timestep horizon = kForever);

bool paths_collide(const Path& x, const Path& y, Timestep horizon = kForever);

// Occupancy of a set of hard paths, relative to a search that starts at
// `base`. Reused across searches to avoid reallocating.
class ReservationTable {
 public:
  explicit ReservationTable(const GridMap& map) : map_(&map) {}

  // hold_tails: a path's final cell stays blocked past the horizon too.
  void build(std::span<const Path* const> hard, Timestep base, Timestep horizon,
             bool hold_tails = false);

  bool vertex_blocked(int cell, Timestep t) const;
  // Moving from -> to during [t, t+1] swaps with some hard path.
  bool edge_blocked(int from, int to, Timestep t) const;
  // Last timestep (< horizon) at which `cell` is occupied; -1 if never,
  // kForever if a tail holds it for good.
  Timestep last_busy(int cell) const;
  // From this timestep on, occupancy no longer changes.
  Timestep settled_from() const { return settled_; }
  Timestep horizon() const { return horizon_; }

 private:
  int dir_bit(int from, int to) const;

  const GridMap* map_;
  Timestep base_ = 0;
  Timestep end_ = 0;  // layers cover [base_, end_)
  Timestep horizon_ = kForever;
  Timestep settled_ = 0;
  bool hold_tails_ = false;
  std::vector<std::uint8_t> layers_;
  std::vector<Timestep> tail_from_;
  std::vector<Timestep> last_busy_;
  std::vector<int> touched_;
};

struct SearchStats {
  std::int64_t expanded = 0;
  std::int64_t generated = 0;
};

struct AStarOptions {
  Timestep horizon = kForever;
  std::int64_t expansion_limit = 20'000'000;
};

// Time-minimal path from (start, start_time) visiting goals in order, each
// no earlier than its earliest time, and ending where it can stay forever,
// without colliding with any reserved path. nullopt when none exists.
std::optional<Path> multi_goal_astar(const DistanceOracle& oracle, Location start,
                                     Timestep start_time, const GoalSpec& goals,
                                     const ReservationTable& reservations,
                                     const AStarOptions& options = {},
                                     SearchStats* stats = nullptr);

std::optional<Path> multi_goal_astar(const DistanceOracle& oracle, Location start,
                                     Timestep start_time, const GoalSpec& goals,
                                     std::span<const Path* const> hard_paths,
                                     const AStarOptions& options = {},
                                     SearchStats* stats = nullptr);

enum class PbsMode {
  Modified,  // low level also avoids old paths of agents not ranked higher
  Original,  // low level avoids only higher-priority agents
};

class PbsInvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct PbsProblem {
  const DistanceOracle* oracle = nullptr;
  Timestep now = 0;
  std::vector<Location> starts;
  std::vector<GoalSpec> goals;
  std::vector<Path> old_paths;  // Modified mode only; must be collision-free
  PbsMode mode = PbsMode::Modified;
  Timestep horizon = kForever;
  // Modified mode: throw PbsInvariantViolation instead of pruning.
  bool strict = false;
  // Windowed: parked agents block their cell beyond the horizon in the low level.
  bool hold_tails = false;
  std::int64_t node_limit = 1'000'000;
};

struct PbsResult {
  bool success = false;
  std::vector<Path> paths;
  std::int64_t expanded = 0;
  std::int64_t generated = 0;
  std::int64_t pruned = 0;
  std::int64_t low_level_calls = 0;
  std::string failure;
};

PbsResult pbs(const PbsProblem& problem);

// Original-mode PBS that resolves collisions only on timesteps now..now+w.
PbsResult wpbs(const DistanceOracle& oracle, Timestep now, std::vector<Location> starts,
               std::vector<GoalSpec> goals, int window, bool hold_tails = true);

// Saturates at kForever, so a huge window means no window at all.
inline Timestep window_horizon(Timestep now, int window) {
  return window >= kForever - now - 1 ? kForever : now + window + 1;
}

struct ExecutedTask {
  int id = 0;
  Timestep start = 0;  // timestep its first goal was serviced

  friend bool operator==(const ExecutedTask&, const ExecutedTask&) = default;
};

// Path log: per agent `agent <id>:` followed by `t row,col` lines and an
// optional `tasks <id>@<start> ...` line listing the tasks it executed, in
// order, with the timestep each one started.
struct AgentLog {
  int agent = 0;
  std::vector<std::pair<Timestep, Location>> steps;
  std::vector<ExecutedTask> tasks;
};

std::string serialize_path_log(const std::vector<AgentLog>& log);
std::vector<AgentLog> load_path_log(std::string_view text);

}  // namespace mapd
