#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mapd {

using Timestep = int;

struct Location {
  int row = 0;
  int col = 0;

  friend constexpr bool operator==(const Location&, const Location&) = default;
  friend constexpr auto operator<=>(const Location&, const Location&) = default;
};

std::string to_string(const Location& loc);  // "row,col"

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

enum class Cell : std::uint8_t { Free, Blocked, TaskEndpoint, NonTaskEndpoint };

// 4-neighbor grid. Cells are addressed either by Location or by a flat
// index (row * width + col); the index form is what the searches use.
class GridMap {
 public:
  GridMap() = default;
  GridMap(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  int size() const { return width_ * height_; }

  bool in_bounds(Location loc) const {
    return loc.row >= 0 && loc.row < height_ && loc.col >= 0 && loc.col < width_;
  }
  int index(Location loc) const { return loc.row * width_ + loc.col; }
  Location location(int idx) const { return {idx / width_, idx % width_}; }

  Cell cell(Location loc) const { return cells_[index(loc)]; }
  Cell cell(int idx) const { return cells_[idx]; }
  void set(Location loc, Cell c);

  bool blocked(Location loc) const { return cell(loc) == Cell::Blocked; }
  bool blocked(int idx) const { return cells_[idx] == Cell::Blocked; }
  bool is_task_endpoint(Location loc) const { return cell(loc) == Cell::TaskEndpoint; }
  bool is_non_task_endpoint(Location loc) const { return cell(loc) == Cell::NonTaskEndpoint; }

  // Sorted row-major.
  std::vector<Location> task_endpoints() const;
  std::vector<Location> non_task_endpoints() const;

  // Unblocked 4-neighbors of idx, written into out; returns count.
  int neighbors(int idx, int out[4]) const;

  friend bool operator==(const GridMap&, const GridMap&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<Cell> cells_;
};

// Map document: "height width" header, then `height` rows of `width`
// characters from {'.', '@', 'e', 'r'}.
GridMap load_map(std::string_view text);
std::string serialize(const GridMap& map);
GridMap load_map_file(const std::string& path);

enum class WarehouseProfile { Small, Medium, Large };

WarehouseProfile parse_profile(std::string_view name);
std::string_view profile_name(WarehouseProfile profile);

// Canonical warehouse layouts.
//
// Columns: each side carries a 6-column endpoint block `e.ee.e` (four
// columns of non-task endpoints, two free lanes); the middle holds the
// shelf strips separated by vertical aisles. Rows: row 0 is an aisle and
// strips repeat with a fixed pitch. SMALL uses a 4-row pitch (task
// endpoint row, shelf, task endpoint row, aisle). MEDIUM and LARGE are
// 2*strips+1 tall, which leaves a 2-row pitch where consecutive strips
// share their endpoint rows. Side endpoint blocks skip every 4th row so
// agents can cross between lanes.
//
//   small  35 x 21,   2 x 5  strips
//   medium 101 x 81,  8 x 40 strips
//   large  187 x 153, 15 x 76 strips
GridMap generate_warehouse(WarehouseProfile profile);

inline constexpr int kUnreachable = std::numeric_limits<int>::max();

// Exact BFS distances. One table per source cell, filled lazily on first
// use and cached for the lifetime of the oracle; concurrent readers are
// safe (each table is filled exactly once).
class DistanceOracle {
 public:
  explicit DistanceOracle(const GridMap& map);

  const GridMap& map() const { return *map_; }

  // Throws std::invalid_argument if either location is blocked or outside
  // the map. Returns kUnreachable for disconnected pairs.
  int distance(Location u, Location v) const;
  int distance(int u, int v) const { return table(u)[v]; }

  // Distances from `source` to every cell (kUnreachable where blocked or
  // disconnected).
  const std::vector<int>& table(int source) const;
  const std::vector<int>& table(Location source) const { return table(map_->index(source)); }

 private:
  struct Slot {
    std::once_flag once;
    std::vector<int> dist;
  };

  const GridMap* map_;
  std::unique_ptr<Slot[]> slots_;
};

// Plain BFS from `source`; kUnreachable where not reachable.
std::vector<int> bfs_distances(const GridMap& map, int source);

struct Task;

struct WellFormedViolation {
  enum class Kind { StartOnTaskEndpoint, DisconnectedPair };
  Kind kind;
  Location a;
  Location b;  // only for DisconnectedPair
};

struct WellFormedReport {
  std::vector<WellFormedViolation> violations;
  bool ok() const { return violations.empty(); }
};

std::string to_string(const WellFormedViolation& v);

// Endpoints are the goal locations of `tasks` plus `agent_starts`.
WellFormedReport check_well_formed(const GridMap& map,
                                   const std::vector<Location>& agent_starts,
                                   const std::vector<Task>& tasks);

}  // namespace mapd
