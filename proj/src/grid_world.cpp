#include "mapd/grid_world.hpp"

#include <algorithm>
#include <charconv>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

#include "mapd/tasking.hpp"

namespace mapd {

std::string to_string(const Location& loc) {
  return std::to_string(loc.row) + "," + std::to_string(loc.col);
}

GridMap::GridMap(int width, int height)
    : width_(width), height_(height), cells_(static_cast<size_t>(width) * height, Cell::Free) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("map dimensions must be positive");
}

void GridMap::set(Location loc, Cell c) {
  if (!in_bounds(loc)) throw std::out_of_range("location " + to_string(loc) + " outside map");
  cells_[index(loc)] = c;
}

std::vector<Location> GridMap::task_endpoints() const {
  std::vector<Location> out;
  for (int i = 0; i < size(); ++i)
    if (cells_[i] == Cell::TaskEndpoint) out.push_back(location(i));
  return out;
}

std::vector<Location> GridMap::non_task_endpoints() const {
  std::vector<Location> out;
  for (int i = 0; i < size(); ++i)
    if (cells_[i] == Cell::NonTaskEndpoint) out.push_back(location(i));
  return out;
}

int GridMap::neighbors(int idx, int out[4]) const {
  int n = 0;
  const int r = idx / width_;
  const int c = idx % width_;
  // Fixed order: up, left, right, down. Search tie-breaking depends on it.
  if (r > 0 && !blocked(idx - width_)) out[n++] = idx - width_;
  if (c > 0 && !blocked(idx - 1)) out[n++] = idx - 1;
  if (c + 1 < width_ && !blocked(idx + 1)) out[n++] = idx + 1;
  if (r + 1 < height_ && !blocked(idx + width_)) out[n++] = idx + width_;
  return n;
}

namespace {

bool parse_int(std::string_view s, int& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(pos));
      break;
    }
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return lines;
}

}  // namespace

GridMap load_map(std::string_view text) {
  auto lines = split_lines(text);
  if (lines.empty()) throw ParseError(1, "missing header");

  std::string_view header = lines[0];
  auto sp = header.find(' ');
  int height = 0, width = 0;
  if (sp == std::string_view::npos || !parse_int(header.substr(0, sp), height) ||
      !parse_int(header.substr(sp + 1), width) || height <= 0 || width <= 0)
    throw ParseError(1, "header must be \"height width\" with positive integers");

  if (static_cast<int>(lines.size()) - 1 < height)
    throw ParseError(static_cast<int>(lines.size()) + 1,
                     "expected " + std::to_string(height) + " rows, found " +
                         std::to_string(lines.size() - 1));
  if (static_cast<int>(lines.size()) - 1 > height)
    throw ParseError(height + 2, "unexpected content after last row");

  GridMap map(width, height);
  for (int r = 0; r < height; ++r) {
    std::string_view row = lines[r + 1];
    const int line_no = r + 2;
    if (static_cast<int>(row.size()) != width)
      throw ParseError(line_no, "row has " + std::to_string(row.size()) + " cells, expected " +
                                    std::to_string(width));
    for (int c = 0; c < width; ++c) {
      Cell cell;
      switch (row[c]) {
        case '.': cell = Cell::Free; break;
        case '@': cell = Cell::Blocked; break;
        case 'e': cell = Cell::TaskEndpoint; break;
        case 'r': cell = Cell::NonTaskEndpoint; break;
        default:
          throw ParseError(line_no, std::string("unknown cell character '") + row[c] + "'");
      }
      map.set({r, c}, cell);
    }
  }
  return map;
}

std::string serialize(const GridMap& map) {
  std::string out = std::to_string(map.height()) + " " + std::to_string(map.width()) + "\n";
  out.reserve(out.size() + static_cast<size_t>(map.height()) * (map.width() + 1));
  for (int r = 0; r < map.height(); ++r) {
    for (int c = 0; c < map.width(); ++c) {
      switch (map.cell(Location{r, c})) {
        case Cell::Free: out += '.'; break;
        case Cell::Blocked: out += '@'; break;
        case Cell::TaskEndpoint: out += 'e'; break;
        case Cell::NonTaskEndpoint: out += 'r'; break;
      }
    }
    out += '\n';
  }
  return out;
}

GridMap load_map_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open map file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return load_map(ss.str());
  } catch (const ParseError& e) {
    throw std::runtime_error(path + ":" + e.what());
  }
}

WarehouseProfile parse_profile(std::string_view name) {
  if (name == "small") return WarehouseProfile::Small;
  if (name == "medium") return WarehouseProfile::Medium;
  if (name == "large") return WarehouseProfile::Large;
  throw std::invalid_argument("unknown warehouse profile '" + std::string(name) + "'");
}

std::string_view profile_name(WarehouseProfile profile) {
  switch (profile) {
    case WarehouseProfile::Small: return "small";
    case WarehouseProfile::Medium: return "medium";
    case WarehouseProfile::Large: return "large";
  }
  return "?";
}

namespace {

constexpr int kStripLength = 10;
constexpr int kSideWidth = 6;
constexpr bool kSideEndpointColumn[kSideWidth] = {true, false, true, true, false, true};

struct Layout {
  int width, height, strip_cols, strip_rows;
};

Layout layout_for(WarehouseProfile profile) {
  switch (profile) {
    case WarehouseProfile::Small: return {35, 21, 2, 5};
    case WarehouseProfile::Medium: return {101, 81, 8, 40};
    case WarehouseProfile::Large: return {187, 153, 15, 76};
  }
  throw std::logic_error("bad profile");
}

}  // namespace

GridMap generate_warehouse(WarehouseProfile profile) {
  const Layout L = layout_for(profile);
  GridMap map(L.width, L.height);

  for (int r = 0; r < L.height; ++r) {
    if (r % 4 == 0) continue;  // crossing row
    for (int k = 0; k < kSideWidth; ++k) {
      if (!kSideEndpointColumn[k]) continue;
      map.set({r, k}, Cell::NonTaskEndpoint);
      map.set({r, L.width - 1 - k}, Cell::NonTaskEndpoint);
    }
  }

  const int middle = L.width - 2 * kSideWidth;
  const int gaps = L.strip_cols + 1;
  const int aisle_total = middle - kStripLength * L.strip_cols;
  const int base = aisle_total / gaps;
  const int extra = aisle_total % gaps;

  std::vector<int> strip_left;
  int col = kSideWidth;
  for (int g = 0; g < L.strip_cols; ++g) {
    col += base + (g < extra ? 1 : 0);
    strip_left.push_back(col);
    col += kStripLength;
  }

  const int pitch = (L.height - 1) / L.strip_rows;
  for (int s = 0; s < L.strip_rows; ++s) {
    const int shelf_row = pitch == 4 ? 2 + 4 * s : 1 + 2 * s;
    for (int left : strip_left) {
      for (int c = left; c < left + kStripLength; ++c) {
        map.set({shelf_row - 1, c}, Cell::TaskEndpoint);
        map.set({shelf_row, c}, Cell::Blocked);
        map.set({shelf_row + 1, c}, Cell::TaskEndpoint);
      }
    }
  }
  return map;
}

std::vector<int> bfs_distances(const GridMap& map, int source) {
  std::vector<int> dist(map.size(), kUnreachable);
  if (map.blocked(source)) return dist;
  std::vector<int> queue;
  queue.reserve(map.size());
  dist[source] = 0;
  queue.push_back(source);
  int nb[4];
  for (size_t head = 0; head < queue.size(); ++head) {
    const int u = queue[head];
    const int n = map.neighbors(u, nb);
    for (int i = 0; i < n; ++i) {
      if (dist[nb[i]] == kUnreachable) {
        dist[nb[i]] = dist[u] + 1;
        queue.push_back(nb[i]);
      }
    }
  }
  return dist;
}

DistanceOracle::DistanceOracle(const GridMap& map)
    : map_(&map), slots_(std::make_unique<Slot[]>(map.size())) {}

const std::vector<int>& DistanceOracle::table(int source) const {
  Slot& slot = slots_[source];
  std::call_once(slot.once, [&] { slot.dist = bfs_distances(*map_, source); });
  return slot.dist;
}

int DistanceOracle::distance(Location u, Location v) const {
  if (!map_->in_bounds(u) || !map_->in_bounds(v))
    throw std::invalid_argument("distance query outside map");
  if (map_->blocked(u) || map_->blocked(v))
    throw std::invalid_argument("distance query on blocked cell " +
                                to_string(map_->blocked(u) ? u : v));
  return table(map_->index(u))[map_->index(v)];
}

std::string to_string(const WellFormedViolation& v) {
  if (v.kind == WellFormedViolation::Kind::StartOnTaskEndpoint)
    return "agent start " + to_string(v.a) + " coincides with a task endpoint";
  return "endpoints " + to_string(v.a) + " and " + to_string(v.b) +
         " are not connected without traversing another endpoint";
}

WellFormedReport check_well_formed(const GridMap& map, const std::vector<Location>& agent_starts,
                                   const std::vector<Task>& tasks) {
  WellFormedReport report;

  std::set<Location> goals;
  for (const Task& t : tasks)
    for (const Location& g : t.goals) goals.insert(g);

  for (const Location& s : agent_starts)
    if (goals.count(s))
      report.violations.push_back({WellFormedViolation::Kind::StartOnTaskEndpoint, s, {}});

  std::set<Location> endpoint_set = goals;
  endpoint_set.insert(agent_starts.begin(), agent_starts.end());
  const std::vector<Location> endpoints(endpoint_set.begin(), endpoint_set.end());

  std::vector<char> is_endpoint(map.size(), 0);
  for (const Location& e : endpoints) is_endpoint[map.index(e)] = 1;

  // Label connected components of free, non-endpoint cells.
  std::vector<int> component(map.size(), -1);
  int components = 0;
  int nb[4];
  std::vector<int> stack;
  for (int start = 0; start < map.size(); ++start) {
    if (map.blocked(start) || is_endpoint[start] || component[start] >= 0) continue;
    component[start] = components;
    stack.assign(1, start);
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      const int n = map.neighbors(u, nb);
      for (int i = 0; i < n; ++i) {
        if (!is_endpoint[nb[i]] && component[nb[i]] < 0) {
          component[nb[i]] = components;
          stack.push_back(nb[i]);
        }
      }
    }
    ++components;
  }

  // Two endpoints are linked iff adjacent, or some neighbors of each lie in
  // the same endpoint-free component.
  std::vector<std::vector<int>> touching(endpoints.size());
  for (size_t i = 0; i < endpoints.size(); ++i) {
    const int n = map.neighbors(map.index(endpoints[i]), nb);
    for (int k = 0; k < n; ++k)
      if (component[nb[k]] >= 0) touching[i].push_back(component[nb[k]]);
    std::sort(touching[i].begin(), touching[i].end());
  }

  auto adjacent = [](Location a, Location b) {
    return std::abs(a.row - b.row) + std::abs(a.col - b.col) == 1;
  };
  for (size_t i = 0; i < endpoints.size(); ++i) {
    for (size_t j = i + 1; j < endpoints.size(); ++j) {
      if (adjacent(endpoints[i], endpoints[j])) continue;
      std::vector<int> common;
      std::set_intersection(touching[i].begin(), touching[i].end(), touching[j].begin(),
                            touching[j].end(), std::back_inserter(common));
      if (common.empty())
        report.violations.push_back(
            {WellFormedViolation::Kind::DisconnectedPair, endpoints[i], endpoints[j]});
    }
  }
  return report;
}

}  // namespace mapd
