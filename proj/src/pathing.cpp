#include "mapd/pathing.hpp"

#include <algorithm>
#include <charconv>
#include <queue>

namespace mapd {

Path Path::suffix_from(Timestep t) const {
  if (t <= start_time) return *this;
  const auto i = static_cast<size_t>(t - start_time);
  if (i >= cells.size()) return Path{t, {cells.back()}};
  return Path{t, std::vector<Location>(cells.begin() + static_cast<std::ptrdiff_t>(i), cells.end())};
}

std::string to_string(const Collision& c) {
  if (c.kind == Collision::Kind::Vertex)
    return "vertex collision between agents " + std::to_string(c.a) + " and " +
           std::to_string(c.b) + " at " + to_string(c.first) + " t=" + std::to_string(c.time);
  return "edge collision between agents " + std::to_string(c.a) + " and " + std::to_string(c.b) +
         " on " + to_string(c.first) + "<->" + to_string(c.second) + " t=" +
         std::to_string(c.time);
}

namespace {

bool collision_less(const Collision& x, const Collision& y) {
  if (x.time != y.time) return x.time < y.time;
  if (x.a != y.a) return x.a < y.a;
  if (x.b != y.b) return x.b < y.b;
  return x.kind == Collision::Kind::Vertex && y.kind == Collision::Kind::Edge;
}

// All collisions happening at exactly timestep t (vertex at t, edge on
// t -> t+1), appended unsorted.
void collisions_at(std::span<const Path* const> paths, Timestep t, Timestep horizon,
                   std::vector<std::pair<Location, int>>& scratch, std::vector<Collision>& out) {
  const bool check_vertex = t < horizon;
  const bool check_edge = t + 1 < horizon;
  if (!check_vertex && !check_edge) return;
  scratch.clear();
  for (size_t i = 0; i < paths.size(); ++i)
    scratch.emplace_back(paths[i]->at(t), static_cast<int>(i));
  std::sort(scratch.begin(), scratch.end());
  if (check_vertex) {
    for (size_t i = 0; i < scratch.size();) {
      size_t j = i + 1;
      while (j < scratch.size() && scratch[j].first == scratch[i].first) ++j;
      for (size_t x = i; x < j; ++x)
        for (size_t y = x + 1; y < j; ++y)
          out.push_back({Collision::Kind::Vertex, scratch[x].second, scratch[y].second, t,
                         scratch[x].first, {}});
      i = j;
    }
  }
  if (check_edge) {
    for (size_t i = 0; i < paths.size(); ++i) {
      const Location from = paths[i]->at(t);
      const Location to = paths[i]->at(t + 1);
      if (from == to) continue;
      auto range = std::equal_range(
          scratch.begin(), scratch.end(), std::make_pair(to, -1),
          [](const auto& p, const auto& q) { return p.first < q.first; });
      for (auto it = range.first; it != range.second; ++it) {
        const auto j = static_cast<size_t>(it->second);
        if (j <= i) continue;
        if (paths[j]->at(t + 1) == from)
          out.push_back({Collision::Kind::Edge, static_cast<int>(i), static_cast<int>(j), t, from,
                         to});
      }
    }
  }
}

std::pair<Timestep, Timestep> time_span(std::span<const Path* const> paths) {
  Timestep lo = kForever, hi = 0;
  for (const Path* p : paths) {
    lo = std::min(lo, p->start_time);
    hi = std::max(hi, p->end_time());
  }
  return {lo, hi};
}

}  // namespace

std::vector<Collision> detect_collisions(std::span<const Path> paths, Timestep horizon) {
  std::vector<const Path*> ptrs;
  for (const Path& p : paths) ptrs.push_back(&p);
  std::vector<Collision> out;
  if (ptrs.empty()) return out;
  auto [lo, hi] = time_span(ptrs);
  std::vector<std::pair<Location, int>> scratch;
  for (Timestep t = lo; t <= hi && t < horizon; ++t) collisions_at(ptrs, t, horizon, scratch, out);
  std::sort(out.begin(), out.end(), collision_less);
  return out;
}

std::optional<Collision> first_collision(std::span<const Path* const> paths, Timestep horizon) {
  if (paths.empty()) return std::nullopt;
  auto [lo, hi] = time_span(paths);
  std::vector<std::pair<Location, int>> scratch;
  std::vector<Collision> found;
  for (Timestep t = lo; t <= hi && t < horizon; ++t) {
    collisions_at(paths, t, horizon, scratch, found);
    if (!found.empty()) return *std::min_element(found.begin(), found.end(), collision_less);
  }
  return std::nullopt;
}

bool paths_collide(const Path& x, const Path& y, Timestep horizon) {
  const Timestep lo = std::min(x.start_time, y.start_time);
  const Timestep hi = std::max(x.end_time(), y.end_time());
  for (Timestep t = lo; t <= hi && t < horizon; ++t) {
    const Location xa = x.at(t), ya = y.at(t);
    if (xa == ya) return true;
    if (t + 1 < horizon) {
      const Location xb = x.at(t + 1), yb = y.at(t + 1);
      if (xa == yb && xb == ya && xa != xb) return true;
    }
  }
  return false;
}

namespace {
constexpr std::uint8_t kVertexBit = 16;
}

int ReservationTable::dir_bit(int from, int to) const {
  const int w = map_->width();
  if (to == from - w) return 1;
  if (to == from - 1) return 2;
  if (to == from + 1) return 4;
  return 8;
}

void ReservationTable::build(std::span<const Path* const> hard, Timestep base, Timestep horizon,
                             bool hold_tails) {
  const int cells = map_->size();
  if (static_cast<int>(tail_from_.size()) != cells) {
    tail_from_.assign(cells, kForever);
    last_busy_.assign(cells, -1);
    touched_.clear();
  }
  for (int c : touched_) {
    tail_from_[c] = kForever;
    last_busy_[c] = -1;
  }
  touched_.clear();

  base_ = base;
  horizon_ = horizon;
  Timestep latest_end = base;
  for (const Path* p : hard) latest_end = std::max(latest_end, p->end_time() + 1);
  end_ = std::max(base, std::min(horizon, latest_end));
  hold_tails_ = hold_tails && horizon < kForever;
  settled_ = (!hard.empty() && horizon < kForever) ? std::max(base, horizon) : end_;

  layers_.assign(static_cast<size_t>(end_ - base_) * cells, 0);
  for (const Path* p : hard) {
    for (Timestep t = base_; t < end_; ++t) {
      const int c = map_->index(p->at(t));
      layers_[static_cast<size_t>(t - base_) * cells + c] |= kVertexBit;
      if (last_busy_[c] < 0) touched_.push_back(c);
      last_busy_[c] = std::max(last_busy_[c], t);
      if (t + 1 < end_) {
        const int n = map_->index(p->at(t + 1));
        if (n != c) layers_[static_cast<size_t>(t - base_) * cells + c] |= dir_bit(c, n);
      }
    }
    const Timestep tail = std::max(p->end_time(), base_);
    if (tail < horizon || hold_tails_) {
      const int c = map_->index(p->cells.back());
      if (last_busy_[c] < 0) touched_.push_back(c);
      tail_from_[c] = std::min(tail_from_[c], tail);
      last_busy_[c] = horizon < kForever && !hold_tails_ ? horizon - 1 : kForever;
      if (hold_tails_) settled_ = std::max(settled_, tail);
    }
  }
}

bool ReservationTable::vertex_blocked(int cell, Timestep t) const {
  if (t < base_) return false;
  if (t >= horizon_) return hold_tails_ && tail_from_[cell] <= t;
  if (t < end_) return layers_[static_cast<size_t>(t - base_) * map_->size() + cell] & kVertexBit;
  return tail_from_[cell] <= t;
}

bool ReservationTable::edge_blocked(int from, int to, Timestep t) const {
  if (t + 1 >= horizon_ || t < base_ || t + 1 >= end_) return false;
  return layers_[static_cast<size_t>(t - base_) * map_->size() + to] & dir_bit(to, from);
}

Timestep ReservationTable::last_busy(int cell) const { return last_busy_[cell]; }

namespace {

struct SearchNode {
  int cell;
  int label;
  Timestep t;
  Timestep f;
  int parent;
};

// Open-addressing table of per-state search marks, cleared in O(1) by
// bumping a generation stamp so one instance serves many searches.
class StateTable {
 public:
  struct Slot {
    std::uint64_t key;
    std::uint32_t stamp;
    Timestep best;  // earliest generated time
    bool closed;
  };

  void reset() {
    if (++stamp_ == 0) {
      slots_.assign(slots_.size(), Slot{});
      stamp_ = 1;
    }
    size_ = 0;
    if (slots_.empty()) slots_.assign(1 << 12, Slot{});
  }

  // Slot for key, created (best = kForever, open) when absent.
  Slot& get(std::uint64_t key) {
    if (2 * (size_ + 1) > slots_.size()) grow();
    Slot& s = probe(slots_, key, stamp_);
    if (s.stamp != stamp_) {
      s = Slot{key, stamp_, kForever, false};
      ++size_;
    }
    return s;
  }

 private:
  static Slot& probe(std::vector<Slot>& slots, std::uint64_t key, std::uint32_t stamp) {
    const size_t mask = slots.size() - 1;
    size_t i = static_cast<size_t>((key * 0x9E3779B97F4A7C15ull) >> 20) & mask;
    while (slots[i].stamp == stamp && slots[i].key != key) i = (i + 1) & mask;
    return slots[i];
  }

  void grow() {
    std::vector<Slot> bigger(slots_.size() * 2, Slot{});
    for (const Slot& s : slots_)
      if (s.stamp == stamp_) probe(bigger, s.key, 1) = Slot{s.key, 1, s.best, s.closed};
    slots_ = std::move(bigger);
    stamp_ = 1;
  }

  std::vector<Slot> slots_;
  std::uint32_t stamp_ = 0;
  size_t size_ = 0;
};

}  // namespace

std::optional<Path> multi_goal_astar(const DistanceOracle& oracle, Location start,
                                     Timestep start_time, const GoalSpec& goals,
                                     const ReservationTable& reservations,
                                     const AStarOptions& options, SearchStats* stats) {
  const GridMap& map = oracle.map();
  if (goals.empty()) throw std::invalid_argument("multi_goal_astar: empty goal sequence");
  const int n_goals = static_cast<int>(goals.size());
  std::vector<int> goal_cell(n_goals);
  std::vector<const std::vector<int>*> to_goal(n_goals);
  Timestep latest_release = start_time;
  for (int i = 0; i < n_goals; ++i) {
    goal_cell[i] = map.index(goals[i].location);
    to_goal[i] = &oracle.table(goal_cell[i]);
    latest_release = std::max(latest_release, goals[i].earliest);
  }

  // Lower bound on the time all remaining goals are done.
  auto finish_bound = [&](int cell, int label, Timestep t) -> Timestep {
    Timestep clock = t;
    int at = cell;
    for (int g = label; g < n_goals; ++g) {
      const int d = (*to_goal[g])[at];
      if (d == kUnreachable) return kForever;
      clock = std::max<Timestep>(clock + d, goals[g].earliest);
      at = goal_cell[g];
    }
    return clock;
  };
  auto advance = [&](int cell, int label, Timestep t) {
    while (label < n_goals && goal_cell[label] == cell && t >= goals[label].earliest) ++label;
    return label;
  };

  // Past `settled` the reservations never change again and every release
  // has passed, so states that differ only in time are equivalent.
  const Timestep settled = std::max(reservations.settled_from(), latest_release);
  const std::uint64_t cells = static_cast<std::uint64_t>(map.size());
  auto key = [&](int cell, int label, Timestep t) {
    const auto tt = static_cast<std::uint64_t>(std::min(t, settled));
    return (tt * static_cast<std::uint64_t>(n_goals + 1) + static_cast<std::uint64_t>(label)) *
               cells +
           static_cast<std::uint64_t>(cell);
  };

  struct OpenEntry {
    Timestep f;
    int label;
    Timestep t;
    int id;
  };
  auto worse = [](const OpenEntry& a, const OpenEntry& b) {
    if (a.f != b.f) return a.f > b.f;
    if (a.label != b.label) return a.label < b.label;
    if (a.t != b.t) return a.t < b.t;
    return a.id > b.id;
  };
  std::vector<SearchNode> nodes;
  nodes.reserve(1024);
  std::vector<OpenEntry> heap;
  heap.reserve(1024);
  std::priority_queue<OpenEntry, std::vector<OpenEntry>, decltype(worse)> open(worse, std::move(heap));
  // Closed flag and earliest generated time per key; a later copy with no
  // smaller time is redundant.
  thread_local StateTable states;
  states.reset();

  const int start_cell = map.index(start);
  const int start_label = advance(start_cell, 0, start_time);
  const Timestep start_f = finish_bound(start_cell, start_label, start_time);
  if (start_f >= kForever) return std::nullopt;
  nodes.push_back({start_cell, start_label, start_time, start_f, -1});
  states.get(key(start_cell, start_label, start_time)).best = start_time;
  open.push({start_f, start_label, start_time, 0});

  SearchStats local;
  int nb[5];
  std::optional<Path> result;
  while (!open.empty()) {
    const int id = open.top().id;
    open.pop();
    const SearchNode cur = nodes[id];
    {
      StateTable::Slot& slot = states.get(key(cur.cell, cur.label, cur.t));
      if (slot.closed) continue;
      slot.closed = true;
    }
    if (++local.expanded > options.expansion_limit) break;

    if (cur.label == n_goals && cur.cell == goal_cell.back() &&
        cur.t > reservations.last_busy(cur.cell)) {
      Path path;
      path.start_time = start_time;
      for (int i = id; i >= 0; i = nodes[i].parent) path.cells.push_back(map.location(nodes[i].cell));
      std::reverse(path.cells.begin(), path.cells.end());
      result = std::move(path);
      break;
    }

    int count = map.neighbors(cur.cell, nb);
    nb[count++] = cur.cell;  // wait
    const Timestep nt = cur.t + 1;
    for (int i = 0; i < count; ++i) {
      const int next = nb[i];
      if (reservations.vertex_blocked(next, nt)) continue;
      if (next != cur.cell && reservations.edge_blocked(cur.cell, next, cur.t)) continue;
      const int label = advance(next, cur.label, nt);
      const std::uint64_t k = key(next, label, nt);
      StateTable::Slot& slot = states.get(k);
      if (slot.closed || slot.best <= nt) continue;
      slot.best = nt;
      const Timestep f = finish_bound(next, label, nt);
      if (f >= kForever) continue;
      nodes.push_back({next, label, nt, f, id});
      open.push({f, label, nt, static_cast<int>(nodes.size()) - 1});
      ++local.generated;
    }
  }
  if (stats) {
    stats->expanded += local.expanded;
    stats->generated += local.generated;
  }
  return result;
}

std::optional<Path> multi_goal_astar(const DistanceOracle& oracle, Location start,
                                     Timestep start_time, const GoalSpec& goals,
                                     std::span<const Path* const> hard_paths,
                                     const AStarOptions& options, SearchStats* stats) {
  ReservationTable table(oracle.map());
  table.build(hard_paths, start_time, options.horizon);
  return multi_goal_astar(oracle, start, start_time, goals, table, options, stats);
}

namespace {

struct PtNode {
  std::vector<std::shared_ptr<const Path>> paths;
  // above[y][x] != 0: x has higher priority than y (transitively closed).
  std::vector<std::vector<char>> above;
  std::int64_t cost = 0;
};

std::int64_t path_cost(const PtNode& node) {
  std::int64_t c = 0;
  for (const auto& p : node.paths) c += p->end_time();
  return c;
}

class PbsSolver {
 public:
  explicit PbsSolver(const PbsProblem& p)
      : p_(p), m_(static_cast<int>(p.starts.size())), table_(p.oracle->map()) {}

  PbsResult solve() {
    PbsResult res;
    if (m_ == 0) {
      res.success = true;
      return res;
    }
    if (static_cast<int>(p_.goals.size()) != m_ ||
        (p_.mode == PbsMode::Modified && static_cast<int>(p_.old_paths.size()) != m_))
      throw std::invalid_argument("pbs: per-agent inputs have mismatched sizes");

    auto root = std::make_unique<PtNode>();
    root->paths.resize(m_);
    root->above.assign(m_, std::vector<char>(m_, 0));
    for (int a = 0; a < m_; ++a) {
      auto path = plan(*root, a, res);
      if (!path) {
        ++res.pruned;
        if (p_.mode == PbsMode::Modified && p_.strict)
          throw PbsInvariantViolation("root low-level search failed for agent " +
                                      std::to_string(a));
        res.failure = "no path for agent " + std::to_string(a) + " at the root";
        return res;
      }
      root->paths[a] = std::move(path);
    }
    root->cost = path_cost(*root);
    ++res.generated;

    std::vector<std::unique_ptr<PtNode>> stack;
    stack.push_back(std::move(root));
    std::vector<const Path*> view(m_);
    while (!stack.empty()) {
      auto node = std::move(stack.back());
      stack.pop_back();
      if (++res.expanded > p_.node_limit) {
        res.failure = "priority tree node limit reached";
        return res;
      }
      for (int a = 0; a < m_; ++a) view[a] = node->paths[a].get();
      const auto collision = first_collision(view, p_.horizon);
      if (!collision) {
        res.success = true;
        res.paths.reserve(m_);
        for (const auto& path : node->paths) res.paths.push_back(*path);
        return res;
      }

      std::vector<std::unique_ptr<PtNode>> children;
      const std::pair<int, int> orders[2] = {{collision->a, collision->b},
                                             {collision->b, collision->a}};
      for (const auto& [hi, lo] : orders) {
        if (node->above[hi][lo]) continue;  // lo already outranks hi
        auto child = std::make_unique<PtNode>(*node);
        add_relation(*child, hi, lo);
        ++res.generated;
        if (!replan(*child, lo, res)) {
          ++res.pruned;
          if (p_.mode == PbsMode::Modified && p_.strict)
            throw PbsInvariantViolation("low-level search failed for agent " +
                                        std::to_string(lo) + " in modified mode");
          continue;
        }
        child->cost = path_cost(*child);
        children.push_back(std::move(child));
      }
      // Cheaper child is explored first; on ties the lower-id-first order.
      if (children.size() == 2 && children[1]->cost < children[0]->cost)
        std::swap(children[0], children[1]);
      for (auto it = children.rbegin(); it != children.rend(); ++it) stack.push_back(std::move(*it));
    }
    res.failure = "priority tree exhausted";
    return res;
  }

 private:
  std::shared_ptr<const Path> plan(const PtNode& node, int agent, PbsResult& res) {
    hard_.clear();
    for (int x = 0; x < m_; ++x) {
      if (x == agent) continue;
      if (node.above[agent][x]) {
        if (node.paths[x]) hard_.push_back(node.paths[x].get());
      } else if (p_.mode == PbsMode::Modified) {
        hard_.push_back(&p_.old_paths[x]);
      }
    }
    table_.build(hard_, p_.now, p_.horizon, p_.hold_tails);
    ++res.low_level_calls;
    AStarOptions opts;
    opts.horizon = p_.horizon;
    auto path = multi_goal_astar(*p_.oracle, p_.starts[agent], p_.now, p_.goals[agent], table_, opts);
    if (!path) return nullptr;
    return std::make_shared<const Path>(std::move(*path));
  }

  void add_relation(PtNode& node, int hi, int lo) {
    std::vector<int> raised{lo};
    for (int y = 0; y < m_; ++y)
      if (node.above[y][lo]) raised.push_back(y);
    for (int y : raised) {
      node.above[y][hi] = 1;
      for (int x = 0; x < m_; ++x)
        if (node.above[hi][x]) node.above[y][x] = 1;
    }
  }

  bool replan(PtNode& node, int first, PbsResult& res) {
    std::vector<int> order(m_);
    std::vector<int> rank(m_, 0);
    for (int y = 0; y < m_; ++y) {
      order[y] = y;
      for (int x = 0; x < m_; ++x) rank[y] += node.above[y][x];
    }
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return rank[x] < rank[y]; });

    std::vector<char> pending(m_, 0);
    pending[first] = 1;
    for (int a : order) {
      if (!pending[a]) continue;
      auto path = plan(node, a, res);
      if (!path) return false;
      node.paths[a] = std::move(path);
      for (int b : order)
        if (node.above[b][a] && !pending[b] &&
            paths_collide(*node.paths[a], *node.paths[b], p_.horizon))
          pending[b] = 1;
    }
    return true;
  }

  const PbsProblem& p_;
  int m_;
  ReservationTable table_;
  std::vector<const Path*> hard_;
};

}  // namespace

PbsResult pbs(const PbsProblem& problem) { return PbsSolver(problem).solve(); }

PbsResult wpbs(const DistanceOracle& oracle, Timestep now, std::vector<Location> starts,
               std::vector<GoalSpec> goals, int window, bool hold_tails) {
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  PbsProblem p;
  p.oracle = &oracle;
  p.now = now;
  p.starts = std::move(starts);
  p.goals = std::move(goals);
  p.mode = PbsMode::Original;
  p.horizon = window_horizon(now, window);
  p.hold_tails = hold_tails;
  return pbs(p);
}

std::string serialize_path_log(const std::vector<AgentLog>& log) {
  std::string out;
  for (const AgentLog& a : log) {
    out += "agent " + std::to_string(a.agent) + ":\n";
    for (const auto& [t, loc] : a.steps) out += std::to_string(t) + " " + to_string(loc) + "\n";
    if (!a.tasks.empty()) {
      out += "tasks";
      for (const ExecutedTask& e : a.tasks)
        out += " " + std::to_string(e.id) + "@" + std::to_string(e.start);
      out += "\n";
    }
  }
  return out;
}

namespace {

bool to_int(std::string_view s, int& v) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

std::vector<AgentLog> load_path_log(std::string_view text) {
  std::vector<AgentLog> log;
  int line_no = 0;
  for (size_t pos = 0; pos < text.size();) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line.starts_with("agent ")) {
      std::string_view rest = line.substr(6);
      if (rest.empty() || rest.back() != ':') throw ParseError(line_no, "expected \"agent <id>:\"");
      AgentLog a;
      if (!to_int(rest.substr(0, rest.size() - 1), a.agent))
        throw ParseError(line_no, "bad agent id");
      log.push_back(std::move(a));
      continue;
    }
    if (log.empty()) throw ParseError(line_no, "entry before first \"agent <id>:\" line");
    if (line.starts_with("tasks")) {
      std::string_view rest = line.substr(5);
      while (!rest.empty()) {
        while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
        if (rest.empty()) break;
        auto sp = rest.find(' ');
        const std::string_view tok = rest.substr(0, sp);
        const auto at = tok.find('@');
        ExecutedTask e;
        if (at == std::string_view::npos || !to_int(tok.substr(0, at), e.id) ||
            !to_int(tok.substr(at + 1), e.start))
          throw ParseError(line_no, "expected \"<task>@<start>\"");
        log.back().tasks.push_back(e);
        rest = sp == std::string_view::npos ? std::string_view{} : rest.substr(sp);
      }
      continue;
    }
    auto sp = line.find(' ');
    auto comma = line.find(',');
    int t;
    Location loc;
    if (sp == std::string_view::npos || comma == std::string_view::npos || comma < sp ||
        !to_int(line.substr(0, sp), t) || !to_int(line.substr(sp + 1, comma - sp - 1), loc.row) ||
        !to_int(line.substr(comma + 1), loc.col))
      throw ParseError(line_no, "expected \"t row,col\"");
    log.back().steps.emplace_back(t, loc);
  }
  return log;
}

}  // namespace mapd
