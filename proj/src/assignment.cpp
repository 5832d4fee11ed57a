#include "mapd/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

namespace mapd {

TaskCatalog::TaskCatalog(std::vector<Task> tasks, const DistanceOracle& oracle)
    : tasks_(std::move(tasks)) {
  std::sort(tasks_.begin(), tasks_.end(), [](const Task& a, const Task& b) { return a.id < b.id; });
  for (size_t i = 1; i < tasks_.size(); ++i)
    if (tasks_[i].id == tasks_[i - 1].id)
      throw std::invalid_argument("duplicate task id " + std::to_string(tasks_[i].id));
  if (!tasks_.empty()) {
    min_id_ = tasks_.front().id;
    dense_.assign(static_cast<size_t>(tasks_.back().id - min_id_) + 1, -1);
    for (size_t i = 0; i < tasks_.size(); ++i) dense_[tasks_[i].id - min_id_] = static_cast<int>(i);
  }
  const GridMap& map = oracle.map();
  chain_.reserve(tasks_.size());
  for (const Task& t : tasks_) {
    long long total = 0;
    for (size_t g = 1; g < t.goals.size(); ++g) {
      const int d = oracle.distance(map.index(t.goals[g - 1]), map.index(t.goals[g]));
      if (d == kUnreachable) {
        total = kUnreachable;
        break;
      }
      total += d;
    }
    chain_.push_back(static_cast<int>(std::min<long long>(total, kUnreachable)));
  }
}

bool TaskCatalog::contains(TaskId id) const {
  if (tasks_.empty() || id < min_id_ || id - min_id_ >= static_cast<TaskId>(dense_.size()))
    return false;
  return dense_[id - min_id_] >= 0;
}

int TaskCatalog::index_of(TaskId id) const {
  if (!contains(id)) throw std::out_of_range("unknown task id " + std::to_string(id));
  return dense_[id - min_id_];
}

Cost AssignmentState::objective() const {
  Cost total = 0;
  for (Cost c : agent_cost) {
    if (c >= kInfiniteCost) return kInfiniteCost;
    total += c;
  }
  return total;
}

namespace {

// Clock of one agent walking its sequence.
struct Walk {
  int loc;
  Cost time;
  Cost service = 0;
  bool ok = true;
};

Walk start_walk(const AssignmentProblem& p, int agent) {
  return {p.oracle->map().index(p.agents[agent].location), p.now};
}

// Advances `w` through task `id`. `executing` marks the head task that has
// already started. Fills `timing` if non-null.
void walk_task(const AssignmentProblem& p, Walk& w, TaskId id, bool executing, int agent,
               TaskTiming* timing) {
  if (!w.ok) return;
  const GridMap& map = p.oracle->map();
  const Task& task = (*p.catalog)[id];
  Cost start, completion;
  if (executing) {
    const AgentContext& ctx = p.agents[agent];
    start = ctx.execution_start;
    Cost t = w.time;
    int loc = w.loc;
    for (size_t g = static_cast<size_t>(ctx.goals_done); g < task.goals.size(); ++g) {
      const int next = map.index(task.goals[g]);
      const int d = p.oracle->distance(loc, next);
      if (d == kUnreachable) {
        w.ok = false;
        return;
      }
      t += d;
      loc = next;
    }
    completion = t;
    w.loc = loc;
  } else {
    const int s = map.index(task.first());
    const int d = p.oracle->distance(w.loc, s);
    const int chain = p.catalog->chain_length(id);
    if (d == kUnreachable || chain == kUnreachable) {
      w.ok = false;
      return;
    }
    start = std::max<Cost>(w.time + d, task.release);
    completion = start + chain;
    w.loc = map.index(task.last());
  }
  w.time = completion;
  w.service += completion - task.release;
  if (timing) *timing = {id, static_cast<Timestep>(start), static_cast<Timestep>(completion)};
}

}  // namespace

ScheduleEstimate estimate_schedule(const AssignmentProblem& problem, const TaskSequence& seq) {
  ScheduleEstimate est;
  Walk w = start_walk(problem, seq.agent);
  est.timings.reserve(seq.tasks.size());
  for (size_t i = 0; i < seq.tasks.size(); ++i) {
    TaskTiming timing;
    walk_task(problem, w, seq.tasks[i], static_cast<int>(i) < seq.executing_prefix, seq.agent,
              &timing);
    if (!w.ok) {
      est.feasible = false;
      est.objective = kInfiniteCost;
      return est;
    }
    est.timings.push_back(timing);
  }
  est.objective = w.service;
  return est;
}

Cost sequence_cost(const AssignmentProblem& problem, const TaskSequence& seq, TaskId insert,
                   int position) {
  Walk w = start_walk(problem, seq.agent);
  const int n = static_cast<int>(seq.tasks.size());
  for (int i = 0; i <= n; ++i) {
    if (insert >= 0 && i == position) walk_task(problem, w, insert, false, seq.agent, nullptr);
    if (i < n) walk_task(problem, w, seq.tasks[i], i < seq.executing_prefix, seq.agent, nullptr);
    if (!w.ok) return kInfiniteCost;
  }
  return w.service;
}

void refresh_costs(const AssignmentProblem& problem, AssignmentState& state) {
  state.agent_cost.resize(state.sequences.size());
  for (size_t k = 0; k < state.sequences.size(); ++k)
    state.agent_cost[k] = sequence_cost(problem, state.sequences[k]);
}

AssignmentState make_state(const AssignmentProblem& problem, std::vector<TaskSequence> sequences,
                           std::vector<TaskId> pool) {
  AssignmentState state{std::move(sequences), std::move(pool), {}};
  refresh_costs(problem, state);
  return state;
}

CostMatrix::CostMatrix(std::initializer_list<std::initializer_list<Cost>> init)
    : rows_(static_cast<int>(init.size())),
      cols_(init.size() ? static_cast<int>(init.begin()->size()) : 0) {
  for (const auto& row : init) {
    if (static_cast<int>(row.size()) != cols_) throw std::invalid_argument("ragged cost matrix");
    v_.insert(v_.end(), row.begin(), row.end());
  }
}

CostMatrix build_cost_matrix(const AssignmentProblem& problem, const AssignmentState& state,
                             std::span<const TaskId> candidates) {
  const int m = problem.agent_count();
  CostMatrix matrix(m, static_cast<int>(candidates.size()), kInfiniteCost);
  for (int k = 0; k < m; ++k) {
    const TaskSequence& seq = state.sequences[k];
    Walk end = start_walk(problem, k);
    for (size_t i = 0; i < seq.tasks.size(); ++i)
      walk_task(problem, end, seq.tasks[i], static_cast<int>(i) < seq.executing_prefix, k, nullptr);
    if (!end.ok) continue;
    for (size_t c = 0; c < candidates.size(); ++c) {
      Walk w = end;
      walk_task(problem, w, candidates[c], false, k, nullptr);
      if (w.ok) matrix(k, static_cast<int>(c)) = w.time;
    }
  }
  return matrix;
}

namespace {

// Kuhn-Munkres with potentials, rows <= cols. a is 1-indexed internally.
std::vector<int> solve_assignment(const std::vector<std::vector<Cost>>& a, int n, int m) {
  const Cost inf = std::numeric_limits<Cost>::max() / 2;
  std::vector<Cost> u(n + 1, 0), v(m + 1, 0), minv(m + 1);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      Cost delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const Cost cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> col_of_row(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] != 0) col_of_row[p[j] - 1] = j - 1;
  return col_of_row;
}

}  // namespace

Matching hungarian(const CostMatrix& matrix) {
  const int rows = matrix.rows();
  const int cols = matrix.cols();
  Matching result;
  result.col_of_row.assign(rows, -1);
  if (rows == 0 || cols == 0) return result;

  // Forbidden entries become a penalty larger than any finite matching.
  Cost big = 1;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const Cost x = matrix(r, c);
      if (x < 0) throw std::invalid_argument("hungarian: negative cost");
      if (x < kInfiniteCost) big += x;
    }

  const bool transpose = rows > cols;
  const int n = transpose ? cols : rows;
  const int m = transpose ? rows : cols;
  std::vector<std::vector<Cost>> a(n, std::vector<Cost>(m));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      const Cost x = transpose ? matrix(j, i) : matrix(i, j);
      a[i][j] = x >= kInfiniteCost ? big : x;
    }

  const auto assigned = solve_assignment(a, n, m);
  for (int i = 0; i < n; ++i) {
    const int j = assigned[i];
    const int r = transpose ? j : i;
    const int c = transpose ? i : j;
    if (matrix(r, c) >= kInfiniteCost)
      throw InfeasibleAssignment("no finite matching of size " + std::to_string(n));
    result.col_of_row[r] = c;
    result.total += matrix(r, c);
  }
  return result;
}

int hungarian_insertion(const AssignmentProblem& problem, AssignmentState& state) {
  int rounds = 0;
  if (state.pool.empty()) return 0;
  if (problem.agent_count() == 0) throw InfeasibleAssignment("no agents to take tasks");
  std::sort(state.pool.begin(), state.pool.end());
  while (!state.pool.empty()) {
    const CostMatrix matrix = build_cost_matrix(problem, state, state.pool);
    const Matching matching = hungarian(matrix);
    std::vector<char> taken(state.pool.size(), 0);
    for (int k = 0; k < problem.agent_count(); ++k) {
      const int c = matching.col_of_row[k];
      if (c < 0) continue;
      state.sequences[k].tasks.push_back(state.pool[c]);
      state.agent_cost[k] = sequence_cost(problem, state.sequences[k]);
      taken[c] = 1;
    }
    std::vector<TaskId> rest;
    for (size_t c = 0; c < state.pool.size(); ++c)
      if (!taken[c]) rest.push_back(state.pool[c]);
    state.pool = std::move(rest);
    ++rounds;
  }
  return rounds;
}

std::vector<TaskTiming> schedule_table(const AssignmentProblem& problem,
                                       const AssignmentState& state) {
  std::vector<TaskTiming> table(problem.catalog->size(), TaskTiming{-1, 0, 0});
  for (const TaskSequence& seq : state.sequences) {
    const ScheduleEstimate est = estimate_schedule(problem, seq);
    for (const TaskTiming& t : est.timings) table[problem.catalog->index_of(t.task)] = t;
  }
  return table;
}

double relatedness(const AssignmentProblem& problem, TaskId a, TaskId b,
                   std::span<const TaskTiming> schedule, ShawWeights weights) {
  const Task& ta = (*problem.catalog)[a];
  const Task& tb = (*problem.catalog)[b];
  const GridMap& map = problem.oracle->map();
  auto dist = [&](Location u, Location v) -> double {
    const int d = problem.oracle->distance(map.index(u), map.index(v));
    return d == kUnreachable ? 1e9 : d;
  };
  const TaskTiming& sa = schedule[problem.catalog->index_of(a)];
  const TaskTiming& sb = schedule[problem.catalog->index_of(b)];
  const double spatial = dist(ta.last(), tb.last()) + dist(ta.first(), tb.first());
  const double temporal =
      std::abs(static_cast<double>(sa.start) - sb.start) +
      std::abs(static_cast<double>(sa.completion) - sb.completion);
  return weights.spatial * spatial + weights.temporal * temporal;
}

std::vector<TaskId> shaw_removal(const AssignmentProblem& problem, AssignmentState& state,
                                 int neighborhood, ShawWeights weights, Rng& rng) {
  if (neighborhood < 1) throw std::invalid_argument("neighborhood size must be >= 1");
  std::vector<TaskId> removable;
  for (const TaskSequence& seq : state.sequences)
    for (size_t i = static_cast<size_t>(seq.executing_prefix); i < seq.tasks.size(); ++i)
      removable.push_back(seq.tasks[i]);
  if (removable.empty()) return {};

  const auto schedule = schedule_table(problem, state);
  const TaskId seed = removable[rng.uniform(0, static_cast<std::int64_t>(removable.size()) - 1)];

  std::vector<std::pair<double, TaskId>> ranked;
  for (TaskId id : removable)
    if (id != seed) ranked.emplace_back(relatedness(problem, seed, id, schedule, weights), id);
  std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
    return x.first != y.first ? x.first > y.first : x.second < y.second;
  });

  std::vector<TaskId> removed{seed};
  for (size_t i = 0; i < ranked.size() && static_cast<int>(removed.size()) < neighborhood; ++i)
    removed.push_back(ranked[i].second);

  for (TaskSequence& seq : state.sequences) {
    const auto before = seq.tasks.size();
    auto keep_end = std::stable_partition(
        seq.tasks.begin() + seq.executing_prefix, seq.tasks.end(), [&](TaskId id) {
          return std::find(removed.begin(), removed.end(), id) == removed.end();
        });
    seq.tasks.erase(keep_end, seq.tasks.end());
    if (seq.tasks.size() != before)
      state.agent_cost[seq.agent] = sequence_cost(problem, seq);
  }
  return removed;
}

Cost InsertionEvaluation::regret() const {
  if (best >= kInfiniteCost) return 0;
  if (second >= kInfiniteCost) return kInfiniteCost;
  return second - best;
}

InsertionEvaluation evaluate_insertion(const AssignmentProblem& problem,
                                       const AssignmentState& state, TaskId task) {
  InsertionEvaluation ev;
  ev.task = task;
  const Cost total = state.objective();
  if (total >= kInfiniteCost) return ev;
  for (const TaskSequence& seq : state.sequences) {
    const int k = seq.agent;
    const Cost others = total - state.agent_cost[k];
    for (int j = seq.executing_prefix; j <= static_cast<int>(seq.tasks.size()); ++j) {
      const Cost c = sequence_cost(problem, seq, task, j);
      if (c >= kInfiniteCost) continue;
      const Cost f = others + c;
      if (f < ev.best) {
        ev.second = ev.best;
        ev.best = f;
        ev.best_agent = k;
        ev.best_position = j;
      } else if (f < ev.second) {
        ev.second = f;
      }
    }
  }
  return ev;
}

void regret_reinsertion(const AssignmentProblem& problem, AssignmentState& state,
                        std::vector<TaskId> removed) {
  while (!removed.empty()) {
    InsertionEvaluation pick;
    size_t pick_index = 0;
    bool have = false;
    for (size_t i = 0; i < removed.size(); ++i) {
      const InsertionEvaluation ev = evaluate_insertion(problem, state, removed[i]);
      if (ev.best >= kInfiniteCost)
        throw InfeasibleAssignment("task " + std::to_string(removed[i]) +
                                   " has no feasible insertion position");
      bool better = !have;
      if (have) {
        const Cost r = ev.regret(), pr = pick.regret();
        if (r != pr) better = r > pr;
        else if (ev.best != pick.best) better = ev.best < pick.best;
        else better = ev.task < pick.task;
      }
      if (better) {
        pick = ev;
        pick_index = i;
        have = true;
      }
    }
    TaskSequence& seq = state.sequences[pick.best_agent];
    seq.tasks.insert(seq.tasks.begin() + pick.best_position, pick.task);
    state.agent_cost[pick.best_agent] = sequence_cost(problem, seq);
    removed.erase(removed.begin() + static_cast<std::ptrdiff_t>(pick_index));
  }
}

LnsStats lns_improve(const AssignmentProblem& problem, AssignmentState& state, LnsBudget budget,
                     const LnsParams& params, Rng& rng) {
  using clock = std::chrono::steady_clock;
  const auto started = clock::now();
  const auto deadline = started + std::chrono::milliseconds(budget.amount);
  const bool timed = budget.kind == LnsBudget::Kind::WallClockMs;

  LnsStats stats;
  stats.initial = state.objective();
  while (true) {
    if (timed ? clock::now() >= deadline : stats.iterations >= budget.amount) break;
    AssignmentState candidate = state;
    auto removed = shaw_removal(problem, candidate, params.neighborhood, params.weights, rng);
    if (removed.empty()) {
      if (timed) std::this_thread::sleep_until(deadline);
      break;
    }
    regret_reinsertion(problem, candidate, std::move(removed));
    ++stats.iterations;
    if (candidate.objective() < state.objective()) {
      state = std::move(candidate);
      ++stats.accepted;
    }
  }
  stats.final = state.objective();
  stats.elapsed_ms =
      std::chrono::duration<double, std::milli>(clock::now() - started).count();
  return stats;
}

std::vector<TaskId> truncate(const AssignmentProblem& problem, AssignmentState& state,
                             int max_size) {
  if (max_size < 1) throw std::invalid_argument("maximum sequence size must be >= 1");
  std::vector<TaskId> returned;
  for (TaskSequence& seq : state.sequences) {
    if (static_cast<int>(seq.tasks.size()) <= max_size) continue;
    returned.insert(returned.end(), seq.tasks.begin() + max_size, seq.tasks.end());
    seq.tasks.resize(max_size);
    state.agent_cost[seq.agent] = sequence_cost(problem, seq);
  }
  return returned;
}

}  // namespace mapd
