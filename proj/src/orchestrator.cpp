#include "mapd/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <numeric>
#include <set>

namespace mapd {

std::string to_string(Variant v) { return v == Variant::LnsPbs ? "lns_pbs" : "lns_wpbs"; }

Variant parse_variant(std::string_view name) {
  if (name == "lns_pbs") return Variant::LnsPbs;
  if (name == "lns_wpbs") return Variant::LnsWpbs;
  throw std::invalid_argument("unknown variant '" + std::string(name) +
                              "' (expected lns_pbs or lns_wpbs)");
}

Timestep default_guard(const DistanceOracle& oracle, const TaskStream& stream, int agents) {
  const GridMap& map = oracle.map();
  std::int64_t latest = 0, total = 0;
  for (const Task& t : stream.tasks()) {
    std::int64_t chain = 0;
    for (size_t g = 1; g < t.goals.size(); ++g) {
      const int d = oracle.distance(t.goals[g - 1], t.goals[g]);
      if (d != kUnreachable) chain += d;
    }
    latest = std::max(latest, t.release + chain);
    total += chain;
  }
  const std::int64_t bound =
      std::max(latest, total / std::max(1, agents)) + map.width() + map.height();
  return static_cast<Timestep>(std::min<std::int64_t>(20 * bound, kForever / 2));
}

namespace {

bool visible_uncompleted(TaskStatus s) {
  return s != TaskStatus::Hidden && s != TaskStatus::Completed;
}

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::vector<TaskId> eligible_task_set(const SimState& state, const TaskCatalog& catalog,
                                      Variant variant, std::vector<TaskId>* deferred) {
  std::set<Location> dummies;
  if (variant == Variant::LnsPbs)
    for (const AgentState& a : state.agents) dummies.insert(a.dummy);
  std::vector<TaskId> out;
  if (deferred) deferred->clear();
  for (size_t i = 0; i < catalog.size(); ++i) {
    const TaskStatus s = state.status[i];
    if (s != TaskStatus::Pending && s != TaskStatus::Assigned) continue;
    const Task& task = catalog.at_index(static_cast<int>(i));
    const bool blocked = std::any_of(task.goals.begin(), task.goals.end(),
                                     [&](const Location& g) { return dummies.count(g) > 0; });
    if (blocked) {
      if (deferred) deferred->push_back(task.id);
    } else {
      out.push_back(task.id);
    }
  }
  return out;
}

std::vector<Location> assign_dummy_endpoints(const SimState& state, const TaskCatalog& catalog,
                                             const DistanceOracle& oracle, Variant variant) {
  const GridMap& map = oracle.map();
  const auto endpoints = map.task_endpoints();
  const int m = static_cast<int>(state.agents.size());

  std::vector<char> goal_cell(map.size(), 0);
  if (variant == Variant::LnsPbs)
    for (size_t i = 0; i < catalog.size(); ++i)
      if (visible_uncompleted(state.status[i]))
        for (const Location& g : catalog.at_index(static_cast<int>(i)).goals)
          goal_cell[map.index(g)] = 1;

  std::vector<int> order;
  for (int i = 0; i < m; ++i)
    if (state.agents[i].is_task_agent()) order.push_back(i);
  for (int i = 0; i < m; ++i)
    if (!state.agents[i].is_task_agent()) order.push_back(i);

  std::vector<Location> result(m);
  std::vector<char> taken(map.size(), 0);
  for (int i : order) {
    const AgentState& agent = state.agents[i];
    const Location ref = agent.is_task_agent() ? catalog[agent.sequence.back()].last()
                                               : agent.location;
    const auto& dist = oracle.table(ref);
    std::vector<std::pair<int, int>> candidates;  // (distance, endpoint order)
    for (size_t k = 0; k < endpoints.size(); ++k) {
      const int d = dist[map.index(endpoints[k])];
      if (d != kUnreachable) candidates.emplace_back(d, static_cast<int>(k));
    }
    std::sort(candidates.begin(), candidates.end());

    Location chosen = agent.start;
    for (const auto& [d, k] : candidates) {
      const Location c = endpoints[k];
      const int idx = map.index(c);
      if (taken[idx]) continue;
      if (variant == Variant::LnsPbs) {
        if (goal_cell[idx]) continue;
        bool others_old = false;
        for (int j = 0; j < m && !others_old; ++j)
          others_old = j != i && state.agents[j].dummy == c;
        if (others_old) continue;
      }
      chosen = c;
      break;
    }
    result[i] = chosen;
    taken[map.index(chosen)] = 1;
  }
  return result;
}

Simulation::Simulation(SimConfig config) : config_(std::move(config)), rng_(config_.seed) {
  if (!config_.oracle) throw std::invalid_argument("simulation needs a distance oracle");
  if (config_.starts.empty()) throw std::invalid_argument("simulation needs at least one agent");
  if (config_.neighborhood < 1 || config_.max_sequence < 1 || config_.window < 1)
    throw std::invalid_argument("N, C and w must be >= 1");
  const GridMap& map = config_.oracle->map();
  {
    std::set<Location> seen;
    for (const Location& s : config_.starts) {
      if (!map.in_bounds(s) || map.blocked(s))
        throw std::invalid_argument("agent start " + to_string(s) + " is not a free cell");
      if (!seen.insert(s).second)
        throw std::invalid_argument("two agents start at " + to_string(s));
    }
  }
  for (const Task& t : config_.stream.tasks())
    for (const Location& g : t.goals)
      if (!map.in_bounds(g) || map.blocked(g))
        throw std::invalid_argument("task " + std::to_string(t.id) + " has goal " + to_string(g) +
                                    " on a blocked or out-of-map cell");

  catalog_ = std::make_unique<TaskCatalog>(config_.stream.tasks(), *config_.oracle);
  metrics_.well_formed = check_well_formed(map, config_.starts, config_.stream.tasks()).ok();
  // On well-formed input a failing low-level search in modified mode is a bug.
  strict_ = config_.variant == Variant::LnsPbs && metrics_.well_formed;

  state_.status.assign(catalog_->size(), TaskStatus::Hidden);
  state_.completion.assign(catalog_->size(), -1);
  for (const Location& s : config_.starts) {
    AgentState a;
    a.location = a.start = a.dummy = s;
    a.path = Path::stay(s, 0);
    a.trace.emplace_back(0, s);
    state_.agents.push_back(std::move(a));
  }
}

Simulation::~Simulation() = default;

void Simulation::release() {
  new_visible_ = false;
  const Timestep cutoff = visibility_cutoff(config_.stream, state_.now);
  if (cutoff <= visible_cutoff_) return;
  for (const Task& t : config_.stream.tasks()) {
    if (t.release > cutoff) break;
    if (t.release <= visible_cutoff_) continue;
    state_.status[catalog_->index_of(t.id)] = TaskStatus::Pending;
    new_visible_ = true;
  }
  visible_cutoff_ = cutoff;
}

void Simulation::assign() {
  const auto t0 = std::chrono::steady_clock::now();
  const int m = static_cast<int>(state_.agents.size());

  std::vector<TaskId> deferred;
  std::vector<TaskId> eligible = eligible_task_set(state_, *catalog_, config_.variant, &deferred);
  metrics_.deferred_events += static_cast<std::int64_t>(deferred.size());
  state_.deferred = std::move(deferred);

  AssignmentProblem problem;
  problem.oracle = config_.oracle;
  problem.catalog = catalog_.get();
  problem.now = state_.now;
  std::vector<TaskSequence> sequences;
  for (int i = 0; i < m; ++i) {
    const AgentState& a = state_.agents[i];
    problem.agents.push_back({a.location, a.goals_done, a.execution_start});
    TaskSequence seq{i, {}, 0};
    if (a.executing) seq = {i, {a.sequence.front()}, 1};
    sequences.push_back(std::move(seq));
  }
  for (size_t i = 0; i < catalog_->size(); ++i)
    if (state_.status[i] == TaskStatus::Assigned) state_.status[i] = TaskStatus::Pending;

  AssignmentState st = make_state(problem, std::move(sequences), std::move(eligible));
  TriggerRecord rec;
  rec.t = state_.now;
  try {
    hungarian_insertion(problem, st);
  } catch (const InfeasibleAssignment& e) {
    throw SolverFailure(std::string("task assignment failed: ") + e.what());
  }
  rec.initial_objective = st.objective();
  LnsParams params;
  params.neighborhood = config_.neighborhood;
  params.weights = config_.weights;
  const LnsStats lns = lns_improve(problem, st, config_.budget, params, rng_);
  rec.lns_ms = lns.elapsed_ms;
  rec.lns_iterations = lns.iterations;
  rec.final_objective = st.objective();
  truncate(problem, st, config_.max_sequence);

  for (int i = 0; i < m; ++i) {
    AgentState& a = state_.agents[i];
    a.sequence = st.sequences[i].tasks;
    for (size_t k = a.executing ? 1 : 0; k < a.sequence.size(); ++k)
      state_.status[catalog_->index_of(a.sequence[k])] = TaskStatus::Assigned;
  }
  const auto dummies = assign_dummy_endpoints(state_, *catalog_, *config_.oracle, config_.variant);
  for (int i = 0; i < m; ++i) state_.agents[i].dummy = dummies[i];

  rec.assign_ms = ms_since(t0);
  current_.assign_ms += rec.assign_ms;
  metrics_.triggers.push_back(rec);
}

GoalSpec Simulation::goal_spec(int agent) const {
  const AgentState& a = state_.agents[agent];
  GoalSpec spec;
  for (size_t k = 0; k < a.sequence.size(); ++k) {
    const Task& task = (*catalog_)[a.sequence[k]];
    if (k == 0 && a.executing) {
      for (size_t g = static_cast<size_t>(a.goals_done); g < task.goals.size(); ++g)
        spec.push_back({task.goals[g], 0});
    } else {
      spec.push_back({task.goals.front(), task.release});
      for (size_t g = 1; g < task.goals.size(); ++g) spec.push_back({task.goals[g], 0});
    }
  }
  spec.push_back({a.dummy, 0});
  return spec;
}

void Simulation::plan(PlanEvent::Kind kind) {
  const auto t0 = std::chrono::steady_clock::now();
  const int m = static_cast<int>(state_.agents.size());
  std::vector<Location> starts;
  std::vector<GoalSpec> goals;
  for (int i = 0; i < m; ++i) {
    starts.push_back(state_.agents[i].location);
    goals.push_back(goal_spec(i));
  }

  PbsResult res;
  Timestep horizon = kForever;
  try {
    if (config_.variant == Variant::LnsPbs) {
      PbsProblem p;
      p.oracle = config_.oracle;
      p.now = state_.now;
      p.starts = std::move(starts);
      p.goals = std::move(goals);
      for (const AgentState& a : state_.agents) p.old_paths.push_back(a.path.suffix_from(state_.now));
      p.mode = PbsMode::Modified;
      p.strict = strict_;
      res = pbs(p);
    } else {
      horizon = window_horizon(state_.now, config_.window);
      res = wpbs(*config_.oracle, state_.now, std::move(starts), std::move(goals), config_.window);
      state_.moved_since_replan = 0;
    }
  } catch (const PbsInvariantViolation& e) {
    throw SolverFailure(std::string("PBS invariant violated: ") + e.what());
  }

  metrics_.expanded_pt_nodes_total += res.expanded;
  metrics_.max_pt_nodes_per_call = std::max(metrics_.max_pt_nodes_per_call, res.expanded);
  metrics_.pruned_pt_nodes += res.pruned;
  if (res.expanded > static_cast<std::int64_t>(m) * (m - 1) + 1) ++metrics_.pt_bound_violations;
  if (!res.success)
    throw SolverFailure("path planning failed at t=" + std::to_string(state_.now) + ": " +
                        res.failure);

  for (int i = 0; i < m; ++i) state_.agents[i].path = res.paths[i];
  PlanEvent ev;
  ev.kind = kind;
  ev.time = state_.now;
  ev.horizon = horizon;
  ev.expanded = res.expanded;
  if (config_.record_plans) ev.paths = std::move(res.paths);
  metrics_.plans.push_back(std::move(ev));
  current_.path_ms += ms_since(t0);
}

void Simulation::advance_execution(int agent) {
  AgentState& a = state_.agents[agent];
  const Timestep t = state_.now;
  while (!a.sequence.empty()) {
    const TaskId id = a.sequence.front();
    const Task& task = (*catalog_)[id];
    const int idx = catalog_->index_of(id);
    if (!a.executing) {
      if (a.location != task.first() || t < task.release) break;
      a.executing = true;
      a.goals_done = 1;
      a.execution_start = t;
      a.executed.push_back({id, t});
      state_.status[idx] = TaskStatus::Executing;
    }
    const int n = static_cast<int>(task.goals.size());
    while (a.goals_done < n && task.goals[a.goals_done] == a.location) ++a.goals_done;
    if (a.goals_done < n) break;
    state_.status[idx] = TaskStatus::Completed;
    state_.completion[idx] = t;
    a.sequence.erase(a.sequence.begin());
    a.executing = false;
    a.goals_done = 0;
    if (a.sequence.empty()) state_.agent_freed = true;
  }
}

bool Simulation::begin_step() {
  current_ = StepRuntime{state_.now, 0, 0};
  release();
  const bool trigger = new_visible_ || !state_.deferred.empty() || state_.agent_freed;
  if (trigger) {
    state_.agent_freed = false;
    assign();
    plan(PlanEvent::Kind::Assignment);
  } else if (config_.variant == Variant::LnsWpbs &&
             state_.moved_since_replan >= config_.window) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto dummies =
        assign_dummy_endpoints(state_, *catalog_, *config_.oracle, config_.variant);
    for (size_t i = 0; i < dummies.size(); ++i) state_.agents[i].dummy = dummies[i];
    current_.assign_ms += ms_since(t0);
    plan(PlanEvent::Kind::WindowReplan);
  }
  for (size_t i = 0; i < state_.agents.size(); ++i) advance_execution(static_cast<int>(i));
  metrics_.runtime.push_back(current_);
  return finished();
}

void Simulation::move() {
  const Timestep next = state_.now + 1;
  for (AgentState& a : state_.agents) {
    a.location = a.path.at(next);
    a.trace.emplace_back(next, a.location);
  }
  state_.now = next;
  ++state_.moved_since_replan;
  for (size_t i = 0; i < state_.agents.size(); ++i) advance_execution(static_cast<int>(i));
}

bool Simulation::finished() const {
  for (TaskStatus s : state_.status)
    if (s != TaskStatus::Completed) return false;
  for (const AgentState& a : state_.agents)
    if (a.location != a.dummy || a.path.end_time() > state_.now) return false;
  return true;
}

SimResult Simulation::collect() const {
  SimResult r = metrics_;
  r.makespan = state_.now;
  std::int64_t service_sum = 0;
  for (size_t i = 0; i < catalog_->size(); ++i) {
    const Task& t = catalog_->at_index(static_cast<int>(i));
    TaskRecord rec{t.id, t.release, state_.completion[i], -1};
    if (rec.completion >= 0) {
      rec.service = rec.completion - rec.release;
      service_sum += rec.service;
      ++r.completed;
    }
    r.tasks.push_back(rec);
  }
  r.st = r.completed ? static_cast<double>(service_sum) / r.completed : 0.0;
  double total = 0;
  for (const StepRuntime& s : r.runtime) total += s.assign_ms + s.path_ms;
  r.rt = r.runtime.empty() ? 0.0 : total / static_cast<double>(r.runtime.size());
  for (size_t i = 0; i < state_.agents.size(); ++i) {
    const AgentState& a = state_.agents[i];
    r.log.push_back({static_cast<int>(i), a.trace, a.executed});
  }
  return r;
}

SimResult Simulation::run() {
  const Timestep guard =
      config_.max_timesteps > 0
          ? config_.max_timesteps
          : default_guard(*config_.oracle, config_.stream, static_cast<int>(config_.starts.size()));
  try {
    while (!begin_step()) {
      if (state_.now >= guard) {
        SimResult r = collect();
        r.status = SimResult::Status::Guard;
        r.message = "not finished after " + std::to_string(guard) + " timesteps (" +
                    std::to_string(r.completed) + "/" + std::to_string(r.tasks.size()) +
                    " tasks completed)";
        return r;
      }
      move();
    }
  } catch (const SolverFailure& e) {
    SimResult r = collect();
    r.status = SimResult::Status::SolverFailure;
    r.message = e.what();
    return r;
  }
  return collect();
}

SimResult simulate(SimConfig config) { return Simulation(std::move(config)).run(); }

std::string to_string(Violation::Kind k) {
  switch (k) {
    case Violation::Kind::Format: return "format";
    case Violation::Kind::Move: return "move";
    case Violation::Kind::VertexCollision: return "vertex-collision";
    case Violation::Kind::EdgeCollision: return "edge-collision";
    case Violation::Kind::Order: return "order";
    case Violation::Kind::Incomplete: return "incomplete";
  }
  return "?";
}

ExecutionReport verify_execution(const GridMap& map, const std::vector<Task>& tasks,
                                 const std::vector<AgentLog>& log) {
  ExecutionReport rep;
  auto flag = [&rep](Violation::Kind k, Timestep t, std::string msg) {
    rep.violations.push_back({k, t, std::move(msg)});
  };

  std::vector<Task> sorted = tasks;
  std::sort(sorted.begin(), sorted.end(), [](const Task& a, const Task& b) { return a.id < b.id; });
  auto find_task = [&sorted](TaskId id) -> const Task* {
    auto it = std::lower_bound(sorted.begin(), sorted.end(), id,
                               [](const Task& t, TaskId v) { return t.id < v; });
    return it != sorted.end() && it->id == id ? &*it : nullptr;
  };
  for (const Task& t : sorted) rep.tasks.push_back({t.id, t.release, -1, -1});
  auto record_of = [&](TaskId id) -> TaskRecord& {
    return rep.tasks[static_cast<size_t>(find_task(id) - sorted.data())];
  };

  // Trajectories.
  std::vector<Path> paths;
  std::vector<int> path_agent;
  std::set<int> agent_ids;
  for (const AgentLog& a : log) {
    const std::string who = "agent " + std::to_string(a.agent);
    if (!agent_ids.insert(a.agent).second) {
      flag(Violation::Kind::Format, -1, who + " appears twice");
      continue;
    }
    if (a.steps.empty()) {
      flag(Violation::Kind::Format, -1, who + " has no steps");
      continue;
    }
    bool ok = true;
    Path p{a.steps.front().first, {}};
    for (size_t k = 0; k < a.steps.size(); ++k) {
      const auto& [t, loc] = a.steps[k];
      if (t != p.start_time + static_cast<Timestep>(k)) {
        flag(Violation::Kind::Format, t, who + ": timesteps not consecutive at t=" + std::to_string(t));
        ok = false;
        break;
      }
      if (!map.in_bounds(loc) || map.blocked(loc)) {
        flag(Violation::Kind::Move, t, who + " on blocked or out-of-map cell " + to_string(loc) +
                                           " at t=" + std::to_string(t));
        ok = false;
        break;
      }
      if (k > 0) {
        const Location prev = a.steps[k - 1].second;
        if (std::abs(prev.row - loc.row) + std::abs(prev.col - loc.col) > 1) {
          flag(Violation::Kind::Move, t, who + " jumps " + to_string(prev) + " -> " +
                                             to_string(loc) + " at t=" + std::to_string(t));
          ok = false;
          break;
        }
      }
      p.cells.push_back(loc);
    }
    if (!ok) continue;
    paths.push_back(std::move(p));
    path_agent.push_back(a.agent);
  }
  for (const Collision& c : detect_collisions(paths)) {
    Collision named = c;
    named.a = path_agent[c.a];
    named.b = path_agent[c.b];
    flag(c.kind == Collision::Kind::Vertex ? Violation::Kind::VertexCollision
                                           : Violation::Kind::EdgeCollision,
         c.time, to_string(named));
  }

  // Task execution replay: each listed task starts at its claimed timestep
  // (checked), then its goals are matched greedily in order.
  std::set<TaskId> listed;
  for (const AgentLog& a : log) {
    if (a.steps.empty()) continue;
    const std::string who = "agent " + std::to_string(a.agent);
    const Timestep t0 = a.steps.front().first;
    const Timestep t_end = a.steps.back().first;
    auto at = [&](Timestep t) { return a.steps[static_cast<size_t>(t - t0)].second; };
    Timestep free_from = t0;
    for (const ExecutedTask& e : a.tasks) {
      const Task* task = find_task(e.id);
      const std::string name = "task " + std::to_string(e.id) + " (" + who + ")";
      if (!task) {
        flag(Violation::Kind::Format, -1, who + " lists unknown task " + std::to_string(e.id));
        continue;
      }
      if (!listed.insert(e.id).second) {
        flag(Violation::Kind::Format, -1, "task " + std::to_string(e.id) + " listed twice");
        continue;
      }
      if (e.start < t0 || e.start > t_end) {
        flag(Violation::Kind::Format, e.start, name + " starts outside the logged timesteps");
        continue;
      }
      if (e.start < free_from) {
        flag(Violation::Kind::Order, e.start,
             name + " starts at t=" + std::to_string(e.start) +
                 " before the previous task completed at t=" + std::to_string(free_from));
        continue;
      }
      if (at(e.start) != task->first()) {
        flag(Violation::Kind::Order, e.start,
             name + " claims to start at t=" + std::to_string(e.start) + " away from its first goal");
        continue;
      }
      if (e.start < task->release) {
        flag(Violation::Kind::Order, e.start,
             name + " first goal serviced at t=" + std::to_string(e.start) + " before release " +
                 std::to_string(task->release));
        continue;
      }
      const int n = static_cast<int>(task->goals.size());
      int done = 1;
      std::vector<char> seen_later(n, 0);  // goals visited while an earlier one was pending
      Timestep completion = -1;
      for (Timestep t = e.start; t <= t_end; ++t) {
        const Location loc = at(t);
        while (done < n && task->goals[done] == loc) ++done;
        if (done == n) {
          completion = t;
          break;
        }
        for (int g = done + 1; g < n; ++g)
          if (task->goals[g] == loc) seen_later[g] = 1;
      }
      if (completion < 0) {
        if (std::any_of(seen_later.begin(), seen_later.end(), [](char c) { return c; }))
          flag(Violation::Kind::Order, -1,
               name + ": goal " + std::to_string(done) + " at " + to_string(task->goals[done]) +
                   " skipped; later goals visited first");
        else
          flag(Violation::Kind::Incomplete, -1,
               name + " not completed, stuck before goal " + std::to_string(done));
        continue;
      }
      TaskRecord& rec = record_of(task->id);
      rec.completion = completion;
      rec.service = completion - task->release;
      free_from = completion;
    }
  }
  for (const Task& t : sorted)
    if (!listed.count(t.id))
      flag(Violation::Kind::Incomplete, -1, "task " + std::to_string(t.id) + " never executed");

  std::int64_t sum = 0;
  for (const TaskRecord& r : rep.tasks)
    if (r.completion >= 0) {
      ++rep.completed;
      sum += r.service;
    }
  rep.mean_service = rep.completed ? static_cast<double>(sum) / rep.completed : 0.0;
  return rep;
}

}  // namespace mapd
