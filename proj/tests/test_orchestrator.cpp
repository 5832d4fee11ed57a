#include <gtest/gtest.h>

#include <memory>

#include "mapd/orchestrator.hpp"

using namespace mapd;

namespace {

struct World {
  std::unique_ptr<GridMap> map;
  std::unique_ptr<DistanceOracle> oracle;

  explicit World(GridMap m) {
    map = std::make_unique<GridMap>(std::move(m));
    oracle = std::make_unique<DistanceOracle>(*map);
  }

  SimConfig config(std::vector<Location> starts, std::vector<Task> tasks, Variant v = Variant::LnsPbs,
                   Setting setting = Setting::online()) const {
    SimConfig c;
    c.oracle = oracle.get();
    c.starts = std::move(starts);
    c.stream = TaskStream(std::move(tasks), 1.0, setting);
    c.variant = v;
    c.budget = LnsBudget::iterations(20);
    c.seed = 1;
    return c;
  }
};

// Look-ahead corridor: agent at column 2, tau1 4 -> 7 at t=0, tau2 3 -> 5 at t=2.
GridMap corridor() { return load_map("1 10\n..reee.e.e\n"); }
std::vector<Task> corridor_tasks() {
  return {Task{1, 0, {{0, 4}, {0, 7}}}, Task{2, 2, {{0, 3}, {0, 5}}}};
}

SimState bare_state(const std::vector<Location>& starts, const std::vector<Location>& dummies,
                    const std::vector<TaskStatus>& status) {
  SimState s;
  for (size_t i = 0; i < starts.size(); ++i) {
    AgentState a;
    a.location = a.start = starts[i];
    a.dummy = dummies[i];
    s.agents.push_back(a);
  }
  s.status = status;
  s.completion.assign(status.size(), -1);
  return s;
}

}  // namespace

TEST(Variant, Names) {
  EXPECT_EQ(parse_variant("lns_pbs"), Variant::LnsPbs);
  EXPECT_EQ(parse_variant("lns_wpbs"), Variant::LnsWpbs);
  EXPECT_EQ(to_string(Variant::LnsWpbs), "lns_wpbs");
  EXPECT_THROW(parse_variant("cbs"), std::invalid_argument);
}

TEST(EligibleTasks, Deferral) {
  World w(load_map("3 5\nr.e.e\n.....\nr.e.e\n"));
  TaskCatalog cat({Task{0, 0, {{0, 2}, {0, 4}}}, Task{1, 0, {{2, 2}, {2, 4}}}}, *w.oracle);
  std::vector<TaskStatus> pending{TaskStatus::Pending, TaskStatus::Pending};

  auto s = bare_state({{0, 0}, {2, 0}}, {{0, 0}, {2, 0}}, pending);
  std::vector<TaskId> deferred;
  EXPECT_EQ(eligible_task_set(s, cat, Variant::LnsPbs, &deferred), (std::vector<TaskId>{0, 1}));
  EXPECT_TRUE(deferred.empty());

  // Agent 1's dummy sits on task 1's delivery location.
  s.agents[1].dummy = {2, 4};
  EXPECT_EQ(eligible_task_set(s, cat, Variant::LnsPbs, &deferred), (std::vector<TaskId>{0}));
  EXPECT_EQ(deferred, (std::vector<TaskId>{1}));
  EXPECT_EQ(eligible_task_set(s, cat, Variant::LnsWpbs, &deferred), (std::vector<TaskId>{0, 1}));
  EXPECT_TRUE(deferred.empty());

  // Executing and completed tasks are never eligible.
  s.status = {TaskStatus::Executing, TaskStatus::Completed};
  EXPECT_TRUE(eligible_task_set(s, cat, Variant::LnsWpbs).empty());
}

TEST(DummyEndpoints, NearestAndFallback) {
  World w(generate_warehouse(WarehouseProfile::Small));
  TaskCatalog empty({}, *w.oracle);
  Location start = w.map->non_task_endpoints()[5];
  auto s = bare_state({start}, {start}, {});
  auto d = assign_dummy_endpoints(s, empty, *w.oracle, Variant::LnsPbs);
  ASSERT_EQ(d.size(), 1u);
  // Oracle: nearest task endpoint, row-major on ties.
  Location best = start;
  int bd = kUnreachable;
  for (Location e : w.map->task_endpoints()) {
    const int dd = w.oracle->distance(start, e);
    if (dd < bd) bd = dd, best = e;
  }
  EXPECT_EQ(d[0], best);

  // Only task endpoint is a goal of a visible task: start is returned.
  World tiny(load_map("1 3\nr.e\n"));
  TaskCatalog one({Task{0, 0, {{0, 2}}}}, *tiny.oracle);
  auto s2 = bare_state({{0, 0}}, {{0, 0}}, {TaskStatus::Pending});
  EXPECT_EQ(assign_dummy_endpoints(s2, one, *tiny.oracle, Variant::LnsPbs)[0], (Location{0, 0}));
  // wPBS ignores goals of uncompleted tasks.
  EXPECT_EQ(assign_dummy_endpoints(s2, one, *tiny.oracle, Variant::LnsWpbs)[0], (Location{0, 2}));
}

TEST(DummyEndpoints, DistinctAndAvoidOthersOldDummies) {
  World w(load_map("1 6\nreeeer\n"));
  TaskCatalog empty({}, *w.oracle);
  auto s = bare_state({{0, 0}, {0, 5}}, {{0, 1}, {0, 5}}, {});
  auto d = assign_dummy_endpoints(s, empty, *w.oracle, Variant::LnsPbs);
  // Agent 1's nearest candidate is (0,4); agent 0 may keep its own old dummy.
  EXPECT_EQ(d[0], (Location{0, 1}));
  EXPECT_EQ(d[1], (Location{0, 4}));
  s.agents[0].dummy = {0, 4};
  d = assign_dummy_endpoints(s, empty, *w.oracle, Variant::LnsPbs);
  EXPECT_EQ(d[1], (Location{0, 3}));
  EXPECT_NE(d[0], d[1]);
}

TEST(Simulation, NoTasks) {
  World w(load_map("2 3\nr.e\n..r\n"));
  auto r = simulate(w.config({{0, 0}, {1, 2}}, {}));
  EXPECT_EQ(r.status, SimResult::Status::Ok);
  EXPECT_EQ(r.makespan, 0);
  EXPECT_EQ(r.completed, 0);
  EXPECT_TRUE(r.tasks.empty());
  EXPECT_TRUE(r.triggers.empty());
}

TEST(Simulation, SingleTwoGoalTask) {
  // Distances 2 to the first goal, then 2 to the second.
  World w(load_map("3 3\nr.e\n...\n..e\n"));
  auto cfg = w.config({{0, 0}}, {Task{0, 0, {{0, 2}, {2, 2}}}});
  auto r = simulate(cfg);
  ASSERT_EQ(r.status, SimResult::Status::Ok);
  ASSERT_EQ(r.tasks.size(), 1u);
  EXPECT_EQ(r.tasks[0].completion, 4);
  EXPECT_EQ(r.tasks[0].service, 4);
  EXPECT_DOUBLE_EQ(r.st, 4.0);
  auto rep = verify_execution(*w.map, cfg.stream.tasks(), r.log);
  EXPECT_TRUE(rep.ok());
  EXPECT_DOUBLE_EQ(rep.mean_service, 4.0);
}

TEST(Simulation, LookAheadCorridor) {
  World w(corridor());
  auto la0 = simulate(w.config({{0, 2}}, corridor_tasks(), Variant::LnsPbs, Setting::online()));
  auto la1 = simulate(w.config({{0, 2}}, corridor_tasks(), Variant::LnsPbs, Setting::semi_online(1)));
  ASSERT_EQ(la0.status, SimResult::Status::Ok);
  ASSERT_EQ(la1.status, SimResult::Status::Ok);
  EXPECT_DOUBLE_EQ(la0.st, 7.0);
  EXPECT_DOUBLE_EQ(la1.st, 5.0);
  EXPECT_EQ(la0.tasks[0].completion, 5);
  EXPECT_EQ(la0.tasks[1].completion, 11);
  EXPECT_EQ(la1.tasks[0].completion, 8);
  EXPECT_EQ(la1.tasks[1].completion, 4);
  for (auto* r : {&la0, &la1})
    EXPECT_TRUE(verify_execution(*w.map, corridor_tasks(), r->log).ok());
}

TEST(Simulation, WarehouseRunsAreValidatorClean) {
  World w(generate_warehouse(WarehouseProfile::Small));
  for (Variant v : {Variant::LnsPbs, Variant::LnsWpbs}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      auto stream = generate_tasks(*w.map, {30, 2.0, 1, 5, seed});
      auto starts = w.map->non_task_endpoints();
      Rng rng(seed);
      for (size_t i = 0; i < 8; ++i)
        std::swap(starts[i], starts[i + rng.uniform(0, starts.size() - 1 - i)]);
      starts.resize(8);
      auto cfg = w.config(starts, stream.tasks(), v);
      cfg.seed = seed;
      cfg.record_plans = true;
      auto r = simulate(cfg);
      ASSERT_EQ(r.status, SimResult::Status::Ok) << r.message;
      EXPECT_EQ(r.completed, 30);
      auto rep = verify_execution(*w.map, stream.tasks(), r.log);
      ASSERT_TRUE(rep.ok()) << to_string(rep.violations[0].kind) << " " << rep.violations[0].message;
      EXPECT_DOUBLE_EQ(rep.mean_service, r.st);
      for (const auto& t : r.tasks) EXPECT_EQ(rep.tasks[t.id].completion, t.completion);
      if (v == Variant::LnsPbs) EXPECT_EQ(r.pruned_pt_nodes, 0);
      for (const auto& p : r.plans) EXPECT_TRUE(detect_collisions(p.paths, p.horizon).empty());
    }
  }
}

TEST(Simulation, WindowReplanCadence) {
  World w(generate_warehouse(WarehouseProfile::Small));
  auto stream = generate_tasks(*w.map, {20, 0.2, 2, 2, 4});
  auto starts = w.map->non_task_endpoints();
  starts.resize(6);
  auto cfg = w.config(starts, stream.tasks(), Variant::LnsWpbs);
  auto r = simulate(cfg);
  ASSERT_EQ(r.status, SimResult::Status::Ok);
  Timestep last = -1;
  int replans = 0;
  for (const auto& e : r.plans) {
    if (e.kind == PlanEvent::Kind::WindowReplan) {
      EXPECT_EQ(e.time - last, cfg.window);
      ++replans;
    }
    last = e.time;
  }
  EXPECT_GT(replans, 0);
}

TEST(Simulation, Deterministic) {
  World w(generate_warehouse(WarehouseProfile::Small));
  auto stream = generate_tasks(*w.map, {20, 2.0, 1, 3, 6});
  auto starts = w.map->non_task_endpoints();
  starts.resize(5);
  auto a = simulate(w.config(starts, stream.tasks()));
  auto b = simulate(w.config(starts, stream.tasks()));
  EXPECT_EQ(serialize_path_log(a.log), serialize_path_log(b.log));
  ASSERT_EQ(a.tasks.size(), b.tasks.size());
  for (size_t i = 0; i < a.tasks.size(); ++i) EXPECT_EQ(a.tasks[i].completion, b.tasks[i].completion);
}

TEST(Validator, CorruptedLogs) {
  World w(load_map("3 5\nr.e.e\n.....\nr.e.e\n"));
  std::vector<Task> tasks{Task{0, 0, {{0, 2}, {0, 4}}}, Task{1, 0, {{2, 2}, {2, 4}}}};
  auto cfg = w.config({{0, 0}, {2, 0}}, tasks);
  auto r = simulate(cfg);
  ASSERT_TRUE(verify_execution(*w.map, tasks, r.log).ok());

  // Swap move between two agents standing side by side.
  std::vector<AgentLog> swap{{0, {{0, {1, 1}}, {1, {1, 2}}}, {}}, {1, {{0, {1, 2}}, {1, {1, 1}}}, {}}};
  auto rep = verify_execution(*w.map, {}, swap);
  ASSERT_FALSE(rep.ok());
  EXPECT_EQ(rep.violations[0].kind, Violation::Kind::EdgeCollision);

  // Skipping the middle goal of a three-goal task.
  std::vector<Task> three{Task{0, 0, {{0, 2}, {2, 2}, {0, 4}}}};
  std::vector<AgentLog> skip{{0,
                              {{0, {0, 0}}, {1, {0, 1}}, {2, {0, 2}}, {3, {0, 3}}, {4, {0, 4}}},
                              {{0, 2}}}};
  rep = verify_execution(*w.map, three, skip);
  ASSERT_FALSE(rep.ok());
  bool order = false;
  for (auto& v : rep.violations) order |= v.kind == Violation::Kind::Order;
  EXPECT_TRUE(order);

  // Teleport.
  std::vector<AgentLog> jump{{0, {{0, {0, 0}}, {1, {0, 4}}}, {}}};
  rep = verify_execution(*w.map, {}, jump);
  ASSERT_FALSE(rep.ok());
  EXPECT_EQ(rep.violations[0].kind, Violation::Kind::Move);
}

TEST(Guard, DefaultIsPositive) {
  World w(generate_warehouse(WarehouseProfile::Small));
  auto stream = generate_tasks(*w.map, {10, 1.0, 2, 2, 1});
  EXPECT_GT(default_guard(*w.oracle, stream, 3), 0);
}
