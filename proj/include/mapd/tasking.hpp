#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "mapd/grid_world.hpp"

namespace mapd {

using TaskId = int;

struct Task {
  TaskId id = 0;
  Timestep release = 0;
  std::vector<Location> goals;  // s = goals.front(), g = goals.back()

  const Location& first() const { return goals.front(); }
  const Location& last() const { return goals.back(); }

  friend bool operator==(const Task&, const Task&) = default;
};

// Deterministic across platforms: mt19937_64 output is fixed by the
// standard, the bounded draw below is ours.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [lo, hi].
  std::int64_t uniform(std::int64_t lo, std::int64_t hi);
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

enum class Visibility { Offline, Online, SemiOnline };

struct Setting {
  Visibility visibility = Visibility::Online;
  int horizon = 0;  // batches known ahead; SemiOnline only

  static Setting offline() { return {Visibility::Offline, 0}; }
  static Setting online() { return {Visibility::Online, 0}; }
  static Setting semi_online(int h) { return {Visibility::SemiOnline, h}; }
};

std::string to_string(const Setting& s);

class TaskStream {
 public:
  TaskStream() = default;
  // Tasks are stored sorted by (release, id).
  TaskStream(std::vector<Task> tasks, double frequency, Setting setting);

  const std::vector<Task>& tasks() const { return tasks_; }
  const std::map<Timestep, std::vector<Task>>& batches() const { return batches_; }
  double frequency() const { return frequency_; }
  const Setting& setting() const { return setting_; }
  void set_setting(Setting s) { setting_ = s; }
  size_t size() const { return tasks_.size(); }

 private:
  std::vector<Task> tasks_;
  std::map<Timestep, std::vector<Task>> batches_;
  double frequency_ = 1.0;
  Setting setting_;
};

struct TaskGenParams {
  int count = 0;
  double frequency = 1.0;  // tasks per timestep
  int goals_min = 2;
  int goals_max = 2;
  std::uint64_t seed = 0;
};

// Number of tasks released at each timestep in generation order.
// f >= 1: floor((t+1)f) - floor(tf) at every t. f < 1: one task every
// round(1/f) timesteps.
std::vector<Timestep> release_schedule(int count, double frequency);

TaskStream generate_tasks(const GridMap& map, const TaskGenParams& params,
                          Setting setting = Setting::online());

// offline: everything; online: r <= now; semi-online(h): r <= now plus the
// next h batches after now.
std::vector<Task> visible_tasks(const TaskStream& stream, Timestep now);

// Latest release time visible at `now` (everything with release <= it is
// visible). Returns now for online, +inf-ish for offline.
Timestep visibility_cutoff(const TaskStream& stream, Timestep now);

// Task file: header `tasks <count>`, then `id release k r,c ... r,c`.
std::string serialize_tasks(const std::vector<Task>& tasks);
std::vector<Task> load_tasks(std::string_view text);
std::vector<Task> load_tasks_file(const std::string& path);

}  // namespace mapd
