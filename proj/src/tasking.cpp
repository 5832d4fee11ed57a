#include "mapd/tasking.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mapd {

std::int64_t Rng::uniform(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw std::invalid_argument("Rng::uniform: empty range");
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(engine_());  // full 64-bit range
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % span;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return lo + static_cast<std::int64_t>(x % span);
}

std::string to_string(const Setting& s) {
  switch (s.visibility) {
    case Visibility::Offline: return "offline";
    case Visibility::Online: return "online";
    case Visibility::SemiOnline: return "semi_online(" + std::to_string(s.horizon) + ")";
  }
  return "?";
}

TaskStream::TaskStream(std::vector<Task> tasks, double frequency, Setting setting)
    : tasks_(std::move(tasks)), frequency_(frequency), setting_(setting) {
  std::stable_sort(tasks_.begin(), tasks_.end(), [](const Task& a, const Task& b) {
    return a.release != b.release ? a.release < b.release : a.id < b.id;
  });
  for (const Task& t : tasks_) batches_[t.release].push_back(t);
}

std::vector<Timestep> release_schedule(int count, double frequency) {
  if (count < 0) throw std::invalid_argument("task count must be >= 0");
  if (!(frequency > 0)) throw std::invalid_argument("task frequency must be > 0");
  std::vector<Timestep> releases;
  releases.reserve(count);
  if (frequency < 1.0) {
    const int period = std::max(1, static_cast<int>(std::lround(1.0 / frequency)));
    for (int i = 0; i < count; ++i) releases.push_back(i * period);
    return releases;
  }
  for (Timestep t = 0; static_cast<int>(releases.size()) < count; ++t) {
    const auto due = static_cast<long long>(std::floor((t + 1) * frequency + 1e-9)) -
                     static_cast<long long>(std::floor(t * frequency + 1e-9));
    for (long long k = 0; k < due && static_cast<int>(releases.size()) < count; ++k)
      releases.push_back(t);
  }
  return releases;
}

TaskStream generate_tasks(const GridMap& map, const TaskGenParams& params, Setting setting) {
  if (params.goals_min < 1 || params.goals_max < params.goals_min)
    throw std::invalid_argument("goal count range must satisfy 1 <= lo <= hi");
  const auto endpoints = map.task_endpoints();
  if (endpoints.empty()) throw std::runtime_error("cannot generate tasks: map has no task endpoints");

  const auto releases = release_schedule(params.count, params.frequency);
  Rng rng(params.seed);
  std::vector<Task> tasks;
  tasks.reserve(params.count);
  for (int i = 0; i < params.count; ++i) {
    Task t;
    t.id = i;
    t.release = releases[i];
    const auto k = rng.uniform(params.goals_min, params.goals_max);
    for (std::int64_t g = 0; g < k; ++g)
      t.goals.push_back(endpoints[rng.uniform(0, static_cast<std::int64_t>(endpoints.size()) - 1)]);
    tasks.push_back(std::move(t));
  }
  return TaskStream(std::move(tasks), params.frequency, setting);
}

Timestep visibility_cutoff(const TaskStream& stream, Timestep now) {
  const Setting& s = stream.setting();
  if (s.visibility == Visibility::Offline) return std::numeric_limits<Timestep>::max();
  if (s.visibility == Visibility::Online || s.horizon <= 0) return now;
  const auto& batches = stream.batches();
  auto it = batches.upper_bound(now);
  Timestep cutoff = now;
  for (int h = 0; h < s.horizon && it != batches.end(); ++h, ++it) cutoff = it->first;
  return cutoff;
}

std::vector<Task> visible_tasks(const TaskStream& stream, Timestep now) {
  const Timestep cutoff = visibility_cutoff(stream, now);
  std::vector<Task> out;
  for (const Task& t : stream.tasks()) {
    if (t.release > cutoff) break;
    out.push_back(t);
  }
  return out;
}

std::string serialize_tasks(const std::vector<Task>& tasks) {
  std::string out = "tasks " + std::to_string(tasks.size()) + "\n";
  for (const Task& t : tasks) {
    out += std::to_string(t.id) + " " + std::to_string(t.release) + " " +
           std::to_string(t.goals.size());
    for (const Location& g : t.goals) out += " " + to_string(g);
    out += "\n";
  }
  return out;
}

namespace {

bool to_int(std::string_view s, int& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<std::string_view> tokens(std::string_view line) {
  std::vector<std::string_view> out;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

std::vector<Task> load_tasks(std::string_view text) {
  std::vector<std::string_view> lines;
  for (size_t pos = 0; pos < text.size();) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  if (lines.empty()) throw ParseError(1, "missing header \"tasks <count>\"");
  auto head = tokens(lines[0]);
  int count = 0;
  if (head.size() != 2 || head[0] != "tasks" || !to_int(head[1], count) || count < 0)
    throw ParseError(1, "header must be \"tasks <count>\"");

  std::vector<Task> tasks;
  std::set<TaskId> ids;
  for (size_t li = 1; li < lines.size(); ++li) {
    const int line_no = static_cast<int>(li) + 1;
    auto tok = tokens(lines[li]);
    if (tok.empty()) continue;
    Task t;
    int k = 0;
    if (tok.size() < 3 || !to_int(tok[0], t.id) || !to_int(tok[1], t.release) ||
        !to_int(tok[2], k) || k < 1 || t.release < 0)
      throw ParseError(line_no, "expected \"id release k loc_1 ... loc_k\" with k >= 1");
    if (static_cast<int>(tok.size()) != 3 + k)
      throw ParseError(line_no, "expected " + std::to_string(k) + " locations");
    for (int g = 0; g < k; ++g) {
      auto s = tok[3 + g];
      auto comma = s.find(',');
      Location loc;
      if (comma == std::string_view::npos || !to_int(s.substr(0, comma), loc.row) ||
          !to_int(s.substr(comma + 1), loc.col))
        throw ParseError(line_no, "bad location '" + std::string(s) + "'");
      t.goals.push_back(loc);
    }
    if (!ids.insert(t.id).second)
      throw ParseError(line_no, "duplicate task id " + std::to_string(t.id));
    tasks.push_back(std::move(t));
  }
  if (static_cast<int>(tasks.size()) != count)
    throw ParseError(1, "header announces " + std::to_string(count) + " tasks, found " +
                            std::to_string(tasks.size()));
  return tasks;
}

std::vector<Task> load_tasks_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open task file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return load_tasks(ss.str());
  } catch (const ParseError& e) {
    throw std::runtime_error(path + ":" + e.what());
  }
}

}  // namespace mapd
