// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ctmmcp/core/canonical_json.hpp"
#include "ctmmcp/core/error.hpp"
#include "ctmmcp/core/rng.hpp"
#include "ctmmcp/mcp_router.hpp"

namespace ctmmcp {

struct TaskStep {
  std::string tool;
  SlotMap args;
  std::string expected;  // postcondition: robot_at:<loc> | held:<obj> | at:<obj>:<loc> | ok
  friend bool operator==(const TaskStep&, const TaskStep&) = default;
};

/// `start` and `initial` seed the simulated world: robot location and
/// object -> location. Context lists every object and location name.
struct TaskRecord {
  std::string id;
  std::string goal;
  std::vector<std::string> context;
  std::string start = "home";
  std::map<std::string, std::string> initial;
  std::vector<TaskStep> steps;
  std::uint32_t budget_steps = 20;
  friend bool operator==(const TaskRecord&, const TaskRecord&) = default;
};

/// Splits "kind:a[:b]" postconditions; throws SchemaViolation on anything else.
struct Postcondition {
  enum class Kind : std::uint8_t { Ok, RobotAt, Held, At } kind = Kind::Ok;
  std::string a, b;
};

inline Postcondition parse_postcondition(std::string_view text) {
  if (text == "ok") return {};
  const auto c1 = text.find(':');
  if (c1 == std::string_view::npos || c1 + 1 >= text.size())
    throw Error(ErrorKind::SchemaViolation, "bad postcondition '" + std::string(text) + "'", "expected");
  const std::string head(text.substr(0, c1));
  const std::string_view rest = text.substr(c1 + 1);
  if (head == "robot_at" && rest.find(':') == std::string_view::npos)
    return {Postcondition::Kind::RobotAt, std::string(rest), {}};
  if (head == "held" && rest.find(':') == std::string_view::npos)
    return {Postcondition::Kind::Held, std::string(rest), {}};
  if (head == "at") {
    const auto c2 = rest.find(':');
    if (c2 != std::string_view::npos && c2 > 0 && c2 + 1 < rest.size() &&
        rest.find(':', c2 + 1) == std::string_view::npos)
      return {Postcondition::Kind::At, std::string(rest.substr(0, c2)), std::string(rest.substr(c2 + 1))};
  }
  throw Error(ErrorKind::SchemaViolation, "bad postcondition '" + std::string(text) + "'", "expected");
}

inline Json to_json(const TaskRecord& t) {
  Json steps = Json::array();
  for (const auto& s : t.steps)
    steps.push_back({{"tool", s.tool}, {"args", args_to_json(s.args)}, {"expected", s.expected}});
  return {{"id", t.id},         {"goal", t.goal},       {"context", t.context},
          {"start", t.start},   {"initial", t.initial}, {"steps", std::move(steps)},
          {"budget_steps", t.budget_steps}};
}

namespace detail {

inline Error task_error(ErrorKind kind, std::string msg, std::string field, std::size_t line) {
  return Error(kind, std::move(msg), std::move(field), line);
}

inline std::string task_string(const Json& obj, const char* field, std::size_t line) {
  if (!obj.contains(field)) throw task_error(ErrorKind::SchemaViolation, "missing field", field, line);
  if (!obj[field].is_string()) throw task_error(ErrorKind::SchemaViolation, "expected string", field, line);
  return obj[field].get<std::string>();
}

}  // namespace detail

/// One JSON object per line. Blank lines are skipped. `line` numbers errors.
inline TaskRecord parse_task(std::string_view text, std::size_t line = 0) {
  Json j;
  try {
    j = Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    throw detail::task_error(ErrorKind::ParseError, e.what(), {}, line);
  }
  if (!j.is_object()) throw detail::task_error(ErrorKind::SchemaViolation, "expected object", {}, line);
  static constexpr std::array known{"id", "goal", "context", "start", "initial", "steps", "budget_steps"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw detail::task_error(ErrorKind::SchemaViolation, "unknown field", key, line);

  TaskRecord t;
  t.id = detail::task_string(j, "id", line);
  t.goal = detail::task_string(j, "goal", line);
  if (!j.contains("context")) throw detail::task_error(ErrorKind::SchemaViolation, "missing field", "context", line);
  if (!j["context"].is_array()) throw detail::task_error(ErrorKind::SchemaViolation, "expected array", "context", line);
  for (const auto& c : j["context"]) {
    if (!c.is_string()) throw detail::task_error(ErrorKind::SchemaViolation, "expected string", "context", line);
    t.context.push_back(c.get<std::string>());
  }
  if (j.contains("start")) t.start = detail::task_string(j, "start", line);
  if (j.contains("initial")) {
    const auto& init = j["initial"];
    if (!init.is_object()) throw detail::task_error(ErrorKind::SchemaViolation, "expected object", "initial", line);
    for (const auto& [obj, loc] : init.items()) {
      if (!loc.is_string()) throw detail::task_error(ErrorKind::SchemaViolation, "expected string", "initial." + obj, line);
      t.initial.emplace(obj, loc.get<std::string>());
    }
  }
  if (j.contains("budget_steps")) {
    const auto& b = j["budget_steps"];
    if (!b.is_number_unsigned() || b.get<std::uint64_t>() == 0 || b.get<std::uint64_t>() > 1000000)
      throw detail::task_error(ErrorKind::SchemaViolation, "expected positive integer", "budget_steps", line);
    t.budget_steps = b.get<std::uint32_t>();
  }
  if (!j.contains("steps")) throw detail::task_error(ErrorKind::SchemaViolation, "missing field", "steps", line);
  if (!j["steps"].is_array() || j["steps"].empty())
    throw detail::task_error(ErrorKind::SchemaViolation, "expected non-empty array", "steps", line);
  for (std::size_t i = 0; i < j["steps"].size(); ++i) {
    const auto& s = j["steps"][i];
    const std::string at = "steps[" + std::to_string(i) + "]";
    if (!s.is_object()) throw detail::task_error(ErrorKind::SchemaViolation, "expected object", at, line);
    for (const auto& [key, _] : s.items())
      if (key != "tool" && key != "args" && key != "expected")
        throw detail::task_error(ErrorKind::SchemaViolation, "unknown field", at + "." + key, line);
    TaskStep step;
    try {
      step.tool = detail::task_string(s, "tool", line);
      step.expected = detail::task_string(s, "expected", line);
    } catch (const Error& e) {
      throw detail::task_error(ErrorKind::SchemaViolation, e.message(), at + "." + e.path(), line);
    }
    if (!s.contains("args")) throw detail::task_error(ErrorKind::SchemaViolation, "missing field", at + ".args", line);
    try {
      step.args = detail::args_from_json(s["args"], at + ".args");
      parse_postcondition(step.expected);
    } catch (const Error& e) {
      throw detail::task_error(ErrorKind::SchemaViolation, e.message(),
                               e.path() == "expected" ? at + ".expected" : e.path(), line);
    }
    for (const auto& [slot, value] : step.args)
      if (const auto* name = std::get_if<std::string>(&value);
          name && std::find(t.context.begin(), t.context.end(), *name) == t.context.end())
        throw detail::task_error(ErrorKind::SchemaViolation, "argument '" + *name + "' not in context",
                                 at + ".args." + slot, line);
    t.steps.push_back(std::move(step));
  }
  return t;
}

inline std::vector<TaskRecord> parse_tasks(std::istream& in) {
  std::vector<TaskRecord> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_task(text, line));
  }
  return out;
}

inline std::vector<TaskRecord> load_tasks(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open tasks file", path);
  try {
    return parse_tasks(in);
  } catch (const Error& e) {
    // Keep the line; report the field (or the file when there is none).
    throw Error(e.kind(), e.message(), e.path().empty() ? path : e.path(), e.line());
  }
}

inline void write_tasks(std::ostream& out, const std::vector<TaskRecord>& tasks) {
  for (const auto& t : tasks) out << canonical_dump(to_json(t)) << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

inline constexpr std::array<std::string_view, 12> kObjects{
    "red_cup",  "blue_cup",   "apple", "sponge", "bottle", "bowl",
    "notebook", "towel",      "can",   "banana", "plate",  "remote"};
inline constexpr std::array<std::string_view, 6> kLocations{"kitchen", "table", "counter",
                                                             "shelf",   "sink",  "drawer"};

/// 1-2 navigate -> pick -> navigate -> place chains over distinct objects,
/// plus up to two distractor objects.
inline std::vector<TaskRecord> gen_tasks(std::uint64_t seed, std::size_t n) {
  if (n == 0) throw Error(ErrorKind::ConfigError, "gen_tasks needs n >= 1");
  std::vector<TaskRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SplitMix64 rng(derive_seed(derive_seed(seed, "gen_tasks"), i));
    std::vector<std::string_view> objects(kObjects.begin(), kObjects.end());
    for (std::size_t a = 0; a + 1 < objects.size(); ++a)
      std::swap(objects[a], objects[a + rng.index(objects.size() - a)]);
    const std::size_t chains = 1 + rng.index(2);
    const std::size_t distractors = rng.index(3);

    TaskRecord t;
    t.id = "synth-" + std::to_string(seed) + "-" + std::to_string(i);
    t.start = std::string(kLocations[rng.index(kLocations.size())]);
    std::string goal;
    for (std::size_t c = 0; c < chains; ++c) {
      const std::string obj(objects[c]);
      const std::string src(kLocations[rng.index(kLocations.size())]);
      std::string dst(kLocations[rng.index(kLocations.size() - 1)]);
      if (dst == src) dst = std::string(kLocations.back());
      t.initial.emplace(obj, src);
      t.steps.push_back({"navigate", {{"target", src}}, "robot_at:" + src});
      t.steps.push_back({"pick", {{"object", obj}}, "held:" + obj});
      t.steps.push_back({"navigate", {{"target", dst}}, "robot_at:" + dst});
      t.steps.push_back({"place", {{"object", obj}}, "at:" + obj + ":" + dst});
      goal += (c == 0 ? "move the " : " then move the ") + obj + " from the " + src + " to the " + dst;
    }
    for (std::size_t d = 0; d < distractors; ++d)
      t.initial.emplace(std::string(objects[chains + d]), std::string(kLocations[rng.index(kLocations.size())]));
    t.goal = goal;
    for (std::size_t c = 0; c < chains + distractors; ++c) t.context.emplace_back(objects[c]);
    for (auto loc : kLocations) t.context.emplace_back(loc);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace ctmmcp
