// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "ctmmcp/actuator.hpp"
#include "ctmmcp/core/error.hpp"
#include "ctmmcp/harness/tasks.hpp"
#include "ctmmcp/mcp_router.hpp"

namespace ctmmcp {

struct ObjectState {
  std::string location;
  bool held = false;
  friend bool operator==(const ObjectState&, const ObjectState&) = default;
};

struct WorldState {
  std::map<std::string, ObjectState> objects;
  std::string robot_at;
  std::string goal_predicate;  // final step's postcondition

  std::optional<std::string> held_object() const {
    for (const auto& [name, o] : objects)
      if (o.held) return name;
    return std::nullopt;
  }

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

inline WorldState world_from_task(const TaskRecord& task) {
  WorldState w;
  w.robot_at = task.start;
  for (const auto& [obj, loc] : task.initial) w.objects[obj] = {loc, false};
  w.goal_predicate = task.steps.empty() ? "ok" : task.steps.back().expected;
  return w;
}

inline bool holds(const WorldState& w, std::string_view predicate) {
  const Postcondition p = parse_postcondition(predicate);
  switch (p.kind) {
    case Postcondition::Kind::Ok: return true;
    case Postcondition::Kind::RobotAt: return w.robot_at == p.a;
    case Postcondition::Kind::Held: {
      const auto it = w.objects.find(p.a);
      return it != w.objects.end() && it->second.held;
    }
    case Postcondition::Kind::At: {
      const auto it = w.objects.find(p.a);
      return it != w.objects.end() && !it->second.held && it->second.location == p.b;
    }
  }
  return false;
}

inline bool goal_holds(const WorldState& w) { return holds(w, w.goal_predicate); }

inline Json to_json(const WorldState& w) {
  Json objects = Json::object();
  for (const auto& [name, o] : w.objects) objects[name] = {{"location", o.location}, {"held", o.held}};
  return {{"objects", objects}, {"robot_at", w.robot_at}, {"goal", w.goal_predicate}};
}

/// What `actuate` needs from the current decision step.
struct ActuationContext {
  const ActuatorParams* actuator = nullptr;
  std::span<const float> sync;
};

namespace detail {

inline ToolResult tool_error(std::string message) {
  return {ToolStatus::Error, {{"error", std::move(message)}}};
}

inline const std::string* string_arg(const SlotMap& args, const char* slot) {
  const auto it = args.find(slot);
  return it == args.end() ? nullptr : std::get_if<std::string>(&it->second);
}

}  // namespace detail

/// Simulated tools. Failed calls return the input state unchanged.
inline std::pair<WorldState, ToolResult> step_env(const WorldState& state, std::string_view tool,
                                                  const SlotMap& args, const ActuationContext& act = {}) {
  WorldState next = state;
  if (tool == "noop") return {std::move(next), {ToolStatus::Ok, Json::object()}};

  if (tool == "navigate") {
    const auto* target = detail::string_arg(args, "target");
    if (!target) return {state, detail::tool_error("navigate needs a string 'target'")};
    next.robot_at = *target;
    for (auto& [name, o] : next.objects)
      if (o.held) o.location = *target;
    return {std::move(next), {ToolStatus::Ok, {{"robot_at", *target}}}};
  }

  if (tool == "pick") {
    const auto* obj = detail::string_arg(args, "object");
    if (!obj) return {state, detail::tool_error("pick needs a string 'object'")};
    const auto it = next.objects.find(*obj);
    if (it == next.objects.end()) return {state, detail::tool_error("no such object: " + *obj)};
    if (state.held_object()) return {state, detail::tool_error("hand is not empty")};
    if (it->second.location != state.robot_at) return {state, detail::tool_error(*obj + " is not here")};
    it->second.held = true;
    return {std::move(next), {ToolStatus::Ok, {{"held", *obj}}}};
  }

  if (tool == "place") {
    const auto* obj = detail::string_arg(args, "object");
    if (!obj) return {state, detail::tool_error("place needs a string 'object'")};
    const auto it = next.objects.find(*obj);
    if (it == next.objects.end() || !it->second.held) return {state, detail::tool_error(*obj + " is not held")};
    it->second.held = false;
    it->second.location = state.robot_at;
    return {std::move(next), {ToolStatus::Ok, {{"object", *obj}, {"at", state.robot_at}}}};
  }

  if (tool == "actuate") {
    if (!act.actuator) return {state, detail::tool_error("no actuator attached")};
    const ActuationPlan plan = actuate(act.sync, *act.actuator);
    if (!plan.feasible) return {state, detail::tool_error("torques infeasible")};
    return {std::move(next), {ToolStatus::Ok, {{"duty", plan.duty}}}};
  }

  throw Error(ErrorKind::UnknownTool, "unregistered tool", std::string(tool));
}

}  // namespace ctmmcp
