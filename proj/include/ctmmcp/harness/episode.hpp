// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ctmmcp/affect_loop.hpp"
#include "ctmmcp/core/canonical_json.hpp"
#include "ctmmcp/core/error.hpp"
#include "ctmmcp/core/rng.hpp"
#include "ctmmcp/ctm_runtime.hpp"
#include "ctmmcp/harness/config.hpp"
#include "ctmmcp/harness/featurizer.hpp"
#include "ctmmcp/harness/model.hpp"
#include "ctmmcp/harness/tasks.hpp"
#include "ctmmcp/harness/world.hpp"
#include "ctmmcp/mcp_router.hpp"
#include "ctmmcp/parallel_consensus.hpp"
#include "ctmmcp/transport.hpp"

namespace ctmmcp {

enum class Policy : std::uint8_t { Ctm, Oracle };
enum class Outcome : std::uint8_t { Success, BudgetExhausted, Error };

constexpr std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Success: return "success";
    case Outcome::BudgetExhausted: return "budget_exhausted";
    case Outcome::Error: return "error";
  }
  return "?";
}

inline Outcome outcome_from_string(std::string_view s) {
  if (s == "success") return Outcome::Success;
  if (s == "budget_exhausted") return Outcome::BudgetExhausted;
  if (s == "error") return Outcome::Error;
  throw Error(ErrorKind::SchemaViolation, "unknown outcome '" + std::string(s) + "'", "outcome");
}

struct StepRecord {
  std::uint32_t step = 0;
  std::uint32_t slab_count = 0;
  std::uint32_t ticks = 0;
  double c_merged = 0.0;
  double epsilon = 0.0;  // threshold the branches ran under
  std::string action;
  SlotMap args;
  std::string tool_status;
  bool fallback = false;
  std::uint32_t rethinks = 0;
  bool forced = false;  // dispatched on slab budget with c_merged < gamma
  std::uint32_t branch_failures = 0;
  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct EpisodeLog {
  std::string task_id;
  std::vector<StepRecord> steps;
  Outcome outcome = Outcome::BudgetExhausted;
  std::uint32_t steps_used = 0;
  std::uint32_t budget_steps = 0;
  std::string error;

  std::size_t tool_calls() const { return steps.size(); }
  std::size_t tool_ok() const {
    return static_cast<std::size_t>(
        std::count_if(steps.begin(), steps.end(), [](const StepRecord& s) { return s.tool_status == "ok"; }));
  }
  friend bool operator==(const EpisodeLog&, const EpisodeLog&) = default;
};

struct EpisodeHooks {
  BranchHooks branch;
};

/// Seed state for the next decision step: hidden state of the lowest-id
/// contributor, fresh history and counters, accumulators from S_merged.
inline BranchState carry_seed(const BranchState& previous, const RoundReport& report, const CtmParams& params) {
  BranchState next = BranchState::initial(params);
  next.z = previous.z;
  if (!report.result.contributors.empty()) {
    const std::size_t lead = report.result.contributors.front();
    for (const auto& seat : report.seats)
      if (seat.branch_id == lead) next.z = seat.state.z;
  }
  next.sync = report.result.sync_merged;
  return next;
}

inline EpisodeLog run_episode(const TaskRecord& task, const Model& model, const RunConfig& config, Policy policy,
                              std::uint64_t run_seed, const EpisodeHooks& hooks = {}) {
  EpisodeLog log{task.id, {}, Outcome::BudgetExhausted, 0, task.budget_steps, {}};
  const std::uint64_t episode_seed = derive_seed(run_seed, task.id);
  const auto& shape = model.ctm.shape;
  const RoundConfig round = config.round();

  WorldState world;
  Vector current_sync(shape.pairs, 0.0f);
  ToolServer server(model.registry, [&](const Envelope& env) {
    auto [next, result] = step_env(world, env.tool, env.args, {&model.actuator, current_sync});
    if (result.ok()) world = std::move(next);
    return result;
  });
  LoopbackTransport transport(server);
  Session session;

  try {
    world = world_from_task(task);
    const auto candidates = make_candidates(task.context, config.model_seed);
    BranchState seed = BranchState::initial(model.ctm);
    std::optional<ConsensusResult> cache;
    double epsilon = model.affect.epsilon0;
    if (goal_holds(world)) log.outcome = Outcome::Success;

    for (std::uint32_t step = 1; step <= task.budget_steps && log.outcome != Outcome::Success; ++step) {
      const FusionVector fusion = perceive(featurize(task, world, model.dims), model.encoder);
      auto seats = clone_seats(seed, config.consensus.branches, derive_seed(episode_seed, step));

      StepRecord rec;
      rec.step = step;
      rec.epsilon = epsilon;
      RoundReport report;
      for (;;) {
        report = decide_round(std::move(seats), fusion, model.ctm, epsilon, round, cache, hooks.branch);
        rec.branch_failures += static_cast<std::uint32_t>(report.failures.size());
        if (!report.result.fallback) cache = report.result;
        std::size_t slabs_used = report.seats.empty() ? shape.max_slabs : 0;
        std::uint32_t ticks = 0;
        for (const auto& s : report.seats) {
          slabs_used = std::max<std::size_t>(slabs_used, s.state.slab);
          ticks = std::max(ticks, s.state.tick);
        }
        rec.slab_count = static_cast<std::uint32_t>(slabs_used);
        rec.ticks = ticks;
        const double c = report.result.confidence_merged;
        if (policy_gate(c, model.router.gamma, slabs_used, shape.max_slabs) == GateDecision::Dispatch) {
          rec.forced = c < model.router.gamma;
          break;
        }
        ++rec.rethinks;
        seats = report.seats;
      }

      const ConsensusResult& result = report.result;
      const AffectVector affect = affect_decode(result.sync_merged, model.affect);
      epsilon = modulate_epsilon(affect, model.affect);

      ActionDecision decision;
      if (policy == Policy::Ctm) {
        decision = select_action(result, model.router, model.registry, candidates);
      } else if (step <= task.steps.size()) {
        const auto& scripted = task.steps[step - 1];
        decision = {model.registry.find(scripted.tool).value_or(model.registry.size()), scripted.tool, scripted.args};
      } else {
        decision = {0, std::string(kNoopTool), {}};
      }

      current_sync = result.sync_merged;
      const Envelope env{session.next_id(), decision.tool, decision.args,
                         make_meta(task.id, step, rec.slab_count, rec.ticks, result, affect)};
      const ToolResult tool_result = dispatch(env, transport);

      rec.c_merged = result.confidence_merged;
      rec.action = decision.tool;
      rec.args = decision.args;
      rec.tool_status = tool_result.ok() ? "ok" : "error";
      rec.fallback = result.fallback;
      log.steps.push_back(std::move(rec));
      log.steps_used = step;

      seed = carry_seed(seed, report, model.ctm);
      if (goal_holds(world)) log.outcome = Outcome::Success;
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigError) throw;
    log.outcome = Outcome::Error;
    log.error = e.what();
  } catch (const std::exception& e) {
    log.outcome = Outcome::Error;
    log.error = e.what();
  }
  return log;
}

// ---------------------------------------------------------------------------
// Log files
// ---------------------------------------------------------------------------

inline Json to_json(const StepRecord& s) {
  return {{"type", "step"},
          {"step", s.step},
          {"slab_count", s.slab_count},
          {"ticks", s.ticks},
          {"c_merged", s.c_merged},
          {"epsilon", s.epsilon},
          {"action", s.action},
          {"args", args_to_json(s.args)},
          {"tool_status", s.tool_status},
          {"fallback", s.fallback},
          {"rethinks", s.rethinks},
          {"forced", s.forced},
          {"branch_failures", s.branch_failures}};
}

inline Json summary_json(const EpisodeLog& log) {
  return {{"type", "summary"},
          {"task_id", log.task_id},
          {"outcome", to_string(log.outcome)},
          {"steps_used", log.steps_used},
          {"budget_steps", log.budget_steps},
          {"tool_calls", log.tool_calls()},
          {"tool_ok", log.tool_ok()},
          {"error", log.error}};
}

/// One canonical JSON line per step, then the summary line.
inline void write_episode_log(std::ostream& out, const EpisodeLog& log) {
  for (const auto& s : log.steps) out << canonical_dump(to_json(s)) << '\n';
  out << canonical_dump(summary_json(log)) << '\n';
}

inline EpisodeLog read_episode_log(std::istream& in) {
  EpisodeLog log;
  bool summary = false;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    Json j;
    try {
      j = Json::parse(text);
    } catch (const Json::parse_error& e) {
      throw Error(ErrorKind::ParseError, e.what(), {}, line);
    }
    try {
      if (summary) throw Error(ErrorKind::SchemaViolation, "line after summary", "type");
      const std::string type = j.at("type").get<std::string>();
      if (type == "step") {
        StepRecord s;
        s.step = j.at("step").get<std::uint32_t>();
        s.slab_count = j.at("slab_count").get<std::uint32_t>();
        s.ticks = j.at("ticks").get<std::uint32_t>();
        s.c_merged = j.at("c_merged").get<double>();
        s.epsilon = j.at("epsilon").get<double>();
        s.action = j.at("action").get<std::string>();
        s.args = detail::args_from_json(j.at("args"), "args");
        s.tool_status = j.at("tool_status").get<std::string>();
        s.fallback = j.at("fallback").get<bool>();
        s.rethinks = j.at("rethinks").get<std::uint32_t>();
        s.forced = j.at("forced").get<bool>();
        s.branch_failures = j.at("branch_failures").get<std::uint32_t>();
        log.steps.push_back(std::move(s));
      } else if (type == "summary") {
        summary = true;
        log.task_id = j.at("task_id").get<std::string>();
        log.outcome = outcome_from_string(j.at("outcome").get<std::string>());
        log.steps_used = j.at("steps_used").get<std::uint32_t>();
        log.budget_steps = j.at("budget_steps").get<std::uint32_t>();
        log.error = j.at("error").get<std::string>();
        if (j.at("tool_calls").get<std::size_t>() != log.tool_calls() ||
            j.at("tool_ok").get<std::size_t>() != log.tool_ok())
          throw Error(ErrorKind::SchemaViolation, "summary counts disagree with step lines", "tool_calls");
      } else {
        throw Error(ErrorKind::SchemaViolation, "unknown line type '" + type + "'", "type");
      }
    } catch (const Json::exception& e) {
      throw Error(ErrorKind::SchemaViolation, e.what(), {}, line);
    } catch (const Error& e) {
      throw Error(e.kind(), e.message(), e.path(), line);
    }
  }
  if (!summary) throw Error(ErrorKind::SchemaViolation, "missing summary line", "type");
  return log;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct MetricsReport {
  double tsr = 0.0;
  double esr = 0.0;
  double ael = 0.0;
  std::size_t episode_count = 0;
  std::size_t successes = 0;
  std::size_t tool_calls = 0;
  std::size_t tool_ok = 0;
  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// TSR = successes / episodes, ESR = ok calls / calls (0 with no calls),
/// AEL = mean steps_used.
inline MetricsReport compute_metrics(std::span<const EpisodeLog> logs) {
  if (logs.empty()) throw Error(ErrorKind::EmptyLogs, "no episodes");
  MetricsReport r;
  r.episode_count = logs.size();
  std::uint64_t steps = 0;
  for (const auto& l : logs) {
    r.successes += l.outcome == Outcome::Success ? 1 : 0;
    r.tool_calls += l.tool_calls();
    r.tool_ok += l.tool_ok();
    steps += l.steps_used;
  }
  const auto n = static_cast<double>(logs.size());
  r.tsr = static_cast<double>(r.successes) / n;
  r.esr = r.tool_calls == 0 ? 0.0 : static_cast<double>(r.tool_ok) / static_cast<double>(r.tool_calls);
  r.ael = static_cast<double>(steps) / n;
  return r;
}

inline Json to_json(const MetricsReport& r) {
  return {{"tsr", r.tsr},
          {"esr", r.esr},
          {"ael", r.ael},
          {"episodes", r.episode_count},
          {"successes", r.successes},
          {"tool_calls", r.tool_calls},
          {"tool_ok", r.tool_ok}};
}

}  // namespace ctmmcp
