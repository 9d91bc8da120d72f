// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "ctmmcp/core/error.hpp"
#include "ctmmcp/core/rng.hpp"
#include "ctmmcp/ctm_runtime.hpp"

namespace ctmmcp {

using SteadyClock = std::chrono::steady_clock;

struct BranchOutcome {
  std::size_t branch_id = 0;
  Vector sync;
  Vector logits;
  double confidence = 0.0;
  std::uint32_t ticks_used = 0;
  bool reached_threshold = false;
  friend bool operator==(const BranchOutcome&, const BranchOutcome&) = default;
};

struct ConsensusResult {
  Vector sync_merged;
  double confidence_merged = 0.0;
  std::vector<std::size_t> contributors;  // ascending
  bool fallback = false;
  friend bool operator==(const ConsensusResult&, const ConsensusResult&) = default;
};

/// Logical ticks bound the deterministic mode; wall-clock ms the live mode.
struct DecisionDeadline {
  std::optional<std::uint64_t> logical_tick_limit;
  std::optional<std::chrono::milliseconds> wall_clock;

  bool valid() const { return logical_tick_limit.has_value() || wall_clock.has_value(); }
};

enum class WaitPolicy : std::uint8_t { Off, One };
enum class DecisionMode : std::uint8_t { Deterministic, Live };

/// A branch seat: the state a worker owns while it runs.
struct BranchSeat {
  std::size_t branch_id = 0;
  BranchState state;
};

/// One finished branch run within a round.
struct BranchRun {
  BranchOutcome outcome;
  BranchState state;
  HaltReason reason = HaltReason::None;
  std::uint32_t round_ticks = 0;  // ticks spent in this round; the logical finish time
};

struct BranchFailure {
  std::size_t branch_id = 0;
  std::string message;
};

/// Test and instrumentation hooks. `before_run` executes on the worker thread
/// before any slab; it may sleep or throw to simulate slow or failing branches.
struct BranchHooks {
  std::function<void(std::size_t branch_id)> before_run;
};

struct SpawnReport {
  std::vector<BranchRun> completed;  // in completion order
  std::vector<BranchFailure> failures;
};

/// Branch diversity: clone i evaluates the synchrony pairs in an order
/// permuted by a stream derived from (episode seed, branch id).
inline std::vector<SyncPair> branch_pairs(std::span<const SyncPair> base, std::uint64_t episode_seed,
                                          std::size_t branch_id) {
  std::vector<SyncPair> out(base.begin(), base.end());
  SplitMix64 rng(derive_seed(derive_seed(episode_seed, "branch"), branch_id));
  for (std::size_t i = out.size(); i > 1; --i) std::swap(out[i - 1], out[rng.index(i)]);
  return out;
}

/// Runs slabs until the branch halts. A branch with no slab budget left
/// reports its current accumulators without running.
inline BranchRun run_branch(BranchState state, const FusionVector& fusion, const CtmParams& params,
                            double epsilon, std::size_t branch_id) {
  const std::uint32_t start_tick = state.tick;
  SlabResult last;
  if (state.slab >= params.shape.max_slabs) {
    auto readout = certainty(state.sync, params.certainty, params.constants.logit_scale);
    last = {state.sync, std::move(readout.logits), readout.certainty, true, HaltReason::Budget, 0};
  }
  while (!last.halted) {
    auto [next, result] = run_slab(std::move(state), fusion, params, epsilon);
    state = std::move(next);
    last = std::move(result);
  }
  BranchRun run;
  run.round_ticks = state.tick - start_tick;
  run.reason = last.reason;
  run.outcome = {branch_id,   std::move(last.sync), std::move(last.logits), last.certainty,
                 state.tick, last.reason == HaltReason::Threshold};
  run.state = std::move(state);
  return run;
}

/// Single-consumer queue of branch completions.
class CompletionQueue {
 public:
  using Item = std::variant<BranchRun, BranchFailure>;

  void push(Item item) {
    {
      std::lock_guard lock(mutex_);
      items_.push_back(std::move(item));
    }
    cv_.notify_one();
  }

  std::optional<Item> pop() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return !items_.empty(); });
    return take(lock);
  }

  std::optional<Item> pop_until(SteadyClock::time_point until) {
    std::unique_lock lock(mutex_);
    if (!cv_.wait_until(lock, until, [&] { return !items_.empty(); })) return std::nullopt;
    return take(lock);
  }

 private:
  std::optional<Item> take(std::unique_lock<std::mutex>&) {
    Item item = std::move(items_.front());
    items_.pop_front();
    return item;
  }

  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Item> items_;
};

/// Once-only arbitration between the normal and the timeout output paths.
class DecisionLatch {
 public:
  bool try_claim() noexcept {
    bool expected = false;
    return claimed_.compare_exchange_strong(expected, true, std::memory_order_acq_rel);
  }
  bool claimed() const noexcept { return claimed_.load(std::memory_order_acquire); }

 private:
  std::atomic<bool> claimed_{false};
};

namespace detail {

/// Starts one worker per seat; each pushes exactly one item to `queue`.
inline std::vector<std::jthread> launch_workers(std::vector<BranchSeat> seats,
                                                const FusionVector& fusion, const CtmParams& params,
                                                double epsilon, const BranchHooks& hooks,
                                                CompletionQueue& queue) {
  std::vector<std::jthread> workers;
  workers.reserve(seats.size());
  for (auto& seat : seats) {
    workers.emplace_back([&queue, &fusion, &params, &hooks, epsilon, seat = std::move(seat)]() mutable {
      try {
        if (hooks.before_run) hooks.before_run(seat.branch_id);
        queue.push(run_branch(std::move(seat.state), fusion, params, epsilon, seat.branch_id));
      } catch (const std::exception& e) {
        queue.push(BranchFailure{seat.branch_id, e.what()});
      } catch (...) {
        queue.push(BranchFailure{seat.branch_id, "unknown exception"});
      }
    });
  }
  return workers;
}

inline void collect(CompletionQueue::Item item, SpawnReport& report) {
  if (auto* run = std::get_if<BranchRun>(&item))
    report.completed.push_back(std::move(*run));
  else
    report.failures.push_back(std::get<BranchFailure>(std::move(item)));
}

}  // namespace detail

/// Runs every seat to completion concurrently. Failed branches are excluded
/// from `completed` and listed in `failures`.
inline SpawnReport run_branches(std::vector<BranchSeat> seats, const FusionVector& fusion,
                                const CtmParams& params, double epsilon,
                                const BranchHooks& hooks = {}) {
  CompletionQueue queue;
  const std::size_t count = seats.size();
  SpawnReport report;
  {
    auto workers = detail::launch_workers(std::move(seats), fusion, params, epsilon, hooks, queue);
    for (std::size_t i = 0; i < count; ++i) detail::collect(*queue.pop(), report);
  }
  return report;
}

inline std::vector<BranchSeat> clone_seats(const BranchState& seed_state, std::size_t k,
                                           std::uint64_t episode_seed) {
  std::vector<BranchSeat> seats;
  seats.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    BranchSeat seat{i, seed_state};
    seat.state.pairs = branch_pairs(seed_state.pairs, episode_seed, i);
    seats.push_back(std::move(seat));
  }
  return seats;
}

/// k diversified clones of `seed_state`, each run until it halts.
inline SpawnReport spawn_branches(const BranchState& seed_state, const FusionVector& fusion,
                                  std::size_t k, const CtmParams& params, double epsilon,
                                  std::uint64_t episode_seed, const BranchHooks& hooks = {}) {
  if (k == 0) throw Error(ErrorKind::ConfigError, "spawn_branches needs k >= 1");
  return run_branches(clone_seats(seed_state, k, episode_seed), fusion, params, epsilon, hooks);
}

/// S_merged = sum(c_i s_i) / sum(c_i), summed in ascending branch order.
/// When every c_i is below 1e-9 the unweighted mean is used instead.
inline ConsensusResult merge(std::span<const BranchOutcome> outcomes, const CtmParams& params) {
  if (outcomes.empty()) throw Error(ErrorKind::EmptyOutcomeList, "merge");
  const std::size_t p = outcomes.front().sync.size();
  std::vector<const BranchOutcome*> sorted;
  for (const auto& o : outcomes) {
    require_dim(o.sync.size(), p, "merge sync width");
    require_dim(o.logits.size(), outcomes.front().logits.size(), "merge logit width");
    sorted.push_back(&o);
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const BranchOutcome* a, const BranchOutcome* b) { return a->branch_id < b->branch_id; });

  const bool degenerate =
      std::all_of(sorted.begin(), sorted.end(), [](const BranchOutcome* o) { return o->confidence < 1e-9; });
  std::vector<double> acc(p, 0.0);
  double total = 0.0;
  for (const auto* o : sorted) {
    const double w = degenerate ? 1.0 : o->confidence;
    total += w;
    for (std::size_t k = 0; k < p; ++k) acc[k] += w * static_cast<double>(o->sync[k]);
  }

  ConsensusResult result;
  result.sync_merged.resize(p);
  for (std::size_t k = 0; k < p; ++k) {
    float lo = sorted.front()->sync[k], hi = lo;
    for (const auto* o : sorted) {
      lo = std::min(lo, o->sync[k]);
      hi = std::max(hi, o->sync[k]);
    }
    // Division can land one rounding step outside the hull.
    result.sync_merged[k] = std::clamp(static_cast<float>(acc[k] / total), lo, hi);
  }
  result.confidence_merged =
      certainty(result.sync_merged, params.certainty, params.constants.logit_scale).certainty;
  for (const auto* o : sorted) result.contributors.push_back(o->branch_id);
  return result;
}

/// A completion together with its logical finish time.
struct TimedOutcome {
  BranchOutcome outcome;
  std::uint64_t finish = 0;
};

/// Merge set after the first branch past threshold: with policy One, the next
/// branch to finish no later than `deadline` joins (ties by branch id).
inline std::vector<BranchOutcome> wait_extra_slab(const BranchOutcome& first,
                                                  std::span<const TimedOutcome> pending,
                                                  WaitPolicy policy, std::uint64_t deadline) {
  std::vector<BranchOutcome> out{first};
  if (policy == WaitPolicy::Off) return out;
  const TimedOutcome* next = nullptr;
  for (const auto& t : pending) {
    if (t.outcome.branch_id == first.branch_id || t.finish > deadline) continue;
    if (!next || std::pair(t.finish, t.outcome.branch_id) < std::pair(next->finish, next->outcome.branch_id))
      next = &t;
  }
  if (next) out.push_back(next->outcome);
  return out;
}

/// Total fallback: the cached consensus (flagged), or the zero-vector no-op.
inline ConsensusResult timeout_safe_pass(const std::optional<ConsensusResult>& cache,
                                         const DecisionDeadline& /*deadline*/, std::size_t pairs) {
  if (cache) {
    ConsensusResult out = *cache;
    out.fallback = true;
    return out;
  }
  return {Vector(pairs, 0.0f), 0.0, {}, true};
}

struct RoundConfig {
  WaitPolicy wait = WaitPolicy::One;
  DecisionMode mode = DecisionMode::Deterministic;
  std::uint64_t extra_wait_ticks = 32;  // window after the first halt (default 4 L)
  DecisionDeadline deadline{std::nullopt, std::nullopt};
};

struct RoundReport {
  ConsensusResult result;
  std::vector<BranchSeat> seats;       // updated states, ascending branch id
  std::vector<BranchRun> completed;    // completion order
  std::vector<BranchFailure> failures;
  bool timed_out = false;
  std::optional<SteadyClock::time_point> claimed_at;  // live mode only
  std::optional<SteadyClock::time_point> deadline_at;
};

namespace detail {

inline void finish_seats(RoundReport& report, std::vector<BranchSeat> idle) {
  report.seats = std::move(idle);
  for (const auto& run : report.completed) report.seats.push_back({run.outcome.branch_id, run.state});
  std::sort(report.seats.begin(), report.seats.end(),
            [](const BranchSeat& a, const BranchSeat& b) { return a.branch_id < b.branch_id; });
}

inline std::pair<std::vector<BranchSeat>, std::vector<BranchSeat>> split_by_budget(
    std::vector<BranchSeat> seats, const CtmParams& params) {
  std::vector<BranchSeat> active, idle;
  for (auto& s : seats)
    (s.state.slab < params.shape.max_slabs ? active : idle).push_back(std::move(s));
  return {std::move(active), std::move(idle)};
}

inline RoundReport decide_deterministic(std::vector<BranchSeat> seats, const FusionVector& fusion,
                                        const CtmParams& params, double epsilon,
                                        const RoundConfig& config,
                                        const std::optional<ConsensusResult>& cache,
                                        const BranchHooks& hooks,
                                        const std::function<void(const ConsensusResult&)>& emit) {
  auto [active, idle] = split_by_budget(std::move(seats), params);
  SpawnReport spawned = run_branches(std::move(active), fusion, params, epsilon, hooks);

  std::vector<TimedOutcome> timed;
  for (const auto& run : spawned.completed) timed.push_back({run.outcome, run.round_ticks});
  std::sort(timed.begin(), timed.end(), [](const TimedOutcome& a, const TimedOutcome& b) {
    return std::pair(a.finish, a.outcome.branch_id) < std::pair(b.finish, b.outcome.branch_id);
  });

  const std::uint64_t limit = config.deadline.logical_tick_limit.value_or(
      params.shape.ticks_per_slab * params.shape.max_slabs);
  const TimedOutcome* first = nullptr;
  for (const auto& t : timed)
    if (t.outcome.reached_threshold && t.finish <= limit) {
      first = &t;
      break;
    }

  RoundReport report;
  report.completed = std::move(spawned.completed);
  report.failures = std::move(spawned.failures);
  DecisionLatch latch;
  if (first && latch.try_claim()) {
    const std::uint64_t window = std::min(limit, first->finish + config.extra_wait_ticks);
    const auto set = wait_extra_slab(first->outcome, timed, config.wait, window);
    report.result = merge(set, params);
  } else if (latch.try_claim()) {
    report.result = timeout_safe_pass(cache, config.deadline, params.shape.pairs);
    report.timed_out = true;
  }
  if (emit) emit(report.result);
  finish_seats(report, std::move(idle));
  return report;
}

inline RoundReport decide_live(std::vector<BranchSeat> seats, const FusionVector& fusion,
                               const CtmParams& params, double epsilon, const RoundConfig& config,
                               const std::optional<ConsensusResult>& cache,
                               const BranchHooks& hooks,
                               const std::function<void(const ConsensusResult&)>& emit) {
  auto [active, idle] = split_by_budget(std::move(seats), params);
  const std::size_t count = active.size();
  const auto deadline = SteadyClock::now() + config.deadline.wall_clock.value_or(std::chrono::milliseconds(250));

  RoundReport report;
  report.deadline_at = deadline;
  DecisionLatch latch;
  std::mutex out_mutex;
  std::optional<ConsensusResult> emitted;
  auto publish = [&](ConsensusResult r, bool timed_out, SteadyClock::time_point at) {
    std::lock_guard lock(out_mutex);
    report.claimed_at = at;
    report.timed_out = timed_out;
    if (emit) emit(r);
    emitted = std::move(r);
  };

  std::mutex timer_mutex;
  std::condition_variable timer_cv;
  bool cancelled = false;
  std::jthread watchdog([&] {
    std::unique_lock lock(timer_mutex);
    if (timer_cv.wait_until(lock, deadline, [&] { return cancelled; })) return;
    lock.unlock();
    const auto at = SteadyClock::now();
    if (latch.try_claim()) publish(timeout_safe_pass(cache, config.deadline, params.shape.pairs), true, at);
  });

  CompletionQueue queue;
  SpawnReport spawned;
  {
    auto workers = detail::launch_workers(std::move(active), fusion, params, epsilon, hooks, queue);
    std::size_t received = 0;
    bool claimed = false;
    while (received < count && !latch.claimed()) {
      auto item = queue.pop_until(deadline);
      if (!item) break;
      ++received;
      const auto* run = std::get_if<BranchRun>(&*item);
      const bool passes = run && run->outcome.reached_threshold;
      BranchOutcome first = passes ? run->outcome : BranchOutcome{};
      collect(std::move(*item), spawned);
      const auto at = SteadyClock::now();
      if (!passes || at >= deadline || !latch.try_claim()) continue;
      claimed = true;
      std::vector<BranchOutcome> set{first};
      if (config.wait == WaitPolicy::One && received < count) {
        while (received < count) {
          auto extra = queue.pop_until(deadline);
          if (!extra) break;
          ++received;
          const auto* extra_run = std::get_if<BranchRun>(&*extra);
          std::optional<BranchOutcome> joined;
          if (extra_run) joined = extra_run->outcome;
          collect(std::move(*extra), spawned);
          if (joined) {
            set.push_back(*joined);
            break;
          }
        }
      }
      publish(merge(set, params), false, at);
    }
    if (claimed) {
      {
        std::lock_guard lock(timer_mutex);
        cancelled = true;
      }
      timer_cv.notify_all();
    }
    // Losers run to their budget; drain them before handing states back.
    while (received < count) {
      collect(*queue.pop(), spawned);
      ++received;
    }
  }
  watchdog.join();

  report.result = std::move(*emitted);
  report.completed = std::move(spawned.completed);
  report.failures = std::move(spawned.failures);
  finish_seats(report, std::move(idle));
  return report;
}

}  // namespace detail

/// One thought round: runs every seat with budget left, then emits exactly
/// one ConsensusResult (merged, or the timeout fallback). `emit`, when set,
/// observes that single emission.
inline RoundReport decide_round(std::vector<BranchSeat> seats, const FusionVector& fusion,
                                const CtmParams& params, double epsilon, const RoundConfig& config,
                                const std::optional<ConsensusResult>& cache,
                                const BranchHooks& hooks = {},
                                const std::function<void(const ConsensusResult&)>& emit = {}) {
  if (config.mode == DecisionMode::Live)
    return detail::decide_live(std::move(seats), fusion, params, epsilon, config, cache, hooks, emit);
  return detail::decide_deterministic(std::move(seats), fusion, params, epsilon, config, cache, hooks, emit);
}

}  // namespace ctmmcp
