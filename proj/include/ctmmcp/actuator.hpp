// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ctmmcp/core/error.hpp"
#include "ctmmcp/core/rng.hpp"
#include "ctmmcp/core/tensor.hpp"
#include "ctmmcp/core/weight_file.hpp"

namespace ctmmcp {

inline constexpr std::size_t kDefaultJoints = 12;

/// Piecewise-linear torque -> duty map. Breakpoints strictly increasing,
/// duties in [0, 1]; evaluation clamps outside the outer breakpoints.
struct PwmTable {
  std::vector<double> torque;
  std::vector<double> duty;

  void validate() const {
    if (torque.size() != duty.size() || torque.size() < 2)
      throw Error(ErrorKind::MalformedTable, "need at least two (torque, duty) breakpoints");
    for (std::size_t i = 0; i < torque.size(); ++i) {
      if (!std::isfinite(torque[i]) || !std::isfinite(duty[i]))
        throw Error(ErrorKind::MalformedTable, "non-finite breakpoint");
      if (i > 0 && !(torque[i] > torque[i - 1]))
        throw Error(ErrorKind::MalformedTable, "breakpoints not strictly increasing");
      if (duty[i] < 0.0 || duty[i] > 1.0) throw Error(ErrorKind::MalformedTable, "duty outside [0,1]");
    }
  }

  double operator()(double x) const {
    if (x <= torque.front()) return duty.front();
    if (x >= torque.back()) return duty.back();
    const auto hi = static_cast<std::size_t>(std::upper_bound(torque.begin(), torque.end(), x) - torque.begin());
    const std::size_t lo = hi - 1;
    const double t = (x - torque[lo]) / (torque[hi] - torque[lo]);
    return duty[lo] + t * (duty[hi] - duty[lo]);
  }
};

struct ActuatorParams {
  Matrix k;                     // J x P
  std::vector<double> tau_min;  // N*m
  std::vector<double> tau_max;
  std::vector<std::optional<PwmTable>> pwm_table;  // nullopt: bipolar default
  std::vector<double> gain;
  std::size_t filter_window = 5;
  std::size_t samples_per_move = 10;

  std::size_t joints() const noexcept { return k.rows(); }

  static ActuatorParams with_k(Matrix k, double bound = 5.0) {
    const std::size_t j = k.rows();
    return {std::move(k), std::vector<double>(j, -bound), std::vector<double>(j, bound),
            std::vector<std::optional<PwmTable>>(j), std::vector<double>(j, 1.0)};
  }

  static ActuatorParams seeded(std::size_t pairs, std::uint64_t seed, std::size_t joints = kDefaultJoints) {
    return with_k(Matrix::uniform(joints, pairs, derive_seed(seed, "act.k")));
  }

  static ActuatorParams zeros(std::size_t pairs, std::size_t joints = kDefaultJoints) {
    return with_k(Matrix(joints, pairs));
  }

  void validate() const {
    const std::size_t j = joints();
    require_dim(tau_min.size(), j, "tau_min");
    require_dim(tau_max.size(), j, "tau_max");
    require_dim(pwm_table.size(), j, "pwm_table");
    require_dim(gain.size(), j, "gain");
    for (std::size_t i = 0; i < j; ++i) {
      if (!(tau_min[i] < tau_max[i])) throw Error(ErrorKind::ConfigError, "tau_min must be below tau_max");
      if (pwm_table[i]) pwm_table[i]->validate();
    }
    if (filter_window < 1) throw Error(ErrorKind::ConfigError, "filter_window must be at least 1");
    if (samples_per_move < 2) throw Error(ErrorKind::ConfigError, "samples_per_move must be at least 2");
  }

  void export_to(TensorMap& out) const { out["act.k"] = k; }
};

/// Box-constrained least squares, solved per coordinate: clamp(K S).
inline std::vector<double> plan_torque(std::span<const float> sync, const ActuatorParams& params) {
  const auto ks = matvec(params.k, sync, "plan_torque sync");
  require_dim(params.tau_min.size(), ks.size(), "plan_torque tau_min");
  require_dim(params.tau_max.size(), ks.size(), "plan_torque tau_max");
  std::vector<double> tau(ks.size());
  for (std::size_t i = 0; i < ks.size(); ++i) tau[i] = std::clamp(ks[i], params.tau_min[i], params.tau_max[i]);
  return tau;
}

struct TrajectorySample {
  double t = 0.0;
  std::vector<double> q;
  std::vector<double> qdot;
};

/// Cubic blend h(t) = 3t^2 - 2t^3 at t_i = i / (N - 1); zero end velocities.
inline std::vector<TrajectorySample> interpolate_trajectory(std::span<const double> q0,
                                                            std::span<const double> q_target,
                                                            std::size_t n) {
  require_dim(q_target.size(), q0.size(), "interpolate_trajectory target");
  if (n < 2) throw Error(ErrorKind::ConfigError, "need at least two samples");
  std::vector<TrajectorySample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = out[i];
    s.t = i + 1 == n ? 1.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    const double h = s.t * s.t * (3.0 - 2.0 * s.t);
    const double dh = 6.0 * s.t * (1.0 - s.t);
    s.q.resize(q0.size());
    s.qdot.resize(q0.size());
    for (std::size_t j = 0; j < q0.size(); ++j) {
      const double dq = q_target[j] - q0[j];
      s.q[j] = i == 0 ? q0[j] : i + 1 == n ? q_target[j] : q0[j] + dq * h;
      s.qdot[j] = dq * dh;
    }
  }
  return out;
}

/// Causal moving average of q over min(window, i + 1) samples, then qdot by
/// forward difference (backward at the last sample). Sample 0 is untouched.
inline std::vector<TrajectorySample> compliance_filter(std::span<const TrajectorySample> samples,
                                                       std::size_t window) {
  if (window < 1) throw Error(ErrorKind::ConfigError, "window must be at least 1");
  std::vector<TrajectorySample> out(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  if (n < 2) return out;
  const std::size_t joints = samples[0].q.size();
  for (std::size_t i = 1; i < n; ++i) {
    const std::size_t w = std::min(window, i + 1);
    for (std::size_t j = 0; j < joints; ++j) {
      double acc = 0.0;
      for (std::size_t m = i + 1 - w; m <= i; ++m) acc += samples[m].q[j];
      out[i].q[j] = acc / static_cast<double>(w);
    }
  }
  for (std::size_t i = 1; i < n; ++i) {
    const std::size_t a = i + 1 < n ? i : i - 1;
    const std::size_t b = a + 1;
    const double dt = out[b].t - out[a].t;
    for (std::size_t j = 0; j < joints; ++j)
      out[i].qdot[j] = dt > 0.0 ? (out[b].q[j] - out[a].q[j]) / dt : 0.0;
  }
  return out;
}

/// Duty in [0, 1] per joint. Default map is bipolar around 0.5.
inline std::vector<double> torque_to_pwm(std::span<const double> tau, const ActuatorParams& params) {
  require_dim(tau.size(), params.joints(), "torque_to_pwm tau");
  std::vector<double> duty(tau.size());
  for (std::size_t i = 0; i < tau.size(); ++i) {
    const double x = params.gain[i] * tau[i];
    if (params.pwm_table[i]) {
      params.pwm_table[i]->validate();
      duty[i] = (*params.pwm_table[i])(x);
    } else {
      duty[i] = 0.5 + 0.5 * std::clamp(x / params.tau_max[i], -1.0, 1.0);
    }
  }
  return duty;
}

/// Full chain: torque plan, trajectory from rest toward the torque set-point,
/// smoothing and duty cycles.
struct ActuationPlan {
  std::vector<double> tau;
  std::vector<TrajectorySample> trajectory;
  std::vector<double> duty;
  bool feasible = false;
};

inline ActuationPlan actuate(std::span<const float> sync, const ActuatorParams& params) {
  ActuationPlan plan;
  plan.tau = plan_torque(sync, params);
  plan.feasible = true;
  for (std::size_t i = 0; i < plan.tau.size(); ++i) {
    const double t = plan.tau[i];
    if (!std::isfinite(t) || t < params.tau_min[i] || t > params.tau_max[i]) plan.feasible = false;
  }
  const std::vector<double> q0(params.joints(), 0.0);
  const auto raw = interpolate_trajectory(q0, plan.tau, params.samples_per_move);
  plan.trajectory = compliance_filter(raw, params.filter_window);
  plan.duty = torque_to_pwm(plan.tau, params);
  return plan;
}

}  // namespace ctmmcp
