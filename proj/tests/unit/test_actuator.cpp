// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "ctmmcp/actuator.hpp"

namespace ctmmcp {
namespace {

Vector random_vector(std::size_t n, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  Vector v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

// Projected gradient descent on 0.5 ||tau - K S||^2 over the box.
std::vector<double> pgd_oracle(const Matrix& k, const Vector& s, const std::vector<double>& lo,
                               const std::vector<double>& hi) {
  std::vector<double> target(k.rows(), 0.0);
  for (std::size_t r = 0; r < k.rows(); ++r)
    for (std::size_t c = 0; c < k.cols(); ++c) target[r] += double(k(r, c)) * s[c];
  std::vector<double> tau(k.rows(), 0.0);
  for (std::size_t i = 0; i < tau.size(); ++i) tau[i] = std::clamp(0.0, lo[i], hi[i]);
  for (int it = 0; it < 10000; ++it)
    for (std::size_t i = 0; i < tau.size(); ++i)
      tau[i] = std::clamp(tau[i] - 1e-2 * (tau[i] - target[i]), lo[i], hi[i]);
  return tau;
}

TEST(PlanTorque, InBoundsIsExact) {
  auto p = ActuatorParams::with_k(Matrix(3, 2, std::vector<float>{1, 0, 0, 1, 1, 1}));
  const auto tau = plan_torque(Vector{0.5f, -2.0f}, p);
  EXPECT_EQ(tau, (std::vector<double>{0.5, -2.0, -1.5}));
}

TEST(PlanTorque, ClampsAtBound) {
  auto p = ActuatorParams::with_k(Matrix(4, 1, std::vector<float>{0, 0, 0, 9}));
  EXPECT_EQ(plan_torque(Vector{1.0f}, p)[3], 5.0);
  EXPECT_EQ(plan_torque(Vector{-1.0f}, p)[3], -5.0);
}

TEST(PlanTorque, MatchesProjectedGradientOracle) {
  SplitMix64 rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t j = 1 + rng.index(12), pairs = 1 + rng.index(16);
    Matrix k(j, pairs);
    for (auto& v : k.data()) v = static_cast<float>(rng.uniform(-2, 2));
    auto params = ActuatorParams::with_k(k);
    for (std::size_t i = 0; i < j; ++i) {
      const double a = rng.uniform(-6, 6), b = rng.uniform(-6, 6);
      params.tau_min[i] = std::min(a, b) - 1e-3;
      params.tau_max[i] = std::max(a, b);
    }
    const auto s = random_vector(pairs, rng, -2, 2);
    const auto tau = plan_torque(s, params);
    const auto oracle = pgd_oracle(k, s, params.tau_min, params.tau_max);
    const auto ks = matvec(k, s, "oracle");
    for (std::size_t i = 0; i < j; ++i) {
      ASSERT_NEAR(tau[i], oracle[i], 1e-6);
      ASSERT_GE(tau[i], params.tau_min[i]);
      ASSERT_LE(tau[i], params.tau_max[i]);
      // KKT per joint: the gradient tau - KS points out of the box or vanishes.
      const double g = tau[i] - ks[i];
      if (tau[i] > params.tau_min[i] && tau[i] < params.tau_max[i]) ASSERT_NEAR(g, 0.0, 1e-12);
      if (tau[i] == params.tau_min[i]) ASSERT_GE(g, -1e-12);
      if (tau[i] == params.tau_max[i]) ASSERT_LE(g, 1e-12);
    }
  }
}

TEST(Trajectory, StationaryWhenTargetEqualsStart) {
  const std::vector<double> q{0.1, -0.2, 0.3};
  for (const auto& s : interpolate_trajectory(q, q, 10)) {
    EXPECT_EQ(s.q, q);
    for (double v : s.qdot) EXPECT_EQ(v, 0.0);
  }
}

TEST(Trajectory, EndpointsExactAndFiniteDifferencesMatch) {
  SplitMix64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> q0(6), q1(6);
    for (auto& v : q0) v = rng.uniform(-5, 5);
    for (auto& v : q1) v = rng.uniform(-5, 5);
    const auto traj = interpolate_trajectory(q0, q1, 100);
    ASSERT_EQ(traj.size(), 100u);
    EXPECT_EQ(traj.front().q, q0);
    EXPECT_EQ(traj.back().q, q1);
    EXPECT_EQ(traj.front().t, 0.0);
    EXPECT_EQ(traj.back().t, 1.0);
    for (std::size_t j = 0; j < 6; ++j) {
      EXPECT_EQ(traj.front().qdot[j], 0.0);
      EXPECT_EQ(traj.back().qdot[j], 0.0);
    }
    // Central difference between neighbours against the analytic derivative
    // at the midpoint: 6 t (1 - t) dq.
    for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
      const double dt = traj[i + 1].t - traj[i].t;
      const double tm = 0.5 * (traj[i].t + traj[i + 1].t);
      for (std::size_t j = 0; j < 6; ++j) {
        const double fd = (traj[i + 1].q[j] - traj[i].q[j]) / dt;
        const double analytic = 6.0 * tm * (1.0 - tm) * (q1[j] - q0[j]);
        ASSERT_NEAR(fd, analytic, 1e-3);
      }
    }
  }
}

TEST(ComplianceFilter, ConstantTrajectoryUnchanged) {
  const std::vector<double> q{1.0, 2.0};
  auto traj = interpolate_trajectory(q, q, 12);
  const auto out = compliance_filter(traj, 5);
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_EQ(out[i].q, q);
    for (double v : out[i].qdot) EXPECT_EQ(v, 0.0);
  }
}

TEST(ComplianceFilter, StepRampsOverWindow) {
  std::vector<TrajectorySample> step(15);
  const std::size_t s = 4;
  for (std::size_t i = 0; i < step.size(); ++i) step[i] = {double(i), {i >= s ? 1.0 : 0.0}, {0.0}};
  const auto out = compliance_filter(step, 5);
  for (std::size_t i = 0; i < s; ++i) EXPECT_EQ(out[i].q[0], 0.0);
  for (std::size_t i = s; i < s + 5; ++i) EXPECT_DOUBLE_EQ(out[i].q[0], double(i - s + 1) / 5.0);
  for (std::size_t i = s + 5; i < out.size(); ++i) EXPECT_EQ(out[i].q[0], 1.0);
}

TEST(ComplianceFilter, NeverAmplifiesVelocity) {
  SplitMix64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng.index(40);
    std::vector<TrajectorySample> raw(n);
    for (std::size_t i = 0; i < n; ++i) raw[i] = {double(i) / double(n - 1), {rng.uniform(-3, 3)}, {0.0}};
    // Input velocities by the same difference scheme.
    double in_max = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i)
      in_max = std::max(in_max, std::abs((raw[i + 1].q[0] - raw[i].q[0]) / (raw[i + 1].t - raw[i].t)));
    for (std::size_t i = 0; i < n; ++i) raw[i].qdot[0] = 0.0;
    const auto out = compliance_filter(raw, 1 + rng.index(8));
    for (const auto& s : out) ASSERT_LE(std::abs(s.qdot[0]), in_max * (1 + 1e-12) + 1e-12);
    EXPECT_EQ(out[0].q, raw[0].q);
  }
}

TEST(TorqueToPwm, DefaultBipolarMap) {
  auto p = ActuatorParams::zeros(4, 3);
  const auto d = torque_to_pwm(std::vector<double>{0.0, 5.0, -5.0}, p);
  EXPECT_EQ(d, (std::vector<double>{0.5, 1.0, 0.0}));
  p.gain[0] = 4.0;
  EXPECT_EQ(torque_to_pwm(std::vector<double>{2.5, 0, 0}, p)[0], 1.0);
}

TEST(TorqueToPwm, CustomTableInterpolates) {
  auto p = ActuatorParams::zeros(4, 2);
  p.pwm_table[1] = PwmTable{{-5.0, 0.0, 5.0}, {0.1, 0.3, 0.9}};
  const auto d = torque_to_pwm(std::vector<double>{0.0, 2.5}, p);
  EXPECT_DOUBLE_EQ(d[1], 0.6);
  EXPECT_DOUBLE_EQ(torque_to_pwm(std::vector<double>{0.0, -2.5}, p)[1], 0.2);
  EXPECT_DOUBLE_EQ(torque_to_pwm(std::vector<double>{0.0, 99.0}, p)[1], 0.9);
  EXPECT_DOUBLE_EQ(torque_to_pwm(std::vector<double>{0.0, -99.0}, p)[1], 0.1);
}

TEST(TorqueToPwm, MalformedTablesRejected) {
  auto expect_malformed = [](PwmTable t) {
    try {
      t.validate();
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::MalformedTable);
    }
  };
  expect_malformed({{0.0}, {0.5}});
  expect_malformed({{0.0, 1.0}, {0.5}});
  expect_malformed({{1.0, 0.0}, {0.1, 0.2}});
  expect_malformed({{0.0, 1.0}, {0.1, 1.2}});
  auto p = ActuatorParams::zeros(4, 1);
  p.pwm_table[0] = PwmTable{{0.0, 0.0}, {0.1, 0.2}};
  EXPECT_THROW(torque_to_pwm(std::vector<double>{0.0}, p), Error);
}

TEST(Actuate, FeasiblePlanWithDutiesInRange) {
  SplitMix64 rng(4);
  const auto p = ActuatorParams::seeded(256, 7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto plan = actuate(random_vector(256, rng, -20, 20), p);
    ASSERT_TRUE(plan.feasible);
    ASSERT_EQ(plan.tau.size(), 12u);
    ASSERT_EQ(plan.trajectory.size(), p.samples_per_move);
    for (double d : plan.duty) ASSERT_TRUE(d >= 0.0 && d <= 1.0);
  }
}

}  // namespace
}  // namespace ctmmcp
