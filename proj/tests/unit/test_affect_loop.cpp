// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "ctmmcp/affect_loop.hpp"
#include "ctmmcp/ctm_runtime.hpp"

namespace ctmmcp {
namespace {

Vector random_vector(std::size_t n, SplitMix64& rng, double lo, double hi) {
  Vector v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

AffectVector with_norm(double n) {
  AffectVector e;
  e.e[0] = static_cast<float>(n);
  return e;
}

TEST(AffectDecode, ZeroWeightsGiveZero) {
  SplitMix64 rng(1);
  const auto s = random_vector(256, rng, -5, 5);
  auto p = AffectParams::seeded(256, 3);
  p.w1 = Matrix(32, 256);
  EXPECT_EQ(affect_decode(s, p), AffectVector{});
  p = AffectParams::seeded(256, 3);
  p.w2 = Matrix(8, 32);
  EXPECT_EQ(affect_decode(s, p), AffectVector{});
}

TEST(AffectDecode, ShapesAndBound) {
  const auto p = AffectParams::seeded(256, 4);
  EXPECT_EQ(p.w1.rows(), 32u);
  EXPECT_EQ(p.w2.rows(), 8u);
  EXPECT_EQ(p.w2.cols(), 32u);
  SplitMix64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    const auto e = affect_decode(random_vector(256, rng, -50, 50), p);
    for (float v : e.e) ASSERT_TRUE(v > -1.0f && v < 1.0f);
    ASSERT_LE(e.norm(), std::sqrt(8.0));
  }
  EXPECT_THROW(affect_decode(Vector(255), p), Error);
}

TEST(AffectDecode, MatchesDirectEvaluation) {
  const auto p = AffectParams::seeded(16, 5);
  SplitMix64 rng(3);
  const auto s = random_vector(16, rng, -2, 2);
  const auto e = affect_decode(s, p);
  std::vector<double> hidden(32);
  for (std::size_t r = 0; r < 32; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < 16; ++c) acc += double(p.w1(r, c)) * s[c];
    hidden[r] = static_cast<float>(std::tanh(acc));
  }
  for (std::size_t r = 0; r < 8; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < 32; ++c) acc += double(p.w2(r, c)) * hidden[c];
    EXPECT_NEAR(e.e[r], std::tanh(acc), 1e-6);
  }
}

TEST(ModulateEpsilon, Examples) {
  const auto p = AffectParams::zeros(256);
  EXPECT_DOUBLE_EQ(modulate_epsilon(AffectVector{}, p), 0.75);
  EXPECT_DOUBLE_EQ(modulate_epsilon(with_norm(1.0), p), 1.125);
  AffectVector top;
  top.e.fill(1.0f);
  EXPECT_NEAR(modulate_epsilon(top, p), 1.810660, 1e-6);
}

TEST(ModulateEpsilon, MonotoneAndAboveBase) {
  const auto p = AffectParams::zeros(256);
  double prev = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double eps = modulate_epsilon(with_norm(i / 100.0), p);
    ASSERT_GE(eps, 0.75);
    ASSERT_GE(eps, prev);
    prev = eps;
  }
}

std::uint32_t ticks_until_halt(const CtmParams& params, const FusionVector& f, double epsilon) {
  auto st = BranchState::initial(params);
  for (;;) {
    auto [next, r] = run_slab(std::move(st), f, params, epsilon);
    st = std::move(next);
    if (r.halted) return st.tick;
  }
}

// A larger affect norm never shortens the next cycle.
TEST(AffectDirection, LargerNormNeverReducesTicks) {
  const auto affect = AffectParams::zeros(256);
  CtmShape shape;
  shape.max_slabs = 6;
  SplitMix64 rng(9);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto params = CtmParams::seeded(shape, {}, seed);
    const FusionVector f{random_vector(256, rng, -1, 1)};
    std::uint32_t prev = 0;
    for (double n : {0.0, 0.1, 0.3, 0.5, 1.0, 2.0, std::sqrt(8.0)}) {
      const double eps = modulate_epsilon(with_norm(n), affect);
      const auto ticks = ticks_until_halt(params, f, eps);
      ASSERT_GE(ticks, prev) << "seed " << seed << " norm " << n;
      prev = ticks;
    }
  }
}

TEST(AffectParams, ValidateRejectsBadConstants) {
  auto p = AffectParams::zeros(64);
  EXPECT_NO_THROW(p.validate(64));
  EXPECT_THROW(p.validate(65), Error);
  p.epsilon0 = 0.0;
  EXPECT_THROW(p.validate(64), Error);
  p = AffectParams::zeros(64);
  p.alpha = -0.1;
  EXPECT_THROW(p.validate(64), Error);
}

}  // namespace
}  // namespace ctmmcp
