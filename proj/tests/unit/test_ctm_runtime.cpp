// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "ctmmcp/core/rng.hpp"
#include "ctmmcp/ctm_runtime.hpp"

namespace ctmmcp {
namespace {

Vector random_vector(std::size_t n, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  Vector v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

Matrix random_matrix(std::size_t r, std::size_t c, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (auto& x : m.data()) x = static_cast<float>(rng.uniform(lo, hi));
  return m;
}

double rel_err(double got, double want) { return std::abs(got - want) / std::max(1.0, std::abs(want)); }

TEST(Synapse, ZeroInputGivesZero) {
  const CtmShape s;
  const auto p = CtmParams::seeded(s, {}, 1);
  const auto z = synapse(Vector(64), Vector(256), p.synapse);
  ASSERT_EQ(z.size(), 64u);
  for (float v : z) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(p.synapse.cols(), 64u + 256u);
}

TEST(Synapse, HandSetRowsPickCoordinate) {
  Matrix w(2, 2 + 3);
  w(0, 0) = 1.0f;
  w(1, 1) = 1.0f;
  const auto z = synapse(Vector{0.3f, -0.7f}, Vector{5.0f, 5.0f, 5.0f}, w);
  EXPECT_FLOAT_EQ(z[0], static_cast<float>(std::tanh(0.3f)));
  EXPECT_FLOAT_EQ(z[1], static_cast<float>(std::tanh(-0.7f)));
  EXPECT_THROW(synapse(Vector{0.3f}, Vector{5.0f, 5.0f, 5.0f}, w), Error);
}

TEST(PushHistory, FifoOrder) {
  Matrix h(3, 4);
  push_history(h, Vector{1, 2, 3});
  for (std::size_t d = 0; d < 3; ++d) {
    for (std::size_t m = 0; m < 3; ++m) EXPECT_EQ(h(d, m), 0.0f);
    EXPECT_EQ(h(d, 3), float(d + 1));
  }
  Matrix g(2, 4);
  for (int i = 1; i <= 5; ++i) push_history(g, Vector{float(i), float(-i)});
  for (std::size_t m = 0; m < 4; ++m) {
    EXPECT_EQ(g(0, m), float(m + 2));
    EXPECT_EQ(g(1, m), -float(m + 2));
  }
}

TEST(MuMlp, ZeroHistoryGivesTanhBias) {
  SplitMix64 rng(3);
  const auto a = random_matrix(8, 4, rng), b = random_matrix(64, 4, rng);
  const auto b0 = random_vector(64, rng, -2.0, 2.0);
  const auto z = mu_mlp(Matrix(64, 8), a, b, b0);
  for (std::size_t d = 0; d < 64; ++d) EXPECT_EQ(z[d], bounded_tanh(b0[d]));
}

TEST(MuMlp, SingleTerm) {
  const Matrix a(1, 1, 0.5f);
  const Matrix b(3, 1, std::vector<float>{1.0f, -2.0f, 4.0f});
  Matrix h(3, 1, std::vector<float>{0.2f, 0.3f, -0.1f});
  const auto z = mu_mlp(h, a, b, Vector(3));
  EXPECT_FLOAT_EQ(z[0], std::tanh(0.5 * 1.0 * 0.2f));
  EXPECT_FLOAT_EQ(z[1], std::tanh(0.5 * -2.0 * 0.3f));
  EXPECT_FLOAT_EQ(z[2], std::tanh(0.5 * 4.0 * -0.1f));
}

// Dense oracle: materialize W = B A^T (D x M) then z = tanh(b0 + sum_m W H).
TEST(MuMlp, MatchesDenseReadout) {
  SplitMix64 rng(12);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = random_matrix(8, 4, rng), b = random_matrix(64, 4, rng), h = random_matrix(64, 8, rng);
    const auto b0 = random_vector(64, rng);
    const auto z = mu_mlp(h, a, b, b0);
    for (std::size_t d = 0; d < 64; ++d) {
      double acc = b0[d];
      for (std::size_t m = 0; m < 8; ++m) {
        double w = 0.0;
        for (std::size_t j = 0; j < 4; ++j) w += double(b(d, j)) * a(m, j);
        acc += w * h(d, m);
      }
      ASSERT_LE(rel_err(z[d], std::tanh(acc)), 1e-5);
    }
  }
}

TEST(SyncUpdate, SingleTickAndZeroStates) {
  const std::vector<SyncPair> pairs{{0, 1}, {2, 2}};
  const Vector s{0.5f, -1.0f};
  const std::vector<Vector> one{{0.2f, 0.4f, -0.5f}};
  const auto out = sync_update(s, one, pairs, 0.999);
  EXPECT_FLOAT_EQ(out[0], 0.999 * 0.5 + 0.2f * 0.4f);
  EXPECT_FLOAT_EQ(out[1], 0.999 * -1.0 + 0.25);

  const std::vector<Vector> zeros(5, Vector(3));
  const auto z = sync_update(s, zeros, pairs, 0.999);
  EXPECT_FLOAT_EQ(z[0], std::pow(0.999, 5) * 0.5);
  EXPECT_FLOAT_EQ(z[1], -std::pow(0.999, 5));

  try {
    sync_update(s, std::vector<Vector>{}, pairs, 0.999);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptySlab);
  }
}

// Incremental scan: S <- decay S + z[p] z[q] once per tick.
TEST(SyncUpdate, ClosedFormMatchesIncrementalScan) {
  SplitMix64 rng(21);
  const auto pairs = CtmParams::sample_pairs(64, 256, 5);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t l = 1 + rng.index(32);
    std::vector<Vector> states;
    for (std::size_t t = 0; t < l; ++t) states.push_back(random_vector(64, rng, -0.999, 0.999));
    const auto s0 = random_vector(256, rng, -10.0, 10.0);
    const auto closed = sync_update(s0, states, pairs, 0.999);
    std::vector<double> scan(s0.begin(), s0.end());
    for (const auto& z : states)
      for (std::size_t k = 0; k < scan.size(); ++k) scan[k] = 0.999 * scan[k] + double(z[pairs[k].p]) * z[pairs[k].q];
    for (std::size_t k = 0; k < scan.size(); ++k) ASSERT_LE(rel_err(closed[k], scan[k]), 1e-5) << "L=" << l;
  }
}

TEST(SamplePairs, DistinctInRangeAndDeterministic) {
  const auto a = CtmParams::sample_pairs(64, 256, 9);
  EXPECT_EQ(a, CtmParams::sample_pairs(64, 256, 9));
  std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
  for (auto [p, q] : a) {
    EXPECT_LT(p, 64u);
    EXPECT_LT(q, 64u);
    seen.insert({p, q});
  }
  EXPECT_EQ(seen.size(), 256u);
  EXPECT_EQ(CtmParams::sample_pairs(2, 4, 1).size(), 4u);
  EXPECT_THROW(CtmParams::sample_pairs(2, 5, 1), Error);
}

TEST(Certainty, UniformLogitsGiveZero) {
  for (float t : {-50.0f, 0.0f, 3.5f, 80.0f}) EXPECT_NEAR(certainty_from_logits(Vector(4, t)), 0.0, 1e-7);
}

TEST(Certainty, NearOneHotGivesOne) {
  const Matrix w(4, 1, std::vector<float>{10.0f, 0.0f, 0.0f, 0.0f});
  const auto r = certainty(Vector{1.0f}, w, 8.0);
  EXPECT_EQ(r.logits, (Vector{80.0f, 0.0f, 0.0f, 0.0f}));
  EXPECT_GT(r.certainty, 1.0 - 1e-8);
}

TEST(Certainty, RangeOnRandomDraws) {
  SplitMix64 rng(31);
  for (int i = 0; i < 100000; ++i) {
    const auto h = random_vector(4, rng, -100.0, 100.0);
    const double c = certainty_from_logits(h);
    ASSERT_GE(c, 0.0);
    ASSERT_LE(c, 1.0);
  }
}

TEST(Certainty, LargerScaleNeverLowersCertainty) {
  SplitMix64 rng(32);
  for (int i = 0; i < 1000; ++i) {
    const auto w = random_matrix(4, 16, rng);
    const auto s = random_vector(16, rng);
    ASSERT_GE(certainty(s, w, 8.0).certainty + 1e-12, certainty(s, w, 1.0).certainty);
  }
}

TEST(Halt, Examples) {
  const std::vector<double> spread{0.3, 0.5, 0.1};
  EXPECT_EQ(halt_decision(0.9, 0.75, spread, 10, 2), HaltDecision::Halt);
  EXPECT_EQ(halt_reason(0.9, 0.75, spread, 10, 2), HaltReason::Threshold);
  EXPECT_EQ(halt_decision(0.5, 0.75, spread, 10, 2), HaltDecision::Continue);
  // Raised threshold above the cap: 0.99 < 0.995 keeps going.
  EXPECT_EQ(halt_decision(0.99, 1.125, spread, 10, 2), HaltDecision::Continue);
  EXPECT_EQ(halt_decision(0.996, 1.125, spread, 10, 2), HaltDecision::Halt);
  EXPECT_EQ(halt_reason(0.5, 0.75, spread, 10, 0), HaltReason::Budget);
  EXPECT_EQ(halt_reason(0.5, 0.75, std::vector<double>{0.5, 0.5004, 0.5009}, 10, 2), HaltReason::Plateau);
  EXPECT_EQ(halt_reason(0.5, 0.75, std::vector<double>{0.5, 0.5009}, 10, 2), HaltReason::None);
}

TEST(GatedCarry, Examples) {
  SplitMix64 rng(40);
  const auto zb = random_vector(16, rng);
  const auto r = gated_carry(Vector(16), zb, 0.9);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_FLOAT_EQ(r[i], 0.1 * zb[i]);
  EXPECT_EQ(gated_carry(zb, zb, 0.9), zb);
  for (int t = 0; t < 1000; ++t) {
    const auto a = random_vector(32, rng), b = random_vector(32, rng);
    ASSERT_LE(max_abs(gated_carry(a, b, rng.uniform01())), std::max(max_abs(a), max_abs(b)));
  }
  EXPECT_THROW(gated_carry(Vector(3), Vector(4), 0.9), Error);
}

TEST(RunSlab, ZeroWeightsGiveZeroCascade) {
  const CtmShape s;
  const auto p = CtmParams::zeros(s, {}, 1);
  auto [state, r] = run_slab(BranchState::initial(p), {Vector(256, 0.5f)}, p, 0.75);
  for (float v : r.sync) EXPECT_EQ(v, 0.0f);
  for (float v : r.logits) EXPECT_EQ(v, 0.0f);
  EXPECT_NEAR(r.certainty, 0.0, 1e-7);
  EXPECT_EQ(r.ticks_used, s.ticks_per_slab);
  EXPECT_EQ(state.tick, s.ticks_per_slab);
  EXPECT_EQ(state.slab, 1u);
}

TEST(RunSlab, DeterministicAndBounded) {
  const CtmShape s;
  const auto p = CtmParams::seeded(s, {}, 77);
  SplitMix64 rng(5);
  const FusionVector f{random_vector(256, rng, -0.99, 0.99)};
  auto a = BranchState::initial(p), b = BranchState::initial(p);
  for (int slab = 0; slab < 4; ++slab) {
    auto [sa, ra] = run_slab(a, f, p, 0.995);
    auto [sb, rb] = run_slab(b, f, p, 0.995);
    ASSERT_EQ(ra, rb);
    ASSERT_EQ(sa, sb);
    for (float v : sa.z) ASSERT_LT(std::abs(v), 1.0f);
    for (float v : ra.sync) ASSERT_TRUE(std::isfinite(v));
    a = std::move(sa);
    b = std::move(sb);
  }
}

TEST(RunSlab, TickBudgetIsHard) {
  CtmShape s;
  s.max_slabs = 3;
  CtmConstants k;
  k.plateau_window = 0;
  const auto p = CtmParams::seeded(s, k, 8);
  SplitMix64 rng(6);
  const FusionVector f{random_vector(256, rng)};
  auto st = BranchState::initial(p);
  SlabResult r;
  do {
    auto [next, res] = run_slab(std::move(st), f, p, 0.995);
    st = std::move(next);
    r = std::move(res);
  } while (!r.halted);
  EXPECT_LE(st.tick, s.ticks_per_slab * s.max_slabs);
  if (r.reason == HaltReason::Budget) EXPECT_EQ(st.slab, 3u);
}

TEST(RunSlab, PerBranchPairOrderChangesContentOnly) {
  const CtmShape s;
  const auto p = CtmParams::seeded(s, {}, 2);
  SplitMix64 rng(7);
  const FusionVector f{random_vector(256, rng)};
  auto shuffled = BranchState::initial(p);
  std::reverse(shuffled.pairs.begin(), shuffled.pairs.end());
  const auto [sa, ra] = run_slab(BranchState::initial(p), f, p, 0.75);
  const auto [sb, rb] = run_slab(shuffled, f, p, 0.75);
  EXPECT_EQ(sa.z, sb.z);
  std::multiset<float> ma(ra.sync.begin(), ra.sync.end()), mb(rb.sync.begin(), rb.sync.end());
  EXPECT_EQ(ma, mb);
}

TEST(CtmParams, ValidateRejectsBadShapes) {
  const CtmShape s;
  auto p = CtmParams::seeded(s, {}, 1);
  p.pairs[1] = p.pairs[0];
  EXPECT_THROW(p.validate(), Error);
  p = CtmParams::seeded(s, {}, 1);
  p.bias.pop_back();
  EXPECT_THROW(p.validate(), Error);
}

}  // namespace
}  // namespace ctmmcp
