// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "ctmmcp/core/error.hpp"
#include "ctmmcp/core/rng.hpp"
#include "ctmmcp/core/tensor.hpp"
#include "ctmmcp/core/weight_file.hpp"
#include "ctmmcp/perception.hpp"

namespace ctmmcp {

struct SyncPair {
  std::uint32_t p = 0;
  std::uint32_t q = 0;
  friend bool operator==(const SyncPair&, const SyncPair&) = default;
};

struct CtmShape {
  std::size_t neurons = 64;        // D
  std::size_t history = 8;         // M
  std::size_t rank = 4;            // r
  std::size_t pairs = 256;         // P
  std::size_t ticks_per_slab = 8;  // L
  std::size_t max_slabs = 16;
  std::size_t logits = 4;          // C
  std::size_t context = 256;       // width of the fusion vector
};

struct CtmConstants {
  double decay = 0.999;
  double logit_scale = 8.0;
  double beta = 0.9;
  double halt_cap = 0.995;
  double plateau_span = 1e-3;
  std::size_t plateau_window = 3;
};

/// Immutable model parameters shared read-only by every branch.
struct CtmParams {
  CtmShape shape;
  CtmConstants constants;
  Matrix synapse;     // D x (D + context)
  Matrix factor_a;    // M x r
  Matrix factor_b;    // D x r
  Vector bias;        // D
  Matrix certainty;   // C x P
  std::vector<SyncPair> pairs;

  static CtmParams seeded(const CtmShape& s, const CtmConstants& k, std::uint64_t seed) {
    CtmParams p{s, k,
                Matrix::uniform(s.neurons, s.neurons + s.context, derive_seed(seed, "ctm.synapse")),
                Matrix::uniform(s.history, s.rank, derive_seed(seed, "ctm.factor_a")),
                Matrix::uniform(s.neurons, s.rank, derive_seed(seed, "ctm.factor_b")),
                row_vector(Matrix::uniform(1, s.neurons, derive_seed(seed, "ctm.bias"))),
                Matrix::uniform(s.logits, s.pairs, derive_seed(seed, "ctm.certainty")),
                sample_pairs(s.neurons, s.pairs, derive_seed(seed, "ctm.pairs"))};
    p.validate();
    return p;
  }

  static CtmParams zeros(const CtmShape& s, const CtmConstants& k, std::uint64_t seed) {
    CtmParams p{s,
                k,
                Matrix(s.neurons, s.neurons + s.context),
                Matrix(s.history, s.rank),
                Matrix(s.neurons, s.rank),
                Vector(s.neurons, 0.0f),
                Matrix(s.logits, s.pairs),
                sample_pairs(s.neurons, s.pairs, derive_seed(seed, "ctm.pairs"))};
    p.validate();
    return p;
  }

  /// P distinct ordered pairs (p, q), p == q allowed, drawn without
  /// replacement by a partial Fisher-Yates shuffle of the D*D pair codes.
  static std::vector<SyncPair> sample_pairs(std::size_t d, std::size_t count, std::uint64_t seed) {
    const std::size_t total = d * d;
    if (count > total) throw Error(ErrorKind::DimensionMismatch, "more sync pairs than D*D");
    std::vector<std::uint32_t> codes(total);
    for (std::size_t i = 0; i < total; ++i) codes[i] = static_cast<std::uint32_t>(i);
    SplitMix64 rng(seed);
    std::vector<SyncPair> out(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = i + rng.index(total - i);
      std::swap(codes[i], codes[j]);
      out[i] = {static_cast<std::uint32_t>(codes[i] / d), static_cast<std::uint32_t>(codes[i] % d)};
    }
    return out;
  }

  void validate() const {
    const auto& s = shape;
    if (!(constants.decay > 0.0 && constants.decay <= 1.0))
      throw Error(ErrorKind::ConfigError, "decay must lie in (0, 1]");
    if (s.logits < 2) throw Error(ErrorKind::ConfigError, "need at least two logits");
    if (s.ticks_per_slab == 0) throw Error(ErrorKind::EmptySlab, "ticks_per_slab = 0");
    require_dim(synapse.rows(), s.neurons, "synapse rows");
    require_dim(synapse.cols(), s.neurons + s.context, "synapse cols");
    require_dim(factor_a.rows(), s.history, "factor A rows");
    require_dim(factor_a.cols(), s.rank, "factor A cols");
    require_dim(factor_b.rows(), s.neurons, "factor B rows");
    require_dim(factor_b.cols(), s.rank, "factor B cols");
    require_dim(bias.size(), s.neurons, "bias");
    require_dim(certainty.rows(), s.logits, "certainty rows");
    require_dim(certainty.cols(), s.pairs, "certainty cols");
    require_dim(pairs.size(), s.pairs, "sync pairs");
    if (!synapse.all_finite() || !factor_a.all_finite() || !factor_b.all_finite() ||
        !all_finite(bias) || !certainty.all_finite())
      throw Error(ErrorKind::NonFiniteInput, "ctm parameters");
    for (const auto& pr : pairs)
      if (pr.p >= s.neurons || pr.q >= s.neurons)
        throw Error(ErrorKind::DimensionMismatch, "sync pair index out of range");
    auto sorted = pairs;
    std::sort(sorted.begin(), sorted.end(),
              [](SyncPair a, SyncPair b) { return std::pair(a.p, a.q) < std::pair(b.p, b.q); });
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw Error(ErrorKind::ConfigError, "sync pairs must be distinct");
  }

  void export_to(TensorMap& out) const {
    out["ctm.synapse"] = synapse;
    out["ctm.factor_a"] = factor_a;
    out["ctm.factor_b"] = factor_b;
    out["ctm.bias"] = Matrix(1, bias.size(), bias);
    out["ctm.certainty"] = certainty;
    Matrix pr(pairs.size(), 2);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      pr(k, 0) = static_cast<float>(pairs[k].p);
      pr(k, 1) = static_cast<float>(pairs[k].q);
    }
    out["ctm.pairs"] = pr;
  }

 private:
  static Vector row_vector(const Matrix& m) { return {m.data().begin(), m.data().end()}; }
};

/// One reasoning branch. Owned by exactly one worker at a time.
struct BranchState {
  Vector z;                    // D
  Matrix history;              // D x M, newest in the last column
  Vector sync;                 // P
  std::vector<SyncPair> pairs; // slot k accumulates z[p]*z[q]; per-branch order
  std::uint32_t tick = 0;      // ticks consumed in the current decision step
  std::uint32_t slab = 0;      // slabs consumed in the current decision step
  std::vector<double> certainty_trace;  // most recent certainty values, oldest first

  static BranchState initial(const CtmParams& params) {
    const auto& s = params.shape;
    return {Vector(s.neurons, 0.0f), Matrix(s.neurons, s.history), Vector(s.pairs, 0.0f),
            params.pairs, 0, 0, {}};
  }

  friend bool operator==(const BranchState&, const BranchState&) = default;
};

enum class HaltReason : std::uint8_t { None, Threshold, Plateau, Budget };

constexpr std::string_view to_string(HaltReason r) {
  switch (r) {
    case HaltReason::None: return "none";
    case HaltReason::Threshold: return "threshold";
    case HaltReason::Plateau: return "plateau";
    case HaltReason::Budget: return "budget";
  }
  return "?";
}

enum class HaltDecision : std::uint8_t { Continue, Halt };

struct SlabResult {
  Vector sync;
  Vector logits;  // already multiplied by logit_scale
  double certainty = 0.0;
  bool halted = false;
  HaltReason reason = HaltReason::None;
  std::uint32_t ticks_used = 0;
  friend bool operator==(const SlabResult&, const SlabResult&) = default;
};

/// z~ = tanh(W_s [z_prev || f]).
inline Vector synapse(std::span<const float> z_prev, std::span<const float> f, const Matrix& w_s) {
  require_dim(z_prev.size() + f.size(), w_s.cols(), "synapse input");
  require_dim(z_prev.size(), w_s.rows(), "synapse hidden");
  Vector out(w_s.rows());
  const std::size_t d = z_prev.size();
  for (std::size_t r = 0; r < w_s.rows(); ++r) {
    const auto row = w_s.row(r);
    const double acc = dot(row.first(d), z_prev) + dot(row.subspan(d), f);
    out[r] = bounded_tanh(acc);
  }
  return out;
}

/// Shift every row left by one column and write `z_new` into the last one.
inline void push_history(Matrix& history, std::span<const float> z_new) {
  require_dim(z_new.size(), history.rows(), "push_history");
  const std::size_t m = history.cols();
  if (m == 0) return;
  for (std::size_t d = 0; d < history.rows(); ++d) {
    auto row = history.row(d);
    std::shift_left(row.begin(), row.end(), 1);
    row[m - 1] = z_new[d];
  }
}

/// z(d) = tanh(b0(d) + sum_m (B A^T)(d, m) H(d, m)), evaluated through the
/// rank-r factors: u(d, j) = sum_m A(m, j) H(d, m); z(d) = tanh(b0(d) + sum_j B(d, j) u(d, j)).
inline Vector mu_mlp(const Matrix& history, const Matrix& a, const Matrix& b, std::span<const float> b0) {
  require_dim(a.rows(), history.cols(), "mu_mlp A rows");
  require_dim(b.rows(), history.rows(), "mu_mlp B rows");
  require_dim(b.cols(), a.cols(), "mu_mlp rank");
  require_dim(b0.size(), history.rows(), "mu_mlp bias");
  const std::size_t rank = a.cols();
  Vector out(history.rows());
  std::vector<double> u(rank);
  for (std::size_t d = 0; d < history.rows(); ++d) {
    const auto h = history.row(d);
    std::fill(u.begin(), u.end(), 0.0);
    for (std::size_t m = 0; m < h.size(); ++m) {
      const double hm = h[m];
      for (std::size_t j = 0; j < rank; ++j) u[j] += static_cast<double>(a(m, j)) * hm;
    }
    double acc = b0[d];
    for (std::size_t j = 0; j < rank; ++j) acc += static_cast<double>(b(d, j)) * u[j];
    out[d] = bounded_tanh(acc);
  }
  return out;
}

/// Closed-form slab update:
///   S'_k = decay^L S_k + sum_{j=1..L} decay^(L-j) z_j[p_k] z_j[q_k].
inline Vector sync_update(std::span<const float> sync, std::span<const Vector> slab_states,
                          std::span<const SyncPair> pairs, double decay) {
  if (slab_states.empty()) throw Error(ErrorKind::EmptySlab, "sync_update needs at least one tick");
  require_dim(pairs.size(), sync.size(), "sync_update pairs");
  const std::size_t ticks = slab_states.size();
  std::vector<double> weight(ticks);
  for (std::size_t j = 0; j < ticks; ++j)
    weight[j] = std::pow(decay, static_cast<double>(ticks - 1 - j));
  const double carry = std::pow(decay, static_cast<double>(ticks));
  Vector out(sync.size());
  for (std::size_t k = 0; k < sync.size(); ++k) {
    const auto [p, q] = pairs[k];
    double acc = carry * static_cast<double>(sync[k]);
    for (std::size_t j = 0; j < ticks; ++j) {
      const auto& z = slab_states[j];
      acc += weight[j] * static_cast<double>(z[p]) * static_cast<double>(z[q]);
    }
    out[k] = static_cast<float>(acc);
  }
  return out;
}

/// 1 - H(softmax(h)) / ln C for already-scaled logits h.
inline double certainty_from_logits(std::span<const float> logits) {
  const std::size_t c = logits.size();
  if (c < 2) throw Error(ErrorKind::DimensionMismatch, "certainty needs at least two logits");
  double peak = logits[0];
  for (float h : logits) peak = std::max(peak, static_cast<double>(h));
  std::vector<double> e(c);
  double total = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    e[i] = std::exp(static_cast<double>(logits[i]) - peak);
    total += e[i];
  }
  double entropy = 0.0;
  for (double v : e) {
    const double p = v / total;
    if (p > 0.0) entropy -= p * std::log(p);
  }
  const double value = 1.0 - entropy / std::log(static_cast<double>(c));
  return std::clamp(value, 0.0, 1.0);
}

struct CertaintyReadout {
  Vector logits;
  double certainty = 0.0;
};

/// h = scale * W_c S; c = 1 - H(softmax(h)) / ln C.
inline CertaintyReadout certainty(std::span<const float> sync, const Matrix& w_c, double logit_scale) {
  const auto raw = matvec(w_c, sync, "certainty input");
  Vector h(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) h[i] = static_cast<float>(logit_scale * raw[i]);
  const double c = certainty_from_logits(h);
  return {std::move(h), c};
}

/// Classifies why a branch stops; HaltReason::None means keep thinking.
inline HaltReason halt_reason(double c, double epsilon, std::span<const double> trace,
                              std::size_t tick_budget_left, std::size_t slab_budget_left,
                              const CtmConstants& k = {}) {
  if (c >= std::min(epsilon, k.halt_cap)) return HaltReason::Threshold;
  if (slab_budget_left == 0 || tick_budget_left == 0) return HaltReason::Budget;
  if (k.plateau_window > 0 && trace.size() >= k.plateau_window) {
    const auto tail = trace.last(k.plateau_window);
    const auto [lo, hi] = std::minmax_element(tail.begin(), tail.end());
    if (*hi - *lo < k.plateau_span) return HaltReason::Plateau;
  }
  return HaltReason::None;
}

inline HaltDecision halt_decision(double c, double epsilon, std::span<const double> trace,
                                  std::size_t tick_budget_left, std::size_t slab_budget_left,
                                  const CtmConstants& k = {}) {
  return halt_reason(c, epsilon, trace, tick_budget_left, slab_budget_left, k) == HaltReason::None
             ? HaltDecision::Continue
             : HaltDecision::Halt;
}

/// beta * z_a + (1 - beta) * z_b.
inline Vector gated_carry(std::span<const float> z_a, std::span<const float> z_b, double beta) {
  require_dim(z_b.size(), z_a.size(), "gated_carry");
  Vector out(z_a.size());
  for (std::size_t i = 0; i < z_a.size(); ++i)
    out[i] = static_cast<float>(beta * z_a[i] + (1.0 - beta) * z_b[i]);
  return out;
}

/// Runs L ticks (synapse -> push -> mu-MLP), folds the post-mu-MLP states into
/// the synchrony accumulators, reads certainty and decides whether to halt.
/// The hidden state handed to the next slab is the gated carry of the final
/// tick state and its synapse projection.
inline std::pair<BranchState, SlabResult> run_slab(BranchState state, const FusionVector& fusion,
                                                   const CtmParams& params, double epsilon) {
  const auto& s = params.shape;
  const auto& k = params.constants;
  require_dim(fusion.f.size(), s.context, "run_slab fusion");
  require_dim(state.z.size(), s.neurons, "run_slab hidden");
  require_dim(state.sync.size(), s.pairs, "run_slab sync");

  std::vector<Vector> tick_states;
  tick_states.reserve(s.ticks_per_slab);
  for (std::size_t t = 0; t < s.ticks_per_slab; ++t) {
    const Vector candidate = synapse(state.z, fusion.f, params.synapse);
    push_history(state.history, candidate);
    state.z = mu_mlp(state.history, params.factor_a, params.factor_b, params.bias);
    tick_states.push_back(state.z);
  }
  state.tick += static_cast<std::uint32_t>(s.ticks_per_slab);
  state.slab += 1;
  state.sync = sync_update(state.sync, tick_states, state.pairs, k.decay);

  auto readout = certainty(state.sync, params.certainty, k.logit_scale);
  state.certainty_trace.push_back(readout.certainty);
  if (state.certainty_trace.size() > std::max<std::size_t>(k.plateau_window, 1))
    state.certainty_trace.erase(state.certainty_trace.begin());

  const std::size_t tick_budget = s.ticks_per_slab * s.max_slabs;
  const std::size_t ticks_left = tick_budget > state.tick ? tick_budget - state.tick : 0;
  const std::size_t slabs_left = s.max_slabs > state.slab ? s.max_slabs - state.slab : 0;
  const HaltReason reason =
      halt_reason(readout.certainty, epsilon, state.certainty_trace, ticks_left, slabs_left, k);

  state.z = gated_carry(state.z, synapse(state.z, fusion.f, params.synapse), k.beta);

  SlabResult result{state.sync,
                    std::move(readout.logits),
                    readout.certainty,
                    reason != HaltReason::None,
                    reason,
                    static_cast<std::uint32_t>(s.ticks_per_slab)};
  return {std::move(state), std::move(result)};
}

}  // namespace ctmmcp
