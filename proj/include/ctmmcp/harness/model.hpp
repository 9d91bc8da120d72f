// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "ctmmcp/actuator.hpp"
#include "ctmmcp/affect_loop.hpp"
#include "ctmmcp/core/weight_file.hpp"
#include "ctmmcp/ctm_runtime.hpp"
#include "ctmmcp/harness/config.hpp"
#include "ctmmcp/mcp_router.hpp"
#include "ctmmcp/perception.hpp"

namespace ctmmcp {

/// All weights of one run, built from the config.
struct Model {
  PerceptionDims dims;
  EncoderWeights encoder;
  CtmParams ctm;
  AffectParams affect;
  ToolRegistry registry;
  RouterParams router;
  ActuatorParams actuator;

  TensorMap export_tensors() const {
    TensorMap out;
    encoder.export_to(out);
    ctm.export_to(out);
    affect.export_to(out);
    router.export_to(out);
    actuator.export_to(out);
    return out;
  }
};

namespace detail {

inline void override_tensor(TensorMap& file, const std::string& name, Matrix& target) {
  const auto it = file.find(name);
  if (it == file.end()) return;
  require_dim(it->second.rows(), target.rows(), name + " rows");
  require_dim(it->second.cols(), target.cols(), name + " cols");
  target = std::move(it->second);
  file.erase(it);
}

inline void override_vector(TensorMap& file, const std::string& name, Vector& target) {
  const auto it = file.find(name);
  if (it == file.end()) return;
  require_dim(it->second.size(), target.size(), name);
  target.assign(it->second.data().begin(), it->second.data().end());
  file.erase(it);
}

}  // namespace detail

inline Model build_model(const RunConfig& config) {
  config.validate();
  const bool zeros = config.weight_init == WeightInit::Zeros;
  const auto seed = config.model_seed;
  Model m;
  m.dims = config.perception;
  m.encoder = zeros ? EncoderWeights::zeros(m.dims) : EncoderWeights::seeded(m.dims, seed);
  m.ctm = zeros ? CtmParams::zeros(config.ctm, config.constants, seed)
                : CtmParams::seeded(config.ctm, config.constants, seed);
  const std::size_t p = config.ctm.pairs;
  m.affect = zeros ? AffectParams::zeros(p, config.affect.epsilon0, config.affect.alpha)
                   : AffectParams::seeded(p, seed, config.affect.epsilon0, config.affect.alpha);
  m.registry = default_registry();
  m.router = zeros ? RouterParams::zeros(m.registry, p, config.router.gamma)
                   : RouterParams::seeded(m.registry, p, seed, config.router.gamma);
  m.actuator = zeros ? ActuatorParams::zeros(p, config.actuator.joints)
                     : ActuatorParams::seeded(p, seed, config.actuator.joints);
  m.actuator.tau_min.assign(config.actuator.joints, config.actuator.tau_min);
  m.actuator.tau_max.assign(config.actuator.joints, config.actuator.tau_max);
  m.actuator.gain.assign(config.actuator.joints, config.actuator.gain);
  m.actuator.filter_window = config.actuator.filter_window;
  m.actuator.samples_per_move = config.actuator.samples_per_move;

  if (!config.weights_file.empty()) {
    TensorMap file = load_weights(config.weights_file);
    for (auto [name, target] : {std::pair<const char*, Matrix*>{"enc.vision", &m.encoder.vision},
                                {"enc.audio", &m.encoder.audio},
                                {"enc.proprio", &m.encoder.proprio},
                                {"enc.fusion", &m.encoder.fusion},
                                {"ctm.synapse", &m.ctm.synapse},
                                {"ctm.factor_a", &m.ctm.factor_a},
                                {"ctm.factor_b", &m.ctm.factor_b},
                                {"ctm.certainty", &m.ctm.certainty},
                                {"affect.w1", &m.affect.w1},
                                {"affect.w2", &m.affect.w2},
                                {"router.action", &m.router.action_head},
                                {"router.slot", &m.router.slot_head},
                                {"act.k", &m.actuator.k}})
      detail::override_tensor(file, name, *target);
    detail::override_vector(file, "ctm.bias", m.ctm.bias);
    if (file.contains("ctm.pairs")) {
      const Matrix codes = file.at("ctm.pairs");
      require_dim(codes.size(), 2 * p, "ctm.pairs");
      for (std::size_t k = 0; k < p; ++k)
        m.ctm.pairs[k] = {static_cast<std::uint32_t>(codes.data()[2 * k]),
                          static_cast<std::uint32_t>(codes.data()[2 * k + 1])};
      file.erase("ctm.pairs");
    }
    if (!file.empty())
      throw Error(ErrorKind::MalformedWeights, "unknown tensor", file.begin()->first);
  }
  m.encoder.validate(m.dims);
  m.ctm.validate();
  m.affect.validate(p);
  m.router.validate(m.registry, p);
  m.actuator.validate();
  return m;
}

/// Per-episode slot candidates: every context name, in task order.
inline std::vector<Candidate> make_candidates(const std::vector<std::string>& context, std::uint64_t model_seed) {
  std::vector<Candidate> out;
  out.reserve(context.size());
  for (const auto& name : context)
    out.push_back({name, candidate_embedding("embed:" + name, model_seed)});
  return out;
}

}  // namespace ctmmcp
