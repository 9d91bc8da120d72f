// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <concepts>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "ctmmcp/actuator.hpp"
#include "ctmmcp/affect_loop.hpp"
#include "ctmmcp/core/canonical_json.hpp"
#include "ctmmcp/core/error.hpp"
#include "ctmmcp/ctm_runtime.hpp"
#include "ctmmcp/mcp_router.hpp"
#include "ctmmcp/parallel_consensus.hpp"
#include "ctmmcp/perception.hpp"

namespace ctmmcp {

enum class WeightInit : std::uint8_t { Uniform, Zeros };

struct ConsensusConfig {
  std::size_t branches = 4;
  WaitPolicy wait = WaitPolicy::One;
  DecisionMode mode = DecisionMode::Deterministic;
  std::uint64_t extra_wait_ticks = 32;
  std::uint64_t logical_tick_limit = 128;
  std::uint64_t wall_clock_ms = 250;
};

struct AffectConfig {
  std::size_t hidden = kAffectHidden;
  std::size_t dims = kAffectDims;
  double epsilon0 = 0.75;
  double alpha = 0.5;
};

struct RouterConfig {
  double gamma = 0.70;
  std::size_t slot_embedding = kSlotEmbedding;
};

struct ActuatorConfig {
  std::size_t joints = kDefaultJoints;
  double tau_min = -5.0;
  double tau_max = 5.0;
  double gain = 1.0;
  std::size_t filter_window = 5;
  std::size_t samples_per_move = 10;
};

/// Every tunable of a run. Missing keys keep these defaults; unknown keys
/// are rejected.
struct RunConfig {
  std::uint64_t model_seed = 7;
  WeightInit weight_init = WeightInit::Uniform;
  std::string weights_file;  // optional; overrides tensors by name
  PerceptionDims perception;
  CtmShape ctm;
  CtmConstants constants;
  ConsensusConfig consensus;
  AffectConfig affect;
  RouterConfig router;
  ActuatorConfig actuator;

  void validate() const {
    auto fail = [](const char* what) { throw Error(ErrorKind::ConfigError, what); };
    if (perception.vision.input == 0 || perception.vision.latent == 0 || perception.audio.latent == 0 ||
        perception.proprio.input == 0 || perception.proprio.latent == 0 || perception.fusion == 0)
      fail("perception sizes must be positive");
    if (perception.audio_window < 2 * perception.audio.input) fail("audio_window must cover 2 x audio bins");
    if (ctm.context != perception.fusion) fail("ctm.context must equal perception.fusion");
    if (ctm.neurons == 0 || ctm.history == 0 || ctm.rank == 0 || ctm.pairs == 0 || ctm.ticks_per_slab == 0 ||
        ctm.max_slabs == 0)
      fail("ctm sizes must be positive");
    if (ctm.logits < 2) fail("ctm.logits must be at least 2");
    if (ctm.pairs > ctm.neurons * ctm.neurons) fail("ctm.pairs exceeds neurons^2");
    if (!(constants.decay > 0.0 && constants.decay <= 1.0)) fail("decay must be in (0, 1]");
    if (!(constants.logit_scale > 0.0)) fail("logit_scale must be positive");
    if (!(constants.beta >= 0.0 && constants.beta <= 1.0)) fail("beta must be in [0, 1]");
    if (!(constants.halt_cap > 0.0 && constants.halt_cap <= 1.0)) fail("halt_cap must be in (0, 1]");
    if (consensus.branches == 0) fail("consensus.branches must be at least 1");
    if (consensus.logical_tick_limit == 0 || consensus.wall_clock_ms == 0) fail("deadlines must be positive");
    if (affect.hidden != kAffectHidden || affect.dims != kAffectDims) fail("affect sizes are fixed at 32/8");
    if (!(affect.epsilon0 > 0.0) || !(affect.alpha >= 0.0)) fail("affect epsilon0/alpha out of range");
    if (!(router.gamma >= 0.0 && router.gamma <= 1.0)) fail("router.gamma must be in [0, 1]");
    if (router.slot_embedding != kSlotEmbedding) fail("router.slot_embedding is fixed at 16");
    if (actuator.joints == 0 || !(actuator.tau_min < actuator.tau_max)) fail("actuator bounds");
    if (actuator.filter_window == 0 || actuator.samples_per_move < 2) fail("actuator filter/samples");
  }

  RoundConfig round() const {
    return {consensus.wait, consensus.mode, consensus.extra_wait_ticks,
            DecisionDeadline{consensus.logical_tick_limit, std::chrono::milliseconds(consensus.wall_clock_ms)}};
  }
};

inline Json to_json(const RunConfig& c) {
  auto dims = [](const ModalityDims& d) { return Json::array({d.input, d.latent}); };
  return {
      {"model_seed", c.model_seed},
      {"weight_init", c.weight_init == WeightInit::Uniform ? "uniform" : "zeros"},
      {"weights_file", c.weights_file},
      {"perception",
       {{"vision", dims(c.perception.vision)},
        {"audio", dims(c.perception.audio)},
        {"proprio", dims(c.perception.proprio)},
        {"fusion", c.perception.fusion},
        {"audio_window", c.perception.audio_window}}},
      {"ctm",
       {{"neurons", c.ctm.neurons},
        {"history", c.ctm.history},
        {"rank", c.ctm.rank},
        {"pairs", c.ctm.pairs},
        {"ticks_per_slab", c.ctm.ticks_per_slab},
        {"max_slabs", c.ctm.max_slabs},
        {"logits", c.ctm.logits},
        {"decay", c.constants.decay},
        {"logit_scale", c.constants.logit_scale},
        {"beta", c.constants.beta},
        {"halt_cap", c.constants.halt_cap},
        {"plateau_span", c.constants.plateau_span},
        {"plateau_window", c.constants.plateau_window}}},
      {"consensus",
       {{"branches", c.consensus.branches},
        {"wait", c.consensus.wait == WaitPolicy::One ? "one" : "off"},
        {"mode", c.consensus.mode == DecisionMode::Live ? "live" : "deterministic"},
        {"extra_wait_ticks", c.consensus.extra_wait_ticks},
        {"logical_tick_limit", c.consensus.logical_tick_limit},
        {"wall_clock_ms", c.consensus.wall_clock_ms}}},
      {"affect",
       {{"hidden", c.affect.hidden},
        {"dims", c.affect.dims},
        {"epsilon0", c.affect.epsilon0},
        {"alpha", c.affect.alpha}}},
      {"router", {{"gamma", c.router.gamma}, {"slot_embedding", c.router.slot_embedding}}},
      {"actuator",
       {{"joints", c.actuator.joints},
        {"tau_min", c.actuator.tau_min},
        {"tau_max", c.actuator.tau_max},
        {"gain", c.actuator.gain},
        {"filter_window", c.actuator.filter_window},
        {"samples_per_move", c.actuator.samples_per_move}}},
  };
}

namespace detail {

class ConfigReader {
 public:
  ConfigReader(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw Error(ErrorKind::ConfigError, "expected object", path_);
  }

  void allow(std::initializer_list<std::string_view> keys) const {
    for (const auto& [key, _] : obj_.items()) {
      bool known = false;
      for (auto k : keys) known = known || key == k;
      if (!known) throw Error(ErrorKind::ConfigError, "unknown key", where(key));
    }
  }

  template <std::unsigned_integral T>
  void read(const char* key, T& out) const {
    if (const Json* v = find(key)) {
      if (!v->is_number_unsigned() || v->get<std::uint64_t>() > std::numeric_limits<T>::max())
        throw Error(ErrorKind::ConfigError, "expected non-negative integer", where(key));
      out = v->get<T>();
    }
  }
  void read(const char* key, double& out) const {
    if (const Json* v = find(key)) {
      if (!v->is_number()) throw Error(ErrorKind::ConfigError, "expected number", where(key));
      out = v->get<double>();
    }
  }
  void read(const char* key, std::string& out) const {
    if (const Json* v = find(key)) {
      if (!v->is_string()) throw Error(ErrorKind::ConfigError, "expected string", where(key));
      out = v->get<std::string>();
    }
  }
  void read(const char* key, ModalityDims& out) const {
    if (const Json* v = find(key)) {
      if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number_unsigned() || !(*v)[1].is_number_unsigned())
        throw Error(ErrorKind::ConfigError, "expected [input, latent]", where(key));
      out = {(*v)[0].get<std::size_t>(), (*v)[1].get<std::size_t>()};
    }
  }

  std::optional<ConfigReader> child(const char* key) const {
    if (const Json* v = find(key)) return ConfigReader(*v, where(key));
    return std::nullopt;
  }

 private:
  const Json* find(const char* key) const {
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }
  std::string where(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  const Json& obj_;
  std::string path_;
};

}  // namespace detail

inline RunConfig config_from_json(const Json& j) {
  RunConfig c;
  const detail::ConfigReader root(j, "");
  root.allow({"model_seed", "weight_init", "weights_file", "perception", "ctm", "consensus", "affect", "router",
              "actuator"});
  root.read("model_seed", c.model_seed);
  std::string init = "uniform";
  root.read("weight_init", init);
  if (init == "uniform")
    c.weight_init = WeightInit::Uniform;
  else if (init == "zeros")
    c.weight_init = WeightInit::Zeros;
  else
    throw Error(ErrorKind::ConfigError, "expected \"uniform\" or \"zeros\"", "weight_init");
  root.read("weights_file", c.weights_file);

  if (auto p = root.child("perception")) {
    p->allow({"vision", "audio", "proprio", "fusion", "audio_window"});
    p->read("vision", c.perception.vision);
    p->read("audio", c.perception.audio);
    p->read("proprio", c.perception.proprio);
    p->read("fusion", c.perception.fusion);
    p->read("audio_window", c.perception.audio_window);
  }
  c.ctm.context = c.perception.fusion;
  if (auto t = root.child("ctm")) {
    t->allow({"neurons", "history", "rank", "pairs", "ticks_per_slab", "max_slabs", "logits", "decay",
              "logit_scale", "beta", "halt_cap", "plateau_span", "plateau_window"});
    t->read("neurons", c.ctm.neurons);
    t->read("history", c.ctm.history);
    t->read("rank", c.ctm.rank);
    t->read("pairs", c.ctm.pairs);
    t->read("ticks_per_slab", c.ctm.ticks_per_slab);
    t->read("max_slabs", c.ctm.max_slabs);
    t->read("logits", c.ctm.logits);
    t->read("decay", c.constants.decay);
    t->read("logit_scale", c.constants.logit_scale);
    t->read("beta", c.constants.beta);
    t->read("halt_cap", c.constants.halt_cap);
    t->read("plateau_span", c.constants.plateau_span);
    t->read("plateau_window", c.constants.plateau_window);
  }
  c.consensus.logical_tick_limit = c.ctm.ticks_per_slab * c.ctm.max_slabs;
  c.consensus.extra_wait_ticks = 4 * c.ctm.ticks_per_slab;
  if (auto s = root.child("consensus")) {
    s->allow({"branches", "wait", "mode", "extra_wait_ticks", "logical_tick_limit", "wall_clock_ms"});
    s->read("branches", c.consensus.branches);
    std::string wait = "one", mode = "deterministic";
    s->read("wait", wait);
    s->read("mode", mode);
    if (wait != "one" && wait != "off") throw Error(ErrorKind::ConfigError, "expected \"one\" or \"off\"", "consensus.wait");
    if (mode != "deterministic" && mode != "live")
      throw Error(ErrorKind::ConfigError, "expected \"deterministic\" or \"live\"", "consensus.mode");
    c.consensus.wait = wait == "one" ? WaitPolicy::One : WaitPolicy::Off;
    c.consensus.mode = mode == "live" ? DecisionMode::Live : DecisionMode::Deterministic;
    s->read("extra_wait_ticks", c.consensus.extra_wait_ticks);
    s->read("logical_tick_limit", c.consensus.logical_tick_limit);
    s->read("wall_clock_ms", c.consensus.wall_clock_ms);
  }
  if (auto a = root.child("affect")) {
    a->allow({"hidden", "dims", "epsilon0", "alpha"});
    a->read("hidden", c.affect.hidden);
    a->read("dims", c.affect.dims);
    a->read("epsilon0", c.affect.epsilon0);
    a->read("alpha", c.affect.alpha);
  }
  if (auto r = root.child("router")) {
    r->allow({"gamma", "slot_embedding"});
    r->read("gamma", c.router.gamma);
    r->read("slot_embedding", c.router.slot_embedding);
  }
  if (auto a = root.child("actuator")) {
    a->allow({"joints", "tau_min", "tau_max", "gain", "filter_window", "samples_per_move"});
    a->read("joints", c.actuator.joints);
    a->read("tau_min", c.actuator.tau_min);
    a->read("tau_max", c.actuator.tau_max);
    a->read("gain", c.actuator.gain);
    a->read("filter_window", c.actuator.filter_window);
    a->read("samples_per_move", c.actuator.samples_per_move);
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open config", path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::ConfigError, e.what(), path);
  }
  return config_from_json(j);
}

}  // namespace ctmmcp
