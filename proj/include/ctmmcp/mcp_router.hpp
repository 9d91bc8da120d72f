// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ctmmcp/affect_loop.hpp"
#include "ctmmcp/core/canonical_json.hpp"
#include "ctmmcp/core/digest.hpp"
#include "ctmmcp/core/error.hpp"
#include "ctmmcp/core/rng.hpp"
#include "ctmmcp/core/tensor.hpp"
#include "ctmmcp/core/weight_file.hpp"
#include "ctmmcp/parallel_consensus.hpp"

namespace ctmmcp {

// ---------------------------------------------------------------------------
// Tool registry
// ---------------------------------------------------------------------------

enum class SlotKind : std::uint8_t { ObjectRef, Scalar };

constexpr std::string_view to_string(SlotKind k) {
  return k == SlotKind::ObjectRef ? "object_ref" : "scalar";
}

struct ArgSlot {
  std::string name;
  SlotKind kind = SlotKind::ObjectRef;
  friend bool operator==(const ArgSlot&, const ArgSlot&) = default;
};

struct ToolSpec {
  std::string name;
  std::vector<ArgSlot> arg_slots;
  std::string description;
  friend bool operator==(const ToolSpec&, const ToolSpec&) = default;
};

inline constexpr std::string_view kNoopTool = "noop";

/// Ordered, immutable set of tools. `noop` is always present at index 0.
class ToolRegistry {
 public:
  ToolRegistry() : tools_{{std::string(kNoopTool), {}, "do nothing"}} {}

  explicit ToolRegistry(std::vector<ToolSpec> extra) : ToolRegistry() {
    for (auto& t : extra) {
      if (t.name == kNoopTool) {
        if (!t.arg_slots.empty()) throw Error(ErrorKind::ConfigError, "noop takes no slots");
        continue;
      }
      if (find(t.name)) throw Error(ErrorKind::ConfigError, "duplicate tool", t.name);
      tools_.push_back(std::move(t));
    }
  }

  std::size_t size() const noexcept { return tools_.size(); }
  const ToolSpec& operator[](std::size_t i) const { return tools_.at(i); }
  std::span<const ToolSpec> tools() const noexcept { return tools_; }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < tools_.size(); ++i)
      if (tools_[i].name == name) return i;
    return std::nullopt;
  }

  std::size_t max_slots() const {
    std::size_t m = 0;
    for (const auto& t : tools_) m = std::max(m, t.arg_slots.size());
    return m;
  }

 private:
  std::vector<ToolSpec> tools_;
};

/// The simulated robot's tools: noop, navigate, pick, place, actuate.
inline ToolRegistry default_registry() {
  return ToolRegistry({
      {"navigate", {{"target", SlotKind::ObjectRef}}, "move the robot to a location"},
      {"pick", {{"object", SlotKind::ObjectRef}}, "grasp an object at the robot's location"},
      {"place", {{"object", SlotKind::ObjectRef}}, "put the held object down at the robot's location"},
      {"actuate", {}, "drive the joints from the current sync vector"},
  });
}

inline Json to_json(const ToolSpec& t) {
  Json slots = Json::array();
  for (const auto& s : t.arg_slots) slots.push_back({{"name", s.name}, {"kind", to_string(s.kind)}});
  return {{"name", t.name}, {"arg_slots", slots}, {"description", t.description}};
}

// ---------------------------------------------------------------------------
// Envelope
// ---------------------------------------------------------------------------

using ArgValue = std::variant<std::string, double>;
using SlotMap = std::map<std::string, ArgValue>;

struct EnvelopeMeta {
  std::string episode;
  std::uint64_t step = 0;
  std::uint64_t slab_count = 0;
  std::uint64_t ticks = 0;
  double confidence = 0.0;
  std::array<double, kAffectDims> affect{};
  std::string sync_digest;
  bool fallback = false;
  friend bool operator==(const EnvelopeMeta&, const EnvelopeMeta&) = default;
};

struct Envelope {
  std::uint64_t id = 0;
  std::string tool;  // method is "tool/<tool>"
  SlotMap args;
  EnvelopeMeta meta;
  friend bool operator==(const Envelope&, const Envelope&) = default;
};

inline Json to_json(const ArgValue& v) {
  return std::visit([](const auto& x) { return Json(x); }, v);
}

inline Json args_to_json(const SlotMap& args) {
  Json out = Json::object();
  for (const auto& [k, v] : args) out[k] = to_json(v);
  return out;
}

inline Json to_json(const Envelope& env) {
  Json meta = {{"episode", env.meta.episode},
               {"step", env.meta.step},
               {"slab_count", env.meta.slab_count},
               {"ticks", env.meta.ticks},
               {"confidence", env.meta.confidence},
               {"affect", env.meta.affect},
               {"sync_digest", env.meta.sync_digest},
               {"fallback", env.meta.fallback}};
  return {{"jsonrpc", "2.0"},
          {"id", env.id},
          {"method", "tool/" + env.tool},
          {"params", {{"args", args_to_json(env.args)}, {"meta", std::move(meta)}}}};
}

/// Canonical bytes (no trailing newline).
inline std::string serialize_envelope(const Envelope& env) {
  if (!std::isfinite(env.meta.confidence))
    throw Error(ErrorKind::NonFiniteMetadata, "confidence", "params.meta.confidence");
  for (double a : env.meta.affect)
    if (!std::isfinite(a)) throw Error(ErrorKind::NonFiniteMetadata, "affect", "params.meta.affect");
  for (const auto& [k, v] : env.args)
    if (const double* d = std::get_if<double>(&v); d && !std::isfinite(*d))
      throw Error(ErrorKind::NonFiniteMetadata, "argument", "params.args." + k);
  return canonical_dump(to_json(env));
}

namespace detail {

inline void require_keys(const Json& obj, std::span<const std::string_view> allowed,
                         const std::string& path) {
  if (!obj.is_object()) throw Error(ErrorKind::SchemaViolation, "expected object", path);
  for (const auto& [key, _] : obj.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw Error(ErrorKind::SchemaViolation, "unknown field", path.empty() ? key : path + "." + key);
  }
  for (auto a : allowed)
    if (!obj.contains(a))
      throw Error(ErrorKind::SchemaViolation, "missing field",
                  path.empty() ? std::string(a) : path + "." + std::string(a));
}

inline std::uint64_t get_uint(const Json& j, const std::string& path) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0))
    throw Error(ErrorKind::SchemaViolation, "expected non-negative integer", path);
  return j.get<std::uint64_t>();
}

inline double get_real(const Json& j, const std::string& path) {
  if (!j.is_number()) throw Error(ErrorKind::SchemaViolation, "expected number", path);
  return j.get<double>();
}

inline std::string get_string(const Json& j, const std::string& path) {
  if (!j.is_string()) throw Error(ErrorKind::SchemaViolation, "expected string", path);
  return j.get<std::string>();
}

inline Json parse_json(std::string_view bytes) {
  try {
    return Json::parse(bytes.begin(), bytes.end());
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::MalformedJson, e.what());
  }
}

inline SlotMap args_from_json(const Json& j, const std::string& path) {
  if (!j.is_object()) throw Error(ErrorKind::SchemaViolation, "expected object", path);
  SlotMap out;
  for (const auto& [k, v] : j.items()) {
    if (v.is_string())
      out.emplace(k, v.get<std::string>());
    else if (v.is_number())
      out.emplace(k, v.get<double>());
    else
      throw Error(ErrorKind::SchemaViolation, "argument must be string or number", path + "." + k);
  }
  return out;
}

}  // namespace detail

inline Envelope envelope_from_json(const Json& j) {
  using namespace std::string_view_literals;
  static constexpr std::array top{"jsonrpc"sv, "id"sv, "method"sv, "params"sv};
  static constexpr std::array params{"args"sv, "meta"sv};
  static constexpr std::array meta{"episode"sv,    "step"sv,     "slab_count"sv,  "ticks"sv,
                                   "confidence"sv, "affect"sv,   "sync_digest"sv, "fallback"sv};
  detail::require_keys(j, top, "");
  if (j["jsonrpc"] != "2.0") throw Error(ErrorKind::SchemaViolation, "expected \"2.0\"", "jsonrpc");
  Envelope env;
  env.id = detail::get_uint(j["id"], "id");
  const std::string method = detail::get_string(j["method"], "method");
  if (!method.starts_with("tool/") || method.size() == 5)
    throw Error(ErrorKind::SchemaViolation, "expected tool/<name>", "method");
  env.tool = method.substr(5);

  const Json& p = j["params"];
  detail::require_keys(p, params, "params");
  env.args = detail::args_from_json(p["args"], "params.args");

  const Json& m = p["meta"];
  detail::require_keys(m, meta, "params.meta");
  env.meta.episode = detail::get_string(m["episode"], "params.meta.episode");
  env.meta.step = detail::get_uint(m["step"], "params.meta.step");
  env.meta.slab_count = detail::get_uint(m["slab_count"], "params.meta.slab_count");
  env.meta.ticks = detail::get_uint(m["ticks"], "params.meta.ticks");
  env.meta.confidence = detail::get_real(m["confidence"], "params.meta.confidence");
  const Json& affect = m["affect"];
  if (!affect.is_array() || affect.size() != kAffectDims)
    throw Error(ErrorKind::SchemaViolation, "expected 8 reals", "params.meta.affect");
  for (std::size_t i = 0; i < kAffectDims; ++i)
    env.meta.affect[i] = detail::get_real(affect[i], "params.meta.affect[" + std::to_string(i) + "]");
  env.meta.sync_digest = detail::get_string(m["sync_digest"], "params.meta.sync_digest");
  if (!is_hex_digest(env.meta.sync_digest))
    throw Error(ErrorKind::SchemaViolation, "expected 64 lowercase hex chars", "params.meta.sync_digest");
  if (!m["fallback"].is_boolean())
    throw Error(ErrorKind::SchemaViolation, "expected boolean", "params.meta.fallback");
  env.meta.fallback = m["fallback"].get<bool>();
  return env;
}

/// Strict parse of one envelope frame.
inline Envelope parse_envelope(std::string_view bytes) {
  return envelope_from_json(detail::parse_json(bytes));
}

/// Issues strictly increasing envelope ids, starting at 1.
class Session {
 public:
  std::uint64_t next_id() noexcept { return ++last_; }
  std::uint64_t last_id() const noexcept { return last_; }

 private:
  std::uint64_t last_ = 0;
};

// ---------------------------------------------------------------------------
// Policy gate and action selection
// ---------------------------------------------------------------------------

enum class GateDecision : std::uint8_t { Rethink, Dispatch };

/// Dispatch when confident enough, or when the slab budget is spent.
inline GateDecision policy_gate(double c_merged, double gamma, std::size_t slabs_used,
                                std::size_t max_slabs) {
  return (c_merged >= gamma || slabs_used >= max_slabs) ? GateDecision::Dispatch
                                                        : GateDecision::Rethink;
}

inline constexpr std::size_t kSlotEmbedding = 16;

using Embedding = std::array<float, kSlotEmbedding>;

/// Named candidates for object_ref slots, in a fixed order.
struct Candidate {
  std::string name;
  Embedding embedding{};
};

struct RouterParams {
  double gamma = 0.70;
  Matrix action_head;  // T x P
  Matrix slot_head;    // (max_slots * 16) x P

  static RouterParams seeded(const ToolRegistry& registry, std::size_t pairs, std::uint64_t seed,
                             double gamma = 0.70) {
    return {gamma, Matrix::uniform(registry.size(), pairs, derive_seed(seed, "router.action")),
            Matrix::uniform(std::max<std::size_t>(registry.max_slots(), 1) * kSlotEmbedding, pairs,
                            derive_seed(seed, "router.slot"))};
  }

  static RouterParams zeros(const ToolRegistry& registry, std::size_t pairs, double gamma = 0.70) {
    return {gamma, Matrix(registry.size(), pairs),
            Matrix(std::max<std::size_t>(registry.max_slots(), 1) * kSlotEmbedding, pairs)};
  }

  void validate(const ToolRegistry& registry, std::size_t pairs) const {
    require_dim(action_head.rows(), registry.size(), "action head rows");
    require_dim(action_head.cols(), pairs, "action head cols");
    if (slot_head.rows() < registry.max_slots() * kSlotEmbedding || slot_head.rows() % kSlotEmbedding != 0)
      throw Error(ErrorKind::DimensionMismatch, "slot head rows");
    require_dim(slot_head.cols(), pairs, "slot head cols");
  }

  void export_to(TensorMap& out) const {
    out["router.action"] = action_head;
    out["router.slot"] = slot_head;
  }
};

/// Per-candidate embedding, uniform in [-1/4, 1/4] from a name-derived stream.
inline Embedding candidate_embedding(std::string_view name, std::uint64_t seed) {
  const Matrix m = Matrix::uniform(1, kSlotEmbedding, derive_seed(seed, name));
  Embedding e{};
  std::copy(m.data().begin(), m.data().end(), e.begin());
  return e;
}

struct ActionDecision {
  std::size_t tool_index = 0;
  std::string tool;
  SlotMap args;
  friend bool operator==(const ActionDecision&, const ActionDecision&) = default;
};

/// Lowest index among the maxima.
inline std::size_t argmax_first(std::span<const double> scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

/// Tool = argmax of the action head over S_merged. Each object_ref slot takes
/// the candidate whose embedding best matches that slot's 16-wide projection;
/// scalar slots take the projection's first component. Fallback results
/// always map to noop.
inline ActionDecision select_action(const ConsensusResult& result, const RouterParams& params,
                                    const ToolRegistry& registry, std::span<const Candidate> candidates) {
  if (registry.size() == 0) throw Error(ErrorKind::ConfigError, "empty registry");
  if (result.fallback) return {0, std::string(kNoopTool), {}};
  const auto scores = matvec(params.action_head, result.sync_merged, "select_action sync");
  const std::size_t index = argmax_first(scores);
  const ToolSpec& tool = registry[index];
  ActionDecision out{index, tool.name, {}};
  const auto slot_scores = matvec(params.slot_head, result.sync_merged, "select_action slots");
  for (std::size_t s = 0; s < tool.arg_slots.size(); ++s) {
    const std::span<const double> proj(slot_scores.data() + s * kSlotEmbedding, kSlotEmbedding);
    const auto& slot = tool.arg_slots[s];
    if (slot.kind == SlotKind::Scalar) {
      out.args.emplace(slot.name, proj[0]);
      continue;
    }
    if (candidates.empty()) throw Error(ErrorKind::NoCandidates, "no candidates", slot.name);
    std::vector<double> fit(candidates.size());
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < kSlotEmbedding; ++i) acc += proj[i] * candidates[c].embedding[i];
      fit[c] = acc;
    }
    out.args.emplace(slot.name, candidates[argmax_first(fit)].name);
  }
  return out;
}

/// Envelope metadata for a consensus result.
inline EnvelopeMeta make_meta(std::string episode, std::uint64_t step, std::uint64_t slab_count,
                              std::uint64_t ticks, const ConsensusResult& result,
                              const AffectVector& affect) {
  EnvelopeMeta meta{std::move(episode), step, slab_count, ticks, result.confidence_merged, {},
                    sync_digest(result.sync_merged), result.fallback};
  for (std::size_t i = 0; i < kAffectDims; ++i) meta.affect[i] = affect.e[i];
  return meta;
}

// ---------------------------------------------------------------------------
// Tool results, server and dispatch
// ---------------------------------------------------------------------------

enum class ToolStatus : std::uint8_t { Ok, Error };

struct ToolResult {
  ToolStatus status = ToolStatus::Ok;
  Json payload;
  bool ok() const noexcept { return status == ToolStatus::Ok; }
};

inline constexpr int kMethodNotFound = -32601;
inline constexpr int kParseError = -32700;
inline constexpr int kInvalidParams = -32602;

/// Line-framed transport. A frame never contains '\n'.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send_frame(std::string_view frame) = 0;
  /// nullopt when the peer closed the connection.
  virtual std::optional<std::string> recv_frame() = 0;
};

/// Answers `tool/<name>` envelopes and `registry/list`.
class ToolServer {
 public:
  using Handler = std::function<ToolResult(const Envelope&)>;

  ToolServer(ToolRegistry registry, Handler handler)
      : registry_(std::move(registry)), handler_(std::move(handler)) {}

  const ToolRegistry& registry() const noexcept { return registry_; }

  std::string handle_frame(std::string_view frame) const {
    Json request;
    try {
      request = detail::parse_json(frame);
    } catch (const Error& e) {
      return error_response(nullptr, kParseError, e.what());
    }
    const Json id = request.is_object() && request.contains("id") ? request["id"] : Json(nullptr);
    if (!request.is_object() || !request.contains("method") || !request["method"].is_string())
      return error_response(id, kInvalidParams, "missing method");
    const std::string method = request["method"].get<std::string>();
    if (method == "registry/list") {
      Json tools = Json::array();
      for (const auto& t : registry_.tools()) tools.push_back(to_json(t));
      return result_response(id, {{"tools", tools}});
    }
    if (!method.starts_with("tool/")) return error_response(id, kMethodNotFound, "unknown method " + method);
    if (!registry_.find(method.substr(5)))
      return error_response(id, kMethodNotFound, "UnknownTool: " + method.substr(5));
    Envelope env;
    try {
      env = envelope_from_json(request);
    } catch (const Error& e) {
      return error_response(id, kInvalidParams, e.what());
    }
    ToolResult r;
    try {
      r = env.tool == kNoopTool ? ToolResult{ToolStatus::Ok, Json::object()} : handler_(env);
    } catch (const std::exception& e) {
      r = {ToolStatus::Error, {{"error", e.what()}}};
    }
    return result_response(id, {{"status", r.ok() ? "ok" : "error"}, {"payload", r.payload}});
  }

 private:
  static std::string result_response(const Json& id, Json result) {
    return canonical_dump({{"jsonrpc", "2.0"}, {"id", id}, {"result", std::move(result)}});
  }
  static std::string error_response(const Json& id, int code, std::string message) {
    return canonical_dump(
        {{"jsonrpc", "2.0"}, {"id", id}, {"error", {{"code", code}, {"message", std::move(message)}}}});
  }

  ToolRegistry registry_;
  Handler handler_;
};

/// Writes the envelope as one frame and consumes exactly one response frame.
/// An unregistered tool comes back as an error result, not an exception.
inline ToolResult dispatch(const Envelope& env, Transport& transport) {
  transport.send_frame(serialize_envelope(env));
  const auto frame = transport.recv_frame();
  if (!frame) throw Error(ErrorKind::TransportClosed, "no response frame");
  const Json response = detail::parse_json(*frame);
  if (!response.is_object() || !response.contains("id") || !response["id"].is_number_unsigned() ||
      response["id"].get<std::uint64_t>() != env.id)
    throw Error(ErrorKind::IdMismatch, "response id does not match request " + std::to_string(env.id));
  if (response.contains("error")) {
    const auto& err = response["error"];
    const int code = err.value("code", 0);
    const std::string kind = code == kMethodNotFound ? "UnknownTool" : "RemoteError";
    return {ToolStatus::Error, {{"error", kind}, {"message", err.value("message", "")}}};
  }
  const auto& result = response.at("result");
  if (!result.contains("status") || !result["status"].is_string())
    throw Error(ErrorKind::SchemaViolation, "missing status", "result.status");
  return {result["status"] == "ok" ? ToolStatus::Ok : ToolStatus::Error, result.value("payload", Json())};
}

}  // namespace ctmmcp
