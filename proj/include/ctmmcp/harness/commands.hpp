// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ctmmcp/core/canonical_json.hpp"
#include "ctmmcp/core/error.hpp"
#include "ctmmcp/harness/config.hpp"
#include "ctmmcp/harness/episode.hpp"
#include "ctmmcp/harness/model.hpp"
#include "ctmmcp/harness/tasks.hpp"
#include "ctmmcp/harness/world.hpp"
#include "ctmmcp/transport.hpp"

namespace ctmmcp {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;

/// Errors that mean "bad input or environment" map to exit code 2.
inline bool is_input_error(ErrorKind k) {
  switch (k) {
    case ErrorKind::ConfigError:
    case ErrorKind::IoError:
    case ErrorKind::ParseError:
    case ErrorKind::SchemaViolation:
    case ErrorKind::MalformedJson:
    case ErrorKind::MalformedWeights:
    case ErrorKind::MalformedTable:
    case ErrorKind::DimensionMismatch:
    case ErrorKind::EmptyLogs:
      return true;
    default:
      return false;
  }
}

namespace fs = std::filesystem;

/// `<index>_<id>.jsonl` with anything outside [A-Za-z0-9._-] replaced by '_'.
inline std::string log_file_name(std::size_t index, const std::string& task_id) {
  std::string safe = task_id;
  for (char& c : safe)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '_' && c != '-') c = '_';
  std::ostringstream name;
  name << std::setw(4) << std::setfill('0') << index << '_' << safe << ".jsonl";
  return name.str();
}

struct RunOptions {
  std::string tasks;
  std::string config;
  Policy policy = Policy::Ctm;
  std::uint64_t seed = 0;
  std::string out;
};

struct RunSummary {
  std::vector<EpisodeLog> logs;
  MetricsReport metrics;
};

/// Runs every task, writes one log per episode plus metrics.json into `out`.
inline RunSummary run_tasks(const std::vector<TaskRecord>& tasks, const RunConfig& config, Policy policy,
                            std::uint64_t seed, const std::string& out) {
  const Model model = build_model(config);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error(ErrorKind::IoError, ec.message(), out);
  RunSummary summary;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    summary.logs.push_back(run_episode(tasks[i], model, config, policy, seed));
    const fs::path path = fs::path(out) / log_file_name(i, tasks[i].id);
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw Error(ErrorKind::IoError, "cannot write log", path.string());
    write_episode_log(file, summary.logs.back());
    if (!file.flush()) throw Error(ErrorKind::IoError, "write failed", path.string());
  }
  if (!summary.logs.empty()) {
    summary.metrics = compute_metrics(summary.logs);
    std::ofstream file(fs::path(out) / "metrics.json", std::ios::binary | std::ios::trunc);
    file << canonical_dump(to_json(summary.metrics)) << '\n';
    if (!file) throw Error(ErrorKind::IoError, "cannot write metrics.json", out);
  }
  return summary;
}

/// Reads every *.jsonl in `dir`, in file-name order.
inline std::vector<EpisodeLog> read_logs(const std::string& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(ErrorKind::IoError, "not a directory", dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir, ec))
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
  if (ec) throw Error(ErrorKind::IoError, ec.message(), dir);
  std::sort(files.begin(), files.end());
  std::vector<EpisodeLog> logs;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open log", f.string());
    try {
      logs.push_back(read_episode_log(in));
    } catch (const Error& e) {
      throw Error(e.kind(), e.message(), f.filename().string() + (e.path().empty() ? "" : ":" + e.path()), e.line());
    }
  }
  return logs;
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return is_input_error(e.kind()) ? kExitConfig : kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

inline int cmd_run(const RunOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig config = load_config(opt.config);
    const auto tasks = load_tasks(opt.tasks);
    const RunSummary s = run_tasks(tasks, config, opt.policy, opt.seed, opt.out);
    if (!s.logs.empty()) out << canonical_dump(to_json(s.metrics)) << '\n';
    return kExitOk;
  });
}

inline int cmd_gen_tasks(std::uint64_t seed, std::size_t count, const std::string& path, std::ostream& err) {
  return guarded(err, [&] {
    if (count == 0) throw Error(ErrorKind::ConfigError, "--count must be at least 1");
    const auto tasks = gen_tasks(seed, count);
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw Error(ErrorKind::IoError, "cannot write tasks", path);
    write_tasks(file, tasks);
    if (!file.flush()) throw Error(ErrorKind::IoError, "write failed", path);
    return kExitOk;
  });
}

inline int cmd_metrics(const std::string& dir, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto logs = read_logs(dir);
    out << canonical_dump(to_json(compute_metrics(logs))) << '\n';
    return kExitOk;
  });
}

struct ServeOptions {
  std::string transport = "stdio";
  std::string addr = "127.0.0.1:0";
  std::string tasks;   // optional: world comes from the first task
  std::string config;  // optional: actuator settings
  bool once = false;   // tcp: exit after the first connection closes
};

/// Tool server over stdio or TCP. The world starts from the first task of
/// `--tasks`, or empty with the robot at "home".
inline int cmd_serve(const ServeOptions& opt, std::istream& in, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig config = opt.config.empty() ? RunConfig{} : load_config(opt.config);
    const Model model = build_model(config);
    WorldState world;
    world.robot_at = "home";
    world.goal_predicate = "ok";
    if (!opt.tasks.empty()) {
      const auto tasks = load_tasks(opt.tasks);
      if (!tasks.empty()) world = world_from_task(tasks.front());
    }
    const Vector sync(model.ctm.shape.pairs, 0.0f);
    const ToolServer server(model.registry, [&](const Envelope& env) {
      auto [next, result] = step_env(world, env.tool, env.args, {&model.actuator, sync});
      if (result.ok()) world = std::move(next);
      return result;
    });
    if (opt.transport == "stdio") {
      StreamTransport t(in, out);
      serve_connection(server, t);
      return kExitOk;
    }
    if (opt.transport != "tcp") throw Error(ErrorKind::ConfigError, "transport must be stdio or tcp", opt.transport);
    TcpListener listener(opt.addr);
    err << "listening on port " << listener.port() << std::endl;
    do {
      TcpTransport conn = listener.accept();
      serve_connection(server, conn);
    } while (!opt.once);
    return kExitOk;
  });
}

}  // namespace ctmmcp
