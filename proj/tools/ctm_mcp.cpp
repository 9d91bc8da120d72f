// SPDX-License-Identifier: Apache-2.0
//
// ctm_mcp: run episodes, generate task files, compute metrics, serve tools.

#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "ctmmcp/harness/commands.hpp"

int main(int argc, char** argv) {
  using namespace ctmmcp;
  CLI::App app{"CTM reasoning runtime with an MCP-style tool router"};
  app.require_subcommand(1);

  RunOptions run;
  std::string policy = "ctm";
  auto* run_cmd = app.add_subcommand("run", "run every task in a JSONL file and write per-episode logs");
  run_cmd->add_option("--tasks", run.tasks, "tasks JSONL file")->required();
  run_cmd->add_option("--config", run.config, "config JSON file")->required();
  run_cmd->add_option("--policy", policy, "ctm or oracle")->check(CLI::IsMember({"ctm", "oracle"}));
  run_cmd->add_option("--seed", run.seed, "run seed")->required();
  run_cmd->add_option("--out", run.out, "output directory for logs")->required();

  std::uint64_t gen_seed = 0;
  std::size_t gen_count = 0;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen-tasks", "write synthetic tasks as JSONL");
  gen_cmd->add_option("--seed", gen_seed, "generator seed")->required();
  gen_cmd->add_option("--count", gen_count, "number of tasks")->required();
  gen_cmd->add_option("--out", gen_out, "output file")->required();

  std::string logs_dir;
  auto* metrics_cmd = app.add_subcommand("metrics", "compute TSR/ESR/AEL from a log directory");
  metrics_cmd->add_option("--logs", logs_dir, "directory of episode logs")->required();

  ServeOptions serve;
  auto* serve_cmd = app.add_subcommand("serve", "expose the tool registry over stdio or TCP");
  serve_cmd->add_option("--transport", serve.transport, "stdio or tcp")->check(CLI::IsMember({"stdio", "tcp"}));
  serve_cmd->add_option("--addr", serve.addr, "HOST:PORT for tcp");
  serve_cmd->add_option("--tasks", serve.tasks, "optional tasks file; the first task seeds the world");
  serve_cmd->add_option("--config", serve.config, "optional config file");
  serve_cmd->add_flag("--once", serve.once, "tcp: exit after one connection");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  if (*run_cmd) {
    run.policy = policy == "oracle" ? Policy::Oracle : Policy::Ctm;
    return cmd_run(run, std::cout, std::cerr);
  }
  if (*gen_cmd) return cmd_gen_tasks(gen_seed, gen_count, gen_out, std::cerr);
  if (*metrics_cmd) return cmd_metrics(logs_dir, std::cout, std::cerr);
  return cmd_serve(serve, std::cin, std::cout, std::cerr);
}
