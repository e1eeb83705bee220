// Copyright 2026 The rdv Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// rdv: terminal synthesis, scenario runs, broker/agent processes and
// telemetry reports.
//
// Exit codes: 0 success (rendezvous for run/broker/agent), 2 validation
// error, 3 runtime abort or timeout.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "rdv/config.h"
#include "rdv/ingredients_io.h"
#include "rdv/sim.h"
#include "rdv/telemetry.h"
#include "rdv/terminal.h"

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

struct CommonFlags {
  std::string config;
  std::string out;
  std::vector<std::string> overrides;
  bool force = false;
  std::optional<std::uint64_t> seed;
};

rdv::ScenarioConfig load(const CommonFlags& flags) {
  std::vector<std::string> overrides = flags.overrides;
  if (flags.seed) overrides.push_back("seed=" + std::to_string(*flags.seed));
  return rdv::load_config(flags.config, overrides);
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("rdv");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
  const char* level = std::getenv("RDV_LOG_LEVEL");
  spdlog::set_level(level != nullptr ? spdlog::level::from_str(level)
                                     : spdlog::level::info);
}

int exit_code(const rdv::TelemetryLog& log) {
  return log.termination == rdv::Termination::kRendezvous ? kExitOk
                                                          : kExitRuntime;
}

void refuse_overwrite(const fs::path& path, bool force) {
  if (!force && fs::exists(path)) {
    throw rdv::Error("refusing to overwrite '" + path.string() +
                     "' (use --force)");
  }
}

int cmd_synth(const CommonFlags& flags) {
  const rdv::ScenarioConfig config = load(flags);
  const fs::path out(flags.out);
  std::vector<fs::path> files;
  for (size_t i = 0; i < config.agents.size(); ++i) {
    files.push_back(out / ("ingredients_" + std::to_string(i) + "_" +
                           config.agents[i].model + ".json"));
  }
  files.push_back(out / "synthesis_report.txt");
  for (const fs::path& f : files) refuse_overwrite(f, flags.force);

  std::ostringstream report;
  report.precision(10);
  std::vector<rdv::TerminalIngredients> results;
  for (size_t i = 0; i < config.agents.size(); ++i) {
    const rdv::AgentConfig& ac = config.agents[i];
    const rdv::AgentModel model = rdv::build_model(ac);
    const Eigen::MatrixXd Q = ac.q.asDiagonal();
    const Eigen::MatrixXd R = ac.r.asDiagonal();
    rdv::SynthesisOptions options;
    options.alpha = config.synthesis;
    rdv::TerminalIngredients ti = rdv::synthesize_terminal(model, Q, R, options);
    const rdv::AlphaBreakdown bd =
        rdv::alpha_upper_bound(model, ti, config.synthesis);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ti.P);
    report << "agent " << i << " (" << model.name << ")\n"
           << "  K =\n" << ti.K << "\n"
           << "  P eigenvalues in [" << es.eigenvalues().minCoeff() << ", "
           << es.eigenvalues().maxCoeff() << "]\n"
           << "  closed-loop spectral abscissa "
           << rdv::spectral_abscissa(ti.closed_loop()) << "\n"
           << "  alpha_bar = " << ti.alpha_bar << "  (ratio "
           << bd.alpha_ratio << ", inputs " << bd.alpha_inputs << ", states "
           << bd.alpha_states << ")\n";
    results.push_back(std::move(ti));
  }
  fs::create_directories(out);
  for (size_t i = 0; i < results.size(); ++i) {
    rdv::save_ingredients(files[i].string(), results[i],
                          config.agents[i].model);
  }
  std::ofstream(files.back()) << report.str();
  std::cout << report.str();
  return kExitOk;
}

int cmd_run(const CommonFlags& flags) {
  const rdv::ScenarioConfig config = load(flags);
  const fs::path out(flags.out);
  refuse_overwrite(out / "events.jsonl", flags.force);
  const std::vector<rdv::PreparedAgent> agents = rdv::prepare_agents(config);
  const rdv::TelemetryLog log =
      config.transport == rdv::Transport::kSocket
          ? rdv::run_scenario_socket(config, agents)
          : rdv::run_scenario(config, agents);
  rdv::write_telemetry(log, flags.out, flags.force);
  std::cout << rdv::format_summary(rdv::compute_metrics(log));
  return exit_code(log);
}

int cmd_broker(const CommonFlags& flags, std::optional<int> port) {
  const rdv::ScenarioConfig config = load(flags);
  if (!flags.out.empty()) {
    refuse_overwrite(fs::path(flags.out) / "events.jsonl", flags.force);
  }
  const rdv::TelemetryLog log =
      rdv::run_broker(config, port.value_or(config.comms.port));
  if (!flags.out.empty()) rdv::write_telemetry(log, flags.out, flags.force);
  std::cout << rdv::format_summary(rdv::compute_metrics(log));
  return exit_code(log);
}

int cmd_agent(const CommonFlags& flags, int id, std::optional<int> port,
              std::optional<std::string> broker_addr) {
  const rdv::ScenarioConfig config = load(flags);
  if (!flags.out.empty()) {
    refuse_overwrite(fs::path(flags.out) / "events.jsonl", flags.force);
  }
  const rdv::TelemetryLog log =
      rdv::run_agent(config, id, broker_addr.value_or(config.comms.broker_addr),
                     port.value_or(config.comms.port));
  if (!flags.out.empty()) rdv::write_telemetry(log, flags.out, flags.force);
  std::cout << rdv::format_summary(rdv::compute_metrics(log));
  return exit_code(log);
}

int cmd_report(const std::string& dir) {
  const rdv::TelemetryLog log = rdv::read_telemetry(dir);
  std::cout << rdv::format_summary(rdv::compute_metrics(log));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-triggered distributed MPC rendezvous"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::optional<int> port;
  std::optional<std::string> broker_addr;
  int agent_id = 0;
  std::string report_dir;

  auto add_common = [&](CLI::App* cmd, bool out_required) {
    cmd->add_option("--config", flags.config, "Scenario TOML file")
        ->required()
        ->check(CLI::ExistingFile);
    auto* out = cmd->add_option("--out", flags.out, "Output directory");
    if (out_required) out->required();
    cmd->add_option("--set", flags.overrides,
                    "Override a config value (dotted.key=value)")
        ->allow_extra_args(false);
    cmd->add_flag("--force", flags.force, "Overwrite existing outputs");
    cmd->add_option("--seed", flags.seed, "Random seed override");
  };

  CLI::App* synth = app.add_subcommand("synth", "Synthesize terminal ingredients");
  add_common(synth, true);
  CLI::App* run = app.add_subcommand("run", "Run a scenario");
  add_common(run, true);
  CLI::App* broker = app.add_subcommand("broker", "Host the theta broker");
  add_common(broker, false);
  broker->add_option("--port", port, "TCP port (0 picks a free one)");
  CLI::App* agent = app.add_subcommand("agent", "Run one agent process");
  add_common(agent, false);
  agent->add_option("--id", agent_id, "Agent index in the config")->required();
  agent->add_option("--port", port, "Broker TCP port");
  agent->add_option("--broker-addr", broker_addr, "Broker host");
  CLI::App* report = app.add_subcommand("report", "Summarize telemetry");
  report->add_option("dir", report_dir, "Telemetry directory")
      ->required()
      ->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  setup_logging();
  try {
    if (*synth) return cmd_synth(flags);
    if (*run) return cmd_run(flags);
    if (*broker) return cmd_broker(flags, port);
    if (*agent) return cmd_agent(flags, agent_id, port, broker_addr);
    if (*report) return cmd_report(report_dir);
  } catch (const rdv::ConfigError& e) {
    spdlog::error("invalid configuration: {}", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return kExitValidation;
}
