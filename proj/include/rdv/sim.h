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

// Closed-loop execution of the event-triggered rendezvous: plants and
// controllers stepped on the sampling grid, either in one process over the
// in-process bus or as a broker plus one process per agent over TCP.
//
// Socket protocol (lock-step, newline-delimited JSON messages):
//   agent  -> broker  StateAnnounce{sender=id, step=-1, theta=y(t0)}
//   broker -> agent   ThetaUpdate...  (pending updates, flag semantics)
//   broker -> agent   Ack{step=k, theta}   (turn grant; at k = 0 theta is
//                                            theta(t0))
//   agent  -> broker  [ThetaUpdate{step=k}] StateAnnounce{step=k,
//                     theta=y(t_k), alpha={id: alpha}}
//   broker -> agent   Ack{step=-1, theta=final theta, ts=rendezvous time or
//                     -1 on timeout}   (end of run)

#ifndef RDV_SIM_H_
#define RDV_SIM_H_

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rdv/config.h"
#include "rdv/ocp.h"
#include "rdv/rendezvous.h"
#include "rdv/telemetry.h"

namespace rdv {

struct PreparedAgent {
  int id = 0;
  std::shared_ptr<const AgentModel> model;
  std::shared_ptr<const TerminalIngredients> ingredients;
  DocpSpec spec;
  DisturbanceModel disturbance;
  Eigen::VectorXd x0;
  double weight = 1.0;
};

// Builds the model and terminal ingredients (loaded from the configured
// file, or synthesized) for one agent.
PreparedAgent prepare_agent(const ScenarioConfig& config, int id);
std::vector<PreparedAgent> prepare_agents(const ScenarioConfig& config);

ThetaBox theta_box(const ScenarioConfig& config);
Eigen::Vector3d initial_theta(const ScenarioConfig& config,
                              const std::vector<PreparedAgent>& agents);

// Read-only view of one agent's step, for instrumentation.
struct StepView {
  int agent = 0;
  int step = 0;
  double t = 0.0;
  const Eigen::VectorXd* x = nullptr;  // measured state
  const AgentContext* context = nullptr;
  const AgentStepResult* result = nullptr;
};
using StepObserver = std::function<void(const StepView&)>;

// Runs the scenario over the in-process bus. `agents` may be passed to
// reuse synthesized ingredients; they must come from the same config.
// `observer` is called after every agent step.
TelemetryLog run_scenario(const ScenarioConfig& config);
TelemetryLog run_scenario(const ScenarioConfig& config,
                          const std::vector<PreparedAgent>& agents,
                          const StepObserver& observer = {});

// Broker side of the socket transport. Accepts one connection per
// configured agent, then drives the lock-step loop. The returned log holds
// messages, updates and the termination only. `port` overrides the config
// (0 picks a free port; the chosen port is passed to `on_listening`).
TelemetryLog run_broker(const ScenarioConfig& config, int port,
                        const std::function<void(int)>& on_listening = {});

// Agent side: connects (with retries), runs its control loop against the
// broker and returns its own full log (records of this agent only).
TelemetryLog run_agent(const ScenarioConfig& config, int id,
                       const std::string& broker_addr, int port);
TelemetryLog run_agent(const ScenarioConfig& config,
                       const PreparedAgent& agent,
                       const std::string& broker_addr, int port);

// Broker and one thread per agent over loopback TCP; the merged log has the
// agents' step records and the broker's messages, updates and termination.
TelemetryLog run_scenario_socket(const ScenarioConfig& config,
                                 const std::vector<PreparedAgent>& agents);

}  // namespace rdv

#endif  // RDV_SIM_H_
