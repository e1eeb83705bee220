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

// Rendezvous-point negotiation: weighted initialization, the output offset
// trigger, the normalized-gradient update of theta and the per-agent
// control step that ties solver, trigger and messaging together.

#ifndef RDV_RENDEZVOUS_H_
#define RDV_RENDEZVOUS_H_

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "rdv/comms.h"
#include "rdv/ocp.h"

namespace rdv {

// Axis-aligned box; equal lower/upper pins a coordinate (z = 0 plane).
struct ThetaBox {
  Eigen::Vector3d lower{-50.0, -50.0, 0.0};
  Eigen::Vector3d upper{50.0, 50.0, 0.0};

  Eigen::Vector3d project(const Eigen::Vector3d& theta) const {
    return theta.cwiseMax(lower).cwiseMin(upper);
  }
  bool contains(const Eigen::Vector3d& theta, double tol = 0.0) const {
    return (theta.array() >= lower.array() - tol).all() &&
           (theta.array() <= upper.array() + tol).all();
  }
};

struct ThetaUpdateRecord {
  int step = 0;
  double t = 0.0;
  int agent = 0;
  Eigen::Vector3d theta_before = Eigen::Vector3d::Zero();
  Eigen::Vector3d theta_after = Eigen::Vector3d::Zero();
};

struct TriggerEvent {
  int step = 0;
  double t = 0.0;
  int agent = 0;
  double V_o = 0.0;
  bool triggered = false;
  Eigen::Vector3d theta_before = Eigen::Vector3d::Zero();
  Eigen::Vector3d theta_after = Eigen::Vector3d::Zero();
};

struct RendezvousState {
  Eigen::Vector3d theta = Eigen::Vector3d::Zero();
  bool flag = false;
  double eta = 0.1;
  double epsilon = 0.1;
  // Stopping tolerance; negative means epsilon.
  double stop_epsilon = -1.0;
  std::vector<double> weights;
  ThetaBox box;
  std::vector<ThetaUpdateRecord> update_log;

  double stop_tolerance() const {
    return stop_epsilon < 0.0 ? epsilon : stop_epsilon;
  }

  // Appends to update_log; throws Error unless (t, agent) increases.
  void record_update(const ThetaUpdateRecord& record);
};

// Checks sum(c) == M within 1e-12 and c >= 0; throws ConfigError.
void validate_weights(const std::vector<double>& weights);

Eigen::Vector3d theta_init(const std::vector<Eigen::Vector3d>& outputs,
                           const std::vector<double>& weights,
                           const ThetaBox& box);

double output_offset(const Eigen::Vector3d& y_T, const Eigen::Vector3d& theta);

// -(y_T - theta) / |y_T - theta|; throws Error when degenerate.
Eigen::Vector3d v_theta(const Eigen::Vector3d& y_T,
                        const Eigen::Vector3d& theta);

// Applies the update rule to state->theta. Logs into update_log when
// triggered.
TriggerEvent theta_update(RendezvousState* state, int agent, int step,
                          double t, const Eigen::Vector3d& y_T);

bool stopping_condition(const Eigen::Vector3d& y,
                        const Eigen::Vector3d& theta, double epsilon);

// Per-agent controller state (the agent's replica of theta and its own
// terminal radius).
struct AgentContext {
  int id = 0;
  DocpSpec spec;
  RendezvousState rendezvous;  // replica
  double alpha = 0.0;
  std::optional<DocpSolution> previous;
  int consecutive_infeasible = 0;
};

AgentContext make_agent_context(int id, DocpSpec spec,
                                const Eigen::Vector3d& theta0, double eta,
                                double epsilon, const ThetaBox& box);

struct AgentStepResult {
  Eigen::VectorXd applied_input;
  std::optional<Message> outgoing;
  DocpSolution solution;
  TriggerEvent event;
  bool stopped = false;
  bool degraded = false;    // warm start applied instead of the solution
  bool adopted = false;     // theta downloaded this step
  Eigen::Vector3d adopted_from = Eigen::Vector3d::Zero();
  // Shifted previous plan against the current target and radius.
  std::optional<CandidateReport> certificate;
  // Same check right after a theta change (adoption or own trigger),
  // against the new target and the updated radius.
  std::optional<CandidateReport> update_certificate;
  bool update_certificate_nominal = false;
  double solve_seconds = 0.0;
  Eigen::Vector3d y_T = Eigen::Vector3d::Zero();
};

// One sampling instant of the event-triggered loop for one agent: adopt
// downloaded theta (with the radius update), solve, evaluate the trigger,
// check the stopping condition. `x` is the measured plant state.
AgentStepResult agent_step(AgentContext* ctx, const VecRef& x,
                           const std::vector<Message>& incoming, int step,
                           double t);

}  // namespace rdv

#endif  // RDV_RENDEZVOUS_H_
