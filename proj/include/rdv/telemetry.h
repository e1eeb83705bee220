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

// Closed-loop telemetry: one record per agent per step, trigger events,
// messages and theta updates, plus the files they are written to.
//
// Output directory layout:
//   agent_<id>_<model>.csv  t, state..., input..., V_o, theta_x, theta_y,
//                           theta_z, alpha, solver_status
//   events.jsonl            one JSON object per line, "type" in {scenario,
//                           step, trigger, message, update, conflict, summary}
//   summary.json            compute_metrics() of the run
//
// CSV theta/alpha are the agent's values after its own step (including an
// update it just triggered); V_o is measured against the theta it solved for.

#ifndef RDV_TELEMETRY_H_
#define RDV_TELEMETRY_H_

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rdv/comms.h"
#include "rdv/ocp.h"
#include "rdv/rendezvous.h"

namespace rdv {

struct CertificateRecord {
  bool update = false;   // taken right after a theta change
  bool nominal = false;  // previous solve optimal with terminal constraint
  bool ok = false;
  double terminal_margin = 0.0;
  double state_violation = 0.0;
  double input_violation = 0.0;
};

struct StepRecord {
  int step = 0;
  double t = 0.0;
  int agent = 0;
  Eigen::VectorXd x;  // plant state at t
  Eigen::VectorXd u;  // applied input on [t, t + dt)
  Eigen::Vector3d y = Eigen::Vector3d::Zero();
  Eigen::Vector3d y_T = Eigen::Vector3d::Zero();  // predicted terminal output
  double V_o = 0.0;
  Eigen::Vector3d theta_solved = Eigen::Vector3d::Zero();
  Eigen::Vector3d theta = Eigen::Vector3d::Zero();
  double alpha = 0.0;
  DocpStatus status = DocpStatus::kOptimal;
  int iterations = 0;
  double cost = 0.0;
  double kkt_residual = 0.0;
  double constraint_residual = 0.0;
  double terminal_margin = 0.0;
  double solve_seconds = 0.0;
  bool triggered = false;
  bool stopped = false;
  bool degraded = false;
  bool adopted = false;
  double state_violation = 0.0;  // plant state vs X
  double input_violation = 0.0;  // applied input vs U
  // |x(t + dt) - predicted x(t + dt)|, NaN when the run ended at this step.
  double prediction_error = std::numeric_limits<double>::quiet_NaN();
  std::optional<CertificateRecord> certificate;
  Eigen::MatrixXd predicted_outputs;  // 3 x (N+1), optional
};

struct AgentInfo {
  int id = 0;
  std::string model;
  int n = 0;
  int m = 0;
  double alpha_bar = 0.0;
  std::vector<std::string> state_names;
  std::vector<std::string> input_names;
};

struct ConflictRecord {
  int step = 0;
  std::vector<int> senders;
  int winner = 0;
};

enum class Termination { kRendezvous, kTimeout, kAborted };

std::string to_string(Termination termination);
Termination termination_from_string(const std::string& name);

struct TelemetryLog {
  std::string scenario;
  double dt = 0.1;
  double epsilon = 0.1;
  double landing_radius = 0.5;
  std::string transport = "inprocess";
  std::vector<AgentInfo> agents;
  Eigen::Vector3d theta0 = Eigen::Vector3d::Zero();
  std::vector<StepRecord> records;  // ordered by (step, agent)
  std::vector<TriggerEvent> events;
  std::vector<Message> messages;
  std::vector<ThetaUpdateRecord> updates;  // coordinator's update log
  std::vector<ConflictRecord> conflicts;
  BusStats bus;
  Termination termination = Termination::kTimeout;
  int rendezvous_step = -1;
  std::string diagnosis;
  Eigen::Vector3d final_theta = Eigen::Vector3d::Zero();
};

struct Summary {
  std::string scenario;
  Termination termination = Termination::kTimeout;
  std::string diagnosis;
  int steps = 0;
  int rendezvous_step = -1;
  double rendezvous_time = std::numeric_limits<double>::quiet_NaN();
  std::int64_t message_count = 0;
  int triggered_events = 0;
  int theta_updates = 0;
  int conflicts = 0;
  Eigen::Vector3d theta0 = Eigen::Vector3d::Zero();
  Eigen::Vector3d final_theta = Eigen::Vector3d::Zero();
  double cumulative_theta_displacement = 0.0;
  double final_distance = std::numeric_limits<double>::quiet_NaN();
  double final_xy_distance = std::numeric_limits<double>::quiet_NaN();
  bool landed = false;
  int non_optimal_steps = 0;
  int degraded_steps = 0;
  int messages_after_last_update = 0;
  double max_state_violation = 0.0;
  double max_input_violation = 0.0;
  double min_terminal_margin = std::numeric_limits<double>::infinity();
  double max_prediction_error = 0.0;
  int certificates_checked = 0;
  int certificates_failed = 0;
  int update_certificates_nominal = 0;
  int update_certificates_nominal_failed = 0;
  double solve_mean = 0.0;
  double solve_p95 = 0.0;
  double solve_max = 0.0;
};

AgentInfo make_agent_info(int id, const AgentModel& model, double alpha_bar);

Summary compute_metrics(const TelemetryLog& log);

std::string summary_to_json(const Summary& summary);
std::string format_summary(const Summary& summary);

// Writes the CSV, JSON-lines and summary files into `dir` (created if
// absent). Throws Error when files exist and `force` is false.
void write_telemetry(const TelemetryLog& log, const std::string& dir,
                     bool force);

// Inverse of write_telemetry (summary.json is not read back).
TelemetryLog read_telemetry(const std::string& dir);

}  // namespace rdv

#endif  // RDV_TELEMETRY_H_
