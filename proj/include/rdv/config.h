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

// Scenario configuration: TOML schema, dotted-path overrides and
// validation. All quantities are SI.
//
//   name = "nominal-terminal"
//   horizon = 3.0              # T [s]
//   dt = 0.1                   # sampling period [s]
//   max_sim_time = 30.0        # [s]
//   seed = 1
//   terminal_constraints = true
//   transport = "inprocess"    # or "socket"
//   update_order = "sequential"  # or "parallel"
//   substeps = 1               # plant RK4 substeps per sampling period
//   eta = 0.1
//   epsilon = 0.1
//   stop_epsilon = 0.1         # optional, defaults to epsilon
//   theta_lower = [-50.0, -50.0, 0.0]
//   theta_upper = [50.0, 50.0, 0.0]
//   landing_radius = 0.5       # [m], xy distance for the landing metric
//   record_predictions = true
//
//   [solver]      # SolverOptions fields; inner_solver = "gauss_newton"|"lbfgs"
//   [synthesis]   # AlphaSearchOptions fields (seed comes from `seed`)
//   [comms]       # delay_steps, port, broker_addr, connect_retries,
//                 # retry_delay, timeout
//
//   [[agents]]
//   model = "quadcopter"       # "quadcopter" | "boat" | "linear"
//   weight = 0.6666666666666666
//   initial_state = [...]
//   q = [...]                  # diagonal of Q
//   r = [...]                  # diagonal of R
//   ingredients = "quad.json"  # optional, relative to the config file
//   disturbance_bound = 0.0
//   [agents.params]            # quadcopter: QuadcopterParams fields;
//                              # boat: surge_bound, lateral_bound;
//                              # linear: a, b (row lists)
//   [[agents.disturbance]]
//   t_start = 0.5
//   t_end = 2.0
//   accel = [0.0, 3.0, 0.0]

#ifndef RDV_CONFIG_H_
#define RDV_CONFIG_H_

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rdv/models.h"
#include "rdv/ocp.h"
#include "rdv/terminal.h"

namespace rdv {

enum class Transport { kInProcess, kSocket };
enum class UpdateOrder { kSequential, kParallel };

std::string to_string(Transport transport);
std::string to_string(UpdateOrder order);

struct CommsConfig {
  int delay_steps = 0;
  int port = 47300;
  std::string broker_addr = "127.0.0.1";
  int connect_retries = 3;
  double retry_delay = 0.5;  // [s]
  double timeout = 60.0;     // [s] socket read / broker idle timeout
};

struct AgentConfig {
  std::string model;
  double weight = 1.0;
  Eigen::VectorXd initial_state;
  Eigen::VectorXd q;
  Eigen::VectorXd r;
  std::string ingredients_path;  // empty: synthesize
  QuadcopterParams quadcopter;
  double surge_bound = 2.0;
  double lateral_bound = 2.0;
  Eigen::MatrixXd linear_a;
  Eigen::MatrixXd linear_b;
  std::vector<DisturbanceWindow> disturbance;
  double disturbance_bound = 0.0;
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::string source_dir = ".";  // resolves relative ingredient paths
  double horizon = 3.0;
  double dt = 0.1;
  double max_sim_time = 30.0;
  std::uint64_t seed = 1;
  bool terminal_constraints = true;
  Transport transport = Transport::kInProcess;
  UpdateOrder update_order = UpdateOrder::kSequential;
  int substeps = 1;
  double eta = 0.1;
  double epsilon = 0.1;
  double stop_epsilon = -1.0;  // negative: epsilon
  Eigen::Vector3d theta_lower{-50.0, -50.0, 0.0};
  Eigen::Vector3d theta_upper{50.0, 50.0, 0.0};
  double landing_radius = 0.5;
  bool record_predictions = true;
  SolverOptions solver;
  AlphaSearchOptions synthesis;
  CommsConfig comms;
  std::vector<AgentConfig> agents;

  int steps_per_horizon() const;
};

// Parses TOML text, applies `key=value` overrides (dotted paths, numeric
// segments index arrays, values parsed as TOML with bare-string fallback)
// and validates. Unknown keys are rejected. Throws ConfigError.
ScenarioConfig parse_config(const std::string& toml_text,
                            const std::vector<std::string>& overrides = {},
                            const std::string& source_dir = ".");

// Reads a file and calls parse_config. Throws ConfigError when unreadable.
ScenarioConfig load_config(const std::string& path,
                           const std::vector<std::string>& overrides = {});

// Checks every documented invariant; throws ConfigError.
void validate_config(const ScenarioConfig& config);

// Canonical TOML rendering (round-trips through parse_config).
std::string dump_config(const ScenarioConfig& config);

AgentModel build_model(const AgentConfig& agent);

}  // namespace rdv

#endif  // RDV_CONFIG_H_
