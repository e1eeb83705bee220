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

// Per-agent finite-horizon tracking OCP, transcribed by single shooting over
// piecewise-constant inputs on the RK4 grid. Input boxes are handled by
// projection; state and terminal constraints by an augmented Lagrangian.
//
// Trajectory matrices store one time step per column: inputs is m x N,
// states is n x (N+1), outputs is 3 x (N+1).

#ifndef RDV_OCP_H_
#define RDV_OCP_H_

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rdv/models.h"
#include "rdv/terminal.h"

namespace rdv {

enum class InnerSolver { kGaussNewton, kLbfgs };

struct SolverOptions {
  InnerSolver inner_solver = InnerSolver::kGaussNewton;
  double penalty_init = 10.0;
  double penalty_growth = 10.0;
  int max_outer = 5;
  int max_inner = 200;
  int lbfgs_memory = 12;
  // Projected-gradient tolerance on the normalized merit.
  double optimality_tol = 1e-6;
  // Scaled constraint residual accepted as feasible.
  double feasibility_tol = 1e-7;
  // Internal tightening of every scaled constraint, so "feasible to
  // feasibility_tol" means strictly inside the true set.
  double backoff = 1e-5;
  // Residual above which the result is declared infeasible.
  double infeasible_tol = 1e-4;
  // Non-optimal solutions with residual below this are still applied.
  double degraded_tol = 1e-3;
};

struct DocpSpec {
  std::shared_ptr<const AgentModel> model;
  std::shared_ptr<const TerminalIngredients> ingredients;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  double horizon = 3.0;
  double dt = 0.1;
  int N = 30;
  bool terminal_constraint = true;
  SolverOptions solver;

  // Validates dimensions, N * dt == horizon and Q, R positive definite.
  // Throws ConfigError.
  static DocpSpec make(std::shared_ptr<const AgentModel> model,
                       std::shared_ptr<const TerminalIngredients> ingredients,
                       Eigen::MatrixXd Q, Eigen::MatrixXd R, double horizon,
                       double dt, bool terminal_constraint,
                       SolverOptions solver = {});
};

enum class DocpStatus { kOptimal, kMaxIter, kInfeasible };

std::string to_string(DocpStatus status);

struct DocpSolution {
  Eigen::MatrixXd inputs;   // m x N
  Eigen::MatrixXd states;   // n x (N+1)
  Eigen::MatrixXd outputs;  // 3 x (N+1)
  double cost = 0.0;
  SteadyState target;
  Eigen::Vector3d theta = Eigen::Vector3d::Zero();
  double alpha = 0.0;
  DocpStatus status = DocpStatus::kInfeasible;
  double kkt_residual = 0.0;
  double terminal_margin = 0.0;
  double constraint_residual = 0.0;  // max scaled violation, 0 if feasible
  int iterations = 0;
  int outer_iterations = 0;
  Eigen::VectorXd multipliers;
  // Accepted merit values of every inner iteration, per outer iteration.
  std::vector<std::vector<double>> merit_trace;

  bool usable(const SolverOptions& options) const {
    return status != DocpStatus::kInfeasible ||
           constraint_residual < options.degraded_tol;
  }
};

// Nominal single-shooting rollout, n x (N+1).
Eigen::MatrixXd rollout(const AgentModel& model, const VecRef& x0,
                        const MatRef& inputs, double dt);

double eval_cost(const DocpSpec& spec, const MatRef& inputs,
                 const VecRef& x0, const VecRef& x_bar, const VecRef& u_bar);

// Cost and its gradient w.r.t. the inputs (m x N), by reverse-mode
// sensitivity through the RK4 stages.
double eval_cost_gradient(const DocpSpec& spec, const MatRef& inputs,
                          const VecRef& x0, const VecRef& x_bar,
                          const VecRef& u_bar, Eigen::MatrixXd* gradient);

struct WarmStart {
  Eigen::MatrixXd inputs;
  Eigen::VectorXd multipliers;
};

// alpha < 0 uses the synthesized alpha_bar.
DocpSolution solve_docp(const DocpSpec& spec, const VecRef& x0,
                        const Eigen::Vector3d& theta, double alpha = -1.0,
                        const WarmStart* warm = nullptr);

// Drop u_0, append u_bar + K (x_N - x_bar) about prev's own target.
Eigen::MatrixXd warm_start_shift(const DocpSolution& prev,
                                 const DocpSpec& spec);

// Multipliers aligned with the shifted horizon.
Eigen::VectorXd shift_multipliers(const DocpSolution& prev,
                                  const DocpSpec& spec);

struct CandidateReport {
  bool states_ok = false;
  bool inputs_ok = false;
  bool terminal_ok = false;
  double state_violation = 0.0;
  double input_violation = 0.0;
  double terminal_margin = 0.0;      // against (x_bar', alpha')
  double old_terminal_margin = 0.0;  // against prev's own set
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd states;

  bool ok() const { return states_ok && inputs_ok && terminal_ok; }
};

// Rolls the shifted candidate from prev's one-step prediction and checks it
// against the new target and radius.
CandidateReport check_candidate_feasibility(const DocpSolution& prev,
                                            const SteadyState& new_target,
                                            double new_alpha,
                                            const DocpSpec& spec);

}  // namespace rdv

#endif  // RDV_OCP_H_
