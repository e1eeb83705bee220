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

// Terminal ingredients for the tracking MPC: a stabilizing gain K, the
// Lyapunov matrix P of the closed-loop linearization, and the radius bound
// alpha_bar of the ellipsoid {dx : dx' P dx <= alpha^2} on which the local
// controller u = u_bar + K dx keeps V_f = ||dx||_P^2 decreasing at half the
// Q* rate and respects the input constraints.

#ifndef RDV_TERMINAL_H_
#define RDV_TERMINAL_H_

#include <cstdint>
#include <memory>
#include <string>

#include <Eigen/Dense>

#include "rdv/models.h"

namespace rdv {

struct TerminalIngredients {
  Eigen::MatrixXd K;       // m x n
  Eigen::MatrixXd P;       // n x n, symmetric positive definite
  Eigen::MatrixXd Q_star;  // Q + K' R K
  double alpha_bar = 0.0;
  double lambda_min_qhat = 0.0;  // lambda_min(P^-1/2 Q* P^-1/2)

  // Linearization the ingredients were built from.
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  Eigen::VectorXd x_lin;
  Eigen::VectorXd u_lin;

  Eigen::MatrixXd closed_loop() const { return A + B * K; }
};

// Solves A' S + S A - S B R^-1 B' S + Q = 0 by Newton-Kleinman and returns
// K = -R^-1 B' S. Throws SynthesisError when no stabilizing solution is found.
Eigen::MatrixXd lqr_gain(const MatRef& A, const MatRef& B, const MatRef& Q,
                         const MatRef& R, Eigen::MatrixXd* S = nullptr);

// Unique P with A_k' P + P A_k = -Q_star, via the n^2 x n^2 Kronecker system.
Eigen::MatrixXd solve_lyapunov(const MatRef& A_k, const MatRef& Q_star);

double spectral_abscissa(const MatRef& A);

// Linearization residual f(x_lin + dx, u_lin + K dx) - A_k dx.
Eigen::VectorXd phi_aux(const AgentModel& model,
                        const TerminalIngredients& ingredients,
                        const VecRef& dx);

struct AlphaSearchOptions {
  int boundary_samples = 10000;
  int local_descents = 50;
  int descent_iterations = 25;
  int bisection_iterations = 40;
  double alpha_max = 10.0;
  // Applied to lambda_min(Q_hat)/4 to absorb sampling gaps.
  double safety_factor = 0.99;
  std::uint64_t seed = 7;
  bool parallel = true;
};

struct AlphaBreakdown {
  double alpha_bar = 0.0;
  double alpha_ratio = 0.0;   // from the phi-ratio condition
  double alpha_inputs = 0.0;  // from u_bar + K dx in U
  double alpha_states = 0.0;  // from x_bar + dx in X
  double ratio_bound = 0.0;   // safety_factor * lambda_min(Q_hat) / 4
};

AlphaBreakdown alpha_upper_bound(const AgentModel& model,
                                 const TerminalIngredients& ingredients,
                                 const AlphaSearchOptions& options = {});

struct SynthesisOptions {
  AlphaSearchOptions alpha;
};

// Linearize at the theta = 0 steady state, then LQR, Lyapunov and alpha_bar.
TerminalIngredients synthesize_terminal(const AgentModel& model,
                                        const MatRef& Q, const MatRef& R,
                                        const SynthesisOptions& options = {});

struct TerminalSet {
  Eigen::VectorXd center;
  double radius = 0.0;
  std::shared_ptr<const TerminalIngredients> ingredients;
};

struct Membership {
  double margin = 0.0;  // alpha^2 - (x - x_bar)' P (x - x_bar)
  bool member = false;
};

Membership terminal_membership(const TerminalSet& set, const VecRef& x);

// alpha + eta * ||h_x(v_theta)||_P with h_x the linear steady-state map.
double alpha_update(double alpha, double eta,
                    const TerminalIngredients& ingredients,
                    const Eigen::Vector3d& v_theta, const AgentModel& model);

Eigen::VectorXd terminal_controller(const TerminalIngredients& ingredients,
                                    const VecRef& x_bar, const VecRef& u_bar,
                                    const VecRef& x);

double p_norm(const MatRef& P, const VecRef& v);

}  // namespace rdv

#endif  // RDV_TERMINAL_H_
