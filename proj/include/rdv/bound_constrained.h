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

#ifndef RDV_BOUND_CONSTRAINED_H_
#define RDV_BOUND_CONSTRAINED_H_

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace rdv {

// Returns f(x); fills *grad when non-null.
using Objective =
    std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct BoxLbfgsOptions {
  int max_iterations = 300;
  int memory = 10;
  // Stop when ||clamp(x - g) - x||_inf <= tolerance.
  double tolerance = 1e-6;
  double armijo = 1e-4;
  int max_backtracks = 40;
  bool record_trace = false;
};

struct BoxLbfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  double projected_gradient = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::vector<double> trace;  // accepted objective values
};

// Projected quasi-Newton for min f(x) s.t. lower <= x <= upper. Variables
// pinned at a bound with the gradient pointing outward are frozen for the
// step; L-BFGS acts on the rest, with an Armijo search along the projection
// arc, so accepted values never increase.
BoxLbfgsResult minimize_box(const Objective& objective, Eigen::VectorXd x0,
                            const Eigen::VectorXd& lower,
                            const Eigen::VectorXd& upper,
                            const BoxLbfgsOptions& options = {});

// Fills the (approximate, positive semidefinite) Hessian at x.
using HessianFn =
    std::function<void(const Eigen::VectorXd& x, Eigen::MatrixXd* hessian)>;

struct BoxQpResult {
  Eigen::VectorXd x;
  int iterations = 0;
  bool converged = false;
};

// min g'x + 0.5 x'Hx s.t. lower <= x <= upper for positive definite H, by
// projected Newton on the free subspace with an Armijo search.
BoxQpResult solve_box_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                         const Eigen::VectorXd& lower,
                         const Eigen::VectorXd& upper, Eigen::VectorXd x0,
                         int max_iterations = 100, double tolerance = 1e-10);

// Newton-type outer loop for the same problem: each step solves the box QP
// built from the exact gradient and a (Gauss-Newton) Hessian model, then
// backtracks on f along the feasible segment.
BoxLbfgsResult minimize_box_newton(const Objective& objective,
                                   const HessianFn& hessian,
                                   Eigen::VectorXd x0,
                                   const Eigen::VectorXd& lower,
                                   const Eigen::VectorXd& upper,
                                   const BoxLbfgsOptions& options = {});

double projected_gradient_norm(const Eigen::VectorXd& x,
                               const Eigen::VectorXd& grad,
                               const Eigen::VectorXd& lower,
                               const Eigen::VectorXd& upper);

}  // namespace rdv

#endif  // RDV_BOUND_CONSTRAINED_H_
