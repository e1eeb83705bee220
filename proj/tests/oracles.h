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


// Independent reference computations shared by the unit tests and the
// acceptance runner.

#ifndef RDV_TESTS_ORACLES_H_
#define RDV_TESTS_ORACLES_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>

#include <Eigen/Dense>

#include "rdv/models.h"
#include "rdv/ocp.h"

namespace rdv::oracles {

struct LqInstance {
  DocpSpec spec;
  Eigen::VectorXd x0;
  Eigen::Vector3d theta;
};

// Random linear model, diagonal weights and a random terminal weight P,
// horizon 3 s at dt 0.1 (N = 30), terminal constraint off.
inline LqInstance random_lq(std::mt19937_64* rng) {
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> pos(0.5, 3.0);
  const int n = 3 + static_cast<int>((*rng)() % 2);
  const int m = 2 + static_cast<int>((*rng)() % 2);
  Eigen::MatrixXd A(n, n), B(n, m), L(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      A(i, j) = 0.4 * n01(*rng);
      L(i, j) = n01(*rng);
    }
    for (int j = 0; j < m; ++j) B(i, j) = n01(*rng);
  }
  auto model = std::make_shared<AgentModel>(make_linear(A, B));
  auto ti = std::make_shared<TerminalIngredients>();
  ti->P = L * L.transpose() + Eigen::MatrixXd::Identity(n, n);
  ti->K = Eigen::MatrixXd::Zero(m, n);
  Eigen::VectorXd q(n), r(m);
  for (int i = 0; i < n; ++i) q(i) = pos(*rng);
  for (int i = 0; i < m; ++i) r(i) = pos(*rng);
  LqInstance inst{DocpSpec::make(model, ti, q.asDiagonal(), r.asDiagonal(),
                                 3.0, 0.1, false),
                  Eigen::VectorXd(n), Eigen::Vector3d::Zero()};
  for (int i = 0; i < n; ++i) inst.x0(i) = 2.0 * n01(*rng);
  for (int i = 0; i < 3; ++i) {
    inst.theta(i) = std::clamp(n01(*rng), model->reference_lower(i),
                               model->reference_upper(i));
  }
  return inst;
}

// Condensed LQ problem: X = Phi x0 + Gamma U with the exact RK4 transition
// of a linear system (truncated exponential series); the optimum solves the
// normal equations.
inline double normal_equations_cost(const LqInstance& inst) {
  const DocpSpec& s = inst.spec;
  const auto& lin = std::get<LinearParams>(s.model->params);
  const int n = s.model->n, m = s.model->m, N = s.N;
  const double h = s.dt;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd Ah = lin.A * h;
  const Eigen::MatrixXd Ad =
      I + Ah + Ah * Ah / 2 + Ah * Ah * Ah / 6 + Ah * Ah * Ah * Ah / 24;
  const Eigen::MatrixXd Bd =
      h * (I + Ah / 2 + Ah * Ah / 6 + Ah * Ah * Ah / 24) * lin.B;
  const SteadyState ss = steady_state_maps(*s.model, inst.theta);

  Eigen::MatrixXd Phi((N + 1) * n, n);
  Eigen::MatrixXd Gamma = Eigen::MatrixXd::Zero((N + 1) * n, N * m);
  Phi.topRows(n) = I;
  for (int k = 1; k <= N; ++k) {
    Phi.middleRows(k * n, n) = Ad * Phi.middleRows((k - 1) * n, n);
    Gamma.block(k * n, 0, n, N * m) =
        Ad * Gamma.block((k - 1) * n, 0, n, N * m);
    Gamma.block(k * n, (k - 1) * m, n, m) = Bd;
  }
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero((N + 1) * n, (N + 1) * n);
  for (int k = 0; k < N; ++k) W.block(k * n, k * n, n, n) = h * s.Q;
  W.block(N * n, N * n, n, n) = s.ingredients->P;
  Eigen::MatrixXd Rb = Eigen::MatrixXd::Zero(N * m, N * m);
  for (int k = 0; k < N; ++k) Rb.block(k * m, k * m, m, m) = h * s.R;

  const Eigen::VectorXd xbar = ss.x.replicate(N + 1, 1);
  const Eigen::VectorXd ubar = ss.u.replicate(N, 1);
  const Eigen::VectorXd c = Phi * inst.x0 - xbar;
  const Eigen::MatrixXd H = Gamma.transpose() * W * Gamma + Rb;
  const Eigen::VectorXd g = Gamma.transpose() * W * c - Rb * ubar;
  const Eigen::VectorXd U = H.ldlt().solve(-g);
  const Eigen::VectorXd e = Phi * inst.x0 + Gamma * U - xbar;
  return e.dot(W * e) + (U - ubar).dot(Rb * (U - ubar));
}

// Unconstrained spec with terminal weight 3 I for gradient checks.
inline DocpSpec gradient_spec(std::shared_ptr<const AgentModel> model,
                              const Eigen::VectorXd& q,
                              const Eigen::VectorXd& r) {
  auto ti = std::make_shared<TerminalIngredients>();
  ti->P = Eigen::MatrixXd::Identity(model->n, model->n) * 3.0;
  ti->K = Eigen::MatrixXd::Zero(model->m, model->n);
  return DocpSpec::make(model, ti, q.asDiagonal(), r.asDiagonal(), 3.0, 0.1,
                        false);
}

// Worst relative error (Frobenius) of the adjoint gradient against central
// differences of eval_cost over `instances` random inputs and states.
inline double gradient_check(const DocpSpec& spec, double input_scale,
                             double state_scale, std::uint64_t seed,
                             int instances = 20) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const AgentModel& model = *spec.model;
  double worst = 0.0;
  for (int trial = 0; trial < instances; ++trial) {
    Eigen::MatrixXd U(model.m, spec.N);
    for (Eigen::Index i = 0; i < U.size(); ++i) {
      U.data()[i] = input_scale * unit(rng);
    }
    Eigen::VectorXd x0(model.n);
    for (int i = 0; i < model.n; ++i) x0(i) = state_scale * unit(rng);
    Eigen::Vector3d theta(3.0 * unit(rng), 3.0 * unit(rng), 0.0);
    theta = theta.cwiseMax(model.reference_lower)
                .cwiseMin(model.reference_upper);
    const SteadyState ss = steady_state_maps(model, theta);

    Eigen::MatrixXd grad;
    eval_cost_gradient(spec, U, x0, ss.x, ss.u, &grad);
    Eigen::MatrixXd fd(model.m, spec.N);
    for (Eigen::Index i = 0; i < U.size(); ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(U.data()[i]));
      Eigen::MatrixXd Up = U, Um = U;
      Up.data()[i] += h;
      Um.data()[i] -= h;
      fd.data()[i] = (eval_cost(spec, Up, x0, ss.x, ss.u) -
                      eval_cost(spec, Um, x0, ss.x, ss.u)) /
                     (2 * h);
    }
    worst = std::max(worst, (grad - fd).norm() / std::max(fd.norm(), 1e-12));
  }
  return worst;
}

}  // namespace rdv::oracles

#endif  // RDV_TESTS_ORACLES_H_
