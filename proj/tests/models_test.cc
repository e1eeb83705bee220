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


#include "rdv/models.h"

#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

namespace rdv {
namespace {

Eigen::Vector3d random_theta(const AgentModel& model, std::mt19937_64* rng) {
  Eigen::Vector3d theta;
  for (int i = 0; i < 3; ++i) {
    std::uniform_real_distribution<double> u(model.reference_lower(i),
                                             model.reference_upper(i));
    theta(i) = u(*rng);
  }
  return theta;
}

TEST(ModelsTest, SteadyStateMapsAreEquilibria) {
  std::mt19937_64 rng(11);
  for (const AgentModel& model : {make_quadcopter(), make_boat()}) {
    for (int trial = 0; trial < 100; ++trial) {
      const Eigen::Vector3d theta = random_theta(model, &rng);
      const SteadyState ss = steady_state_maps(model, theta);
      EXPECT_LT(model.derivative(ss.x, ss.u).norm(), 1e-9) << model.name;
    }
  }
}

TEST(ModelsTest, SteadyStateOutputsMatchTheta) {
  const AgentModel quad = make_quadcopter();
  const Eigen::Vector3d theta(1.5, -2.0, 3.0);
  EXPECT_TRUE(quad.output(steady_state_maps(quad, theta).x).isApprox(theta));
  const AgentModel boat = make_boat();
  const Eigen::Vector3d y =
      boat.output(steady_state_maps(boat, Eigen::Vector3d(1.5, -2.0, 0.0)).x);
  EXPECT_TRUE(y.isApprox(Eigen::Vector3d(1.5, -2.0, 0.0)));
}

TEST(ModelsTest, ReferenceOutOfRangeThrows) {
  const AgentModel quad = make_quadcopter();
  EXPECT_THROW(steady_state_maps(quad, Eigen::Vector3d(60.0, 0.0, 0.0)),
               ReferenceOutOfRangeError);
}

TEST(ModelsTest, BoatJacobianMatchesAnalytic) {
  const AgentModel boat = make_boat();
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd x(6), u(3);
    for (int i = 0; i < 6; ++i) x(i) = n01(rng);
    for (int i = 0; i < 3; ++i) u(i) = n01(rng);
    const double c = std::cos(x(2)), s = std::sin(x(2));
    const double vx = x(3), vy = x(4);
    Eigen::MatrixXd fx_ref = Eigen::MatrixXd::Zero(6, 6);
    fx_ref(0, 2) = -vx * s - vy * c;
    fx_ref(0, 3) = c;
    fx_ref(0, 4) = -s;
    fx_ref(1, 2) = vx * c - vy * s;
    fx_ref(1, 3) = s;
    fx_ref(1, 4) = c;
    fx_ref(2, 5) = 1.0;
    Eigen::MatrixXd fu_ref = Eigen::MatrixXd::Zero(6, 3);
    fu_ref.bottomRows(3).setIdentity();

    StateJac fx;
    InputJac fu;
    boat.jacobians(x, u, &fx, &fu);
    EXPECT_LT((Eigen::MatrixXd(fx) - fx_ref).norm(), 1e-12);
    EXPECT_LT((Eigen::MatrixXd(fu) - fu_ref).norm(), 1e-12);
  }
}

TEST(ModelsTest, QuadcopterJacobianMatchesFiniteDifferences) {
  const AgentModel quad = make_quadcopter();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u01(-0.4, 0.4);
  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd x(9), u(4);
    for (int i = 0; i < 9; ++i) x(i) = u01(rng);
    for (int i = 0; i < 4; ++i) u(i) = u01(rng);
    StateJac fx;
    InputJac fu;
    quad.jacobians(x, u, &fx, &fu);
    for (int j = 0; j < 9; ++j) {
      Eigen::VectorXd xp = x, xm = x;
      xp(j) += h;
      xm(j) -= h;
      const Eigen::VectorXd col = (Eigen::VectorXd(quad.derivative(xp, u)) -
                                   Eigen::VectorXd(quad.derivative(xm, u))) /
                                  (2 * h);
      EXPECT_LT((col - Eigen::VectorXd(fx.col(j))).norm(), 1e-6);
    }
    for (int j = 0; j < 4; ++j) {
      Eigen::VectorXd up = u, um = u;
      up(j) += h;
      um(j) -= h;
      const Eigen::VectorXd col = (Eigen::VectorXd(quad.derivative(x, up)) -
                                   Eigen::VectorXd(quad.derivative(x, um))) /
                                  (2 * h);
      EXPECT_LT((col - Eigen::VectorXd(fu.col(j))).norm(), 1e-6);
    }
  }
}

TEST(ModelsTest, QuadcopterHoverLinearization) {
  const AgentModel quad = make_quadcopter();
  const QuadcopterParams p;
  const Linearization lin =
      linearize(quad, Eigen::VectorXd::Zero(9), Eigen::VectorXd::Zero(4));
  EXPECT_NEAR(lin.A(0, 3), 1.0, 1e-8);
  EXPECT_NEAR(lin.A(3, 3), -p.k_drag_x, 1e-8);
  EXPECT_NEAR(lin.A(3, 7), p.gravity, 1e-6);
  EXPECT_NEAR(lin.A(4, 6), -p.gravity, 1e-6);
  EXPECT_NEAR(lin.A(6, 6), -1.0 / p.tau_roll, 1e-8);
  EXPECT_NEAR(lin.B(5, 0), 1.0, 1e-8);
  EXPECT_NEAR(lin.B(6, 1), p.gain_roll / p.tau_roll, 1e-8);
  EXPECT_NEAR(lin.B(7, 2), p.gain_pitch / p.tau_pitch, 1e-8);
  EXPECT_NEAR(lin.B(8, 3), 1.0, 1e-8);
}

TEST(ModelsTest, LinearizeRejectsNonEquilibrium) {
  const AgentModel boat = make_boat();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(6);
  x(3) = 1.0;
  EXPECT_THROW(linearize(boat, x, Eigen::VectorXd::Zero(3)),
               NotEquilibriumError);
}

TEST(ModelsTest, SingularThrustThrows) {
  const AgentModel quad = make_quadcopter();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(9);
  x(6) = std::numbers::pi / 2;
  EXPECT_THROW(quad.derivative(x, Eigen::VectorXd::Zero(4)),
               SingularThrustError);
}

TEST(ModelsTest, Rk4IsFourthOrder) {
  Eigen::MatrixXd A(2, 2);
  A << 0.0, 1.0, -1.0, 0.0;
  const AgentModel osc = make_linear(A, Eigen::MatrixXd::Zero(2, 1));
  const Eigen::VectorXd u = Eigen::VectorXd::Zero(1);
  auto error = [&](int steps) {
    Eigen::VectorXd x(2);
    x << 1.0, 0.0;
    const double h = 1.0 / steps;
    for (int k = 0; k < steps; ++k) {
      x = rk4_step(osc, x, u, Eigen::Vector3d::Zero(), h);
    }
    return std::hypot(x(0) - std::cos(1.0), x(1) + std::sin(1.0));
  };
  const double order = std::log2(error(10) / error(20));
  EXPECT_NEAR(order, 4.0, 0.1);
}

TEST(ModelsTest, Rk4MatchesTruncatedExponentialForLinearSystems) {
  Eigen::MatrixXd A(2, 2), B(2, 1);
  A << 0.0, 1.0, -2.0, -0.5;
  B << 0.0, 1.0;
  const AgentModel lin = make_linear(A, B);
  const double h = 0.1;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(2, 2);
  const Eigen::MatrixXd Ah = A * h;
  const Eigen::MatrixXd Ad =
      I + Ah + Ah * Ah / 2 + Ah * Ah * Ah / 6 + Ah * Ah * Ah * Ah / 24;
  const Eigen::MatrixXd Bd =
      h * (I + Ah / 2 + Ah * Ah / 6 + Ah * Ah * Ah / 24) * B;
  Eigen::VectorXd x(2), u(1);
  x << 0.3, -1.2;
  u << 0.7;
  const Eigen::VectorXd expected = Ad * x + Bd * u;
  EXPECT_LT((Eigen::VectorXd(rk4_step(lin, x, u, Eigen::Vector3d::Zero(), h)) -
             expected)
                .norm(),
            1e-15);
}

TEST(ModelsTest, DisturbanceEntersBoatInBodyFrame) {
  Eigen::Matrix<double, 6, 1> x = Eigen::Matrix<double, 6, 1>::Zero();
  x(2) = std::numbers::pi / 2;  // bow along +y
  const auto dx = boat_derivative(x, Eigen::Vector3d::Zero(),
                                  Eigen::Vector3d(0.0, 3.0, 0.0));
  EXPECT_NEAR(dx(3), 3.0, 1e-12);  // surge
  EXPECT_NEAR(dx(4), 0.0, 1e-12);
}

TEST(ModelsTest, DisturbanceWindowsAreHalfOpen) {
  const DisturbanceModel d({{0.5, 2.0, Eigen::Vector3d(0.0, 3.0, 0.0)}}, 3.0);
  EXPECT_EQ(d.at(0.4), Eigen::Vector3d::Zero());
  EXPECT_EQ(d.at(0.5), Eigen::Vector3d(0.0, 3.0, 0.0));
  EXPECT_EQ(d.at(1.99), Eigen::Vector3d(0.0, 3.0, 0.0));
  EXPECT_EQ(d.at(2.0), Eigen::Vector3d::Zero());
}

TEST(ModelsTest, DisturbanceAboveBoundIsRejected) {
  EXPECT_THROW(
      DisturbanceModel({{0.5, 2.0, Eigen::Vector3d(0.0, 3.0, 0.0)}}, 1.0),
      Error);
}

TEST(ModelsTest, ConstraintSetViolation) {
  ConstraintSet set(3);
  set.set_bounds(0, -1.0, 1.0);
  set.add_norm_bound({{1, 2}, 5.0});
  EXPECT_TRUE(set.contains(Eigen::Vector3d(0.5, 3.0, 4.0)));
  EXPECT_DOUBLE_EQ(set.max_violation(Eigen::Vector3d(1.5, 0.0, 0.0)), 0.5);
  EXPECT_DOUBLE_EQ(set.max_violation(Eigen::Vector3d(0.0, 6.0, 8.0)), 5.0);
}

TEST(ModelsTest, LinearSteadyStateMapsPinUnreachableAxes) {
  Eigen::MatrixXd A(2, 2), B(2, 1);
  A << 0.0, 1.0, 0.0, 0.0;
  B << 0.0, 1.0;
  const AgentModel di = make_linear(A, B);
  // Position can rest anywhere; velocity and the missing z output cannot.
  EXPECT_EQ(di.reference_lower(1), 0.0);
  EXPECT_EQ(di.reference_upper(1), 0.0);
  EXPECT_EQ(di.reference_upper(2), 0.0);
  const SteadyState ss = steady_state_maps(di, Eigen::Vector3d(2.5, 0.0, 0.0));
  EXPECT_NEAR(ss.x(0), 2.5, 1e-12);
  EXPECT_NEAR(ss.x(1), 0.0, 1e-12);
  EXPECT_NEAR(ss.u(0), 0.0, 1e-12);
}

TEST(ModelsTest, DimensionMismatchThrows) {
  const AgentModel boat = make_boat();
  EXPECT_THROW(boat.derivative(Eigen::VectorXd::Zero(5),
                               Eigen::VectorXd::Zero(3)),
               Error);
}

}  // namespace
}  // namespace rdv
