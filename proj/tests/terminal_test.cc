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


#include "rdv/terminal.h"

#include <cmath>
#include <memory>
#include <random>

#include <gtest/gtest.h>

#include "rdv/sampling_kernels.h"

namespace rdv {
namespace {

Eigen::MatrixXd diag(std::initializer_list<double> values) {
  Eigen::VectorXd d(values.size());
  int i = 0;
  for (double v : values) d(i++) = v;
  return d.asDiagonal();
}

TEST(TerminalTest, ScalarRiccatiClosedForm) {
  const double a = 0.7, b = 2.0, q = 3.0, r = 0.5;
  Eigen::MatrixXd S;
  const Eigen::MatrixXd K = lqr_gain(Eigen::MatrixXd::Constant(1, 1, a),
                                     Eigen::MatrixXd::Constant(1, 1, b),
                                     Eigen::MatrixXd::Constant(1, 1, q),
                                     Eigen::MatrixXd::Constant(1, 1, r), &S);
  const double s_ref = r * (a + std::sqrt(a * a + b * b * q / r)) / (b * b);
  EXPECT_NEAR(S(0, 0), s_ref, 1e-10);
  EXPECT_NEAR(K(0, 0), -b * s_ref / r, 1e-10);
}

TEST(TerminalTest, DoubleIntegratorRiccatiClosedForm) {
  Eigen::MatrixXd A(2, 2), B(2, 1);
  A << 0.0, 1.0, 0.0, 0.0;
  B << 0.0, 1.0;
  Eigen::MatrixXd S;
  const Eigen::MatrixXd K = lqr_gain(A, B, Eigen::MatrixXd::Identity(2, 2),
                                     Eigen::MatrixXd::Identity(1, 1), &S);
  Eigen::MatrixXd S_ref(2, 2);
  S_ref << std::sqrt(3.0), 1.0, 1.0, std::sqrt(3.0);
  EXPECT_LT((S - S_ref).norm(), 1e-9);
  EXPECT_NEAR(K(0, 0), -1.0, 1e-9);
  EXPECT_NEAR(K(0, 1), -std::sqrt(3.0), 1e-9);
}

TEST(TerminalTest, UncontrollableUnstableModeThrows) {
  const Eigen::MatrixXd A = diag({1.0, -1.0});
  Eigen::MatrixXd B(2, 1);
  B << 0.0, 1.0;
  EXPECT_THROW(lqr_gain(A, B, Eigen::MatrixXd::Identity(2, 2),
                        Eigen::MatrixXd::Identity(1, 1)),
               SynthesisError);
}

TEST(TerminalTest, LyapunovDiagonal) {
  const Eigen::MatrixXd P =
      solve_lyapunov(diag({-1.0, -2.0}), Eigen::MatrixXd::Identity(2, 2));
  EXPECT_LT((P - diag({0.5, 0.25})).norm(), 1e-14);
}

TEST(TerminalTest, LyapunovCompanionForm) {
  Eigen::MatrixXd A(2, 2), P_ref(2, 2);
  A << 0.0, 1.0, -2.0, -3.0;
  P_ref << 1.25, 0.25, 0.25, 0.25;
  const Eigen::MatrixXd P = solve_lyapunov(A, Eigen::MatrixXd::Identity(2, 2));
  EXPECT_LT((P - P_ref).norm(), 1e-12);
}

TEST(TerminalTest, LyapunovRejectsUnstable) {
  EXPECT_THROW(solve_lyapunov(diag({0.1, -1.0}),
                              Eigen::MatrixXd::Identity(2, 2)),
               SynthesisError);
}

TEST(TerminalTest, SpectralAbscissa) {
  Eigen::MatrixXd A(2, 2);
  A << -1.0, 5.0, -5.0, -1.0;  // eigenvalues -1 +- 5i
  EXPECT_NEAR(spectral_abscissa(A), -1.0, 1e-12);
}

void expect_ingredients_valid(const AgentModel& model,
                              const TerminalIngredients& ti) {
  const Eigen::MatrixXd Ak = ti.closed_loop();
  EXPECT_LT((Ak.transpose() * ti.P + ti.P * Ak + ti.Q_star).norm(), 1e-8)
      << model.name;
  EXPECT_LT(spectral_abscissa(Ak), 0.0) << model.name;
  EXPECT_LT((ti.Q_star - (ti.Q + ti.K.transpose() * ti.R * ti.K)).norm(),
            1e-10);
  EXPECT_GT(ti.alpha_bar, 0.0);
}

TEST(TerminalTest, SynthesisForBundledModels) {
  AlphaSearchOptions fast;
  fast.boundary_samples = 500;
  fast.local_descents = 5;
  fast.bisection_iterations = 20;
  SynthesisOptions options{fast};
  const AgentModel quad = make_quadcopter();
  expect_ingredients_valid(
      quad, synthesize_terminal(quad, diag({30, 30, 6, 1, 1, 1, 1, 1, 1}),
                                Eigen::MatrixXd::Identity(4, 4), options));
  const AgentModel boat = make_boat();
  expect_ingredients_valid(
      boat, synthesize_terminal(boat, diag({5, 5, 1, 1, 1, 1}),
                                Eigen::MatrixXd::Identity(3, 3), options));
}

// Linear agent with boxed inputs and states: phi vanishes, so alpha_bar is
// set by the closed-form extents of the ellipsoid.
TEST(TerminalTest, AlphaBarOfLinearToyIsTheBoxExtent) {
  Eigen::MatrixXd A(2, 2), B(2, 1);
  A << 0.0, 1.0, 0.0, 0.0;
  B << 0.0, 1.0;
  AgentModel model = make_linear(A, B);
  model.input_constraints.set_bounds(0, -0.8, 0.8);
  model.state_constraints.set_bounds(1, -0.3, 0.3);
  AlphaSearchOptions options;
  options.boundary_samples = 200;
  options.local_descents = 4;
  const TerminalIngredients ti = synthesize_terminal(
      model, Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(1, 1),
      SynthesisOptions{options});
  const Eigen::MatrixXd Pinv = ti.P.inverse();
  const double alpha_u =
      0.8 / std::sqrt((ti.K.row(0) * Pinv * ti.K.row(0).transpose())(0));
  const double alpha_x = 0.3 / std::sqrt(Pinv(1, 1));
  const AlphaBreakdown bd = alpha_upper_bound(model, ti, options);
  EXPECT_NEAR(bd.alpha_inputs, alpha_u, 1e-12);
  EXPECT_NEAR(bd.alpha_states, alpha_x, 1e-12);
  EXPECT_DOUBLE_EQ(bd.alpha_ratio, options.alpha_max);
  EXPECT_NEAR(ti.alpha_bar, std::min(alpha_u, alpha_x), 1e-12);
}

TEST(TerminalTest, PhiVanishesForLinearModels) {
  Eigen::MatrixXd A(2, 2), B(2, 1);
  A << 0.0, 1.0, -1.0, 0.0;
  B << 0.0, 1.0;
  const AgentModel model = make_linear(A, B);
  const TerminalIngredients ti = synthesize_terminal(
      model, Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(1, 1));
  EXPECT_LT(phi_aux(model, ti, Eigen::Vector2d(0.4, -0.9)).norm(), 1e-6);
}

TEST(TerminalTest, AlphaUpdateAddsShiftInPNorm) {
  const AgentModel boat = make_boat();
  AlphaSearchOptions fast;
  fast.boundary_samples = 200;
  fast.local_descents = 2;
  fast.bisection_iterations = 10;
  const TerminalIngredients ti = synthesize_terminal(
      boat, diag({5, 5, 1, 1, 1, 1}), Eigen::MatrixXd::Identity(3, 3),
      SynthesisOptions{fast});
  const Eigen::Vector3d v(0.6, -0.8, 0.0);
  Eigen::VectorXd hx = Eigen::VectorXd::Zero(6);
  hx(0) = 0.6;
  hx(1) = -0.8;
  const double expected = 0.2 + 0.1 * std::sqrt(hx.dot(ti.P * hx));
  EXPECT_NEAR(alpha_update(0.2, 0.1, ti, v, boat), expected, 1e-14);
}

TEST(TerminalTest, MembershipMargin) {
  auto ti = std::make_shared<TerminalIngredients>();
  ti->P = diag({4.0, 1.0});
  TerminalSet set{Eigen::Vector2d(1.0, 0.0), 1.0, ti};
  const Membership inside = terminal_membership(set, Eigen::Vector2d(1.25, 0.5));
  EXPECT_NEAR(inside.margin, 1.0 - (4 * 0.0625 + 0.25), 1e-15);
  EXPECT_TRUE(inside.member);
  EXPECT_FALSE(terminal_membership(set, Eigen::Vector2d(1.6, 0.0)).member);
}

TEST(TerminalTest, TerminalControllerIsAffine) {
  TerminalIngredients ti;
  ti.K = Eigen::MatrixXd(1, 2);
  ti.K << -1.0, -2.0;
  const Eigen::VectorXd u = terminal_controller(
      ti, Eigen::Vector2d(1.0, 0.0), Eigen::VectorXd::Constant(1, 0.5),
      Eigen::Vector2d(1.5, 0.25));
  EXPECT_NEAR(u(0), 0.5 - 0.5 - 0.5, 1e-15);
}

class KernelTest : public ::testing::Test {
 protected:
  void SetUp() override {
    model_ = make_boat();
    AlphaSearchOptions fast;
    fast.boundary_samples = 200;
    fast.local_descents = 2;
    fast.bisection_iterations = 10;
    ti_ = synthesize_terminal(model_, diag({5, 5, 1, 1, 1, 1}),
                              Eigen::MatrixXd::Identity(3, 3),
                              SynthesisOptions{fast});
  }
  AgentModel model_;
  TerminalIngredients ti_;
};

TEST_F(KernelTest, DirectionsHaveUnitPNormAndAreSeeded) {
  const Eigen::MatrixXd d = sample_ellipsoid_directions(ti_.P, 300, 42);
  for (Eigen::Index k = 0; k < d.cols(); ++k) {
    EXPECT_NEAR(p_norm(ti_.P, d.col(k)), 1.0, 1e-12);
  }
  EXPECT_EQ(d, sample_ellipsoid_directions(ti_.P, 300, 42));
  EXPECT_NE(d, sample_ellipsoid_directions(ti_.P, 300, 43));
}

TEST_F(KernelTest, SerialAndParallelAgree) {
  const Eigen::MatrixXd d = sample_ellipsoid_directions(ti_.P, 2000, 1);
  const KernelMax rs = max_phi_ratio_serial(model_, ti_, d, 0.3);
  const KernelMax rp = max_phi_ratio_parallel(model_, ti_, d, 0.3);
  EXPECT_EQ(rs.value, rp.value);
  EXPECT_EQ(rs.index, rp.index);
  const Eigen::MatrixXd pts = 0.2 * d;
  const KernelMax ds = max_decrease_excess_serial(model_, ti_, pts);
  const KernelMax dp = max_decrease_excess_parallel(model_, ti_, pts);
  EXPECT_EQ(ds.value, dp.value);
  EXPECT_EQ(ds.index, dp.index);
}

TEST_F(KernelTest, PhiRatioMatchesDirectEvaluation) {
  const Eigen::MatrixXd d = sample_ellipsoid_directions(ti_.P, 50, 9);
  double best = 0.0;
  for (Eigen::Index k = 0; k < d.cols(); ++k) {
    const Eigen::VectorXd dx = 0.3 * d.col(k);
    best = std::max(best, p_norm(ti_.P, phi_aux(model_, ti_, dx)) /
                              p_norm(ti_.P, dx));
  }
  EXPECT_NEAR(max_phi_ratio_serial(model_, ti_, d, 0.3).value, best, 1e-14);
}

TEST_F(KernelTest, DecreaseHoldsInsideSynthesizedSet) {
  const Eigen::MatrixXd d = sample_ellipsoid_directions(ti_.P, 1000, 2);
  const KernelMax km =
      max_decrease_excess_serial(model_, ti_, ti_.alpha_bar * d);
  EXPECT_LE(km.value, 1e-6);
}

}  // namespace
}  // namespace rdv
