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


#include "rdv/rendezvous.h"

#include <cmath>
#include <memory>
#include <random>

#include <gtest/gtest.h>

namespace rdv {
namespace {

TEST(RendezvousTest, ThetaInitNominalExample) {
  const ThetaBox box;
  const Eigen::Vector3d theta =
      theta_init({Eigen::Vector3d(4, 2, 5), Eigen::Vector3d(-3, -1.5, 0)},
                 {2.0 / 3.0, 4.0 / 3.0}, box);
  EXPECT_NEAR(theta(0), -2.0 / 3.0, 1e-15);
  EXPECT_NEAR(theta(1), -1.0 / 3.0, 1e-15);
  EXPECT_EQ(theta(2), 0.0);
}

TEST(RendezvousTest, ThetaInitEqualWeightsIsCentroid) {
  ThetaBox box;
  box.upper(2) = 10.0;
  const Eigen::Vector3d theta = theta_init(
      {Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(3, 4, 5),
       Eigen::Vector3d(-1, 0, 1)},
      {1.0, 1.0, 1.0}, box);
  EXPECT_TRUE(theta.isApprox(Eigen::Vector3d(1, 2, 3)));
}

TEST(RendezvousTest, ThetaInitProjectsOntoBox) {
  const Eigen::Vector3d theta = theta_init(
      {Eigen::Vector3d(200, 0, 0), Eigen::Vector3d(0, 0, 0)}, {1.0, 1.0},
      ThetaBox{});
  EXPECT_EQ(theta(0), 50.0);
}

TEST(RendezvousTest, WeightsMustSumToAgentCount) {
  EXPECT_NO_THROW(validate_weights({2.0 / 3.0, 4.0 / 3.0}));
  EXPECT_THROW(validate_weights({0.5, 0.5}), ConfigError);
  EXPECT_THROW(validate_weights({-1.0, 3.0}), ConfigError);
  EXPECT_THROW(validate_weights({}), ConfigError);
  EXPECT_THROW(theta_init({Eigen::Vector3d::Zero()}, {0.5, 1.5}, ThetaBox{}),
               ConfigError);
}

TEST(RendezvousTest, VThetaMatchesFiniteDifferenceOfDistance) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n01;
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Vector3d y(3 * n01(rng), 3 * n01(rng), 3 * n01(rng));
    const Eigen::Vector3d theta(3 * n01(rng), 3 * n01(rng), 3 * n01(rng));
    Eigen::Vector3d fd;
    for (int i = 0; i < 3; ++i) {
      Eigen::Vector3d tp = theta, tm = theta;
      tp(i) += h;
      tm(i) -= h;
      fd(i) = ((y - tp).norm() - (y - tm).norm()) / (2 * h);
    }
    EXPECT_LT((v_theta(y, theta) - fd).norm(), 1e-6);
    EXPECT_NEAR(v_theta(y, theta).norm(), 1.0, 1e-15);
  }
}

TEST(RendezvousTest, VThetaDegenerateThrows) {
  EXPECT_THROW(v_theta(Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(1, 2, 3)),
               Error);
}

RendezvousState make_state() {
  RendezvousState s;
  s.theta = Eigen::Vector3d(0, 0, 0);
  s.eta = 0.1;
  s.epsilon = 0.1;
  return s;
}

TEST(RendezvousTest, NoUpdateAtOrBelowEpsilon) {
  RendezvousState s = make_state();
  // V_o = 0.1 exactly: no trigger.
  const TriggerEvent e =
      theta_update(&s, 0, 0, 0.0, Eigen::Vector3d(std::sqrt(0.1), 0, 0));
  EXPECT_FALSE(e.triggered);
  EXPECT_EQ(s.theta, Eigen::Vector3d::Zero());
  EXPECT_FALSE(s.flag);
  EXPECT_TRUE(s.update_log.empty());
}

TEST(RendezvousTest, UpdateMovesEtaTowardPrediction) {
  RendezvousState s = make_state();
  const TriggerEvent e = theta_update(&s, 1, 3, 0.3, Eigen::Vector3d(3, 4, 0));
  EXPECT_TRUE(e.triggered);
  EXPECT_DOUBLE_EQ(e.V_o, 25.0);
  EXPECT_TRUE(s.theta.isApprox(Eigen::Vector3d(0.06, 0.08, 0.0)));
  EXPECT_NEAR((s.theta - e.theta_before).norm(), s.eta, 1e-15);
  EXPECT_TRUE(s.flag);
  ASSERT_EQ(s.update_log.size(), 1u);
  EXPECT_EQ(s.update_log[0].agent, 1);
  EXPECT_EQ(s.update_log[0].step, 3);
}

TEST(RendezvousTest, UpdateIsProjected) {
  RendezvousState s = make_state();
  // The z component is pinned by the default box.
  theta_update(&s, 0, 0, 0.0, Eigen::Vector3d(0, 0, 5));
  EXPECT_EQ(s.theta, Eigen::Vector3d::Zero());
  s.theta = Eigen::Vector3d(50, 0, 0);
  theta_update(&s, 0, 1, 0.1, Eigen::Vector3d(60, 0, 0));
  EXPECT_EQ(s.theta(0), 50.0);
}

TEST(RendezvousTest, UpdateLogIsOrderedByTimeThenAgent) {
  RendezvousState s = make_state();
  s.record_update({0, 0.0, 0, {}, {}});
  s.record_update({0, 0.0, 1, {}, {}});
  EXPECT_THROW(s.record_update({0, 0.0, 1, {}, {}}), Error);
  EXPECT_THROW(s.record_update({0, 0.0, 0, {}, {}}), Error);
  s.record_update({1, 0.1, 0, {}, {}});
  EXPECT_THROW(s.record_update({0, 0.05, 1, {}, {}}), Error);
}

TEST(RendezvousTest, StoppingCondition) {
  const Eigen::Vector3d theta(1, 1, 0);
  EXPECT_TRUE(stopping_condition(Eigen::Vector3d(1.05, 1, 0), theta, 0.1));
  EXPECT_FALSE(stopping_condition(Eigen::Vector3d(1.08, 1.08, 0), theta, 0.1));
  EXPECT_TRUE(stopping_condition(theta, theta, 0.0));
}

TEST(RendezvousTest, StopToleranceDefaultsToEpsilon) {
  RendezvousState s = make_state();
  EXPECT_EQ(s.stop_tolerance(), 0.1);
  s.stop_epsilon = 0.3;
  EXPECT_EQ(s.stop_tolerance(), 0.3);
}

// Single-integrator toy agent with light weights, so it cannot reach a far
// target within the horizon and triggers.
class AgentStepTest : public ::testing::Test {
 protected:
  void SetUp() override {
    auto model = std::make_shared<AgentModel>(
        make_linear(Eigen::MatrixXd::Zero(3, 3), Eigen::MatrixXd::Identity(3, 3)));
    const Eigen::MatrixXd Q = 0.05 * Eigen::MatrixXd::Identity(3, 3);
    const Eigen::MatrixXd R = Eigen::MatrixXd::Identity(3, 3);
    AlphaSearchOptions fast;
    fast.boundary_samples = 100;
    fast.local_descents = 2;
    auto ti = std::make_shared<TerminalIngredients>(
        synthesize_terminal(*model, Q, R, SynthesisOptions{fast}));
    ctx_ = make_agent_context(
        0, DocpSpec::make(model, ti, Q, R, 3.0, 0.1, true),
        Eigen::Vector3d(0, 0, 0), 0.1, 0.1, ThetaBox{});
  }
  AgentContext ctx_;
};

TEST_F(AgentStepTest, TriggerPublishesWithoutSelfAdopting) {
  const Eigen::Vector3d x(6, 3, 0);
  const AgentStepResult res = agent_step(&ctx_, x, {}, 0, 0.0);
  ASSERT_TRUE(res.event.triggered);
  ASSERT_TRUE(res.outgoing.has_value());
  EXPECT_EQ(res.outgoing->kind, MessageKind::kThetaUpdate);
  EXPECT_EQ(res.outgoing->theta, res.event.theta_after);
  EXPECT_GT(res.outgoing->alpha.at(0), ctx_.alpha);
  // The replica waits for the bus.
  EXPECT_EQ(ctx_.rendezvous.theta, Eigen::Vector3d::Zero());
  EXPECT_TRUE(ctx_.rendezvous.update_log.empty());
  EXPECT_FALSE(res.adopted);
  EXPECT_EQ(res.solution.status, DocpStatus::kOptimal);
}

TEST_F(AgentStepTest, AdoptionGrowsRadiusByShiftAndCertifies) {
  const Eigen::Vector3d x(6, 3, 0);
  const AgentStepResult first = agent_step(&ctx_, x, {}, 0, 0.0);
  ASSERT_TRUE(first.outgoing.has_value());
  const double alpha_before = ctx_.alpha;
  const Eigen::Vector3d x1 = first.solution.states.col(1);
  const AgentStepResult second =
      agent_step(&ctx_, x1, {*first.outgoing}, 1, 0.1);
  EXPECT_TRUE(second.adopted);
  ASSERT_TRUE(second.update_certificate.has_value());
  EXPECT_TRUE(second.update_certificate_nominal);
  EXPECT_TRUE(second.update_certificate->ok());
  const Eigen::Vector3d shift = first.outgoing->theta;
  const double expected =
      alpha_update(alpha_before, shift.norm(), *ctx_.spec.ingredients,
                   shift / shift.norm(), *ctx_.spec.model);
  EXPECT_NEAR(ctx_.alpha, expected, 1e-14);
  EXPECT_NEAR(ctx_.alpha, first.outgoing->alpha.at(0), 1e-14);
}

TEST_F(AgentStepTest, LastWriterWins) {
  Message a, b;
  a.sender = 0;
  a.theta = Eigen::Vector3d(0.1, 0, 0);
  b.sender = 1;
  b.theta = Eigen::Vector3d(0, 0.1, 0);
  const AgentStepResult res =
      agent_step(&ctx_, Eigen::Vector3d(0, 0.1, 0), {a, b}, 0, 0.0);
  EXPECT_TRUE(res.adopted);
  EXPECT_EQ(ctx_.rendezvous.theta, b.theta);
}

TEST_F(AgentStepTest, StopsAtTheta) {
  const AgentStepResult res =
      agent_step(&ctx_, Eigen::Vector3d(0.05, 0, 0), {}, 0, 0.0);
  EXPECT_FALSE(res.event.triggered);
  EXPECT_TRUE(res.stopped);
  EXPECT_FALSE(res.outgoing.has_value());
}

}  // namespace
}  // namespace rdv
