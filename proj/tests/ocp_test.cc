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


#include "rdv/ocp.h"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include <gtest/gtest.h>

#include "oracles.h"

namespace rdv {
namespace {

using oracles::LqInstance;
using oracles::normal_equations_cost;
using oracles::random_lq;

TEST(OcpTest, MatchesNormalEquationsOnRandomLqInstances) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const LqInstance inst = random_lq(&rng);
    const double oracle = normal_equations_cost(inst);
    const DocpSolution sol = solve_docp(inst.spec, inst.x0, inst.theta);
    EXPECT_EQ(sol.status, DocpStatus::kOptimal) << "trial " << trial;
    EXPECT_LT(std::abs(sol.cost - oracle), 1e-6 * std::abs(oracle))
        << "trial " << trial << ": " << sol.cost << " vs " << oracle;
  }
}

TEST(OcpTest, LbfgsInnerSolverAlsoMatchesOracle) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 3; ++trial) {
    LqInstance inst = random_lq(&rng);
    inst.spec.solver.inner_solver = InnerSolver::kLbfgs;
    inst.spec.solver.max_inner = 2000;
    const double oracle = normal_equations_cost(inst);
    const DocpSolution sol = solve_docp(inst.spec, inst.x0, inst.theta);
    EXPECT_LT(std::abs(sol.cost - oracle), 1e-5 * std::abs(oracle))
        << to_string(sol.status) << " after " << sol.iterations;
  }
}

using oracles::gradient_check;

DocpSpec spec_for(std::shared_ptr<const AgentModel> model,
                  const Eigen::VectorXd& q, const Eigen::VectorXd& r) {
  return oracles::gradient_spec(std::move(model), q, r);
}

TEST(OcpTest, GradientMatchesFiniteDifferencesQuadcopter) {
  Eigen::VectorXd q(9), r(4);
  q << 30, 30, 6, 1, 1, 1, 1, 1, 1;
  r.setOnes();
  const DocpSpec spec =
      spec_for(std::make_shared<AgentModel>(make_quadcopter()), q, r);
  EXPECT_LT(gradient_check(spec, 0.4, 0.4, 1), 1e-4);
}

TEST(OcpTest, GradientMatchesFiniteDifferencesBoat) {
  Eigen::VectorXd q(6), r(3);
  q << 5, 5, 1, 1, 1, 1;
  r.setOnes();
  const DocpSpec spec =
      spec_for(std::make_shared<AgentModel>(make_boat()), q, r);
  EXPECT_LT(gradient_check(spec, 1.0, 2.0, 2), 1e-4);
}

TEST(OcpTest, GradientMatchesFiniteDifferencesLinear) {
  Eigen::MatrixXd A(3, 3), B(3, 2);
  A << 0.0, 1.0, 0.0, -1.0, -0.2, 0.3, 0.0, 0.5, -0.4;
  B << 0.0, 1.0, 1.0, 0.0, 0.5, 0.5;
  const DocpSpec spec = spec_for(std::make_shared<AgentModel>(make_linear(A, B)),
                                 Eigen::Vector3d(1.0, 2.0, 0.5),
                                 Eigen::Vector2d(0.3, 1.0));
  EXPECT_LT(gradient_check(spec, 1.0, 1.0, 3), 1e-4);
}

TEST(OcpTest, RolloutStartsAtInitialState) {
  const AgentModel boat = make_boat();
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(6);
  x0(0) = 1.0;
  const Eigen::MatrixXd X = rollout(boat, x0, Eigen::MatrixXd::Zero(3, 5), 0.1);
  EXPECT_EQ(X.cols(), 6);
  EXPECT_EQ(X.col(0), x0);
  EXPECT_EQ(X.col(5), x0);  // rest stays at rest
}

TEST(OcpTest, SpecRejectsNonIntegralHorizon) {
  const DocpSpec ok =
      spec_for(std::make_shared<AgentModel>(make_boat()),
               Eigen::VectorXd::Ones(6), Eigen::VectorXd::Ones(3));
  EXPECT_EQ(ok.N, 30);
  EXPECT_THROW(DocpSpec::make(ok.model, ok.ingredients, ok.Q, ok.R, 3.05, 0.1,
                              false),
               ConfigError);
  EXPECT_THROW(DocpSpec::make(ok.model, ok.ingredients, -ok.Q, ok.R, 3.0, 0.1,
                              false),
               ConfigError);
}

class TerminalOcpTest : public ::testing::Test {
 protected:
  void SetUp() override {
    model_ = std::make_shared<AgentModel>(make_boat());
    Eigen::VectorXd q(6);
    q << 5, 5, 1, 1, 1, 1;
    AlphaSearchOptions fast;
    fast.boundary_samples = 300;
    fast.local_descents = 3;
    fast.bisection_iterations = 15;
    ingredients_ = std::make_shared<TerminalIngredients>(synthesize_terminal(
        *model_, Eigen::MatrixXd(q.asDiagonal()), Eigen::MatrixXd::Identity(3, 3),
        SynthesisOptions{fast}));
    spec_ = DocpSpec::make(model_, ingredients_, q.asDiagonal(),
                           Eigen::MatrixXd::Identity(3, 3), 3.0, 0.1, true);
    x0_ = Eigen::VectorXd::Zero(6);
    x0_(0) = -3.0;
    x0_(1) = -1.5;
  }
  std::shared_ptr<AgentModel> model_;
  std::shared_ptr<TerminalIngredients> ingredients_;
  DocpSpec spec_;
  Eigen::VectorXd x0_;
};

TEST_F(TerminalOcpTest, SolutionRespectsConstraints) {
  const Eigen::Vector3d theta(-2.0 / 3, -1.0 / 3, 0.0);
  const DocpSolution sol = solve_docp(spec_, x0_, theta);
  ASSERT_EQ(sol.status, DocpStatus::kOptimal);
  EXPECT_GE(sol.terminal_margin, 0.0);
  for (int k = 0; k < spec_.N; ++k) {
    EXPECT_TRUE(model_->input_constraints.contains(sol.inputs.col(k), 1e-9));
  }
  for (int k = 0; k <= spec_.N; ++k) {
    EXPECT_TRUE(model_->state_constraints.contains(sol.states.col(k), 1e-6));
  }
  EXPECT_LT((sol.states - rollout(*model_, x0_, sol.inputs, 0.1)).norm(),
            1e-12);
  const SteadyState ss = steady_state_maps(*model_, theta);
  EXPECT_NEAR(sol.cost, eval_cost(spec_, sol.inputs, x0_, ss.x, ss.u),
              1e-9 * sol.cost);
}

TEST_F(TerminalOcpTest, ShiftedPlanIsFeasibleForSameTarget) {
  const Eigen::Vector3d theta(-2.0 / 3, -1.0 / 3, 0.0);
  const DocpSolution sol = solve_docp(spec_, x0_, theta);
  ASSERT_EQ(sol.status, DocpStatus::kOptimal);
  const CandidateReport rep = check_candidate_feasibility(
      sol, steady_state_maps(*model_, theta), sol.alpha, spec_);
  EXPECT_TRUE(rep.ok()) << rep.terminal_margin;
  const Eigen::MatrixXd shifted = warm_start_shift(sol, spec_);
  EXPECT_EQ(shifted.leftCols(spec_.N - 1), sol.inputs.rightCols(spec_.N - 1));
}

TEST_F(TerminalOcpTest, WarmStartReproducesColdSolution) {
  const Eigen::Vector3d theta(-2.0 / 3, -1.0 / 3, 0.0);
  const DocpSolution cold = solve_docp(spec_, x0_, theta);
  const WarmStart warm{cold.inputs, cold.multipliers};
  const DocpSolution hot = solve_docp(spec_, x0_, theta, -1.0, &warm);
  EXPECT_EQ(hot.status, DocpStatus::kOptimal);
  EXPECT_NEAR(hot.cost, cold.cost, 1e-6 * cold.cost);
  EXPECT_LE(hot.iterations, cold.iterations);
}

TEST_F(TerminalOcpTest, UnreachableTerminalSetIsInfeasible) {
  // 40 m away with |tau| <= 2: the set cannot be reached within 3 s.
  const Eigen::Vector3d theta(37.0, -1.5, 0.0);
  const DocpSolution sol = solve_docp(spec_, x0_, theta);
  EXPECT_NE(sol.status, DocpStatus::kOptimal);
  EXPECT_GT(sol.constraint_residual, 0.0);
}

}  // namespace
}  // namespace rdv
