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


#include "rdv/telemetry.h"

#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>

namespace rdv {
namespace {

namespace fs = std::filesystem;

StepRecord record(int step, int agent, const Eigen::VectorXd& x,
                  const Eigen::VectorXd& u, const Eigen::Vector3d& y) {
  StepRecord r;
  r.step = step;
  r.t = 0.1 * step;
  r.agent = agent;
  r.x = x;
  r.u = u;
  r.y = y;
  r.y_T = y + Eigen::Vector3d(0.01, 0.0, 0.0);
  r.V_o = 1.0 / 3.0 + step;
  r.theta_solved = Eigen::Vector3d(-2.0 / 3.0, -1.0 / 3.0, 0.0);
  r.theta = r.theta_solved;
  r.alpha = 0.1 + 0.2;
  r.solve_seconds = 0.001 * (step + 1);
  r.terminal_margin = 0.5 - 0.1 * step;
  r.prediction_error = step == 0 ? 1e-12 : 2e-3;
  return r;
}

// Two agents, two steps, one update and its message.
TelemetryLog sample_log() {
  TelemetryLog log;
  log.scenario = "sample";
  log.dt = 0.1;
  log.epsilon = 0.1;
  log.landing_radius = 0.5;
  log.agents = {make_agent_info(0, make_quadcopter(), 0.04),
                make_agent_info(1, make_boat(), 0.28)};
  log.theta0 = Eigen::Vector3d(-2.0 / 3.0, -1.0 / 3.0, 0.0);
  for (int step = 0; step < 2; ++step) {
    log.records.push_back(record(step, 0, Eigen::VectorXd::Constant(9, step),
                                 Eigen::VectorXd::Constant(4, 0.25),
                                 Eigen::Vector3d(0.3 * step, 0.0, 0.0)));
    log.records.push_back(record(step, 1, Eigen::VectorXd::Constant(6, -step),
                                 Eigen::VectorXd::Constant(3, 0.125),
                                 Eigen::Vector3d(0.0, 0.4 * step, 0.0)));
  }
  log.records[1].status = DocpStatus::kMaxIter;
  log.records[2].degraded = true;
  log.records[3].certificate =
      CertificateRecord{true, true, false, -0.5, 0.0, 0.0};
  log.records[2].certificate = CertificateRecord{false, true, true, 0.1, 0, 0};
  log.records[3].state_violation = 0.25;

  TriggerEvent e;
  e.step = 0;
  e.agent = 1;
  e.triggered = true;
  e.theta_before = log.theta0;
  e.theta_after = log.theta0 + Eigen::Vector3d(0.0, -0.1, 0.0);
  log.events.push_back(e);
  Message m;
  m.kind = MessageKind::kThetaUpdate;
  m.sender = 1;
  m.step = 0;
  m.theta = e.theta_after;
  m.alpha = {{1, 0.31}};
  log.messages.push_back(m);
  log.updates.push_back({0, 0.0, 1, e.theta_before, e.theta_after});
  log.termination = Termination::kRendezvous;
  log.rendezvous_step = 1;
  log.final_theta = e.theta_after;
  return log;
}

TEST(TelemetryTest, MetricsOfSampleLog) {
  const Summary s = compute_metrics(sample_log());
  EXPECT_EQ(s.steps, 2);
  EXPECT_EQ(s.message_count, 1);
  EXPECT_EQ(s.triggered_events, 1);
  EXPECT_EQ(s.theta_updates, 1);
  EXPECT_NEAR(s.cumulative_theta_displacement, 0.1, 1e-15);
  EXPECT_EQ(s.messages_after_last_update, 0);
  EXPECT_EQ(s.non_optimal_steps, 1);
  EXPECT_EQ(s.degraded_steps, 1);
  EXPECT_EQ(s.max_state_violation, 0.25);
  EXPECT_NEAR(s.min_terminal_margin, 0.4, 1e-15);
  EXPECT_EQ(s.max_prediction_error, 2e-3);
  EXPECT_EQ(s.certificates_checked, 2);
  EXPECT_EQ(s.certificates_failed, 1);
  EXPECT_EQ(s.update_certificates_nominal, 1);
  EXPECT_EQ(s.update_certificates_nominal_failed, 1);
  EXPECT_NEAR(s.rendezvous_time, 0.1, 1e-15);
  EXPECT_NEAR(s.final_distance, 0.5, 1e-15);  // |(0.3, -0.4)|
  EXPECT_TRUE(s.landed);
  EXPECT_NEAR(s.solve_mean, 0.0015, 1e-15);
  EXPECT_EQ(s.solve_max, 0.002);
  EXPECT_EQ(s.solve_p95, 0.002);
}

TEST(TelemetryTest, MessagesAfterLastUpdateAreCounted) {
  TelemetryLog log = sample_log();
  Message late = log.messages.front();
  late.step = 5;
  log.messages.push_back(late);
  EXPECT_EQ(compute_metrics(log).messages_after_last_update, 1);
}

TEST(TelemetryTest, NoOpUpdatesAreNotCounted) {
  TelemetryLog log = sample_log();
  log.updates.push_back({1, 0.1, 0, log.final_theta, log.final_theta});
  EXPECT_EQ(compute_metrics(log).theta_updates, 1);
}

class TelemetryFilesTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("rdv_telemetry_" +
            std::string(::testing::UnitTest::GetInstance()
                            ->current_test_info()
                            ->name()));
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST_F(TelemetryFilesTest, CsvHeaderHasDocumentedColumns) {
  write_telemetry(sample_log(), dir_.string(), false);
  std::ifstream in(dir_ / "agent_1_boat.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header.rfind("t,", 0), 0u);
  EXPECT_NE(header.find(",V_o,theta_x,theta_y,theta_z,alpha,solver_status"),
            std::string::npos);
  int commas = 0;
  for (char c : header) commas += c == ',';
  EXPECT_EQ(commas, 1 + 6 + 3 + 6 - 1);
  EXPECT_TRUE(fs::exists(dir_ / "agent_0_quadcopter.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "events.jsonl"));
  EXPECT_TRUE(fs::exists(dir_ / "summary.json"));
}

TEST_F(TelemetryFilesTest, RoundTripPreservesLog) {
  const TelemetryLog log = sample_log();
  write_telemetry(log, dir_.string(), false);
  const TelemetryLog back = read_telemetry(dir_.string());
  EXPECT_EQ(back.scenario, log.scenario);
  EXPECT_EQ(back.termination, log.termination);
  EXPECT_EQ(back.rendezvous_step, log.rendezvous_step);
  EXPECT_EQ(back.final_theta, log.final_theta);
  EXPECT_EQ(back.theta0, log.theta0);
  ASSERT_EQ(back.records.size(), log.records.size());
  for (size_t i = 0; i < log.records.size(); ++i) {
    const StepRecord& a = log.records[i];
    const StepRecord& b = back.records[i];
    EXPECT_EQ(b.step, a.step);
    EXPECT_EQ(b.agent, a.agent);
    EXPECT_EQ(b.t, a.t);
    EXPECT_EQ(b.x, a.x);
    EXPECT_EQ(b.u, a.u);
    EXPECT_EQ(b.V_o, a.V_o);
    EXPECT_EQ(b.theta, a.theta);
    EXPECT_EQ(b.alpha, a.alpha);
    EXPECT_EQ(b.status, a.status);
    EXPECT_EQ(b.degraded, a.degraded);
    EXPECT_EQ(b.certificate.has_value(), a.certificate.has_value());
  }
  ASSERT_EQ(back.messages.size(), 1u);
  EXPECT_EQ(back.messages[0].theta, log.messages[0].theta);
  EXPECT_EQ(back.messages[0].alpha, log.messages[0].alpha);
  ASSERT_EQ(back.updates.size(), 1u);
  EXPECT_EQ(back.updates[0].theta_after, log.updates[0].theta_after);
  const Summary s1 = compute_metrics(log), s2 = compute_metrics(back);
  EXPECT_EQ(summary_to_json(s1), summary_to_json(s2));
}

TEST_F(TelemetryFilesTest, RefusesToOverwriteWithoutForce) {
  write_telemetry(sample_log(), dir_.string(), false);
  EXPECT_THROW(write_telemetry(sample_log(), dir_.string(), false), Error);
  EXPECT_NO_THROW(write_telemetry(sample_log(), dir_.string(), true));
}

TEST(TelemetryTest, TerminationNamesRoundTrip) {
  for (Termination t :
       {Termination::kRendezvous, Termination::kTimeout, Termination::kAborted}) {
    EXPECT_EQ(termination_from_string(to_string(t)), t);
  }
}

}  // namespace
}  // namespace rdv
