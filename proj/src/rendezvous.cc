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

#include <chrono>
#include <cmath>
#include <sstream>

#include <spdlog/spdlog.h>

namespace rdv {

void RendezvousState::record_update(const ThetaUpdateRecord& record) {
  // Same-instant updates (sequential mode) are ordered by agent id.
  if (!update_log.empty()) {
    const ThetaUpdateRecord& last = update_log.back();
    if (record.t < last.t || (record.t == last.t && record.agent <= last.agent)) {
      throw Error("rendezvous update log must be strictly increasing in time");
    }
  }
  update_log.push_back(record);
}

void validate_weights(const std::vector<double>& weights) {
  if (weights.empty()) throw ConfigError("at least one agent weight required");
  double sum = 0.0;
  for (double c : weights) {
    if (!(c >= 0.0) || !std::isfinite(c)) {
      throw ConfigError("agent weights must be finite and non-negative");
    }
    sum += c;
  }
  const double M = static_cast<double>(weights.size());
  if (std::abs(sum - M) > 1e-12) {
    std::ostringstream os;
    os.precision(17);
    os << "agent weights must sum to the number of agents (" << M
       << "), got " << sum;
    throw ConfigError(os.str());
  }
}

Eigen::Vector3d theta_init(const std::vector<Eigen::Vector3d>& outputs,
                           const std::vector<double>& weights,
                           const ThetaBox& box) {
  if (outputs.size() != weights.size()) {
    throw ConfigError("one weight per agent output required");
  }
  validate_weights(weights);
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  for (size_t i = 0; i < outputs.size(); ++i) sum += weights[i] * outputs[i];
  return box.project(sum / static_cast<double>(outputs.size()));
}

double output_offset(const Eigen::Vector3d& y_T, const Eigen::Vector3d& theta) {
  return (y_T - theta).squaredNorm();
}

Eigen::Vector3d v_theta(const Eigen::Vector3d& y_T,
                        const Eigen::Vector3d& theta) {
  const Eigen::Vector3d d = y_T - theta;
  const double norm = d.norm();
  if (!(norm > 1e-9)) {
    throw Error("v_theta: predicted output coincides with theta");
  }
  return -d / norm;
}

TriggerEvent theta_update(RendezvousState* state, int agent, int step,
                          double t, const Eigen::Vector3d& y_T) {
  TriggerEvent event;
  event.step = step;
  event.t = t;
  event.agent = agent;
  event.theta_before = state->theta;
  event.V_o = output_offset(y_T, state->theta);
  if (event.V_o <= state->epsilon) {
    event.triggered = false;
    event.theta_after = state->theta;
    return event;
  }
  event.triggered = true;
  event.theta_after =
      state->box.project(state->theta - state->eta * v_theta(y_T, state->theta));
  state->flag = true;
  state->theta = event.theta_after;
  state->record_update({step, t, agent, event.theta_before, event.theta_after});
  return event;
}

bool stopping_condition(const Eigen::Vector3d& y,
                        const Eigen::Vector3d& theta, double epsilon) {
  return (y - theta).norm() <= epsilon;
}

AgentContext make_agent_context(int id, DocpSpec spec,
                                const Eigen::Vector3d& theta0, double eta,
                                double epsilon, const ThetaBox& box) {
  AgentContext ctx;
  ctx.id = id;
  ctx.alpha = spec.ingredients->alpha_bar;
  ctx.spec = std::move(spec);
  ctx.rendezvous.theta = theta0;
  ctx.rendezvous.eta = eta;
  ctx.rendezvous.epsilon = epsilon;
  ctx.rendezvous.box = box;
  return ctx;
}

AgentStepResult agent_step(AgentContext* ctx, const VecRef& x,
                           const std::vector<Message>& incoming, int step,
                           double t) {
  const AgentModel& model = *ctx->spec.model;
  const TerminalIngredients& ingr = *ctx->spec.ingredients;
  AgentStepResult res;

  // (a) Download theta if flagged; the last writer in (step, sender) order
  // wins. The radius grows by the P-norm of the actual target shift.
  Eigen::Vector3d latest = ctx->rendezvous.theta;
  for (const Message& m : incoming) {
    if (m.kind == MessageKind::kThetaUpdate) latest = m.theta;
  }
  if (latest != ctx->rendezvous.theta) {
    const Eigen::Vector3d shift = latest - ctx->rendezvous.theta;
    const double distance = shift.norm();
    const double alpha_new =
        alpha_update(ctx->alpha, distance, ingr, shift / distance, model);
    if (ctx->previous) {
      res.update_certificate = check_candidate_feasibility(
          *ctx->previous, steady_state_maps(model, latest), alpha_new,
          ctx->spec);
      res.update_certificate_nominal =
          ctx->previous->status == DocpStatus::kOptimal &&
          ctx->spec.terminal_constraint;
    }
    if (alpha_new > ingr.alpha_bar && ctx->alpha <= ingr.alpha_bar) {
      spdlog::warn("agent {}: terminal radius {:.6g} exceeds alpha_bar {:.6g}",
                   ctx->id, alpha_new, ingr.alpha_bar);
    }
    res.adopted = true;
    res.adopted_from = ctx->rendezvous.theta;
    ctx->rendezvous.theta = latest;
    ctx->alpha = alpha_new;
  }
  ctx->rendezvous.flag = false;

  // Certificate of the shifted plan for the current target.
  if (ctx->previous && !res.update_certificate) {
    res.certificate = check_candidate_feasibility(
        *ctx->previous, steady_state_maps(model, ctx->rendezvous.theta),
        ctx->alpha, ctx->spec);
  }

  // (b) Solve, warm-started from the shifted previous plan.
  std::optional<WarmStart> warm;
  if (ctx->previous && ctx->previous->states.allFinite()) {
    warm = WarmStart{warm_start_shift(*ctx->previous, ctx->spec),
                     shift_multipliers(*ctx->previous, ctx->spec)};
  }
  const auto t0 = std::chrono::steady_clock::now();
  res.solution = solve_docp(ctx->spec, x, ctx->rendezvous.theta, ctx->alpha,
                            warm ? &*warm : nullptr);
  res.solve_seconds = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
  if (res.solution.status == DocpStatus::kInfeasible) {
    ++ctx->consecutive_infeasible;
  } else {
    ctx->consecutive_infeasible = 0;
  }

  Eigen::MatrixXd plan = res.solution.inputs;
  Eigen::MatrixXd predicted = res.solution.states;
  if (!res.solution.usable(ctx->spec.solver) && warm) {
    res.degraded = true;
    plan = warm->inputs;
    predicted = rollout(model, x, plan, ctx->spec.dt);
    spdlog::warn("agent {} step {}: solver {} (residual {:.3g}); applying "
                 "the shifted previous plan",
                 ctx->id, step, to_string(res.solution.status),
                 res.solution.constraint_residual);
  }
  res.applied_input = plan.col(0);
  res.y_T = model.output_matrix * predicted.col(ctx->spec.N);

  // (c) Rendezvous condition on the predicted terminal output.
  RendezvousState& rz = ctx->rendezvous;
  const size_t logged = rz.update_log.size();
  res.event = theta_update(&rz, ctx->id, step, t, res.y_T);
  if (res.event.triggered) {
    Message m;
    m.kind = MessageKind::kThetaUpdate;
    m.sender = ctx->id;
    m.step = step;
    m.theta = res.event.theta_after;
    const Eigen::Vector3d shift = res.event.theta_after - res.event.theta_before;
    const double distance = shift.norm();
    m.alpha[ctx->id] =
        distance > 0.0
            ? alpha_update(ctx->alpha, distance, ingr, shift / distance, model)
            : ctx->alpha;
    m.ts = t;
    res.outgoing = m;
    // The replica is refreshed from the bus like everyone else's, so the
    // own update is adopted (with its radius update) at the next poll.
    rz.theta = res.event.theta_before;
    rz.update_log.resize(logged);
  }

  // (d) Stopping condition on the current output.
  const Eigen::Vector3d y = model.output(x);
  const Eigen::Vector3d theta_now =
      res.event.triggered ? res.event.theta_after : rz.theta;
  res.stopped = stopping_condition(y, theta_now, rz.stop_tolerance());

  ctx->previous = res.solution;
  if (res.degraded) {
    ctx->previous->inputs = plan;
    ctx->previous->states = predicted;
    ctx->previous->outputs = model.output_matrix * predicted;
  }
  return res;
}

}  // namespace rdv
