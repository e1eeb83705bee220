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

#include "rdv/sim.h"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <future>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "rdv/ingredients_io.h"

namespace rdv {
namespace {

constexpr int kMaxConsecutiveInfeasible = 5;
constexpr double kNominalPredictionTol = 1e-9;

int last_step(const ScenarioConfig& config) {
  return static_cast<int>(std::floor(config.max_sim_time / config.dt + 1e-9));
}

TelemetryLog make_log(const ScenarioConfig& config,
                      const std::vector<PreparedAgent>& agents) {
  TelemetryLog log;
  log.scenario = config.name;
  log.dt = config.dt;
  log.epsilon = config.stop_epsilon < 0.0 ? config.epsilon : config.stop_epsilon;
  log.landing_radius = config.landing_radius;
  log.transport = to_string(config.transport);
  for (const PreparedAgent& a : agents) {
    log.agents.push_back(
        make_agent_info(a.id, *a.model, a.ingredients->alpha_bar));
  }
  return log;
}

AgentContext make_context(const ScenarioConfig& config,
                          const PreparedAgent& agent,
                          const Eigen::Vector3d& theta0) {
  AgentContext ctx = make_agent_context(agent.id, agent.spec, theta0,
                                        config.eta, config.epsilon,
                                        theta_box(config));
  ctx.rendezvous.stop_epsilon = config.stop_epsilon;
  return ctx;
}

// Plant integration over one sampling period with a piecewise-constant
// disturbance sampled at each substep start.
Eigen::VectorXd advance_plant(const PreparedAgent& agent,
                              const Eigen::VectorXd& x,
                              const Eigen::VectorXd& u, double t, double dt,
                              int substeps) {
  const double h = dt / substeps;
  Eigen::VectorXd next = x;
  for (int j = 0; j < substeps; ++j) {
    next = rk4_step(*agent.model, next, u, agent.disturbance.at(t + j * h), h);
  }
  return next;
}

StepRecord make_record(const ScenarioConfig& config, const PreparedAgent& agent,
                       const AgentContext& ctx, const AgentStepResult& res,
                       const Eigen::VectorXd& x, int step, double t,
                       bool previous_nominal) {
  const AgentModel& model = *agent.model;
  StepRecord r;
  r.step = step;
  r.t = t;
  r.agent = agent.id;
  r.x = x;
  r.u = res.applied_input;
  r.y = model.output(x);
  r.y_T = res.y_T;
  r.V_o = res.event.V_o;
  r.theta_solved = res.event.theta_before;
  r.theta = res.event.theta_after;
  r.alpha = ctx.alpha;
  r.status = res.solution.status;
  r.iterations = res.solution.iterations;
  r.cost = res.solution.cost;
  r.kkt_residual = res.solution.kkt_residual;
  r.constraint_residual = res.solution.constraint_residual;
  r.terminal_margin = res.solution.terminal_margin;
  r.solve_seconds = res.solve_seconds;
  r.triggered = res.event.triggered;
  r.stopped = res.stopped;
  r.degraded = res.degraded;
  r.adopted = res.adopted;
  r.state_violation = model.state_constraints.max_violation(x);
  r.input_violation = model.input_constraints.max_violation(r.u);
  const std::optional<CandidateReport>& cert =
      res.update_certificate ? res.update_certificate : res.certificate;
  if (cert) {
    CertificateRecord c;
    c.update = res.update_certificate.has_value();
    c.nominal = previous_nominal && config.terminal_constraints &&
                (!c.update || res.update_certificate_nominal);
    c.ok = cert->ok();
    c.terminal_margin = cert->terminal_margin;
    c.state_violation = cert->state_violation;
    c.input_violation = cert->input_violation;
    r.certificate = c;
  }
  if (config.record_predictions && ctx.previous) {
    r.predicted_outputs = ctx.previous->outputs;
  }
  return r;
}

// State of one agent inside a simulation loop.
struct AgentRun {
  const PreparedAgent* agent = nullptr;
  AgentContext ctx;
  Eigen::VectorXd x;
  bool previous_nominal = false;
};

// Finishes a step for one agent: advances the plant and fills in the
// one-step prediction error.
void advance(const ScenarioConfig& config, AgentRun* run, StepRecord* record,
             double t) {
  run->x = advance_plant(*run->agent, run->x, record->u, t, config.dt,
                         config.substeps);
  record->prediction_error = (run->x - run->ctx.previous->states.col(1)).norm();
  run->previous_nominal =
      record->prediction_error <= kNominalPredictionTol &&
      record->status == DocpStatus::kOptimal;
}

void apply_update(RendezvousState* coordinator, const Message& m, double t,
                  TelemetryLog* log) {
  const ThetaUpdateRecord record{m.step, t, m.sender, coordinator->theta,
                                 m.theta};
  coordinator->record_update(record);
  coordinator->theta = m.theta;
  log->updates.push_back(record);
}

void note_conflict(const std::vector<Message>& published, int step,
                   TelemetryLog* log) {
  if (published.size() < 2) return;
  ConflictRecord c;
  c.step = step;
  for (const Message& m : published) c.senders.push_back(m.sender);
  c.winner = published.back().sender;
  spdlog::info("step {}: {} simultaneous theta updates, agent {} wins", step,
               published.size(), c.winner);
  log->conflicts.push_back(c);
}

}  // namespace

ThetaBox theta_box(const ScenarioConfig& config) {
  ThetaBox box;
  box.lower = config.theta_lower;
  box.upper = config.theta_upper;
  return box;
}

PreparedAgent prepare_agent(const ScenarioConfig& config, int id) {
  if (id < 0 || id >= static_cast<int>(config.agents.size())) {
    throw ConfigError("agent id " + std::to_string(id) + " not configured");
  }
  const AgentConfig& ac = config.agents[static_cast<size_t>(id)];
  auto model = std::make_shared<AgentModel>(build_model(ac));
  model->id = id;
  const Eigen::MatrixXd Q = ac.q.asDiagonal();
  const Eigen::MatrixXd R = ac.r.asDiagonal();
  std::shared_ptr<const TerminalIngredients> ingredients;
  if (!ac.ingredients_path.empty()) {
    std::filesystem::path path(ac.ingredients_path);
    if (path.is_relative()) path = std::filesystem::path(config.source_dir) / path;
    auto loaded = load_ingredients(path.string(), *model);
    if ((loaded.Q - Q).norm() > 1e-12 || (loaded.R - R).norm() > 1e-12) {
      throw ConfigError("ingredients file '" + path.string() +
                        "' was synthesized for different Q/R weights");
    }
    ingredients = std::make_shared<TerminalIngredients>(std::move(loaded));
  } else {
    SynthesisOptions options;
    options.alpha = config.synthesis;
    ingredients = std::make_shared<TerminalIngredients>(
        synthesize_terminal(*model, Q, R, options));
  }
  PreparedAgent agent;
  agent.id = id;
  agent.spec = DocpSpec::make(model, ingredients, Q, R, config.horizon,
                              config.dt, config.terminal_constraints,
                              config.solver);
  agent.model = model;
  agent.ingredients = ingredients;
  agent.disturbance = DisturbanceModel(ac.disturbance, ac.disturbance_bound);
  agent.x0 = ac.initial_state;
  agent.weight = ac.weight;
  return agent;
}

std::vector<PreparedAgent> prepare_agents(const ScenarioConfig& config) {
  std::vector<PreparedAgent> agents;
  for (int i = 0; i < static_cast<int>(config.agents.size()); ++i) {
    agents.push_back(prepare_agent(config, i));
  }
  return agents;
}

Eigen::Vector3d initial_theta(const ScenarioConfig& config,
                              const std::vector<PreparedAgent>& agents) {
  std::vector<Eigen::Vector3d> outputs;
  std::vector<double> weights;
  for (const PreparedAgent& a : agents) {
    outputs.push_back(a.model->output(a.x0));
    weights.push_back(a.weight);
  }
  return theta_init(outputs, weights, theta_box(config));
}

TelemetryLog run_scenario(const ScenarioConfig& config) {
  return run_scenario(config, prepare_agents(config));
}

TelemetryLog run_scenario(const ScenarioConfig& config,
                          const std::vector<PreparedAgent>& agents,
                          const StepObserver& observer) {
  TelemetryLog log = make_log(config, agents);
  log.transport = to_string(Transport::kInProcess);
  const Eigen::Vector3d theta0 = initial_theta(config, agents);
  log.theta0 = theta0;

  RendezvousState coordinator;
  coordinator.theta = theta0;
  coordinator.eta = config.eta;
  coordinator.epsilon = config.epsilon;
  coordinator.stop_epsilon = config.stop_epsilon;
  coordinator.box = theta_box(config);
  std::vector<int> ids;
  std::vector<AgentRun> runs;
  for (const PreparedAgent& a : agents) {
    ids.push_back(a.id);
    coordinator.weights.push_back(a.weight);
    runs.push_back({&a, make_context(config, a, theta0), a.x0, false});
  }
  InProcessBus bus(ids, config.comms.delay_steps);
  const size_t M = runs.size();
  const int final_step = last_step(config);

  for (int k = 0;; ++k) {
    const double t = k * config.dt;
    if (k > final_step) {
      log.termination = Termination::kTimeout;
      log.diagnosis = "max_sim_time elapsed";
      break;
    }
    std::vector<AgentStepResult> results(M);
    std::vector<Message> published;
    try {
      if (config.update_order == UpdateOrder::kSequential) {
        for (size_t i = 0; i < M; ++i) {
          const std::vector<Message> incoming = bus.poll(ids[i], k);
          results[i] = agent_step(&runs[i].ctx, runs[i].x, incoming, k, t);
          if (results[i].outgoing && bus.publish(*results[i].outgoing)) {
            published.push_back(*results[i].outgoing);
            apply_update(&coordinator, *results[i].outgoing, t, &log);
          }
        }
      } else {
        std::vector<std::vector<Message>> incoming(M);
        for (size_t i = 0; i < M; ++i) incoming[i] = bus.poll(ids[i], k);
        std::vector<std::thread> threads;
        std::vector<std::exception_ptr> errors(M);
        for (size_t i = 0; i < M; ++i) {
          threads.emplace_back([&, i] {
            try {
              results[i] =
                  agent_step(&runs[i].ctx, runs[i].x, incoming[i], k, t);
            } catch (...) {
              errors[i] = std::current_exception();
            }
          });
        }
        for (std::thread& th : threads) th.join();
        for (const std::exception_ptr& e : errors) {
          if (e) std::rethrow_exception(e);
        }
        for (size_t i = 0; i < M; ++i) {
          if (results[i].outgoing && bus.publish(*results[i].outgoing)) {
            published.push_back(*results[i].outgoing);
            apply_update(&coordinator, *results[i].outgoing, t, &log);
          }
        }
        note_conflict(published, k, &log);
      }
    } catch (const Error& e) {
      log.termination = Termination::kAborted;
      log.diagnosis = std::string("step ") + std::to_string(k) + ": " + e.what();
      break;
    }

    const size_t first_record = log.records.size();
    bool all_stopped = true;
    for (size_t i = 0; i < M; ++i) {
      log.records.push_back(make_record(config, *runs[i].agent, runs[i].ctx,
                                        results[i], runs[i].x, k, t,
                                        runs[i].previous_nominal));
      log.events.push_back(results[i].event);
      all_stopped = all_stopped && results[i].stopped;
      if (observer) {
        observer({ids[i], k, t, &runs[i].x, &runs[i].ctx, &results[i]});
      }
    }

    std::string abort_reason;
    for (size_t i = 0; i < M; ++i) {
      if (runs[i].ctx.consecutive_infeasible > kMaxConsecutiveInfeasible) {
        abort_reason = "agent " + std::to_string(ids[i]) + " infeasible for " +
                       std::to_string(runs[i].ctx.consecutive_infeasible) +
                       " consecutive steps";
      }
    }
    if (!abort_reason.empty()) {
      log.termination = Termination::kAborted;
      log.diagnosis = abort_reason;
      break;
    }
    if (all_stopped) {
      log.termination = Termination::kRendezvous;
      log.rendezvous_step = k;
      break;
    }
    try {
      for (size_t i = 0; i < M; ++i) {
        advance(config, &runs[i], &log.records[first_record + i], t);
      }
    } catch (const Error& e) {
      log.termination = Termination::kAborted;
      log.diagnosis = std::string("plant at step ") + std::to_string(k) +
                      ": " + e.what();
      break;
    }
  }
  bus.close();
  log.messages = bus.log();
  log.bus = bus.stats();
  log.final_theta = coordinator.theta;
  return log;
}

namespace {

Message make_frame(MessageKind kind, int sender, int step,
                   const Eigen::Vector3d& theta, double ts) {
  Message m;
  m.kind = kind;
  m.sender = sender;
  m.step = step;
  m.theta = theta;
  m.ts = ts;
  return m;
}

Message read_message(LineSocket* socket, double timeout, const char* what) {
  const std::optional<std::string> line = socket->read_line(timeout);
  if (!line) throw TransportError(std::string("timed out waiting for ") + what);
  return decode_message(*line);
}

struct BrokerPeer {
  LineSocket socket;
  Eigen::Vector3d y0 = Eigen::Vector3d::Zero();
  std::vector<Message> pending;  // ThetaUpdates not yet forwarded
  Eigen::Vector3d view = Eigen::Vector3d::Zero();  // agent's replica
  bool stopped = false;
};

}  // namespace

TelemetryLog run_broker(const ScenarioConfig& config, int port,
                        const std::function<void(int)>& on_listening) {
  TelemetryLog log;
  log.scenario = config.name;
  log.dt = config.dt;
  log.epsilon = config.stop_epsilon < 0.0 ? config.epsilon : config.stop_epsilon;
  log.landing_radius = config.landing_radius;
  log.transport = to_string(Transport::kSocket);
  const double stop_tol = log.epsilon;
  const double timeout = config.comms.timeout;

  Listener listener("0.0.0.0", port);
  spdlog::info("broker listening on port {}", listener.port());
  if (on_listening) on_listening(listener.port());

  const size_t M = config.agents.size();
  std::map<int, BrokerPeer> peers;
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration<double>(timeout);
  while (peers.size() < M) {
    const double left = std::chrono::duration<double>(
                            deadline - std::chrono::steady_clock::now())
                            .count();
    if (left <= 0.0) {
      log.termination = Termination::kTimeout;
      log.diagnosis = "only " + std::to_string(peers.size()) + " of " +
                      std::to_string(M) + " agents connected";
      return log;
    }
    std::optional<LineSocket> socket = listener.accept(std::min(left, 0.5));
    if (!socket) continue;
    const Message hello = read_message(&*socket, timeout, "agent announce");
    if (hello.kind != MessageKind::kStateAnnounce || hello.step != -1 ||
        hello.sender < 0 || hello.sender >= static_cast<int>(M) ||
        peers.count(hello.sender)) {
      throw TransportError("unexpected handshake from agent " +
                           std::to_string(hello.sender));
    }
    spdlog::info("agent {} connected", hello.sender);
    BrokerPeer peer;
    peer.socket = std::move(*socket);
    peer.y0 = hello.theta;
    peers.emplace(hello.sender, std::move(peer));
  }

  std::vector<Eigen::Vector3d> outputs;
  std::vector<double> weights;
  for (const auto& [id, peer] : peers) {
    outputs.push_back(peer.y0);
    weights.push_back(config.agents[static_cast<size_t>(id)].weight);
  }
  RendezvousState coordinator;
  coordinator.theta = theta_init(outputs, weights, theta_box(config));
  coordinator.weights = weights;
  log.theta0 = coordinator.theta;
  for (auto& [id, peer] : peers) peer.view = coordinator.theta;

  std::set<std::pair<int, int>> seen;
  const int final_step = last_step(config);
  const int delay = config.comms.delay_steps;

  auto forward_pending = [&](int id, BrokerPeer* peer, int k) {
    std::vector<Message> keep;
    for (const Message& m : peer->pending) {
      if (m.step + delay <= k) {
        peer->socket.send_line(encode_message(m));
        peer->view = m.theta;
      } else {
        keep.push_back(m);
      }
    }
    peer->pending = std::move(keep);
    (void)id;
  };
  // Reads one agent's reply for step k; returns its ThetaUpdate, if any.
  auto read_reply = [&](int id, BrokerPeer* peer,
                        int k) -> std::optional<Message> {
    std::optional<Message> update;
    for (;;) {
      const Message m = read_message(&peer->socket, timeout, "agent reply");
      if (m.sender != id || m.step != k) {
        throw TransportError("out-of-order message from agent " +
                             std::to_string(m.sender));
      }
      if (m.kind == MessageKind::kThetaUpdate) {
        if (!seen.insert({m.sender, m.step}).second) {
          ++log.bus.duplicates_dropped;
          continue;
        }
        update = m;
        peer->view = m.theta;
      } else if (m.kind == MessageKind::kStateAnnounce) {
        peer->stopped = (m.theta - peer->view).norm() <= stop_tol;
        return update;
      } else {
        throw TransportError("unexpected message kind from agent " +
                             std::to_string(id));
      }
    }
  };
  auto publish = [&](const Message& m, double t) {
    log.messages.push_back(m);
    ++log.bus.total_messages;
    ++log.bus.messages_per_step[m.step];
    for (auto& [id, peer] : peers) peer.pending.push_back(m);
    apply_update(&coordinator, m, t, &log);
  };

  double end_ts = -1.0;
  try {
    for (int k = 0;; ++k) {
      const double t = k * config.dt;
      if (k > final_step) {
        log.termination = Termination::kTimeout;
        log.diagnosis = "max_sim_time elapsed";
        break;
      }
      std::vector<Message> published;
      if (config.update_order == UpdateOrder::kSequential) {
        for (auto& [id, peer] : peers) {
          forward_pending(id, &peer, k);
          peer.socket.send_line(encode_message(
              make_frame(MessageKind::kAck, -1, k, coordinator.theta, t)));
          if (auto update = read_reply(id, &peer, k)) {
            publish(*update, t);
            published.push_back(*update);
          }
        }
      } else {
        for (auto& [id, peer] : peers) {
          forward_pending(id, &peer, k);
          peer.socket.send_line(encode_message(
              make_frame(MessageKind::kAck, -1, k, coordinator.theta, t)));
        }
        for (auto& [id, peer] : peers) {
          if (auto update = read_reply(id, &peer, k)) {
            published.push_back(*update);
          }
        }
        for (const Message& m : published) publish(m, t);
        note_conflict(published, k, &log);
      }
      bool all_stopped = true;
      for (const auto& [id, peer] : peers) all_stopped &= peer.stopped;
      if (all_stopped) {
        log.termination = Termination::kRendezvous;
        log.rendezvous_step = k;
        end_ts = t;
        break;
      }
    }
  } catch (const Error& e) {
    log.termination = Termination::kAborted;
    log.diagnosis = e.what();
  }
  log.final_theta = coordinator.theta;
  for (auto& [id, peer] : peers) {
    try {
      peer.socket.send_line(encode_message(
          make_frame(MessageKind::kAck, -1, -1, coordinator.theta, end_ts)));
    } catch (const TransportError&) {
    }
    log.bus.bytes_on_wire +=
        peer.socket.bytes_sent() + peer.socket.bytes_received();
  }
  return log;
}

TelemetryLog run_agent(const ScenarioConfig& config, int id,
                       const std::string& broker_addr, int port) {
  return run_agent(config, prepare_agent(config, id), broker_addr, port);
}

TelemetryLog run_agent(const ScenarioConfig& config,
                       const PreparedAgent& agent,
                       const std::string& broker_addr, int port) {
  const int id = agent.id;
  TelemetryLog log = make_log(config, {agent});
  log.transport = to_string(Transport::kSocket);
  const double timeout = config.comms.timeout;

  LineSocket socket = connect_with_retry(
      broker_addr, port,
      {config.comms.connect_retries, config.comms.retry_delay});
  socket.send_line(encode_message(make_frame(MessageKind::kStateAnnounce, id,
                                             -1, agent.model->output(agent.x0),
                                             0.0)));
  AgentRun run{&agent, {}, agent.x0, false};
  bool initialized = false;
  std::vector<Message> incoming;
  for (;;) {
    const Message m = read_message(&socket, timeout, "broker");
    if (m.kind == MessageKind::kThetaUpdate) {
      incoming.push_back(m);
      log.messages.push_back(m);
      continue;
    }
    if (m.kind != MessageKind::kAck) {
      throw TransportError("unexpected message kind from broker");
    }
    if (m.step < 0) {
      log.final_theta = m.theta;
      if (m.ts >= 0.0) {
        log.termination = Termination::kRendezvous;
        log.rendezvous_step = static_cast<int>(std::lround(m.ts / config.dt));
      } else {
        log.termination = Termination::kTimeout;
      }
      break;
    }
    const int k = m.step;
    const double t = k * config.dt;
    if (!initialized) {
      run.ctx = make_context(config, agent, m.theta);
      log.theta0 = m.theta;
      initialized = true;
    }
    // Finish the previous step now that the broker has moved on.
    if (!log.records.empty()) {
      StepRecord& prev = log.records.back();
      advance(config, &run, &prev, prev.t);
    }
    const AgentStepResult res = agent_step(&run.ctx, run.x, incoming, k, t);
    incoming.clear();
    log.records.push_back(make_record(config, agent, run.ctx, res, run.x, k, t,
                                      run.previous_nominal));
    log.events.push_back(res.event);
    if (res.outgoing) socket.send_line(encode_message(*res.outgoing));
    Message announce = make_frame(MessageKind::kStateAnnounce, id, k,
                                  agent.model->output(run.x), t);
    announce.alpha[id] = run.ctx.alpha;
    socket.send_line(encode_message(announce));
  }
  // Own updates come back through the broker; keep each message once.
  std::vector<Message> unique;
  std::set<std::pair<int, int>> seen;
  for (const Message& m : log.messages) {
    if (seen.insert({m.sender, m.step}).second) unique.push_back(m);
  }
  log.messages = std::move(unique);
  log.bus.total_messages = static_cast<std::int64_t>(log.messages.size());
  log.bus.bytes_on_wire = socket.bytes_sent() + socket.bytes_received();
  return log;
}

TelemetryLog run_scenario_socket(const ScenarioConfig& config,
                                 const std::vector<PreparedAgent>& agents) {
  std::promise<int> port_promise;
  std::future<int> port_future = port_promise.get_future();
  std::future<TelemetryLog> broker =
      std::async(std::launch::async, [&config, &port_promise] {
        bool listening = false;
        try {
          return run_broker(config, 0, [&](int port) {
            listening = true;
            port_promise.set_value(port);
          });
        } catch (...) {
          if (!listening) port_promise.set_exception(std::current_exception());
          throw;
        }
      });
  const int port = port_future.get();
  std::vector<std::future<TelemetryLog>> clients;
  for (const PreparedAgent& a : agents) {
    clients.push_back(std::async(std::launch::async, [&config, &a, port] {
      return run_agent(config, a, "127.0.0.1", port);
    }));
  }
  TelemetryLog log = broker.get();
  log.scenario = config.name;
  for (const PreparedAgent& a : agents) {
    log.agents.push_back(
        make_agent_info(a.id, *a.model, a.ingredients->alpha_bar));
  }
  std::string client_errors;
  for (std::future<TelemetryLog>& c : clients) {
    try {
      TelemetryLog part = c.get();
      log.records.insert(log.records.end(), part.records.begin(),
                         part.records.end());
      log.events.insert(log.events.end(), part.events.begin(),
                        part.events.end());
    } catch (const Error& e) {
      client_errors += std::string(client_errors.empty() ? "" : "; ") + e.what();
    }
  }
  if (!client_errors.empty() && log.termination != Termination::kAborted) {
    log.termination = Termination::kAborted;
    log.diagnosis = client_errors;
  }
  auto by_step_agent = [](const auto& a, const auto& b) {
    return a.step != b.step ? a.step < b.step : a.agent < b.agent;
  };
  std::stable_sort(log.records.begin(), log.records.end(), by_step_agent);
  std::stable_sort(log.events.begin(), log.events.end(), by_step_agent);
  return log;
}

}  // namespace rdv
