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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace rdv {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr char kEventsFile[] = "events.jsonl";
constexpr char kSummaryFile[] = "summary.json";

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

DocpStatus status_from_string(const std::string& s) {
  if (s == "optimal") return DocpStatus::kOptimal;
  if (s == "max_iter") return DocpStatus::kMaxIter;
  if (s == "infeasible") return DocpStatus::kInfeasible;
  throw Error("unknown solver status '" + s + "'");
}

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

// NaN and infinities are written as null by the JSON library.
double num(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN()
                     : j.get<double>();
}

Eigen::VectorXd vec_from(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = num(j[i]);
  }
  return v;
}

std::string csv_name(const AgentInfo& a) {
  return "agent_" + std::to_string(a.id) + "_" + a.model + ".csv";
}

json step_json(const StepRecord& r) {
  json j = {
      {"type", "step"},
      {"step", r.step},
      {"t", r.t},
      {"agent", r.agent},
      {"y", vec_json(r.y)},
      {"y_T", vec_json(r.y_T)},
      {"V_o", r.V_o},
      {"theta_solved", vec_json(r.theta_solved)},
      {"theta", vec_json(r.theta)},
      {"alpha", r.alpha},
      {"status", to_string(r.status)},
      {"iterations", r.iterations},
      {"cost", r.cost},
      {"kkt_residual", r.kkt_residual},
      {"constraint_residual", r.constraint_residual},
      {"terminal_margin", r.terminal_margin},
      {"solve_seconds", r.solve_seconds},
      {"triggered", r.triggered},
      {"stopped", r.stopped},
      {"degraded", r.degraded},
      {"adopted", r.adopted},
      {"state_violation", r.state_violation},
      {"input_violation", r.input_violation},
      {"prediction_error", r.prediction_error},
  };
  if (r.certificate) {
    const CertificateRecord& c = *r.certificate;
    j["certificate"] = {{"update", c.update},
                        {"nominal", c.nominal},
                        {"ok", c.ok},
                        {"terminal_margin", c.terminal_margin},
                        {"state_violation", c.state_violation},
                        {"input_violation", c.input_violation}};
  }
  if (r.predicted_outputs.size() > 0) {
    json p = json::array();
    for (Eigen::Index k = 0; k < r.predicted_outputs.cols(); ++k) {
      p.push_back(vec_json(r.predicted_outputs.col(k)));
    }
    j["predicted_outputs"] = p;
  }
  return j;
}

StepRecord step_from(const json& j) {
  StepRecord r;
  r.step = j.at("step").get<int>();
  r.t = j.at("t").get<double>();
  r.agent = j.at("agent").get<int>();
  r.y = vec_from(j.at("y"));
  r.y_T = vec_from(j.at("y_T"));
  r.V_o = num(j.at("V_o"));
  r.theta_solved = vec_from(j.at("theta_solved"));
  r.theta = vec_from(j.at("theta"));
  r.alpha = num(j.at("alpha"));
  r.status = status_from_string(j.at("status").get<std::string>());
  r.iterations = j.at("iterations").get<int>();
  r.cost = num(j.at("cost"));
  r.kkt_residual = num(j.at("kkt_residual"));
  r.constraint_residual = num(j.at("constraint_residual"));
  r.terminal_margin = num(j.at("terminal_margin"));
  r.solve_seconds = num(j.at("solve_seconds"));
  r.triggered = j.at("triggered").get<bool>();
  r.stopped = j.at("stopped").get<bool>();
  r.degraded = j.at("degraded").get<bool>();
  r.adopted = j.at("adopted").get<bool>();
  r.state_violation = num(j.at("state_violation"));
  r.input_violation = num(j.at("input_violation"));
  r.prediction_error = num(j.at("prediction_error"));
  if (j.contains("certificate")) {
    const json& c = j["certificate"];
    r.certificate = CertificateRecord{
        c.at("update").get<bool>(),         c.at("nominal").get<bool>(),
        c.at("ok").get<bool>(),             num(c.at("terminal_margin")),
        num(c.at("state_violation")),       num(c.at("input_violation"))};
  }
  if (j.contains("predicted_outputs")) {
    const json& p = j["predicted_outputs"];
    r.predicted_outputs.resize(3, static_cast<Eigen::Index>(p.size()));
    for (size_t k = 0; k < p.size(); ++k) {
      r.predicted_outputs.col(static_cast<Eigen::Index>(k)) = vec_from(p[k]);
    }
  }
  return r;
}

json event_json(const TriggerEvent& e) {
  return {{"type", "trigger"},
          {"step", e.step},
          {"t", e.t},
          {"agent", e.agent},
          {"V_o", e.V_o},
          {"triggered", e.triggered},
          {"theta_before", vec_json(e.theta_before)},
          {"theta_after", vec_json(e.theta_after)}};
}

json update_json(const ThetaUpdateRecord& u) {
  return {{"type", "update"},
          {"step", u.step},
          {"t", u.t},
          {"agent", u.agent},
          {"theta_before", vec_json(u.theta_before)},
          {"theta_after", vec_json(u.theta_after)}};
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

std::vector<std::string> names(const std::string& prefix, int count) {
  std::vector<std::string> out;
  for (int i = 0; i < count; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

}  // namespace

std::string to_string(Termination termination) {
  switch (termination) {
    case Termination::kRendezvous:
      return "rendezvous";
    case Termination::kTimeout:
      return "timeout";
    case Termination::kAborted:
      return "aborted";
  }
  return "unknown";
}

Termination termination_from_string(const std::string& name) {
  if (name == "rendezvous") return Termination::kRendezvous;
  if (name == "timeout") return Termination::kTimeout;
  if (name == "aborted") return Termination::kAborted;
  throw Error("unknown termination '" + name + "'");
}

AgentInfo make_agent_info(int id, const AgentModel& model, double alpha_bar) {
  AgentInfo info{id, model.name, model.n, model.m, alpha_bar, {}, {}};
  if (model.name == "quadcopter") {
    info.state_names = {"p_x", "p_y", "p_z",  "v_x", "v_y",
                        "v_z", "roll", "pitch", "yaw"};
    info.input_names = {"thrust", "roll_cmd", "pitch_cmd", "yaw_rate"};
  } else if (model.name == "boat") {
    info.state_names = {"p_x", "p_y", "psi", "v_x", "v_y", "omega_psi"};
    info.input_names = {"tau_x", "tau_y", "tau_psi"};
  } else {
    info.state_names = names("x", model.n);
    info.input_names = names("u", model.m);
  }
  return info;
}

Summary compute_metrics(const TelemetryLog& log) {
  Summary s;
  s.scenario = log.scenario;
  s.termination = log.termination;
  s.diagnosis = log.diagnosis;
  s.rendezvous_step = log.rendezvous_step;
  if (log.termination == Termination::kRendezvous) {
    s.rendezvous_time = log.rendezvous_step * log.dt;
  }
  s.message_count = static_cast<std::int64_t>(log.messages.size());
  s.theta0 = log.theta0;
  s.final_theta = log.final_theta;
  s.conflicts = static_cast<int>(log.conflicts.size());

  int last_update_step = -1;
  for (const ThetaUpdateRecord& u : log.updates) {
    if (u.theta_after != u.theta_before) {
      ++s.theta_updates;
      s.cumulative_theta_displacement += (u.theta_after - u.theta_before).norm();
      last_update_step = std::max(last_update_step, u.step);
    }
  }
  for (const TriggerEvent& e : log.events) {
    if (e.triggered) ++s.triggered_events;
  }
  for (const Message& m : log.messages) {
    if (m.step > last_update_step) ++s.messages_after_last_update;
  }

  std::set<int> steps;
  std::vector<double> solve_times;
  std::map<int, const StepRecord*> last_by_agent;
  for (const StepRecord& r : log.records) {
    steps.insert(r.step);
    last_by_agent[r.agent] = &r;
    if (r.status != DocpStatus::kOptimal) ++s.non_optimal_steps;
    if (r.degraded) ++s.degraded_steps;
    s.max_state_violation = std::max(s.max_state_violation, r.state_violation);
    s.max_input_violation = std::max(s.max_input_violation, r.input_violation);
    if (std::isfinite(r.terminal_margin)) {
      s.min_terminal_margin = std::min(s.min_terminal_margin, r.terminal_margin);
    }
    if (std::isfinite(r.prediction_error)) {
      s.max_prediction_error =
          std::max(s.max_prediction_error, r.prediction_error);
    }
    if (r.certificate) {
      ++s.certificates_checked;
      if (!r.certificate->ok) ++s.certificates_failed;
      if (r.certificate->update && r.certificate->nominal) {
        ++s.update_certificates_nominal;
        if (!r.certificate->ok) ++s.update_certificates_nominal_failed;
      }
    }
    solve_times.push_back(r.solve_seconds);
  }
  s.steps = static_cast<int>(steps.size());
  if (!solve_times.empty()) {
    double sum = 0.0;
    for (double v : solve_times) sum += v;
    s.solve_mean = sum / static_cast<double>(solve_times.size());
    std::sort(solve_times.begin(), solve_times.end());
    s.solve_max = solve_times.back();
    const size_t idx = static_cast<size_t>(
        std::ceil(0.95 * static_cast<double>(solve_times.size()))) - 1;
    s.solve_p95 = solve_times[std::min(idx, solve_times.size() - 1)];
  }
  if (last_by_agent.size() >= 2) {
    double d = 0.0, dxy = 0.0;
    for (auto a = last_by_agent.begin(); a != last_by_agent.end(); ++a) {
      for (auto b = std::next(a); b != last_by_agent.end(); ++b) {
        const Eigen::Vector3d diff = a->second->y - b->second->y;
        d = std::max(d, diff.norm());
        dxy = std::max(dxy, diff.head<2>().norm());
      }
    }
    s.final_distance = d;
    s.final_xy_distance = dxy;
    s.landed = log.termination == Termination::kRendezvous &&
               dxy <= log.landing_radius;
  }
  return s;
}

std::string summary_to_json(const Summary& s) {
  const json j = {
      {"scenario", s.scenario},
      {"termination", to_string(s.termination)},
      {"diagnosis", s.diagnosis},
      {"steps", s.steps},
      {"rendezvous_step", s.rendezvous_step},
      {"rendezvous_time", s.rendezvous_time},
      {"message_count", s.message_count},
      {"triggered_events", s.triggered_events},
      {"theta_updates", s.theta_updates},
      {"conflicts", s.conflicts},
      {"theta0", vec_json(s.theta0)},
      {"final_theta", vec_json(s.final_theta)},
      {"cumulative_theta_displacement", s.cumulative_theta_displacement},
      {"final_distance", s.final_distance},
      {"final_xy_distance", s.final_xy_distance},
      {"landed", s.landed},
      {"non_optimal_steps", s.non_optimal_steps},
      {"degraded_steps", s.degraded_steps},
      {"messages_after_last_update", s.messages_after_last_update},
      {"max_state_violation", s.max_state_violation},
      {"max_input_violation", s.max_input_violation},
      {"min_terminal_margin", s.min_terminal_margin},
      {"max_prediction_error", s.max_prediction_error},
      {"certificates_checked", s.certificates_checked},
      {"certificates_failed", s.certificates_failed},
      {"update_certificates_nominal", s.update_certificates_nominal},
      {"update_certificates_nominal_failed",
       s.update_certificates_nominal_failed},
      {"solve_seconds", {{"mean", s.solve_mean},
                         {"p95", s.solve_p95},
                         {"max", s.solve_max}}},
  };
  return j.dump(2) + "\n";
}

std::string format_summary(const Summary& s) {
  std::ostringstream os;
  os.precision(6);
  os << "scenario            " << s.scenario << "\n"
     << "termination         " << to_string(s.termination);
  if (!s.diagnosis.empty()) os << " (" << s.diagnosis << ")";
  os << "\n";
  os << "steps               " << s.steps << "\n";
  if (s.termination == Termination::kRendezvous) {
    os << "rendezvous time     " << s.rendezvous_time << " s (step "
       << s.rendezvous_step << ")\n";
  }
  os << "messages            " << s.message_count << "\n"
     << "triggered events    " << s.triggered_events << "\n"
     << "theta updates       " << s.theta_updates << "\n"
     << "theta(t0)           [" << s.theta0.transpose() << "]\n"
     << "final theta         [" << s.final_theta.transpose() << "]\n"
     << "final distance      " << s.final_distance << " m (xy "
     << s.final_xy_distance << " m, landed " << (s.landed ? "yes" : "no")
     << ")\n"
     << "non-optimal steps   " << s.non_optimal_steps << " (degraded "
     << s.degraded_steps << ")\n"
     << "max violation       state " << s.max_state_violation << ", input "
     << s.max_input_violation << "\n"
     << "min terminal margin " << s.min_terminal_margin << "\n"
     << "certificates        " << s.certificates_checked << " checked, "
     << s.certificates_failed << " failed\n"
     << "solve time          mean " << s.solve_mean * 1e3 << " ms, p95 "
     << s.solve_p95 * 1e3 << " ms, max " << s.solve_max * 1e3 << " ms\n";
  return os.str();
}

void write_telemetry(const TelemetryLog& log, const std::string& dir,
                     bool force) {
  const fs::path root(dir);
  std::vector<fs::path> files = {root / kEventsFile, root / kSummaryFile};
  for (const AgentInfo& a : log.agents) files.push_back(root / csv_name(a));
  if (!force) {
    for (const fs::path& f : files) {
      if (fs::exists(f)) {
        throw Error("refusing to overwrite '" + f.string() +
                    "' (use --force)");
      }
    }
  }
  fs::create_directories(root);

  std::map<int, std::ofstream> csv;
  for (const AgentInfo& a : log.agents) {
    std::ofstream& out = csv[a.id];
    out.open(root / csv_name(a));
    if (!out) throw Error("cannot write " + (root / csv_name(a)).string());
    out << "t";
    for (const std::string& n : a.state_names) out << "," << n;
    for (const std::string& n : a.input_names) out << "," << n;
    out << ",V_o,theta_x,theta_y,theta_z,alpha,solver_status\n";
  }
  for (const StepRecord& r : log.records) {
    std::ofstream& out = csv.at(r.agent);
    out << format_double(r.t);
    for (Eigen::Index i = 0; i < r.x.size(); ++i) out << "," << format_double(r.x(i));
    for (Eigen::Index i = 0; i < r.u.size(); ++i) out << "," << format_double(r.u(i));
    out << "," << format_double(r.V_o);
    for (int i = 0; i < 3; ++i) out << "," << format_double(r.theta(i));
    out << "," << format_double(r.alpha) << "," << to_string(r.status) << "\n";
  }

  std::ofstream events(root / kEventsFile);
  if (!events) throw Error("cannot write events file in " + dir);
  json agents = json::array();
  for (const AgentInfo& a : log.agents) {
    agents.push_back({{"id", a.id},
                      {"model", a.model},
                      {"n", a.n},
                      {"m", a.m},
                      {"alpha_bar", a.alpha_bar},
                      {"state_names", a.state_names},
                      {"input_names", a.input_names},
                      {"csv", csv_name(a)}});
  }
  events << json{{"type", "scenario"},
                 {"name", log.scenario},
                 {"dt", log.dt},
                 {"epsilon", log.epsilon},
                 {"landing_radius", log.landing_radius},
                 {"transport", log.transport},
                 {"theta0", vec_json(log.theta0)},
                 {"agents", agents}}
                .dump()
         << "\n";
  // Interleave per step: step records, triggers, messages, updates.
  size_t ie = 0, im = 0, iu = 0, ic = 0;
  auto flush_until = [&](int step) {
    for (; ie < log.events.size() && log.events[ie].step <= step; ++ie) {
      events << event_json(log.events[ie]).dump() << "\n";
    }
    for (; im < log.messages.size() && log.messages[im].step <= step; ++im) {
      json m = json::parse(encode_message(log.messages[im]));
      m["type"] = "message";
      events << m.dump() << "\n";
    }
    for (; iu < log.updates.size() && log.updates[iu].step <= step; ++iu) {
      events << update_json(log.updates[iu]).dump() << "\n";
    }
    for (; ic < log.conflicts.size() && log.conflicts[ic].step <= step; ++ic) {
      const ConflictRecord& c = log.conflicts[ic];
      events << json{{"type", "conflict"},
                     {"step", c.step},
                     {"senders", c.senders},
                     {"winner", c.winner}}
                    .dump()
             << "\n";
    }
  };
  for (size_t i = 0; i < log.records.size(); ++i) {
    const StepRecord& r = log.records[i];
    events << step_json(r).dump() << "\n";
    const bool last_of_step =
        i + 1 == log.records.size() || log.records[i + 1].step != r.step;
    if (last_of_step) flush_until(r.step);
  }
  flush_until(std::numeric_limits<int>::max());
  events << json{{"type", "summary"},
                 {"termination", to_string(log.termination)},
                 {"rendezvous_step", log.rendezvous_step},
                 {"diagnosis", log.diagnosis},
                 {"final_theta", vec_json(log.final_theta)},
                 {"bus",
                  {{"total_messages", log.bus.total_messages},
                   {"bytes_on_wire", log.bus.bytes_on_wire},
                   {"duplicates_dropped", log.bus.duplicates_dropped}}}}
                .dump()
         << "\n";

  std::ofstream summary(root / kSummaryFile);
  summary << summary_to_json(compute_metrics(log));
}

TelemetryLog read_telemetry(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream events(root / kEventsFile);
  if (!events) throw Error("no telemetry events file in '" + dir + "'");
  TelemetryLog log;
  std::map<std::string, std::string> csv_files;
  bool have_header = false, have_summary = false;
  std::string line;
  int line_no = 0;
  while (std::getline(events, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "scenario") {
        have_header = true;
        log.scenario = j.at("name").get<std::string>();
        log.dt = j.at("dt").get<double>();
        log.epsilon = j.at("epsilon").get<double>();
        log.landing_radius = j.at("landing_radius").get<double>();
        log.transport = j.at("transport").get<std::string>();
        log.theta0 = vec_from(j.at("theta0"));
        for (const json& a : j.at("agents")) {
          AgentInfo info;
          info.id = a.at("id").get<int>();
          info.model = a.at("model").get<std::string>();
          info.n = a.at("n").get<int>();
          info.m = a.at("m").get<int>();
          info.alpha_bar = a.at("alpha_bar").get<double>();
          info.state_names = a.at("state_names").get<std::vector<std::string>>();
          info.input_names = a.at("input_names").get<std::vector<std::string>>();
          log.agents.push_back(info);
        }
      } else if (type == "step") {
        log.records.push_back(step_from(j));
      } else if (type == "trigger") {
        TriggerEvent e;
        e.step = j.at("step").get<int>();
        e.t = j.at("t").get<double>();
        e.agent = j.at("agent").get<int>();
        e.V_o = num(j.at("V_o"));
        e.triggered = j.at("triggered").get<bool>();
        e.theta_before = vec_from(j.at("theta_before"));
        e.theta_after = vec_from(j.at("theta_after"));
        log.events.push_back(e);
      } else if (type == "message") {
        json m = j;
        m.erase("type");
        log.messages.push_back(decode_message(m.dump()));
      } else if (type == "update") {
        log.updates.push_back({j.at("step").get<int>(), j.at("t").get<double>(),
                               j.at("agent").get<int>(),
                               vec_from(j.at("theta_before")),
                               vec_from(j.at("theta_after"))});
      } else if (type == "conflict") {
        log.conflicts.push_back({j.at("step").get<int>(),
                                 j.at("senders").get<std::vector<int>>(),
                                 j.at("winner").get<int>()});
      } else if (type == "summary") {
        have_summary = true;
        log.termination =
            termination_from_string(j.at("termination").get<std::string>());
        log.rendezvous_step = j.at("rendezvous_step").get<int>();
        log.diagnosis = j.at("diagnosis").get<std::string>();
        log.final_theta = vec_from(j.at("final_theta"));
        const json& bus = j.at("bus");
        log.bus.total_messages = bus.at("total_messages").get<std::int64_t>();
        log.bus.bytes_on_wire = bus.at("bytes_on_wire").get<std::int64_t>();
        log.bus.duplicates_dropped =
            bus.at("duplicates_dropped").get<std::int64_t>();
      } else {
        throw Error("unknown record type '" + type + "'");
      }
    } catch (const Error& e) {
      throw Error(std::string(kEventsFile) + ":" + std::to_string(line_no) +
                  ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(std::string(kEventsFile) + ":" + std::to_string(line_no) +
                  ": " + e.what());
    }
  }
  if (!have_header || !have_summary) {
    throw Error("telemetry in '" + dir + "' is incomplete");
  }
  for (const Message& m : log.messages) ++log.bus.messages_per_step[m.step];

  // States and inputs come from the per-agent CSV files.
  for (const AgentInfo& a : log.agents) {
    const fs::path path = root / csv_name(a);
    std::ifstream in(path);
    if (!in) throw Error("missing telemetry file " + path.string());
    std::getline(in, line);
    const std::vector<std::string> header = split_csv(line);
    const size_t expected = 1 + a.state_names.size() + a.input_names.size() + 6;
    if (header.size() != expected || header.front() != "t" ||
        header.back() != "solver_status") {
      throw Error(path.string() + ": unexpected column layout");
    }
    size_t next = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const std::vector<std::string> cells = split_csv(line);
      if (cells.size() != expected) {
        throw Error(path.string() + ": wrong number of columns");
      }
      while (next < log.records.size() && log.records[next].agent != a.id) {
        ++next;
      }
      if (next == log.records.size()) {
        throw Error(path.string() + ": more rows than step records");
      }
      StepRecord& r = log.records[next++];
      r.x.resize(a.n);
      r.u.resize(a.m);
      for (int i = 0; i < a.n; ++i) r.x(i) = std::stod(cells[1 + i]);
      for (int i = 0; i < a.m; ++i) r.u(i) = std::stod(cells[1 + a.n + i]);
    }
  }
  return log;
}

}  // namespace rdv
