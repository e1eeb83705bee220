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

#include "rdv/config.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "rdv/rendezvous.h"
#include "toml.hpp"

namespace rdv {
namespace {

// Reads typed values from one table and remembers which keys were used, so
// that leftovers can be reported as unknown.
class Reader {
 public:
  Reader(const toml::table& table, std::string path)
      : table_(table), path_(std::move(path)) {}

  std::string where(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const toml::node* find(const std::string& key) {
    used_.insert(key);
    return table_.get(key);
  }

  void get(const std::string& key, double* out) {
    const toml::node* node = find(key);
    if (node == nullptr) return;
    if (const auto v = node->value_exact<double>()) {
      *out = *v;
    } else if (const auto i = node->value_exact<int64_t>()) {
      *out = static_cast<double>(*i);
    } else {
      throw ConfigError(where(key) + ": expected a number");
    }
  }

  void get(const std::string& key, int* out) {
    const toml::node* node = find(key);
    if (node == nullptr) return;
    const auto v = node->value_exact<int64_t>();
    if (!v) throw ConfigError(where(key) + ": expected an integer");
    *out = static_cast<int>(*v);
  }

  void get(const std::string& key, std::uint64_t* out) {
    int64_t value = static_cast<int64_t>(*out);
    const toml::node* node = find(key);
    if (node == nullptr) return;
    const auto v = node->value_exact<int64_t>();
    if (!v || *v < 0) {
      throw ConfigError(where(key) + ": expected a non-negative integer");
    }
    value = *v;
    *out = static_cast<std::uint64_t>(value);
  }

  void get(const std::string& key, bool* out) {
    const toml::node* node = find(key);
    if (node == nullptr) return;
    const auto v = node->value_exact<bool>();
    if (!v) throw ConfigError(where(key) + ": expected a boolean");
    *out = *v;
  }

  void get(const std::string& key, std::string* out) {
    const toml::node* node = find(key);
    if (node == nullptr) return;
    const auto v = node->value_exact<std::string>();
    if (!v) throw ConfigError(where(key) + ": expected a string");
    *out = *v;
  }

  static Eigen::VectorXd to_vector(const toml::node& node,
                                   const std::string& where) {
    const toml::array* array = node.as_array();
    if (array == nullptr) throw ConfigError(where + ": expected an array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(array->size()));
    for (size_t i = 0; i < array->size(); ++i) {
      const toml::node& e = *array->get(i);
      if (const auto d = e.value_exact<double>()) {
        v(static_cast<Eigen::Index>(i)) = *d;
      } else if (const auto n = e.value_exact<int64_t>()) {
        v(static_cast<Eigen::Index>(i)) = static_cast<double>(*n);
      } else {
        throw ConfigError(where + ": array entries must be numbers");
      }
    }
    return v;
  }

  void get(const std::string& key, Eigen::VectorXd* out) {
    const toml::node* node = find(key);
    if (node != nullptr) *out = to_vector(*node, where(key));
  }

  void get(const std::string& key, Eigen::Vector3d* out) {
    const toml::node* node = find(key);
    if (node == nullptr) return;
    const Eigen::VectorXd v = to_vector(*node, where(key));
    if (v.size() != 3) throw ConfigError(where(key) + ": expected 3 entries");
    *out = v;
  }

  void get(const std::string& key, Eigen::MatrixXd* out) {
    const toml::node* node = find(key);
    if (node == nullptr) return;
    const toml::array* rows = node->as_array();
    if (rows == nullptr || rows->empty()) {
      throw ConfigError(where(key) + ": expected a non-empty list of rows");
    }
    Eigen::MatrixXd m;
    for (size_t i = 0; i < rows->size(); ++i) {
      const Eigen::VectorXd row = to_vector(*rows->get(i), where(key));
      if (i == 0) m.resize(static_cast<Eigen::Index>(rows->size()), row.size());
      if (row.size() != m.cols()) {
        throw ConfigError(where(key) + ": rows must have equal length");
      }
      m.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
    *out = m;
  }

  const toml::table* table(const std::string& key) {
    const toml::node* node = find(key);
    if (node == nullptr) return nullptr;
    const toml::table* t = node->as_table();
    if (t == nullptr) throw ConfigError(where(key) + ": expected a table");
    return t;
  }

  const toml::array* array_of_tables(const std::string& key) {
    const toml::node* node = find(key);
    if (node == nullptr) return nullptr;
    const toml::array* a = node->as_array();
    if (a == nullptr || !a->is_array_of_tables()) {
      throw ConfigError(where(key) + ": expected an array of tables");
    }
    return a;
  }

  void reject_unknown() const {
    for (const auto& [key, node] : table_) {
      const std::string k(key.str());
      if (!used_.count(k)) throw ConfigError("unknown key '" + where(k) + "'");
    }
  }

 private:
  const toml::table& table_;
  std::string path_;
  std::set<std::string> used_;
};

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> out;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError("malformed override key '" + path + "'");
    out.push_back(part);
  }
  if (out.empty()) throw ConfigError("empty override key");
  return out;
}

bool parse_index(const std::string& s, size_t* index) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    return false;
  }
  *index = std::stoul(s);
  return true;
}

// The value of `key=value` as a TOML node; bare words become strings.
toml::table parse_override_value(const std::string& text) {
  try {
    toml::table t = toml::parse("v = " + text);
    if (t.size() == 1 && t.contains("v")) return t;
  } catch (const toml::parse_error&) {
  }
  toml::table t;
  t.insert("v", text);
  return t;
}

void apply_override(toml::table* root, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override '" + assignment + "' is not key=value");
  }
  auto trim = [](std::string s) {
    const size_t b = s.find_first_not_of(" \t");
    const size_t e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  const std::vector<std::string> path =
      split_path(trim(assignment.substr(0, eq)));
  toml::table value = parse_override_value(trim(assignment.substr(eq + 1)));
  toml::node* current = root;
  for (size_t i = 0; i + 1 < path.size(); ++i) {
    if (toml::table* t = current->as_table()) {
      toml::node* next = t->get(path[i]);
      if (next == nullptr) {
        t->insert(path[i], toml::table{});
        next = t->get(path[i]);
      }
      current = next;
    } else if (toml::array* a = current->as_array()) {
      size_t index = 0;
      if (!parse_index(path[i], &index) || index >= a->size()) {
        throw ConfigError("override '" + assignment + "': bad index '" +
                          path[i] + "'");
      }
      current = a->get(index);
    } else {
      throw ConfigError("override '" + assignment + "': '" + path[i] +
                        "' is not a table");
    }
  }
  const std::string& leaf = path.back();
  toml::node& v = *value.get("v");
  if (toml::table* t = current->as_table()) {
    t->insert_or_assign(leaf, std::move(v));
  } else if (toml::array* a = current->as_array()) {
    size_t index = 0;
    if (!parse_index(leaf, &index) || index >= a->size()) {
      throw ConfigError("override '" + assignment + "': bad index '" + leaf +
                        "'");
    }
    a->replace(a->cbegin() + static_cast<std::ptrdiff_t>(index), std::move(v));
  } else {
    throw ConfigError("override '" + assignment + "': parent is not a table");
  }
}

InnerSolver inner_solver_from_string(const std::string& s) {
  if (s == "gauss_newton") return InnerSolver::kGaussNewton;
  if (s == "lbfgs") return InnerSolver::kLbfgs;
  throw ConfigError("solver.inner_solver must be 'gauss_newton' or 'lbfgs'");
}

std::string to_string(InnerSolver s) {
  return s == InnerSolver::kGaussNewton ? "gauss_newton" : "lbfgs";
}

void read_solver(Reader* r, SolverOptions* s) {
  std::string inner = to_string(s->inner_solver);
  r->get("inner_solver", &inner);
  s->inner_solver = inner_solver_from_string(inner);
  r->get("penalty_init", &s->penalty_init);
  r->get("penalty_growth", &s->penalty_growth);
  r->get("max_outer", &s->max_outer);
  r->get("max_inner", &s->max_inner);
  r->get("lbfgs_memory", &s->lbfgs_memory);
  r->get("optimality_tol", &s->optimality_tol);
  r->get("feasibility_tol", &s->feasibility_tol);
  r->get("backoff", &s->backoff);
  r->get("infeasible_tol", &s->infeasible_tol);
  r->get("degraded_tol", &s->degraded_tol);
}

void read_synthesis(Reader* r, AlphaSearchOptions* s) {
  r->get("boundary_samples", &s->boundary_samples);
  r->get("local_descents", &s->local_descents);
  r->get("descent_iterations", &s->descent_iterations);
  r->get("bisection_iterations", &s->bisection_iterations);
  r->get("alpha_max", &s->alpha_max);
  r->get("safety_factor", &s->safety_factor);
  r->get("parallel", &s->parallel);
}

void read_comms(Reader* r, CommsConfig* c) {
  r->get("delay_steps", &c->delay_steps);
  r->get("port", &c->port);
  r->get("broker_addr", &c->broker_addr);
  r->get("connect_retries", &c->connect_retries);
  r->get("retry_delay", &c->retry_delay);
  r->get("timeout", &c->timeout);
}

AgentConfig read_agent(const toml::table& table, const std::string& path) {
  Reader r(table, path);
  AgentConfig a;
  r.get("model", &a.model);
  r.get("weight", &a.weight);
  r.get("initial_state", &a.initial_state);
  r.get("q", &a.q);
  r.get("r", &a.r);
  r.get("ingredients", &a.ingredients_path);
  r.get("disturbance_bound", &a.disturbance_bound);
  if (const toml::table* params = r.table("params")) {
    Reader p(*params, path + ".params");
    if (a.model == "quadcopter") {
      QuadcopterParams& q = a.quadcopter;
      p.get("k_drag_x", &q.k_drag_x);
      p.get("k_drag_y", &q.k_drag_y);
      p.get("tau_roll", &q.tau_roll);
      p.get("gain_roll", &q.gain_roll);
      p.get("tau_pitch", &q.tau_pitch);
      p.get("gain_pitch", &q.gain_pitch);
      p.get("gravity", &q.gravity);
    } else if (a.model == "boat") {
      p.get("surge_bound", &a.surge_bound);
      p.get("lateral_bound", &a.lateral_bound);
    } else if (a.model == "linear") {
      p.get("a", &a.linear_a);
      p.get("b", &a.linear_b);
    }
    p.reject_unknown();
  }
  if (const toml::array* windows = r.array_of_tables("disturbance")) {
    for (size_t i = 0; i < windows->size(); ++i) {
      Reader w(*windows->get(i)->as_table(),
               path + ".disturbance." + std::to_string(i));
      DisturbanceWindow d;
      w.get("t_start", &d.t_start);
      w.get("t_end", &d.t_end);
      w.get("accel", &d.accel);
      w.reject_unknown();
      a.disturbance.push_back(d);
    }
  }
  r.reject_unknown();
  return a;
}

ScenarioConfig read_config(const toml::table& root) {
  ScenarioConfig c;
  Reader r(root, "");
  r.get("name", &c.name);
  r.get("horizon", &c.horizon);
  r.get("dt", &c.dt);
  r.get("max_sim_time", &c.max_sim_time);
  r.get("seed", &c.seed);
  r.get("terminal_constraints", &c.terminal_constraints);
  std::string transport = to_string(c.transport);
  r.get("transport", &transport);
  if (transport == "inprocess") {
    c.transport = Transport::kInProcess;
  } else if (transport == "socket") {
    c.transport = Transport::kSocket;
  } else {
    throw ConfigError("transport must be 'inprocess' or 'socket'");
  }
  std::string order = to_string(c.update_order);
  r.get("update_order", &order);
  if (order == "sequential") {
    c.update_order = UpdateOrder::kSequential;
  } else if (order == "parallel") {
    c.update_order = UpdateOrder::kParallel;
  } else {
    throw ConfigError("update_order must be 'sequential' or 'parallel'");
  }
  r.get("substeps", &c.substeps);
  r.get("eta", &c.eta);
  r.get("epsilon", &c.epsilon);
  r.get("stop_epsilon", &c.stop_epsilon);
  r.get("theta_lower", &c.theta_lower);
  r.get("theta_upper", &c.theta_upper);
  r.get("landing_radius", &c.landing_radius);
  r.get("record_predictions", &c.record_predictions);
  if (const toml::table* t = r.table("solver")) {
    Reader s(*t, "solver");
    read_solver(&s, &c.solver);
    s.reject_unknown();
  }
  if (const toml::table* t = r.table("synthesis")) {
    Reader s(*t, "synthesis");
    read_synthesis(&s, &c.synthesis);
    s.reject_unknown();
  }
  if (const toml::table* t = r.table("comms")) {
    Reader s(*t, "comms");
    read_comms(&s, &c.comms);
    s.reject_unknown();
  }
  if (const toml::array* agents = r.array_of_tables("agents")) {
    for (size_t i = 0; i < agents->size(); ++i) {
      c.agents.push_back(read_agent(*agents->get(i)->as_table(),
                                    "agents." + std::to_string(i)));
    }
  }
  r.reject_unknown();
  c.synthesis.seed = c.seed;
  return c;
}

bool positive_entries(const Eigen::VectorXd& v) {
  return v.size() > 0 && v.allFinite() && (v.array() > 0.0).all();
}

toml::array to_array(const Eigen::VectorXd& v) {
  toml::array a;
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

toml::array to_rows(const Eigen::MatrixXd& m) {
  toml::array a;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    a.push_back(to_array(m.row(i).transpose()));
  }
  return a;
}

}  // namespace

std::string to_string(Transport transport) {
  return transport == Transport::kInProcess ? "inprocess" : "socket";
}

std::string to_string(UpdateOrder order) {
  return order == UpdateOrder::kSequential ? "sequential" : "parallel";
}

int ScenarioConfig::steps_per_horizon() const {
  return static_cast<int>(std::lround(horizon / dt));
}

AgentModel build_model(const AgentConfig& agent) {
  if (agent.model == "quadcopter") return make_quadcopter(agent.quadcopter);
  if (agent.model == "boat") {
    return make_boat(agent.surge_bound, agent.lateral_bound);
  }
  if (agent.model == "linear") {
    return make_linear(agent.linear_a, agent.linear_b);
  }
  throw ConfigError("unknown model '" + agent.model +
                    "' (expected quadcopter, boat or linear)");
}

void validate_config(const ScenarioConfig& c) {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (!(c.dt > 0.0) || !std::isfinite(c.dt)) fail("dt must be positive");
  if (!(c.horizon > 0.0) || !std::isfinite(c.horizon)) {
    fail("horizon must be positive");
  }
  const double ratio = c.horizon / c.dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * std::max(1.0, ratio)) {
    fail("horizon / dt must be an integer");
  }
  if (!(c.max_sim_time >= 0.0)) fail("max_sim_time must be non-negative");
  if (c.substeps < 1) fail("substeps must be at least 1");
  if (!(c.eta > 0.0)) fail("eta must be positive");
  if (!(c.epsilon > 0.0)) fail("epsilon must be positive");
  if (!(c.eta * c.eta < c.epsilon)) {
    std::ostringstream os;
    os << "eta^2 < epsilon violated (" << c.eta * c.eta << " >= " << c.epsilon
       << ")";
    fail(os.str());
  }
  if (c.stop_epsilon >= 0.0 && !(c.stop_epsilon > 0.0)) {
    fail("stop_epsilon must be positive");
  }
  if (!c.theta_lower.allFinite() || !c.theta_upper.allFinite() ||
      (c.theta_lower.array() > c.theta_upper.array()).any()) {
    fail("theta_lower must not exceed theta_upper");
  }
  if (!(c.landing_radius > 0.0)) fail("landing_radius must be positive");
  if (c.comms.delay_steps < 0) fail("comms.delay_steps must be non-negative");
  if (c.comms.port < 0 || c.comms.port > 65535) fail("comms.port out of range");
  if (c.comms.connect_retries < 0) fail("comms.connect_retries must be >= 0");
  if (!(c.comms.timeout > 0.0)) fail("comms.timeout must be positive");
  const SolverOptions& s = c.solver;
  if (s.max_outer < 1 || s.max_inner < 1 || s.lbfgs_memory < 1) {
    fail("solver iteration limits must be positive");
  }
  if (!(s.penalty_init > 0.0) || !(s.penalty_growth >= 1.0)) {
    fail("solver penalty settings invalid");
  }
  if (c.agents.empty()) fail("at least one [[agents]] entry required");
  std::vector<double> weights;
  for (size_t i = 0; i < c.agents.size(); ++i) {
    const AgentConfig& a = c.agents[i];
    const std::string where = "agents." + std::to_string(i);
    const AgentModel model = build_model(a);
    weights.push_back(a.weight);
    if (a.initial_state.size() != model.n || !a.initial_state.allFinite()) {
      fail(where + ".initial_state must have " + std::to_string(model.n) +
           " finite entries");
    }
    if (a.q.size() != model.n || !positive_entries(a.q)) {
      fail(where + ".q must have " + std::to_string(model.n) +
           " positive entries");
    }
    if (a.r.size() != model.m || !positive_entries(a.r)) {
      fail(where + ".r must have " + std::to_string(model.m) +
           " positive entries");
    }
    for (const DisturbanceWindow& w : a.disturbance) {
      if (!(w.t_end >= w.t_start) || !w.accel.allFinite()) {
        fail(where + ".disturbance: window must have t_end >= t_start");
      }
    }
    if (!(a.disturbance_bound >= 0.0)) {
      fail(where + ".disturbance_bound must be non-negative");
    }
    try {
      DisturbanceModel(a.disturbance, a.disturbance_bound);
    } catch (const ConfigError& e) {
      fail(where + ": " + e.what());
    }
  }
  validate_weights(weights);
}

ScenarioConfig parse_config(const std::string& toml_text,
                            const std::vector<std::string>& overrides,
                            const std::string& source_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "TOML parse error: " << e.description() << " at line "
       << e.source().begin.line;
    throw ConfigError(os.str());
  }
  for (const std::string& o : overrides) apply_override(&root, o);
  ScenarioConfig config = read_config(root);
  config.source_dir = source_dir;
  validate_config(config);
  return config;
}

ScenarioConfig load_config(const std::string& path,
                           const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::filesystem::path dir =
      std::filesystem::absolute(path).parent_path();
  return parse_config(buffer.str(), overrides, dir.string());
}

std::string dump_config(const ScenarioConfig& c) {
  toml::table root;
  root.insert("name", c.name);
  root.insert("horizon", c.horizon);
  root.insert("dt", c.dt);
  root.insert("max_sim_time", c.max_sim_time);
  root.insert("seed", static_cast<int64_t>(c.seed));
  root.insert("terminal_constraints", c.terminal_constraints);
  root.insert("transport", to_string(c.transport));
  root.insert("update_order", to_string(c.update_order));
  root.insert("substeps", c.substeps);
  root.insert("eta", c.eta);
  root.insert("epsilon", c.epsilon);
  if (c.stop_epsilon >= 0.0) root.insert("stop_epsilon", c.stop_epsilon);
  root.insert("theta_lower", to_array(c.theta_lower));
  root.insert("theta_upper", to_array(c.theta_upper));
  root.insert("landing_radius", c.landing_radius);
  root.insert("record_predictions", c.record_predictions);

  const SolverOptions& s = c.solver;
  root.insert("solver",
              toml::table{{"inner_solver", to_string(s.inner_solver)},
                          {"penalty_init", s.penalty_init},
                          {"penalty_growth", s.penalty_growth},
                          {"max_outer", s.max_outer},
                          {"max_inner", s.max_inner},
                          {"lbfgs_memory", s.lbfgs_memory},
                          {"optimality_tol", s.optimality_tol},
                          {"feasibility_tol", s.feasibility_tol},
                          {"backoff", s.backoff},
                          {"infeasible_tol", s.infeasible_tol},
                          {"degraded_tol", s.degraded_tol}});
  const AlphaSearchOptions& a = c.synthesis;
  root.insert("synthesis",
              toml::table{{"boundary_samples", a.boundary_samples},
                          {"local_descents", a.local_descents},
                          {"descent_iterations", a.descent_iterations},
                          {"bisection_iterations", a.bisection_iterations},
                          {"alpha_max", a.alpha_max},
                          {"safety_factor", a.safety_factor},
                          {"parallel", a.parallel}});
  const CommsConfig& m = c.comms;
  root.insert("comms", toml::table{{"delay_steps", m.delay_steps},
                                   {"port", m.port},
                                   {"broker_addr", m.broker_addr},
                                   {"connect_retries", m.connect_retries},
                                   {"retry_delay", m.retry_delay},
                                   {"timeout", m.timeout}});
  toml::array agents;
  for (const AgentConfig& ag : c.agents) {
    toml::table t;
    t.insert("model", ag.model);
    t.insert("weight", ag.weight);
    t.insert("initial_state", to_array(ag.initial_state));
    t.insert("q", to_array(ag.q));
    t.insert("r", to_array(ag.r));
    if (!ag.ingredients_path.empty()) t.insert("ingredients", ag.ingredients_path);
    t.insert("disturbance_bound", ag.disturbance_bound);
    if (ag.model == "quadcopter") {
      const QuadcopterParams& q = ag.quadcopter;
      t.insert("params", toml::table{{"k_drag_x", q.k_drag_x},
                                     {"k_drag_y", q.k_drag_y},
                                     {"tau_roll", q.tau_roll},
                                     {"gain_roll", q.gain_roll},
                                     {"tau_pitch", q.tau_pitch},
                                     {"gain_pitch", q.gain_pitch},
                                     {"gravity", q.gravity}});
    } else if (ag.model == "boat") {
      t.insert("params", toml::table{{"surge_bound", ag.surge_bound},
                                     {"lateral_bound", ag.lateral_bound}});
    } else if (ag.model == "linear") {
      t.insert("params", toml::table{{"a", to_rows(ag.linear_a)},
                                     {"b", to_rows(ag.linear_b)}});
    }
    if (!ag.disturbance.empty()) {
      toml::array windows;
      for (const DisturbanceWindow& w : ag.disturbance) {
        windows.push_back(toml::table{{"t_start", w.t_start},
                                      {"t_end", w.t_end},
                                      {"accel", to_array(w.accel)}});
      }
      t.insert("disturbance", std::move(windows));
    }
    agents.push_back(std::move(t));
  }
  root.insert("agents", std::move(agents));
  std::ostringstream os;
  os << root;
  return os.str();
}

}  // namespace rdv
