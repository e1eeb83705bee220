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
#include <limits>
#include <sstream>

#include "rdv/bound_constrained.h"

namespace rdv {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool positive_definite(const Eigen::MatrixXd& M) {
  if (M.rows() != M.cols() || M.rows() == 0) return false;
  if (!M.isApprox(M.transpose(), 1e-12)) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
  return eig.eigenvalues().minCoeff() > 0.0;
}

// Scaled inequality constraints c(x) + backoff <= 0 on the shooting grid.
// Layout: per_stage() entries for each of the stages j = 1..N (state x_j
// and input u_{j-1}), then the terminal constraint if enabled.
class ConstraintLayout {
 public:
  ConstraintLayout(const AgentModel& model, int N, bool terminal,
                   bool path = true)
      : N_(N), terminal_(terminal) {
    if (!path) return;
    const ConstraintSet& X = model.state_constraints;
    for (int i = 0; i < X.dim(); ++i) {
      if (std::isfinite(X.upper()(i))) {
        boxes_.push_back({i, X.upper()(i), 1.0,
                          std::max(1e-3, std::abs(X.upper()(i)))});
      }
      if (std::isfinite(X.lower()(i))) {
        boxes_.push_back({i, X.lower()(i), -1.0,
                          std::max(1e-3, std::abs(X.lower()(i)))});
      }
    }
    state_norms_ = X.norm_bounds();
    input_norms_ = model.input_constraints.norm_bounds();
  }

  int per_stage() const {
    return static_cast<int>(boxes_.size() + state_norms_.size() +
                            input_norms_.size());
  }
  int size() const { return N_ * per_stage() + (terminal_ ? 1 : 0); }
  bool terminal() const { return terminal_; }
  int terminal_index() const { return N_ * per_stage(); }

  // Stage values; gx/gu accumulate weight * dc/dx and weight * dc/du, where
  // weight(c_i) is supplied by the caller.
  template <typename Weight>
  void stage(int slot0, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
             double backoff, Eigen::VectorXd* c, const Weight& weight,
             Eigen::VectorXd* gx, Eigen::VectorXd* gu) const {
    int s = slot0;
    for (const Box& b : boxes_) {
      const double v = b.sign * (x(b.index) - b.bound) / b.scale + backoff;
      (*c)(s) = v;
      if (gx) (*gx)(b.index) += weight(s, v) * b.sign / b.scale;
      ++s;
    }
    for (const NormBound& nb : state_norms_) {
      const double r2 = nb.max_norm * nb.max_norm;
      double sq = 0.0;
      for (int i : nb.indices) sq += x(i) * x(i);
      const double v = (sq - r2) / r2 + backoff;
      (*c)(s) = v;
      if (gx) {
        const double w = weight(s, v);
        for (int i : nb.indices) (*gx)(i) += w * 2.0 * x(i) / r2;
      }
      ++s;
    }
    for (const NormBound& nb : input_norms_) {
      const double r2 = nb.max_norm * nb.max_norm;
      double sq = 0.0;
      for (int i : nb.indices) sq += u(i) * u(i);
      const double v = (sq - r2) / r2 + backoff;
      (*c)(s) = v;
      if (gu) {
        const double w = weight(s, v);
        for (int i : nb.indices) (*gu)(i) += w * 2.0 * u(i) / r2;
      }
      ++s;
    }
  }

  // Adds weight * (Hessian of stage constraint s) to the state block W or,
  // for input norms, to the input block of H at offset u0.
  void add_curvature(int s, double weight, Eigen::MatrixXd* W,
                     Eigen::MatrixXd* H, int u0) const {
    s -= static_cast<int>(boxes_.size());
    if (s < 0) return;
    if (s < static_cast<int>(state_norms_.size())) {
      const NormBound& nb = state_norms_[s];
      for (int i : nb.indices) {
        (*W)(i, i) += weight * 2.0 / (nb.max_norm * nb.max_norm);
      }
      return;
    }
    s -= static_cast<int>(state_norms_.size());
    const NormBound& nb = input_norms_[s];
    for (int i : nb.indices) {
      (*H)(u0 + i, u0 + i) += weight * 2.0 / (nb.max_norm * nb.max_norm);
    }
  }

 private:
  struct Box {
    int index;
    double bound;
    double sign;
    double scale;
  };
  int N_;
  bool terminal_;
  std::vector<Box> boxes_;
  std::vector<NormBound> state_norms_;
  std::vector<NormBound> input_norms_;
};

// Reverse-mode step through one RK4 step x+ = Phi(x, u) given a = dL/dx+.
void rk4_adjoint(const AgentModel& model, const Eigen::VectorXd& x,
                 const Eigen::VectorXd& u, double h, const Eigen::VectorXd& a,
                 Eigen::VectorXd* a_x, Eigen::VectorXd* a_u) {
  StateJac F1, F2, F3, F4;
  InputJac G1, G2, G3, G4;
  const StateVec k1 = model.derivative(x, u);
  const Eigen::VectorXd x2 = x + 0.5 * h * k1;
  const StateVec k2 = model.derivative(x2, u);
  const Eigen::VectorXd x3 = x + 0.5 * h * k2;
  const StateVec k3 = model.derivative(x3, u);
  const Eigen::VectorXd x4 = x + h * k3;
  model.jacobians(x, u, &F1, &G1);
  model.jacobians(x2, u, &F2, &G2);
  model.jacobians(x3, u, &F3, &G3);
  model.jacobians(x4, u, &F4, &G4);
  const Eigen::VectorXd b4 = (h / 6.0) * a;
  const Eigen::VectorXd b3 = (h / 3.0) * a + h * (F4.transpose() * b4);
  const Eigen::VectorXd b2 = (h / 3.0) * a + 0.5 * h * (F3.transpose() * b3);
  const Eigen::VectorXd b1 = (h / 6.0) * a + 0.5 * h * (F2.transpose() * b2);
  *a_x = a + F1.transpose() * b1 + F2.transpose() * b2 +
         F3.transpose() * b3 + F4.transpose() * b4;
  *a_u = G1.transpose() * b1 + G2.transpose() * b2 + G3.transpose() * b3 +
         G4.transpose() * b4;
}

// Exact Jacobians of one RK4 step x+ = Phi(x, u) by forward chaining of
// the stage Jacobians.
void rk4_step_jacobians(const AgentModel& model, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& u, double h,
                        Eigen::MatrixXd* phi_x, Eigen::MatrixXd* phi_u) {
  const int n = model.n;
  StateJac F1, F2, F3, F4;
  InputJac G1, G2, G3, G4;
  const StateVec k1 = model.derivative(x, u);
  const Eigen::VectorXd x2 = x + 0.5 * h * k1;
  const StateVec k2 = model.derivative(x2, u);
  const Eigen::VectorXd x3 = x + 0.5 * h * k2;
  const StateVec k3 = model.derivative(x3, u);
  const Eigen::VectorXd x4 = x + h * k3;
  model.jacobians(x, u, &F1, &G1);
  model.jacobians(x2, u, &F2, &G2);
  model.jacobians(x3, u, &F3, &G3);
  model.jacobians(x4, u, &F4, &G4);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd M1x = F1;
  const Eigen::MatrixXd M2x = F2 * (I + 0.5 * h * M1x);
  const Eigen::MatrixXd M3x = F3 * (I + 0.5 * h * M2x);
  const Eigen::MatrixXd M4x = F4 * (I + h * M3x);
  *phi_x = I + (h / 6.0) * (M1x + 2.0 * M2x + 2.0 * M3x + M4x);
  const Eigen::MatrixXd M1u = G1;
  const Eigen::MatrixXd M2u = F2 * (0.5 * h * M1u) + G2;
  const Eigen::MatrixXd M3u = F3 * (0.5 * h * M2u) + G3;
  const Eigen::MatrixXd M4u = F4 * (h * M3u) + G4;
  *phi_u = (h / 6.0) * (M1u + 2.0 * M2u + 2.0 * M3u + M4u);
}

struct Problem {
  const DocpSpec& spec;
  const AgentModel& model;
  const Eigen::VectorXd& x0;
  const Eigen::VectorXd& x_bar;
  const Eigen::VectorXd& u_bar;
  const Eigen::MatrixXd& P;
  double alpha;
  ConstraintLayout layout;
  double cost_scale = 1.0;
  // Augmented Lagrangian parameters for the current outer iteration.
  Eigen::VectorXd lambda = Eigen::VectorXd();
  double rho = 10.0;
  double backoff = 0.0;

  int n() const { return model.n; }
  int m() const { return model.m; }
  int N() const { return spec.N; }

  Eigen::Map<const Eigen::MatrixXd> as_inputs(const Eigen::VectorXd& z) const {
    return {z.data(), m(), N()};
  }

  // Returns the cost; fills constraint values. False on non-finite rollout.
  bool evaluate(const Eigen::VectorXd& z, Eigen::MatrixXd* states,
                double* cost, Eigen::VectorXd* c) const {
    const auto U = as_inputs(z);
    try {
      *states = rollout(model, x0, U, spec.dt);
    } catch (const Error&) {
      return false;
    }
    if (!states->allFinite()) return false;
    double J = 0.0;
    for (int k = 0; k < N(); ++k) {
      const Eigen::VectorXd dx = states->col(k) - x_bar;
      const Eigen::VectorXd du = U.col(k) - u_bar;
      J += spec.dt * (dx.dot(spec.Q * dx) + du.dot(spec.R * du));
    }
    const Eigen::VectorXd dN = states->col(N()) - x_bar;
    J += dN.dot(P * dN);
    *cost = J;
    c->resize(layout.size());
    const auto none = [](int, double) { return 0.0; };
    for (int j = 1; j <= N(); ++j) {
      layout.stage((j - 1) * layout.per_stage(), states->col(j), U.col(j - 1),
                   backoff, c, none, nullptr, nullptr);
    }
    if (layout.terminal()) {
      const double a2 = alpha * alpha;
      (*c)(layout.terminal_index()) = (dN.dot(P * dN) - a2) / a2 + backoff;
    }
    return std::isfinite(J);
  }

  double penalty(const Eigen::VectorXd& c) const {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      const double t = std::max(0.0, lambda(i) + rho * c(i));
      sum += (t * t - lambda(i) * lambda(i)) / (2.0 * rho);
    }
    return sum;
  }

  double merit(const Eigen::VectorXd& z, Eigen::VectorXd* grad) const {
    Eigen::MatrixXd X;
    double J = 0.0;
    Eigen::VectorXd c;
    if (!evaluate(z, &X, &J, &c)) return kInf;
    const double value = J / cost_scale + penalty(c);
    if (!std::isfinite(value)) return kInf;
    if (grad == nullptr) return value;

    const auto U = as_inputs(z);
    grad->setZero(z.size());
    Eigen::Map<Eigen::MatrixXd> G(grad->data(), m(), N());
    const auto weight = [&](int s, double v) {
      return std::max(0.0, lambda(s) + rho * v);
    };
    // Direct partials of the merit w.r.t. x_j (j >= 1) and u_k.
    Eigen::MatrixXd gx = Eigen::MatrixXd::Zero(n(), N() + 1);
    Eigen::VectorXd scratch(layout.size());
    for (int j = 1; j <= N(); ++j) {
      Eigen::VectorXd gxj = Eigen::VectorXd::Zero(n());
      Eigen::VectorXd guj = Eigen::VectorXd::Zero(m());
      layout.stage((j - 1) * layout.per_stage(), X.col(j), U.col(j - 1),
                   backoff, &scratch, weight, &gxj, &guj);
      gx.col(j) += gxj;
      G.col(j - 1) += guj;
    }
    for (int k = 1; k < N(); ++k) {
      gx.col(k) += (2.0 * spec.dt / cost_scale) * (spec.Q * (X.col(k) - x_bar));
    }
    const Eigen::VectorXd dN = X.col(N()) - x_bar;
    gx.col(N()) += (2.0 / cost_scale) * (P * dN);
    if (layout.terminal()) {
      const int s = layout.terminal_index();
      gx.col(N()) += weight(s, c(s)) * 2.0 / (alpha * alpha) * (P * dN);
    }
    for (int k = 0; k < N(); ++k) {
      G.col(k) += (2.0 * spec.dt / cost_scale) * (spec.R * (U.col(k) - u_bar));
    }
    // Backward sweep.
    Eigen::VectorXd a = gx.col(N());
    Eigen::VectorXd a_x, a_u;
    for (int k = N() - 1; k >= 0; --k) {
      rk4_adjoint(model, X.col(k), U.col(k), spec.dt, a, &a_x, &a_u);
      G.col(k) += a_u;
      a = a_x + gx.col(k);
    }
    if (!grad->allFinite()) return kInf;
    return value;
  }

  // Gauss-Newton Hessian of the merit: second-order dynamics terms are
  // dropped, everything else (cost, active penalty terms) is exact.
  void hessian(const Eigen::VectorXd& z, Eigen::MatrixXd* H) const {
    const auto U = as_inputs(z);
    Eigen::MatrixXd X;
    double J = 0.0;
    Eigen::VectorXd c;
    const int nz = m() * N();
    H->setZero(nz, nz);
    if (!evaluate(z, &X, &J, &c)) return;
    const auto weight = [&](int s, double v) {
      return std::max(0.0, lambda(s) + rho * v);
    };
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n(), nz);
    Eigen::MatrixXd Ax, Bu;
    Eigen::VectorXd scratch(layout.size());
    for (int j = 0; j < N(); ++j) {
      rk4_step_jacobians(model, X.col(j), U.col(j), spec.dt, &Ax, &Bu);
      const int cols = (j + 1) * m();
      if (j > 0) S.leftCols(j * m()) = (Ax * S.leftCols(j * m())).eval();
      S.middleCols(j * m(), m()) = Bu;
      const int jj = j + 1;
      const auto Sj = S.leftCols(cols);
      Eigen::MatrixXd W = (jj < N()) ? Eigen::MatrixXd(2.0 * spec.dt / cost_scale * spec.Q)
                                     : Eigen::MatrixXd(2.0 / cost_scale * P);
      // Penalty curvature: rho * grad grad' for active constraints plus
      // weight * (constraint Hessian) for the convex quadratic ones.
      const int slot0 = (jj - 1) * layout.per_stage();
      for (int s = 0; s < layout.per_stage(); ++s) {
        Eigen::VectorXd gx = Eigen::VectorXd::Zero(n());
        Eigen::VectorXd gu = Eigen::VectorXd::Zero(m());
        const auto unit = [&](int slot, double v) {
          return slot == slot0 + s && weight(slot, v) > 0.0 ? 1.0 : 0.0;
        };
        layout.stage(slot0, X.col(jj), U.col(j), backoff, &scratch, unit, &gx, &gu);
        const double w = weight(slot0 + s, scratch(slot0 + s));
        if (w <= 0.0) continue;
        Eigen::VectorXd v = Sj.transpose() * gx;
        v.tail(m()) += gu;
        H->topLeftCorner(cols, cols).noalias() += rho * v * v.transpose();
        layout.add_curvature(s, w, &W, H, j * m());
      }
      if (jj == N() && layout.terminal()) {
        const int s = layout.terminal_index();
        const double w = weight(s, c(s));
        if (w > 0.0) {
          const Eigen::VectorXd dN = X.col(N()) - x_bar;
          const Eigen::VectorXd v =
              Sj.transpose() * (2.0 / (alpha * alpha) * (P * dN));
          H->topLeftCorner(cols, cols).noalias() += rho * v * v.transpose();
          W += w * 2.0 / (alpha * alpha) * P;
        }
      }
      H->topLeftCorner(cols, cols).noalias() += Sj.transpose() * W * Sj;
      H->block(j * m(), j * m(), m(), m()) += 2.0 * spec.dt / cost_scale * spec.R;
    }
  }
};

}  // namespace

std::string to_string(DocpStatus status) {
  switch (status) {
    case DocpStatus::kOptimal:
      return "optimal";
    case DocpStatus::kMaxIter:
      return "max_iter";
    case DocpStatus::kInfeasible:
      return "infeasible";
  }
  return "unknown";
}

DocpSpec DocpSpec::make(std::shared_ptr<const AgentModel> model,
                        std::shared_ptr<const TerminalIngredients> ingredients,
                        Eigen::MatrixXd Q, Eigen::MatrixXd R, double horizon,
                        double dt, bool terminal_constraint,
                        SolverOptions solver) {
  if (!model || !ingredients) throw ConfigError("DocpSpec: missing model");
  if (!(dt > 0.0) || !(horizon > 0.0)) {
    throw ConfigError("DocpSpec: horizon and dt must be positive");
  }
  const double ratio = horizon / dt;
  const long steps = std::lround(ratio);
  if (steps < 1 || std::abs(ratio - static_cast<double>(steps)) > 1e-9 * ratio) {
    std::ostringstream os;
    os << "DocpSpec: horizon " << horizon << " is not a multiple of dt " << dt;
    throw ConfigError(os.str());
  }
  if (Q.rows() != model->n || R.rows() != model->m) {
    throw ConfigError("DocpSpec: Q/R dimension mismatch");
  }
  if (!positive_definite(Q) || !positive_definite(R)) {
    throw ConfigError("DocpSpec: Q and R must be symmetric positive definite");
  }
  if (ingredients->P.rows() != model->n || ingredients->K.rows() != model->m) {
    throw ConfigError("DocpSpec: ingredients do not match the model");
  }
  if (!(solver.max_outer >= 1) || !(solver.max_inner >= 1) ||
      !(solver.penalty_init > 0.0) || !(solver.penalty_growth >= 1.0)) {
    throw ConfigError("DocpSpec: invalid solver budgets");
  }
  DocpSpec spec;
  spec.model = std::move(model);
  spec.ingredients = std::move(ingredients);
  spec.Q = std::move(Q);
  spec.R = std::move(R);
  spec.horizon = horizon;
  spec.dt = dt;
  spec.N = static_cast<int>(steps);
  spec.terminal_constraint = terminal_constraint;
  spec.solver = solver;
  return spec;
}

Eigen::MatrixXd rollout(const AgentModel& model, const VecRef& x0,
                        const MatRef& inputs, double dt) {
  const Eigen::Index N = inputs.cols();
  Eigen::MatrixXd X(model.n, N + 1);
  X.col(0) = x0;
  const Eigen::Vector3d no_wind = Eigen::Vector3d::Zero();
  for (Eigen::Index k = 0; k < N; ++k) {
    X.col(k + 1) = rk4_step(model, X.col(k), inputs.col(k), no_wind, dt);
  }
  return X;
}

double eval_cost(const DocpSpec& spec, const MatRef& inputs, const VecRef& x0,
                 const VecRef& x_bar, const VecRef& u_bar) {
  const Eigen::MatrixXd X = rollout(*spec.model, x0, inputs, spec.dt);
  double J = 0.0;
  for (Eigen::Index k = 0; k < inputs.cols(); ++k) {
    const Eigen::VectorXd dx = X.col(k) - x_bar;
    const Eigen::VectorXd du = inputs.col(k) - u_bar;
    J += spec.dt * (dx.dot(spec.Q * dx) + du.dot(spec.R * du));
  }
  const Eigen::VectorXd dN = X.col(inputs.cols()) - x_bar;
  return J + dN.dot(spec.ingredients->P * dN);
}

double eval_cost_gradient(const DocpSpec& spec, const MatRef& inputs,
                          const VecRef& x0, const VecRef& x_bar,
                          const VecRef& u_bar, Eigen::MatrixXd* gradient) {
  const Eigen::VectorXd x0v = x0, xb = x_bar, ub = u_bar;
  Problem problem{spec, *spec.model, x0v, xb, ub, spec.ingredients->P, 1.0,
                  ConstraintLayout(*spec.model, spec.N, false, false)};
  problem.lambda = Eigen::VectorXd::Zero(0);
  Eigen::VectorXd z = Eigen::Map<const Eigen::VectorXd>(
      Eigen::MatrixXd(inputs).data(), inputs.size());
  Eigen::VectorXd g;
  const double value = problem.merit(z, &g);
  if (gradient) {
    *gradient = Eigen::Map<Eigen::MatrixXd>(g.data(), spec.model->m, spec.N);
  }
  return value;
}

DocpSolution solve_docp(const DocpSpec& spec, const VecRef& x0,
                        const Eigen::Vector3d& theta, double alpha,
                        const WarmStart* warm) {
  const AgentModel& model = *spec.model;
  const TerminalIngredients& ingr = *spec.ingredients;
  if (x0.size() != model.n || !x0.allFinite()) {
    throw Error("solve_docp: x0 must be a finite state vector");
  }
  if (alpha < 0.0) alpha = ingr.alpha_bar;
  const SolverOptions& opt = spec.solver;

  DocpSolution sol;
  sol.theta = theta;
  sol.alpha = alpha;
  sol.target = steady_state_maps(model, theta);
  const Eigen::VectorXd x0v = x0;
  const Eigen::VectorXd& x_bar = sol.target.x;
  const Eigen::VectorXd& u_bar = sol.target.u;

  Problem problem{spec, model, x0v, x_bar, u_bar, ingr.P, alpha,
                  ConstraintLayout(model, spec.N, spec.terminal_constraint)};
  problem.backoff = opt.backoff;
  problem.rho = opt.penalty_init;
  problem.lambda = Eigen::VectorXd::Zero(problem.layout.size());
  if (warm && warm->multipliers.size() == problem.layout.size()) {
    problem.lambda = warm->multipliers.cwiseMax(0.0);
  }

  const int dim = model.m * spec.N;
  Eigen::VectorXd lower(dim), upper(dim);
  for (int k = 0; k < spec.N; ++k) {
    lower.segment(k * model.m, model.m) = model.input_constraints.lower();
    upper.segment(k * model.m, model.m) = model.input_constraints.upper();
  }

  Eigen::VectorXd z(dim);
  for (int k = 0; k < spec.N; ++k) z.segment(k * model.m, model.m) = u_bar;
  const bool have_warm = warm && warm->inputs.rows() == model.m &&
                         warm->inputs.cols() == spec.N &&
                         warm->inputs.allFinite();
  if (have_warm) {
    z = Eigen::Map<const Eigen::VectorXd>(warm->inputs.data(), dim);
  } else if (spec.terminal_constraint) {
    // Cold start: seed with the solution without the terminal constraint,
    // which is far better conditioned than starting from u_bar.
    DocpSpec relaxed = spec;
    relaxed.terminal_constraint = false;
    const DocpSolution seed = solve_docp(relaxed, x0, theta, alpha);
    if (seed.inputs.allFinite()) {
      z = Eigen::Map<const Eigen::VectorXd>(seed.inputs.data(), dim);
      sol.iterations += seed.iterations;
    }
  }
  z = z.cwiseMax(lower).cwiseMin(upper);

  Eigen::MatrixXd X;
  double J0 = 0.0;
  Eigen::VectorXd c;
  if (!problem.evaluate(z, &X, &J0, &c)) {
    for (int k = 0; k < spec.N; ++k) z.segment(k * model.m, model.m) = u_bar;
    z = z.cwiseMax(lower).cwiseMin(upper);
    if (!problem.evaluate(z, &X, &J0, &c)) {
      sol.status = DocpStatus::kInfeasible;
      sol.inputs = Eigen::Map<Eigen::MatrixXd>(z.data(), model.m, spec.N);
      sol.states = Eigen::MatrixXd::Constant(model.n, spec.N + 1,
                                             std::numeric_limits<double>::quiet_NaN());
      sol.outputs = Eigen::MatrixXd::Constant(kOutputDim, spec.N + 1,
                                              std::numeric_limits<double>::quiet_NaN());
      sol.constraint_residual = kInf;
      sol.terminal_margin = -kInf;
      sol.cost = kInf;
      return sol;
    }
  }
  problem.cost_scale = std::max(1.0, J0);

  const auto objective = [&problem](const Eigen::VectorXd& x,
                                    Eigen::VectorXd* g) {
    return problem.merit(x, g);
  };
  const auto hessian = [&problem](const Eigen::VectorXd& x,
                                  Eigen::MatrixXd* H) {
    problem.hessian(x, H);
  };
  BoxLbfgsOptions inner;
  inner.max_iterations = opt.max_inner;
  inner.memory = opt.lbfgs_memory;
  inner.tolerance = opt.optimality_tol;
  inner.record_trace = true;

  double violation = kInf, previous_violation = kInf;
  bool converged = false;
  for (int outer = 0; outer < opt.max_outer; ++outer) {
    const BoxLbfgsResult res =
        opt.inner_solver == InnerSolver::kGaussNewton
            ? minimize_box_newton(objective, hessian, z, lower, upper, inner)
            : minimize_box(objective, z, lower, upper, inner);
    z = res.x;
    sol.iterations += res.iterations;
    sol.outer_iterations = outer + 1;
    sol.kkt_residual = res.projected_gradient;
    sol.merit_trace.push_back(res.trace);
    converged = res.converged;
    problem.evaluate(z, &X, &J0, &c);
    violation = c.size() ? std::max(0.0, c.maxCoeff()) : 0.0;
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      problem.lambda(i) = std::max(0.0, problem.lambda(i) + problem.rho * c(i));
    }
    // The stopping tolerance is relative to cost_scale; once the cost has
    // dropped well below the initial one, rescale and polish.
    const double scale = std::max(1.0, J0);
    if (problem.cost_scale > 2.0 * scale) {
      problem.lambda *= problem.cost_scale / scale;
      problem.cost_scale = scale;
      converged = false;
    }
    if (violation <= opt.feasibility_tol && converged) break;
    if (violation > opt.feasibility_tol &&
        violation > 0.25 * previous_violation) {
      problem.rho *= opt.penalty_growth;
    }
    previous_violation = violation;
  }

  sol.inputs = Eigen::Map<Eigen::MatrixXd>(z.data(), model.m, spec.N);
  sol.states = X;
  sol.outputs = model.output_matrix * X;
  sol.cost = J0;
  sol.multipliers = problem.lambda;
  sol.constraint_residual =
      c.size() ? std::max(0.0, (c.array() - opt.backoff).maxCoeff()) : 0.0;
  const Eigen::VectorXd dN = X.col(spec.N) - x_bar;
  sol.terminal_margin = alpha * alpha - dN.dot(ingr.P * dN);
  if (violation <= opt.feasibility_tol && converged) {
    sol.status = DocpStatus::kOptimal;
  } else if (sol.constraint_residual < opt.infeasible_tol) {
    sol.status = DocpStatus::kMaxIter;
  } else {
    sol.status = DocpStatus::kInfeasible;
  }
  return sol;
}

Eigen::MatrixXd warm_start_shift(const DocpSolution& prev,
                                 const DocpSpec& spec) {
  const int N = spec.N;
  Eigen::MatrixXd shifted(prev.inputs.rows(), N);
  shifted.leftCols(N - 1) = prev.inputs.rightCols(N - 1);
  shifted.col(N - 1) =
      terminal_controller(*spec.ingredients, prev.target.x, prev.target.u,
                          prev.states.col(N));
  return shifted;
}

Eigen::VectorXd shift_multipliers(const DocpSolution& prev,
                                  const DocpSpec& spec) {
  const ConstraintLayout layout(*spec.model, spec.N, spec.terminal_constraint);
  if (prev.multipliers.size() != layout.size()) {
    return Eigen::VectorXd::Zero(layout.size());
  }
  Eigen::VectorXd out = prev.multipliers;
  const int ps = layout.per_stage();
  if (ps > 0 && spec.N > 1) {
    out.head((spec.N - 1) * ps) = prev.multipliers.segment(ps, (spec.N - 1) * ps);
  }
  return out;
}

CandidateReport check_candidate_feasibility(const DocpSolution& prev,
                                            const SteadyState& new_target,
                                            double new_alpha,
                                            const DocpSpec& spec) {
  const AgentModel& model = *spec.model;
  CandidateReport report;
  report.inputs = warm_start_shift(prev, spec);
  report.states = rollout(model, prev.states.col(1), report.inputs, spec.dt);
  for (int j = 1; j <= spec.N; ++j) {
    report.state_violation =
        std::max(report.state_violation,
                 model.state_constraints.max_violation(report.states.col(j)));
  }
  for (int k = 0; k < spec.N; ++k) {
    report.input_violation =
        std::max(report.input_violation,
                 model.input_constraints.max_violation(report.inputs.col(k)));
  }
  report.states_ok = report.state_violation <= 1e-6;
  report.inputs_ok = report.input_violation <= 1e-8;
  const Eigen::VectorXd end = report.states.col(spec.N);
  report.terminal_margin =
      terminal_membership({new_target.x, new_alpha, spec.ingredients}, end)
          .margin;
  report.old_terminal_margin =
      terminal_membership({prev.target.x, prev.alpha, spec.ingredients}, end)
          .margin;
  report.terminal_ok = report.terminal_margin >= -1e-8;
  return report;
}

}  // namespace rdv
