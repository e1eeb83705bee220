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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <unsupported/Eigen/AutoDiff>

namespace rdv {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSingularThrustMargin = 1e-6;

template <typename Scalar>
using DynVec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, 0,
                             kMaxStates + kMaxInputs, 1>;

using AdScalar = Eigen::AutoDiffScalar<DynVec<double>>;

template <typename Scalar>
double value_of(const Scalar& s) {
  if constexpr (std::is_same_v<Scalar, double>) {
    return s;
  } else {
    return s.value();
  }
}

template <typename Scalar>
void quadcopter_rhs(const QuadcopterParams& p, const DynVec<Scalar>& x,
                    const DynVec<Scalar>& u, const Eigen::Vector3d& accel,
                    DynVec<Scalar>* dx) {
  using std::cos;
  using std::sin;
  const Scalar& roll = x(6);
  const Scalar& pitch = x(7);
  const Scalar& yaw = x(8);
  const double cos_product =
      std::cos(value_of(roll)) * std::cos(value_of(pitch));
  if (std::abs(std::abs(value_of(roll)) - std::numbers::pi / 2) <
          kSingularThrustMargin ||
      std::abs(std::abs(value_of(pitch)) - std::numbers::pi / 2) <
          kSingularThrustMargin ||
      std::abs(cos_product) < kSingularThrustMargin) {
    throw SingularThrustError(
        "quadcopter thrust mapping is singular (roll or pitch at pi/2)");
  }
  const Scalar cr = cos(roll), sr = sin(roll);
  const Scalar cp = cos(pitch), sp = sin(pitch);
  const Scalar cy = cos(yaw), sy = sin(yaw);
  const Scalar thrust = (p.gravity + u(0)) / (cr * cp);

  dx->resize(9);
  (*dx)(0) = x(3);
  (*dx)(1) = x(4);
  (*dx)(2) = x(5);
  (*dx)(3) = thrust * (sr * sy + cr * cy * sp) - p.k_drag_x * x(3) + accel(0);
  (*dx)(4) = thrust * (-cy * sr + cr * sy * sp) - p.k_drag_y * x(4) + accel(1);
  (*dx)(5) = thrust * (cr * cp) - p.gravity + accel(2);
  (*dx)(6) = (p.gain_roll * u(1) - roll) / p.tau_roll;
  (*dx)(7) = (p.gain_pitch * u(2) - pitch) / p.tau_pitch;
  (*dx)(8) = u(3);
}

// World-frame disturbance is rotated into the body frame of the hull.
template <typename Scalar>
void boat_rhs(const DynVec<Scalar>& x, const DynVec<Scalar>& u,
              const Eigen::Vector3d& accel, DynVec<Scalar>* dx) {
  using std::cos;
  using std::sin;
  const Scalar c = cos(x(2)), s = sin(x(2));
  dx->resize(6);
  (*dx)(0) = x(3) * c - x(4) * s;
  (*dx)(1) = x(3) * s + x(4) * c;
  (*dx)(2) = x(5);
  (*dx)(3) = u(0) + (c * accel(0) + s * accel(1));
  (*dx)(4) = u(1) + (-s * accel(0) + c * accel(1));
  (*dx)(5) = u(2);
}

template <typename Scalar>
void linear_rhs(const LinearParams& p, const DynVec<Scalar>& x,
                const DynVec<Scalar>& u, DynVec<Scalar>* dx) {
  const int n = static_cast<int>(p.A.rows());
  const int m = static_cast<int>(p.B.cols());
  dx->resize(n);
  for (int i = 0; i < n; ++i) {
    Scalar acc = Scalar(0.0);
    for (int j = 0; j < n; ++j) acc += p.A(i, j) * x(j);
    for (int j = 0; j < m; ++j) acc += p.B(i, j) * u(j);
    (*dx)(i) = acc;
  }
}

template <typename Scalar>
void evaluate(const AgentModel& model, const DynVec<Scalar>& x,
              const DynVec<Scalar>& u, const Eigen::Vector3d& accel,
              DynVec<Scalar>* dx) {
  if (const auto* quad = std::get_if<QuadcopterParams>(&model.params)) {
    quadcopter_rhs(*quad, x, u, accel, dx);
  } else if (std::holds_alternative<BoatParams>(model.params)) {
    boat_rhs(x, u, accel, dx);
  } else {
    linear_rhs(std::get<LinearParams>(model.params), x, u, dx);
  }
}

void check_dims(const AgentModel& model, const VecRef& x, const VecRef& u) {
  if (x.size() != model.n || u.size() != model.m) {
    std::ostringstream os;
    os << model.name << ": dimension mismatch (state " << x.size() << "/"
       << model.n << ", input " << u.size() << "/" << model.m << ")";
    throw Error(os.str());
  }
}

}  // namespace

ConstraintSet::ConstraintSet(int dim)
    : lower_(Eigen::VectorXd::Constant(dim, -kInf)),
      upper_(Eigen::VectorXd::Constant(dim, kInf)) {}

ConstraintSet::ConstraintSet(Eigen::VectorXd lower, Eigen::VectorXd upper,
                             std::vector<NormBound> norms)
    : lower_(std::move(lower)), upper_(std::move(upper)),
      norms_(std::move(norms)) {
  validate();
}

void ConstraintSet::set_bounds(int index, double lower, double upper) {
  lower_(index) = lower;
  upper_(index) = upper;
  validate();
}

void ConstraintSet::add_norm_bound(NormBound bound) {
  norms_.push_back(std::move(bound));
  validate();
}

void ConstraintSet::validate() const {
  if (lower_.size() != upper_.size()) {
    throw ConfigError("constraint set: lower/upper size mismatch");
  }
  for (int i = 0; i < lower_.size(); ++i) {
    if (std::isnan(lower_(i)) || std::isnan(upper_(i)) ||
        lower_(i) > upper_(i)) {
      throw ConfigError("constraint set: invalid bounds at index " +
                        std::to_string(i));
    }
  }
  for (const NormBound& nb : norms_) {
    if (!(nb.max_norm >= 0.0) || nb.indices.empty()) {
      throw ConfigError("constraint set: invalid norm bound");
    }
    for (int idx : nb.indices) {
      if (idx < 0 || idx >= lower_.size()) {
        throw ConfigError("constraint set: norm bound index out of range");
      }
    }
  }
}

double ConstraintSet::max_violation(const VecRef& point) const {
  double worst = 0.0;
  for (int i = 0; i < lower_.size(); ++i) {
    worst = std::max(worst, lower_(i) - point(i));
    worst = std::max(worst, point(i) - upper_(i));
  }
  for (const NormBound& nb : norms_) {
    double sq = 0.0;
    for (int idx : nb.indices) sq += point(idx) * point(idx);
    worst = std::max(worst, std::sqrt(sq) - nb.max_norm);
  }
  return worst;
}

bool ConstraintSet::contains(const VecRef& point, double tolerance) const {
  return max_violation(point) <= tolerance;
}

DisturbanceModel::DisturbanceModel(std::vector<DisturbanceWindow> schedule,
                                   double bound)
    : schedule_(std::move(schedule)), bound_(bound) {
  for (const DisturbanceWindow& w : schedule_) {
    if (!(w.t_end >= w.t_start) || !w.accel.allFinite()) {
      throw ConfigError("disturbance window must have t_end >= t_start");
    }
  }
  // The summed disturbance only changes at window starts.
  for (const DisturbanceWindow& w : schedule_) {
    if (at(w.t_start).norm() > bound_ + 1e-12) {
      throw ConfigError("disturbance exceeds its bound at t = " +
                        std::to_string(w.t_start));
    }
  }
}

Eigen::Vector3d DisturbanceModel::at(double t) const {
  constexpr double kTimeTol = 1e-9;
  Eigen::Vector3d total = Eigen::Vector3d::Zero();
  for (const DisturbanceWindow& w : schedule_) {
    if (t >= w.t_start - kTimeTol && t < w.t_end - kTimeTol) total += w.accel;
  }
  return total;
}

StateVec AgentModel::derivative(const VecRef& x, const VecRef& u,
                                const Eigen::Vector3d& accel) const {
  check_dims(*this, x, u);
  DynVec<double> xs = x, us = u, dx;
  evaluate<double>(*this, xs, us, accel, &dx);
  return dx;
}

void AgentModel::jacobians(const VecRef& x, const VecRef& u, StateJac* fx,
                           InputJac* fu) const {
  check_dims(*this, x, u);
  const int nz = n + m;
  DynVec<AdScalar> xs(n), us(m), dx;
  for (int i = 0; i < n; ++i) {
    xs(i) = AdScalar(x(i), nz, i);
  }
  for (int j = 0; j < m; ++j) {
    us(j) = AdScalar(u(j), nz, n + j);
  }
  evaluate<AdScalar>(*this, xs, us, Eigen::Vector3d::Zero(), &dx);
  fx->resize(n, n);
  fu->resize(n, m);
  for (int i = 0; i < n; ++i) {
    const auto& d = dx(i).derivatives();
    if (d.size() == 0) {
      fx->row(i).setZero();
      fu->row(i).setZero();
      continue;
    }
    fx->row(i) = d.head(n).transpose();
    fu->row(i) = d.tail(m).transpose();
  }
}

AgentModel make_quadcopter(const QuadcopterParams& params) {
  AgentModel model;
  model.name = "quadcopter";
  model.n = 9;
  model.m = 4;
  model.params = params;
  model.output_matrix = Eigen::MatrixXd::Zero(kOutputDim, 9);
  model.output_matrix.leftCols(3).setIdentity();

  ConstraintSet states(9);
  states.set_bounds(5, -4.0, 4.0);
  states.set_bounds(6, -0.5, 0.5);
  states.set_bounds(7, -0.5, 0.5);
  states.add_norm_bound({{3, 4, 5}, 17.0});
  model.state_constraints = states;

  Eigen::VectorXd lo(4), hi(4);
  lo << -2.0, -0.5, -0.5, -std::numbers::pi / 2;
  hi << 2.0, 0.5, 0.5, std::numbers::pi / 2;
  model.input_constraints = ConstraintSet(lo, hi);

  model.ref_state_map = Eigen::MatrixXd::Zero(9, 3);
  model.ref_state_map.topRows(3).setIdentity();
  model.ref_input_map = Eigen::MatrixXd::Zero(4, 3);
  return model;
}

AgentModel make_boat(double surge_bound, double lateral_bound) {
  AgentModel model;
  model.name = "boat";
  model.n = 6;
  model.m = 3;
  model.params = BoatParams{};
  model.output_matrix = Eigen::MatrixXd::Zero(kOutputDim, 6);
  model.output_matrix(0, 0) = 1.0;
  model.output_matrix(1, 1) = 1.0;

  ConstraintSet states(6);
  states.set_bounds(5, -0.5, 0.5);
  states.add_norm_bound({{3, 4}, 15.0});
  model.state_constraints = states;

  Eigen::VectorXd lo(3), hi(3);
  lo << -surge_bound, -lateral_bound, -0.5;
  hi << surge_bound, lateral_bound, 0.5;
  model.input_constraints = ConstraintSet(lo, hi);

  model.ref_state_map = Eigen::MatrixXd::Zero(6, 3);
  model.ref_state_map(0, 0) = 1.0;
  model.ref_state_map(1, 1) = 1.0;
  model.ref_input_map = Eigen::MatrixXd::Zero(3, 3);
  return model;
}

AgentModel make_linear(Eigen::MatrixXd A, Eigen::MatrixXd B) {
  if (A.rows() != A.cols() || B.rows() != A.rows()) {
    throw ConfigError("linear model: A must be square and match B rows");
  }
  AgentModel model;
  model.name = "linear";
  model.n = static_cast<int>(A.rows());
  model.m = static_cast<int>(B.cols());
  if (model.n > kMaxStates || model.m > kMaxInputs) {
    throw ConfigError("linear model exceeds the supported dimensions");
  }
  model.output_matrix = Eigen::MatrixXd::Zero(kOutputDim, model.n);
  for (int i = 0; i < std::min(kOutputDim, model.n); ++i) {
    model.output_matrix(i, i) = 1.0;
  }
  model.state_constraints = ConstraintSet(model.n);
  model.input_constraints = ConstraintSet(model.m);

  // Minimum-norm steady state of [A B; C 0] [x; u] = [0; theta]. Output
  // axes without a steady state are pinned to 0.
  const int n = model.n, m = model.m;
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + kOutputDim, n + m);
  kkt.topLeftCorner(n, n) = A;
  kkt.topRightCorner(n, m) = B;
  kkt.bottomLeftCorner(kOutputDim, n) = model.output_matrix;
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + kOutputDim, kOutputDim);
  rhs.bottomRows(kOutputDim).setIdentity();
  Eigen::MatrixXd maps = kkt.completeOrthogonalDecomposition().solve(rhs);
  for (int i = 0; i < kOutputDim; ++i) {
    if ((kkt * maps.col(i) - rhs.col(i)).norm() > 1e-9) {
      maps.col(i).setZero();
      model.reference_lower(i) = 0.0;
      model.reference_upper(i) = 0.0;
    }
  }
  model.ref_state_map = maps.topRows(n);
  model.ref_input_map = maps.bottomRows(m);
  model.params = LinearParams{std::move(A), std::move(B)};
  return model;
}

Eigen::Matrix<double, 9, 1> quadcopter_derivative(
    const Eigen::Matrix<double, 9, 1>& state, const Eigen::Vector4d& input,
    const Eigen::Vector3d& f_ext, const QuadcopterParams& params) {
  DynVec<double> x = state, u = input, dx;
  quadcopter_rhs(params, x, u, f_ext, &dx);
  return dx;
}

Eigen::Matrix<double, 6, 1> boat_derivative(
    const Eigen::Matrix<double, 6, 1>& state, const Eigen::Vector3d& input,
    const Eigen::Vector3d& accel) {
  DynVec<double> x = state, u = input, dx;
  boat_rhs(x, u, accel, &dx);
  return dx;
}

StateVec rk4_step(const AgentModel& model, const VecRef& x, const VecRef& u,
                  const Eigen::Vector3d& accel, double dt) {
  if (!(dt > 0.0)) throw Error("rk4_step: dt must be positive");
  const StateVec k1 = model.derivative(x, u, accel);
  const StateVec x2 = x + 0.5 * dt * k1;
  const StateVec k2 = model.derivative(x2, u, accel);
  const StateVec x3 = x + 0.5 * dt * k2;
  const StateVec k3 = model.derivative(x3, u, accel);
  const StateVec x4 = x + dt * k3;
  const StateVec k4 = model.derivative(x4, u, accel);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Linearization linearize(const AgentModel& model, const VecRef& x_bar,
                        const VecRef& u_bar, double h) {
  const double residual = model.derivative(x_bar, u_bar).norm();
  if (!(residual < 1e-6)) {
    std::ostringstream os;
    os << model.name << ": linearization point is not an equilibrium "
       << "(||f|| = " << residual << ")";
    throw NotEquilibriumError(os.str(), residual);
  }
  Linearization lin{Eigen::MatrixXd(model.n, model.n),
                    Eigen::MatrixXd(model.n, model.m)};
  Eigen::VectorXd x = x_bar, u = u_bar;
  for (int j = 0; j < model.n; ++j) {
    x(j) = x_bar(j) + h;
    const StateVec fp = model.derivative(x, u_bar);
    x(j) = x_bar(j) - h;
    const StateVec fm = model.derivative(x, u_bar);
    x(j) = x_bar(j);
    lin.A.col(j) = (fp - fm) / (2.0 * h);
  }
  for (int j = 0; j < model.m; ++j) {
    u(j) = u_bar(j) + h;
    const StateVec fp = model.derivative(x_bar, u);
    u(j) = u_bar(j) - h;
    const StateVec fm = model.derivative(x_bar, u);
    u(j) = u_bar(j);
    lin.B.col(j) = (fp - fm) / (2.0 * h);
  }
  return lin;
}

SteadyState steady_state_maps(const AgentModel& model,
                              const Eigen::Vector3d& theta) {
  for (int i = 0; i < 3; ++i) {
    if (!(theta(i) >= model.reference_lower(i) &&
          theta(i) <= model.reference_upper(i))) {
      std::ostringstream os;
      os << model.name << ": reference [" << theta.transpose()
         << "] outside the admissible box";
      throw ReferenceOutOfRangeError(os.str());
    }
  }
  return {model.ref_state_map * theta, model.ref_input_map * theta};
}

}  // namespace rdv
