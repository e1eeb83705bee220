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

// Agent dynamics: quadcopter with first-order attitude loop, planar boat,
// and a linear toy agent. All dynamics are continuous time; rk4_step is the
// single discretization used by both plant and predictor.

#ifndef RDV_MODELS_H_
#define RDV_MODELS_H_

#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "rdv/errors.h"

namespace rdv {

inline constexpr int kMaxStates = 12;
inline constexpr int kMaxInputs = 6;
inline constexpr int kOutputDim = 3;

// Stack-allocated vectors for the hot integration paths.
using StateVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxStates, 1>;
using InputVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxInputs, 1>;
using StateJac =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxStates,
                  kMaxStates>;
using InputJac =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxStates,
                  kMaxInputs>;

using VecRef = Eigen::Ref<const Eigen::VectorXd>;
using MatRef = Eigen::Ref<const Eigen::MatrixXd>;

// Box bounds plus Euclidean-norm bounds over index subsets, e.g.
// sqrt(vx^2 + vy^2 + vz^2) <= 17.
struct NormBound {
  std::vector<int> indices;
  double max_norm = 0.0;
};

class ConstraintSet {
 public:
  ConstraintSet() = default;
  // Unbounded set of dimension `dim`.
  explicit ConstraintSet(int dim);
  ConstraintSet(Eigen::VectorXd lower, Eigen::VectorXd upper,
                std::vector<NormBound> norms = {});

  int dim() const { return static_cast<int>(lower_.size()); }
  const Eigen::VectorXd& lower() const { return lower_; }
  const Eigen::VectorXd& upper() const { return upper_; }
  const std::vector<NormBound>& norm_bounds() const { return norms_; }

  void set_bounds(int index, double lower, double upper);
  void add_norm_bound(NormBound bound);

  // Largest violation over all bounds, 0 when inside.
  double max_violation(const VecRef& point) const;
  bool contains(const VecRef& point, double tolerance = 0.0) const;

 private:
  void validate() const;

  Eigen::VectorXd lower_;
  Eigen::VectorXd upper_;
  std::vector<NormBound> norms_;
};

// Piecewise-constant acceleration disturbance F_ext/m, active on half-open
// windows [t_start, t_end).
struct DisturbanceWindow {
  double t_start = 0.0;
  double t_end = 0.0;
  Eigen::Vector3d accel = Eigen::Vector3d::Zero();
};

class DisturbanceModel {
 public:
  DisturbanceModel() = default;
  DisturbanceModel(std::vector<DisturbanceWindow> schedule, double bound);

  Eigen::Vector3d at(double t) const;
  const std::vector<DisturbanceWindow>& schedule() const { return schedule_; }
  double bound() const { return bound_; }
  bool empty() const { return schedule_.empty(); }

 private:
  std::vector<DisturbanceWindow> schedule_;
  double bound_ = 0.0;
};

struct QuadcopterParams {
  double k_drag_x = 0.1;
  double k_drag_y = 0.1;
  double tau_roll = 0.1901;
  double gain_roll = 0.95;
  double tau_pitch = 0.1721;
  double gain_pitch = 1.02;
  double gravity = 9.81;
};

// Kinematic planar boat; inputs are body-frame accelerations.
struct BoatParams {};

// x' = A x + B u, used for oracle tests.
struct LinearParams {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
};

using ModelParams = std::variant<QuadcopterParams, BoatParams, LinearParams>;

// Immutable after construction. Steady-state maps are linear:
// h_x(theta) = ref_state_map * theta, h_u(theta) = ref_input_map * theta.
struct AgentModel {
  int id = 0;
  std::string name;
  int n = 0;
  int m = 0;
  Eigen::MatrixXd output_matrix;  // kOutputDim x n
  ConstraintSet state_constraints;
  ConstraintSet input_constraints;
  ModelParams params;
  Eigen::MatrixXd ref_state_map;  // n x 3
  Eigen::MatrixXd ref_input_map;  // m x 3
  Eigen::Vector3d reference_lower = Eigen::Vector3d::Constant(-50.0);
  Eigen::Vector3d reference_upper = Eigen::Vector3d::Constant(50.0);

  // Continuous-time state derivative with acceleration disturbance.
  StateVec derivative(const VecRef& x, const VecRef& u,
                      const Eigen::Vector3d& accel =
                          Eigen::Vector3d::Zero()) const;

  // Exact Jacobians of the nominal dynamics (forward-mode autodiff).
  void jacobians(const VecRef& x, const VecRef& u, StateJac* fx,
                 InputJac* fu) const;

  Eigen::VectorXd output(const VecRef& x) const { return output_matrix * x; }
};

AgentModel make_quadcopter(const QuadcopterParams& params = {});

// surge_bound and lateral_bound limit |tau_x| and |tau_y|.
AgentModel make_boat(double surge_bound = 2.0, double lateral_bound = 2.0);

// Linear toy agent: C = [I 0] truncated to the state dimension, unbounded
// constraints, minimum-norm steady-state maps (unreachable axes pinned to 0).
AgentModel make_linear(Eigen::MatrixXd A, Eigen::MatrixXd B);

Eigen::Matrix<double, 9, 1> quadcopter_derivative(
    const Eigen::Matrix<double, 9, 1>& state,
    const Eigen::Vector4d& input, const Eigen::Vector3d& f_ext,
    const QuadcopterParams& params = {});

Eigen::Matrix<double, 6, 1> boat_derivative(
    const Eigen::Matrix<double, 6, 1>& state, const Eigen::Vector3d& input,
    const Eigen::Vector3d& accel = Eigen::Vector3d::Zero());

// Classical RK4 with input and disturbance held over dt.
StateVec rk4_step(const AgentModel& model, const VecRef& x, const VecRef& u,
                  const Eigen::Vector3d& accel, double dt);

struct Linearization {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
};

// Central finite differences, step h. Throws NotEquilibriumError if
// ||f(x_bar, u_bar)|| >= 1e-6.
Linearization linearize(const AgentModel& model, const VecRef& x_bar,
                        const VecRef& u_bar, double h = 1e-6);

struct SteadyState {
  Eigen::VectorXd x;
  Eigen::VectorXd u;
};

SteadyState steady_state_maps(const AgentModel& model,
                              const Eigen::Vector3d& theta);

}  // namespace rdv

#endif  // RDV_MODELS_H_
