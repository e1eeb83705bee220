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

// Batched point evaluations over the terminal ellipsoid. Each kernel has a
// serial reference and an OpenMP version; both must return identical
// results (max reductions are order independent).

#ifndef RDV_SAMPLING_KERNELS_H_
#define RDV_SAMPLING_KERNELS_H_

#include <cstdint>

#include <Eigen/Dense>

#include "rdv/models.h"
#include "rdv/terminal.h"

namespace rdv {

struct KernelMax {
  double value = 0.0;
  Eigen::Index index = -1;
};

// Columns of the result have unit P-norm. Deterministic in `seed`.
Eigen::MatrixXd sample_ellipsoid_directions(const MatRef& P, int count,
                                            std::uint64_t seed);

// max_k ||phi(scale * d_k)||_P / ||scale * d_k||_P over columns d_k.
KernelMax max_phi_ratio_serial(const AgentModel& model,
                               const TerminalIngredients& ingredients,
                               const MatRef& directions, double scale);
KernelMax max_phi_ratio_parallel(const AgentModel& model,
                                 const TerminalIngredients& ingredients,
                                 const MatRef& directions, double scale);

// max_k [ dV_f/dt(dx_k) + 0.5 ||dx_k||^2_{Q*} ] for the nominal closed loop
// under u = u_lin + K dx. The decrease condition holds where this is <= 0.
KernelMax max_decrease_excess_serial(const AgentModel& model,
                                     const TerminalIngredients& ingredients,
                                     const MatRef& points);
KernelMax max_decrease_excess_parallel(const AgentModel& model,
                                       const TerminalIngredients& ingredients,
                                       const MatRef& points);

}  // namespace rdv

#endif  // RDV_SAMPLING_KERNELS_H_
