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

#include "rdv/sampling_kernels.h"

#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <random>

#include <omp.h>

namespace rdv {
namespace {

double phi_ratio(const AgentModel& model,
                 const TerminalIngredients& ingredients,
                 const Eigen::VectorXd& dx) {
  const double denom = p_norm(ingredients.P, dx);
  if (denom == 0.0) return 0.0;
  return p_norm(ingredients.P, phi_aux(model, ingredients, dx)) / denom;
}

double decrease_excess(const AgentModel& model,
                       const TerminalIngredients& ingredients,
                       const Eigen::VectorXd& dx) {
  const Eigen::VectorXd u = ingredients.u_lin + ingredients.K * dx;
  const Eigen::VectorXd f =
      model.derivative(ingredients.x_lin + dx, u);
  const double v_dot = 2.0 * dx.dot(ingredients.P * f);
  return v_dot + 0.5 * dx.dot(ingredients.Q_star * dx);
}

// Ties resolve to the lowest index so serial and parallel results agree.
void merge(KernelMax* best, double value, Eigen::Index index) {
  if (value > best->value || (value == best->value && index < best->index) ||
      best->index < 0) {
    best->value = value;
    best->index = index;
  }
}

template <typename Eval>
KernelMax reduce_serial(Eigen::Index count, const Eval& eval) {
  KernelMax best{-std::numeric_limits<double>::infinity(), -1};
  for (Eigen::Index k = 0; k < count; ++k) merge(&best, eval(k), k);
  return best;
}

template <typename Eval>
KernelMax reduce_parallel(Eigen::Index count, const Eval& eval) {
  KernelMax best{-std::numeric_limits<double>::infinity(), -1};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
#pragma omp parallel
  {
    KernelMax local{-std::numeric_limits<double>::infinity(), -1};
#pragma omp for schedule(static) nowait
    for (Eigen::Index k = 0; k < count; ++k) {
      if (failed.load(std::memory_order_relaxed)) continue;
      try {
        merge(&local, eval(k), k);
      } catch (...) {
#pragma omp critical(rdv_kernel_failure)
        {
          if (!failure) failure = std::current_exception();
        }
        failed = true;
      }
    }
#pragma omp critical(rdv_kernel_merge)
    {
      if (local.index >= 0) merge(&best, local.value, local.index);
    }
  }
  if (failure) std::rethrow_exception(failure);
  return best;
}

}  // namespace

Eigen::MatrixXd sample_ellipsoid_directions(const MatRef& P, int count,
                                            std::uint64_t seed) {
  const Eigen::Index n = P.rows();
  const Eigen::LLT<Eigen::MatrixXd> llt(P);
  if (llt.info() != Eigen::Success) {
    throw SynthesisError("sample_ellipsoid_directions: P is not positive "
                         "definite");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd dirs(n, count);
  for (int k = 0; k < count; ++k) {
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z(i) = normal(rng);
    z.normalize();
    // P = L L', x = L^-T z has x' P x = z' z = 1.
    dirs.col(k) = llt.matrixU().solve(z);
  }
  return dirs;
}

KernelMax max_phi_ratio_serial(const AgentModel& model,
                               const TerminalIngredients& ingredients,
                               const MatRef& directions, double scale) {
  return reduce_serial(directions.cols(), [&](Eigen::Index k) {
    return phi_ratio(model, ingredients, scale * directions.col(k));
  });
}

KernelMax max_phi_ratio_parallel(const AgentModel& model,
                                 const TerminalIngredients& ingredients,
                                 const MatRef& directions, double scale) {
  return reduce_parallel(directions.cols(), [&](Eigen::Index k) {
    return phi_ratio(model, ingredients, scale * directions.col(k));
  });
}

KernelMax max_decrease_excess_serial(const AgentModel& model,
                                     const TerminalIngredients& ingredients,
                                     const MatRef& points) {
  return reduce_serial(points.cols(), [&](Eigen::Index k) {
    return decrease_excess(model, ingredients, points.col(k));
  });
}

KernelMax max_decrease_excess_parallel(const AgentModel& model,
                                       const TerminalIngredients& ingredients,
                                       const MatRef& points) {
  return reduce_parallel(points.cols(), [&](Eigen::Index k) {
    return decrease_excess(model, ingredients, points.col(k));
  });
}

}  // namespace rdv
