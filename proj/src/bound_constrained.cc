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

#include "rdv/bound_constrained.h"

#include <cmath>
#include <deque>

namespace rdv {
namespace {

struct CurvaturePair {
  Eigen::VectorXd s;
  Eigen::VectorXd y;
};

Eigen::VectorXd clamp(const Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                      const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

// Two-loop recursion restricted to the free coordinates.
Eigen::VectorXd lbfgs_direction(const std::deque<CurvaturePair>& memory,
                                const Eigen::VectorXd& grad,
                                const Eigen::VectorXd& free) {
  Eigen::VectorXd q = grad.cwiseProduct(free);
  std::vector<double> alpha(memory.size(), 0.0), rho(memory.size(), 0.0);
  double gamma = 1.0;
  bool have_gamma = false;
  for (int i = static_cast<int>(memory.size()) - 1; i >= 0; --i) {
    const Eigen::VectorXd s = memory[i].s.cwiseProduct(free);
    const Eigen::VectorXd y = memory[i].y.cwiseProduct(free);
    const double sy = s.dot(y);
    if (!(sy > 1e-12 * s.norm() * y.norm()) || sy <= 0.0) continue;
    rho[i] = 1.0 / sy;
    alpha[i] = rho[i] * s.dot(q);
    q -= alpha[i] * y;
    if (!have_gamma) {
      gamma = sy / y.squaredNorm();
      have_gamma = true;
    }
  }
  Eigen::VectorXd r = gamma * q;
  for (size_t i = 0; i < memory.size(); ++i) {
    if (rho[i] == 0.0) continue;
    const Eigen::VectorXd s = memory[i].s.cwiseProduct(free);
    const Eigen::VectorXd y = memory[i].y.cwiseProduct(free);
    const double beta = rho[i] * y.dot(r);
    r += (alpha[i] - beta) * s;
  }
  return -r.cwiseProduct(free);
}

}  // namespace

double projected_gradient_norm(const Eigen::VectorXd& x,
                               const Eigen::VectorXd& grad,
                               const Eigen::VectorXd& lower,
                               const Eigen::VectorXd& upper) {
  if (x.size() == 0) return 0.0;
  return (clamp(x - grad, lower, upper) - x).cwiseAbs().maxCoeff();
}

BoxLbfgsResult minimize_box(const Objective& objective, Eigen::VectorXd x0,
                            const Eigen::VectorXd& lower,
                            const Eigen::VectorXd& upper,
                            const BoxLbfgsOptions& options) {
  const Eigen::Index dim = x0.size();
  BoxLbfgsResult result;
  result.x = clamp(x0, lower, upper);
  Eigen::VectorXd grad(dim);
  result.value = objective(result.x, &grad);
  ++result.evaluations;
  if (options.record_trace) result.trace.push_back(result.value);

  std::deque<CurvaturePair> memory;
  for (; result.iterations < options.max_iterations; ++result.iterations) {
    result.projected_gradient =
        projected_gradient_norm(result.x, grad, lower, upper);
    if (result.projected_gradient <= options.tolerance) {
      result.converged = true;
      break;
    }

    Eigen::VectorXd free = Eigen::VectorXd::Ones(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double span = 1e-12 * std::max(1.0, std::abs(result.x(i)));
      if ((result.x(i) <= lower(i) + span && grad(i) > 0.0) ||
          (result.x(i) >= upper(i) - span && grad(i) < 0.0)) {
        free(i) = 0.0;
      }
    }

    Eigen::VectorXd direction = lbfgs_direction(memory, grad, free);
    double slope = grad.dot(direction);
    if (!(slope < 0.0)) {
      memory.clear();
      direction = -grad.cwiseProduct(free);
      slope = grad.dot(direction);
    }
    double step = 1.0;
    if (memory.empty()) {
      const double dmax = direction.cwiseAbs().maxCoeff();
      if (dmax > 0.0) step = std::min(1.0, 1.0 / dmax);
    }

    bool accepted = false;
    Eigen::VectorXd x_new;
    double f_new = 0.0;
    for (int bt = 0; bt < options.max_backtracks; ++bt) {
      x_new = clamp(result.x + step * direction, lower, upper);
      f_new = objective(x_new, nullptr);
      ++result.evaluations;
      if (std::isfinite(f_new) &&
          f_new <= result.value +
                       options.armijo * grad.dot(x_new - result.x)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (!memory.empty()) {
        memory.clear();
        continue;
      }
      break;
    }

    Eigen::VectorXd grad_new(dim);
    f_new = objective(x_new, &grad_new);
    ++result.evaluations;
    CurvaturePair pair{x_new - result.x, grad_new - grad};
    if (pair.s.dot(pair.y) > 1e-12 * pair.s.norm() * pair.y.norm()) {
      memory.push_back(std::move(pair));
      if (static_cast<int>(memory.size()) > options.memory) {
        memory.pop_front();
      }
    }
    result.x = std::move(x_new);
    result.value = f_new;
    grad = std::move(grad_new);
    if (options.record_trace) result.trace.push_back(result.value);
  }
  result.projected_gradient =
      projected_gradient_norm(result.x, grad, lower, upper);
  if (result.projected_gradient <= options.tolerance) result.converged = true;
  return result;
}

BoxQpResult solve_box_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                         const Eigen::VectorXd& lower,
                         const Eigen::VectorXd& upper, Eigen::VectorXd x0,
                         int max_iterations, double tolerance) {
  const Eigen::Index dim = g.size();
  BoxQpResult result;
  result.x = clamp(x0, lower, upper);
  auto value = [&](const Eigen::VectorXd& x) {
    return g.dot(x) + 0.5 * x.dot(H * x);
  };
  double v = value(result.x);
  std::vector<char> old_clamped;
  for (; result.iterations < max_iterations; ++result.iterations) {
    const Eigen::VectorXd grad = g + H * result.x;
    std::vector<char> clamped(dim, 0);
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < dim; ++i) {
      if ((result.x(i) <= lower(i) && grad(i) > 0.0) ||
          (result.x(i) >= upper(i) && grad(i) < 0.0)) {
        clamped[i] = 1;
      } else {
        free.push_back(i);
      }
    }
    if (free.empty()) {
      result.converged = true;
      break;
    }
    const Eigen::Index nf = static_cast<Eigen::Index>(free.size());
    Eigen::VectorXd gf(nf);
    for (Eigen::Index a = 0; a < nf; ++a) gf(a) = grad(free[a]);
    if (gf.cwiseAbs().maxCoeff() <= tolerance) {
      result.converged = true;
      break;
    }
    Eigen::MatrixXd Hf(nf, nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      for (Eigen::Index b = 0; b < nf; ++b) Hf(a, b) = H(free[a], free[b]);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(Hf);
    if (llt.info() != Eigen::Success) break;
    Eigen::VectorXd search = Eigen::VectorXd::Zero(dim);
    const Eigen::VectorXd sf = llt.solve(-gf);
    for (Eigen::Index a = 0; a < nf; ++a) search(free[a]) = sf(a);
    const double slope = grad.dot(search);
    if (!(slope < 0.0)) {
      result.converged = true;
      break;
    }
    double step = 1.0;
    bool accepted = false;
    Eigen::VectorXd candidate;
    double vc = 0.0;
    for (int bt = 0; bt < 40; ++bt) {
      candidate = clamp(result.x + step * search, lower, upper);
      vc = value(candidate);
      if (vc - v <= 0.1 * grad.dot(candidate - result.x)) {
        accepted = true;
        break;
      }
      step *= 0.6;
    }
    if (!accepted) break;
    const double improvement = v - vc;
    result.x = std::move(candidate);
    v = vc;
    if (clamped == old_clamped && improvement <= 1e-14 * (1.0 + std::abs(v))) {
      result.converged = true;
      break;
    }
    old_clamped = std::move(clamped);
  }
  return result;
}

BoxLbfgsResult minimize_box_newton(const Objective& objective,
                                   const HessianFn& hessian,
                                   Eigen::VectorXd x0,
                                   const Eigen::VectorXd& lower,
                                   const Eigen::VectorXd& upper,
                                   const BoxLbfgsOptions& options) {
  const Eigen::Index dim = x0.size();
  BoxLbfgsResult result;
  result.x = clamp(x0, lower, upper);
  Eigen::VectorXd grad(dim);
  result.value = objective(result.x, &grad);
  ++result.evaluations;
  if (options.record_trace) result.trace.push_back(result.value);

  Eigen::MatrixXd H;
  double damping = 0.0;
  for (; result.iterations < options.max_iterations; ++result.iterations) {
    result.projected_gradient =
        projected_gradient_norm(result.x, grad, lower, upper);
    if (result.projected_gradient <= options.tolerance) {
      result.converged = true;
      break;
    }
    hessian(result.x, &H);
    // Marquardt scaling: damp each variable relative to its own curvature.
    const Eigen::VectorXd diag = H.diagonal().cwiseAbs();
    const double floor = 1e-12 * std::max(1e-12, diag.maxCoeff());
    H.diagonal().array() += (damping * diag.array()).max(floor) + floor;
    const BoxQpResult qp =
        solve_box_qp(H, grad, lower - result.x, upper - result.x,
                     Eigen::VectorXd::Zero(dim));
    Eigen::VectorXd direction = qp.x;
    double slope = grad.dot(direction);
    if (!(slope < 0.0)) {
      direction = clamp(result.x - grad, lower, upper) - result.x;
      slope = grad.dot(direction);
      if (!(slope < 0.0)) break;
    }

    bool accepted = false;
    Eigen::VectorXd x_new;
    double f_new = 0.0;
    double step = 1.0;
    for (int bt = 0; bt < options.max_backtracks; ++bt) {
      x_new = clamp(result.x + step * direction, lower, upper);
      f_new = objective(x_new, nullptr);
      ++result.evaluations;
      if (std::isfinite(f_new) &&
          f_new <= result.value + options.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    // Levenberg-style damping keeps the model honest where the
    // Gauss-Newton curvature is poor.
    if (!accepted || step < 0.25) {
      damping = std::max(1e-8, damping * 10.0);
    } else if (step == 1.0) {
      damping *= 0.1;
      if (damping < 1e-10) damping = 0.0;
    }
    if (!accepted) {
      if (damping > 1e6) break;
      continue;
    }
    f_new = objective(x_new, &grad);
    ++result.evaluations;
    result.x = std::move(x_new);
    result.value = f_new;
    if (options.record_trace) result.trace.push_back(result.value);
  }
  result.projected_gradient =
      projected_gradient_norm(result.x, grad, lower, upper);
  if (result.projected_gradient <= options.tolerance) result.converged = true;
  return result;
}

}  // namespace rdv
