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

#include "rdv/terminal.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <unsupported/Eigen/KroneckerProduct>

#include "rdv/sampling_kernels.h"

namespace rdv {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// No Hurwitz or definiteness checks; callers validate.
Eigen::MatrixXd lyapunov_kron(const MatRef& A_k, const MatRef& Q) {
  const Eigen::Index n = A_k.rows();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd At = A_k.transpose();
  // vec(A' P + P A) = (I kron A' + A' kron I) vec(P), column-major vec.
  const Eigen::MatrixXd M =
      Eigen::kroneckerProduct(I, At) + Eigen::kroneckerProduct(At, I);
  const Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(
      Eigen::MatrixXd(Q).data(), n * n);
  const Eigen::VectorXd p = M.partialPivLu().solve(rhs);
  Eigen::MatrixXd P = Eigen::Map<const Eigen::MatrixXd>(p.data(), n, n);
  return 0.5 * (P + P.transpose());
}

void require_symmetric(const MatRef& M, const char* what) {
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw SynthesisError(std::string(what) + " must be symmetric");
  }
}

double min_eigenvalue(const MatRef& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S,
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// Bass's shift: with beta above the spectral radius, -(A + beta I) is
// Hurwitz and K0 = -B' X^-1 from (A + beta I) X + X (A + beta I)' = 2 B B'
// stabilizes A.
Eigen::MatrixXd initial_stabilizing_gain(const MatRef& A, const MatRef& B) {
  const Eigen::Index n = A.rows(), m = B.cols();
  if (spectral_abscissa(A) < 0.0) return Eigen::MatrixXd::Zero(m, n);
  const double beta = A.cwiseAbs().rowwise().sum().maxCoeff() + 1.0;
  const Eigen::MatrixXd shifted =
      -(A + beta * Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd X =
      lyapunov_kron(shifted.transpose(), 2.0 * B * B.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(X);
  Eigen::MatrixXd K;
  if (llt.info() == Eigen::Success) {
    K = -B.transpose() * llt.solve(Eigen::MatrixXd::Identity(n, n));
  } else {
    // Uncontrollable but stable modes leave X singular.
    const double tau = 1e-9 * std::max(1.0, X.norm());
    K = -B.transpose() *
        (X + tau * Eigen::MatrixXd::Identity(n, n))
            .ldlt()
            .solve(Eigen::MatrixXd::Identity(n, n));
  }
  if (!(spectral_abscissa(A + B * K) < 0.0)) {
    throw SynthesisError("lqr_gain: no initial stabilizing gain; (A, B) is "
                         "not stabilizable");
  }
  return K;
}

}  // namespace

double spectral_abscissa(const MatRef& A) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  return es.eigenvalues().real().maxCoeff();
}

double p_norm(const MatRef& P, const VecRef& v) {
  return std::sqrt(std::max(0.0, v.dot(P * v)));
}

Eigen::MatrixXd solve_lyapunov(const MatRef& A_k, const MatRef& Q_star) {
  if (A_k.rows() != A_k.cols() || Q_star.rows() != A_k.rows() ||
      Q_star.cols() != A_k.cols()) {
    throw SynthesisError("solve_lyapunov: dimension mismatch");
  }
  const double abscissa = spectral_abscissa(A_k);
  if (!(abscissa < 0.0)) {
    std::ostringstream os;
    os << "solve_lyapunov: closed loop is not Hurwitz (spectral abscissa "
       << abscissa << ")";
    throw SynthesisError(os.str());
  }
  require_symmetric(Q_star, "solve_lyapunov: Q_star");
  return lyapunov_kron(A_k, Q_star);
}

Eigen::MatrixXd lqr_gain(const MatRef& A, const MatRef& B, const MatRef& Q,
                         const MatRef& R, Eigen::MatrixXd* S_out) {
  const Eigen::Index n = A.rows(), m = B.cols();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n ||
      R.rows() != m || R.cols() != m) {
    throw SynthesisError("lqr_gain: dimension mismatch");
  }
  require_symmetric(Q, "lqr_gain: Q");
  require_symmetric(R, "lqr_gain: R");
  if (min_eigenvalue(Q) < -1e-12) {
    throw SynthesisError("lqr_gain: Q must be positive semidefinite");
  }
  const Eigen::LLT<Eigen::MatrixXd> r_llt(R);
  if (r_llt.info() != Eigen::Success) {
    throw SynthesisError("lqr_gain: R must be positive definite");
  }

  constexpr int kMaxIterations = 100;
  Eigen::MatrixXd K = initial_stabilizing_gain(A, B);
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n);
  bool converged = false;
  for (int it = 0; it < kMaxIterations; ++it) {
    const Eigen::MatrixXd A_k = A + B * K;
    if (!(spectral_abscissa(A_k) < 0.0)) break;
    const Eigen::MatrixXd S_next =
        lyapunov_kron(A_k, Q + K.transpose() * R * K);
    K = -r_llt.solve(B.transpose() * S_next);
    const double change = (S_next - S).norm();
    S = S_next;
    if (change <= 1e-13 * std::max(1.0, S.norm())) {
      converged = true;
      break;
    }
  }
  if (!converged || !(spectral_abscissa(A + B * K) < 0.0)) {
    throw SynthesisError("lqr_gain: Newton-Kleinman iteration did not reach "
                         "a stabilizing Riccati solution");
  }
  if (S_out != nullptr) *S_out = S;
  return K;
}

Eigen::VectorXd phi_aux(const AgentModel& model,
                        const TerminalIngredients& ingredients,
                        const VecRef& dx) {
  const Eigen::VectorXd u = ingredients.u_lin + ingredients.K * dx;
  const StateVec f = model.derivative(ingredients.x_lin + dx, u);
  return f - ingredients.closed_loop() * dx;
}

AlphaBreakdown alpha_upper_bound(const AgentModel& model,
                                 const TerminalIngredients& ingredients,
                                 const AlphaSearchOptions& options) {
  const Eigen::Index n = ingredients.P.rows();
  const Eigen::LLT<Eigen::MatrixXd> llt(ingredients.P);
  if (llt.info() != Eigen::Success) {
    throw SynthesisError("alpha_upper_bound: P is not positive definite");
  }
  // dx = W y maps the Euclidean ball |y| <= a onto {dx' P dx <= a^2}.
  const Eigen::MatrixXd W =
      llt.matrixU().solve(Eigen::MatrixXd::Identity(n, n));

  AlphaBreakdown out;
  out.ratio_bound = options.safety_factor * ingredients.lambda_min_qhat / 4.0;

  // Linear images of the ellipsoid have closed-form extents.
  auto box_extent = [](const Eigen::MatrixXd& map, const Eigen::VectorXd& lo,
                       const Eigen::VectorXd& hi,
                       const Eigen::VectorXd& center) {
    double alpha = kInf;
    for (Eigen::Index i = 0; i < map.rows(); ++i) {
      const double gain = map.row(i).norm();
      const double margin = std::min(hi(i) - center(i), center(i) - lo(i));
      if (margin < 0.0) return 0.0;
      if (gain > 0.0 && std::isfinite(margin)) {
        alpha = std::min(alpha, margin / gain);
      }
    }
    return alpha;
  };
  auto norm_extent = [](const Eigen::MatrixXd& map, const ConstraintSet& set,
                        const Eigen::VectorXd& center) {
    double alpha = kInf;
    for (const NormBound& nb : set.norm_bounds()) {
      Eigen::MatrixXd rows(nb.indices.size(), map.cols());
      Eigen::VectorXd c(nb.indices.size());
      for (size_t r = 0; r < nb.indices.size(); ++r) {
        rows.row(r) = map.row(nb.indices[r]);
        c(r) = center(nb.indices[r]);
      }
      const double gain =
          Eigen::JacobiSVD<Eigen::MatrixXd>(rows).singularValues()(0);
      const double margin = nb.max_norm - c.norm();
      if (margin < 0.0) return 0.0;
      if (gain > 0.0) alpha = std::min(alpha, margin / gain);
    }
    return alpha;
  };

  const Eigen::MatrixXd KW = ingredients.K * W;
  const ConstraintSet& U = model.input_constraints;
  const ConstraintSet& X = model.state_constraints;
  out.alpha_inputs =
      std::min(box_extent(KW, U.lower(), U.upper(), ingredients.u_lin),
               norm_extent(KW, U, ingredients.u_lin));
  out.alpha_states =
      std::min(box_extent(W, X.lower(), X.upper(), ingredients.x_lin),
               norm_extent(W, X, ingredients.x_lin));

  const Eigen::MatrixXd dirs =
      sample_ellipsoid_directions(ingredients.P, options.boundary_samples,
                                  options.seed);
  // Multistart points for local ascent, in whitened coordinates.
  const int starts = std::min<int>(options.local_descents,
                                   static_cast<int>(dirs.cols()));
  Eigen::MatrixXd start_dirs(n, std::max(starts, 0));
  const Eigen::Index stride = std::max<Eigen::Index>(1, dirs.cols() /
                                                         std::max(starts, 1));
  for (int s = 0; s < starts; ++s) {
    start_dirs.col(s) = llt.matrixU() * dirs.col(s * stride);
  }

  auto ratio_at = [&](const Eigen::VectorXd& y) {
    const Eigen::VectorXd dx = W * y;
    const double denom = p_norm(ingredients.P, dx);
    if (denom == 0.0) return 0.0;
    return p_norm(ingredients.P, phi_aux(model, ingredients, dx)) / denom;
  };

  // Projected finite-difference ascent inside |y| <= radius.
  auto local_ascent = [&](Eigen::VectorXd y, double radius) {
    double best = ratio_at(y);
    double step = 0.1 * radius;
    const double h = 1e-6 * radius;
    for (int it = 0; it < options.descent_iterations && step > 1e-9 * radius;
         ++it) {
      Eigen::VectorXd grad(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd yp = y, ym = y;
        yp(i) += h;
        ym(i) -= h;
        grad(i) = (ratio_at(yp) - ratio_at(ym)) / (2.0 * h);
      }
      const double gnorm = grad.norm();
      if (!(gnorm > 0.0)) break;
      bool improved = false;
      while (step > 1e-9 * radius) {
        Eigen::VectorXd candidate = y + (step / gnorm) * grad;
        const double len = candidate.norm();
        if (len > radius) candidate *= radius / len;
        const double value = ratio_at(candidate);
        if (value > best) {
          best = value;
          y = candidate;
          improved = true;
          step *= 1.5;
          break;
        }
        step *= 0.5;
      }
      if (!improved) break;
    }
    return best;
  };

  auto condition_holds = [&](double alpha) {
    for (double fraction : {1.0, 0.5}) {
      const KernelMax km =
          options.parallel
              ? max_phi_ratio_parallel(model, ingredients, dirs,
                                       alpha * fraction)
              : max_phi_ratio_serial(model, ingredients, dirs,
                                     alpha * fraction);
      if (km.value > out.ratio_bound) return false;
    }
    double worst = 0.0;
#pragma omp parallel for reduction(max : worst) schedule(dynamic) \
    if (options.parallel)
    for (int s = 0; s < starts; ++s) {
      worst = std::max(worst,
                       local_ascent(alpha * start_dirs.col(s), alpha));
    }
    return worst <= out.ratio_bound;
  };

  if (condition_holds(options.alpha_max)) {
    out.alpha_ratio = options.alpha_max;
  } else {
    double lo = 0.0, hi = options.alpha_max;
    for (int it = 0; it < options.bisection_iterations; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (condition_holds(mid)) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    out.alpha_ratio = lo;
  }

  out.alpha_bar = std::min({out.alpha_ratio, out.alpha_inputs,
                            out.alpha_states, options.alpha_max});
  if (!(out.alpha_bar > 0.0)) {
    throw SynthesisError("alpha_upper_bound: terminal set is empty for " +
                         model.name);
  }
  return out;
}

TerminalIngredients synthesize_terminal(const AgentModel& model,
                                        const MatRef& Q, const MatRef& R,
                                        const SynthesisOptions& options) {
  require_symmetric(Q, "synthesize_terminal: Q");
  require_symmetric(R, "synthesize_terminal: R");
  if (!(min_eigenvalue(Q) > 0.0) || !(min_eigenvalue(R) > 0.0)) {
    throw SynthesisError("synthesize_terminal: Q and R must be positive "
                         "definite");
  }
  const SteadyState ss = steady_state_maps(model, Eigen::Vector3d::Zero());
  const Linearization lin = linearize(model, ss.x, ss.u);

  TerminalIngredients ti;
  ti.A = lin.A;
  ti.B = lin.B;
  ti.Q = Q;
  ti.R = R;
  ti.x_lin = ss.x;
  ti.u_lin = ss.u;
  ti.K = lqr_gain(lin.A, lin.B, Q, R);
  ti.Q_star = Q + ti.K.transpose() * R * ti.K;
  ti.P = solve_lyapunov(ti.closed_loop(), ti.Q_star);
  if (!(min_eigenvalue(ti.P) > 0.0)) {
    throw SynthesisError("synthesize_terminal: P is not positive definite");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ti.P);
  const Eigen::MatrixXd p_inv_sqrt = es.operatorInverseSqrt();
  ti.lambda_min_qhat = min_eigenvalue(p_inv_sqrt * ti.Q_star * p_inv_sqrt);
  ti.alpha_bar = alpha_upper_bound(model, ti, options.alpha).alpha_bar;
  return ti;
}

Membership terminal_membership(const TerminalSet& set, const VecRef& x) {
  const Eigen::VectorXd d = x - set.center;
  const double margin =
      set.radius * set.radius - d.dot(set.ingredients->P * d);
  return {margin, margin >= 0.0};
}

double alpha_update(double alpha, double eta,
                    const TerminalIngredients& ingredients,
                    const Eigen::Vector3d& v_theta, const AgentModel& model) {
  const Eigen::VectorXd shift = model.ref_state_map * v_theta;
  return alpha + eta * p_norm(ingredients.P, shift);
}

Eigen::VectorXd terminal_controller(const TerminalIngredients& ingredients,
                                    const VecRef& x_bar, const VecRef& u_bar,
                                    const VecRef& x) {
  return u_bar + ingredients.K * (x - x_bar);
}

}  // namespace rdv
