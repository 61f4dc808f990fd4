#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "mcu/detail/sdp_operator.hpp"

namespace mcu::detail {

// Alternating-direction augmented Lagrangian on the dual problem.
//
// Each iteration solves one m x m system (factored once), takes one
// eigendecomposition of an N x N matrix, and updates the primal iterate from
// the negative part of that matrix, so the primal iterate is PSD by
// construction. Fills Q, dual/gap diagnostics, iteration count and status.
template <typename Scalar>
void admm_solve(const SdpProblem<Scalar>& problem, const SdpTolerances<Scalar>& tol, const MatrixX<Scalar>& start,
                bool has_start, const SdpReporter<Scalar>& on_report, SdpSolution<Scalar>& result) {
  const Index n = problem.size();
  ConstraintOperator<Scalar> op = assemble(problem);
  const Index m = op.count();

  // Row equilibration and problem scaling.
  VectorX<Scalar> row_scale(m);
  {
    const VectorX<Scalar> diag = op.gram().diagonal();
    for (Index r = 0; r < m; ++r) row_scale(r) = diag(r) > Scalar(0) ? Scalar(1) / std::sqrt(diag(r)) : Scalar(1);
  }
  op.scale_rows(row_scale);
  const Scalar b_scale = std::max(Scalar(1), op.rhs.template lpNorm<Eigen::Infinity>());
  const Scalar c_scale = std::max(Scalar(1), problem.objective.norm());
  const VectorX<Scalar> b = op.rhs / b_scale;
  const MatrixX<Scalar> C = op.center(-problem.objective / c_scale);  // minimization form

  MatrixX<Scalar> gram_rows = op.gram();
  Eigen::LLT<MatrixX<Scalar>> gram_factor(gram_rows);
  if (gram_factor.info() != Eigen::Success) {
    gram_rows.diagonal().array() += Scalar(1e-12) * gram_rows.diagonal().maxCoeff();
    gram_factor.compute(gram_rows);
    if (gram_factor.info() != Eigen::Success)
      throw Error(ErrorCode::InvalidArgument, "constraint matrices are linearly dependent");
  }

  MatrixX<Scalar> X = op.center(start) / b_scale;
  Scalar x_slack = has_start ? std::max(Scalar(0), (problem.trace_bound - start.trace()) / b_scale)
                                        : Scalar(0);
  MatrixX<Scalar> S = MatrixX<Scalar>::Zero(n, n);
  Scalar s_slack = Scalar(0);
  VectorX<Scalar> y = VectorX<Scalar>::Zero(m);
  MatrixX<Scalar> Aty(n, n), V(n, n);
  Scalar aty_slack = Scalar(0);
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> eig(n);

  Scalar mu = Scalar(1);
  int imbalance = 0;
  const Scalar b_norm = b.norm();
  const Scalar c_norm = C.norm();

  auto unscaled_q = [&](const MatrixX<Scalar>& Xs) { return MatrixX<Scalar>(Xs * b_scale); };

  MatrixX<Scalar> best_X = X;
  Scalar best_score = std::numeric_limits<Scalar>::infinity();
  Scalar best_dual = best_score, best_gap = best_score;
  Scalar last_objective = std::numeric_limits<Scalar>::quiet_NaN();
  int flat_steps = 0;

  for (int iter = 1; iter <= tol.max_iterations; ++iter) {
    // y-step: (A A^T) y = mu (b - A x) + A(c - s)
    const VectorX<Scalar> ax = op.apply(X, x_slack);
    const VectorX<Scalar> rhs = mu * (b - ax) + op.apply(C - S, -s_slack);
    y = gram_factor.solve(rhs);

    // S- and X-steps from a single eigendecomposition of V.
    op.adjoint(y, Aty, aty_slack);
    V = C - Aty - mu * X;  // stays in range(P) when centered
    const Scalar v_slack = -aty_slack - mu * x_slack;
    eig.compute(V);
    if (eig.info() != Eigen::Success) throw Error(ErrorCode::EigenFailure, "eigendecomposition did not converge");
    const auto& lambda = eig.eigenvalues();
    const auto& U = eig.eigenvectors();
    const VectorX<Scalar> pos = lambda.cwiseMax(Scalar(0));
    const VectorX<Scalar> neg = (-lambda).cwiseMax(Scalar(0));
    S.noalias() = U * pos.asDiagonal() * U.transpose();
    X.noalias() = U * (neg / mu).asDiagonal() * U.transpose();
    s_slack = std::max(Scalar(0), v_slack);
    x_slack = std::max(Scalar(0), -v_slack) / mu;

    // Residuals in scaled units.
    const VectorX<Scalar> primal_vec = op.apply(X, x_slack) - b;
    const Scalar primal = primal_vec.norm() / (Scalar(1) + b_norm);
    const Scalar slack_dual = aty_slack + s_slack;
    const Scalar dual = std::sqrt((Aty + S - C).squaredNorm() + slack_dual * slack_dual) / (Scalar(1) + c_norm);
    const Scalar pobj = C.cwiseProduct(X).sum();
    const Scalar dobj = b.dot(y);
    const Scalar gap = std::abs(pobj - dobj) / (Scalar(1) + std::abs(pobj) + std::abs(dobj));

    const Scalar score = std::max({primal, dual, gap});
    if (score < best_score) {
      best_score = score;
      best_X = X;
      best_dual = dual;
      best_gap = gap;
    }

    const Scalar objective = -pobj * c_scale * b_scale;
    if (tol.report_every > 0 && iter % tol.report_every == 0) {
      SdpIterationRecord<Scalar> rec{iter, objective, primal, dual, gap, mu};
      result.history.push_back(rec);
      if (on_report) on_report(rec);
    }

    result.iterations = iter;
    if (primal < tol.equality * Scalar(0.1) && dual < tol.dual && gap < tol.gap) {
      const MatrixX<Scalar> Q = unscaled_q(X);
      if (equality_residual(problem, Q) <= tol.equality &&
          Q.trace() <= problem.trace_bound * (Scalar(1) + Scalar(1e-8))) {
        best_X = X;
        best_dual = dual;
        best_gap = gap;
        result.converged = true;
        result.status = "converged";
        break;
      }
    }

    if (std::isfinite(last_objective) &&
        std::abs(objective - last_objective) <= tol.stall_change * (Scalar(1) + std::abs(objective)))
      ++flat_steps;
    else
      flat_steps = 0;
    last_objective = objective;
    if (flat_steps >= tol.stall_window && score > tol.equality) {
      result.status = "stalled";
      break;
    }

    // Residual balancing: a larger penalty favours primal feasibility.
    if (primal > Scalar(10) * dual)
      imbalance = std::max(1, imbalance + 1);
    else if (dual > Scalar(10) * primal)
      imbalance = std::min(-1, imbalance - 1);
    else
      imbalance = 0;
    if (imbalance >= 20) {
      mu = std::min(mu * Scalar(1.6), Scalar(1e6));
      imbalance = 0;
    } else if (imbalance <= -20) {
      mu = std::max(mu / Scalar(1.6), Scalar(1e-6));
      imbalance = 0;
    }
  }
  if (!result.converged && result.status.empty()) result.status = "max_iterations";
  result.Q = unscaled_q(best_X);
  result.dual_residual = best_dual;
  result.gap = best_gap;
}

}  // namespace mcu::detail
