#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "mcu/detail/sdp_operator.hpp"

namespace mcu::detail {

// Restores the equality constraints (and an active trace bound) on a nearly
// feasible Q while keeping it exactly PSD: Q = L L^T, and Gauss-Newton steps
// take the minimum-norm correction of L for the linearized constraints
// tr(A_k L L^T) = b_k.
template <typename Scalar>
MatrixX<Scalar> polish_factored(const SdpProblem<Scalar>& problem, const SdpTolerances<Scalar>& tol,
                                const MatrixX<Scalar>& Q) {
  const Index n = problem.size();
  std::vector<const TraceConstraint<Scalar>*> active;
  bool centered = false;
  for (const auto& c : problem.equalities) {
    if (!centered && n > 1 && is_centering(c, n)) {
      centered = true;
      continue;
    }
    active.push_back(&c);
  }

  auto center_rows = [&](MatrixX<Scalar>& L) {
    if (centered) L.rowwise() -= L.colwise().mean();
  };

  MatrixX<Scalar> start = Q;
  symmetrize(start);
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> eig(start);
  if (eig.info() != Eigen::Success) return Q;
  const Scalar top = std::max(Scalar(0), eig.eigenvalues()(n - 1));
  Index rank = 0;
  for (Index i = 0; i < n; ++i)
    if (eig.eigenvalues()(i) > Scalar(1e-14) * top) ++rank;
  if (rank == 0) return Q;
  MatrixX<Scalar> L = eig.eigenvectors().rightCols(rank) *
                      eig.eigenvalues().tail(rank).cwiseSqrt().asDiagonal();
  center_rows(L);
  const Index r = L.cols();

  auto residual = [&](const MatrixX<Scalar>& F, bool with_trace) {
    const Index m = static_cast<Index>(active.size()) + (with_trace ? 1 : 0);
    VectorX<Scalar> out(m);
    const MatrixX<Scalar> QF = F * F.transpose();
    for (Index k = 0; k < static_cast<Index>(active.size()); ++k)
      out(k) = active[static_cast<std::size_t>(k)]->rhs - constraint_value(*active[static_cast<std::size_t>(k)], QF);
    if (with_trace) out(m - 1) = problem.trace_bound - F.squaredNorm();
    return out;
  };
  auto scaled = [&](const VectorX<Scalar>& res) {
    Scalar worst = Scalar(0);
    for (Index k = 0; k < static_cast<Index>(active.size()); ++k)
      worst = std::max(worst, std::abs(res(k)) / (Scalar(1) + std::abs(active[static_cast<std::size_t>(k)]->rhs)));
    return worst;
  };
  const Scalar trace_cap = problem.trace_bound * (Scalar(1) + Scalar(1e-10));
  auto needs_trace = [&](const MatrixX<Scalar>& F) {
    return F.squaredNorm() >= problem.trace_bound * (Scalar(1) - Scalar(1e-7));
  };
  auto acceptable = [&](const MatrixX<Scalar>& F) {
    return scaled(residual(F, false)) <= Scalar(0.01) * tol.equality && F.squaredNorm() <= trace_cap;
  };

  Scalar damping = Scalar(1e-10);
  for (int iter = 0; iter < 2000 && !acceptable(L); ++iter) {
    const bool with_trace = needs_trace(L);
    const VectorX<Scalar> res = residual(L, with_trace);
    const Index m = res.size();

    // Jacobian rows vec(2 A_k L), stored sparse (row-major over N x r).
    std::vector<Eigen::Triplet<Scalar>> t;
    for (Index k = 0; k < static_cast<Index>(active.size()); ++k) {
      const auto& A = active[static_cast<std::size_t>(k)]->matrix;
      std::vector<std::pair<Index, VectorX<Scalar>>> rows;
      for (Index col = 0; col < A.outerSize(); ++col)
        for (typename Eigen::SparseMatrix<Scalar>::InnerIterator it(A, col); it; ++it) {
          auto found = std::find_if(rows.begin(), rows.end(), [&](const auto& p) { return p.first == it.row(); });
          if (found == rows.end()) {
            rows.emplace_back(it.row(), VectorX<Scalar>::Zero(r));
            found = rows.end() - 1;
          }
          found->second += Scalar(2) * it.value() * L.row(it.col()).transpose();
        }
      for (const auto& [p, v] : rows)
        for (Index c = 0; c < r; ++c) t.emplace_back(static_cast<int>(k), static_cast<int>(p * r + c), v(c));
    }
    if (with_trace)
      for (Index p = 0; p < n; ++p)
        for (Index c = 0; c < r; ++c) t.emplace_back(static_cast<int>(m - 1), static_cast<int>(p * r + c), Scalar(2) * L(p, c));
    Eigen::SparseMatrix<Scalar, Eigen::RowMajor> J(m, n * r);
    J.setFromTriplets(t.begin(), t.end());

    const MatrixX<Scalar> JJ = MatrixX<Scalar>(J * J.transpose());
    const Scalar diag_max = JJ.diagonal().maxCoeff();
    const Scalar before = res.norm();
    bool moved = false;
    for (int attempt = 0; attempt < 12 && !moved; ++attempt) {
      MatrixX<Scalar> damped = JJ;
      damped.diagonal().array() += damping * diag_max;
      Eigen::LDLT<MatrixX<Scalar>> factor(damped);
      const VectorX<Scalar> step = J.transpose() * VectorX<Scalar>(factor.solve(res));
      MatrixX<Scalar> trial = L + step.reshaped(r, n).transpose();
      center_rows(trial);
      if (trial.allFinite() && residual(trial, with_trace).norm() < before) {
        L = std::move(trial);
        moved = true;
        damping = std::max(Scalar(1e-16), damping / Scalar(10));
      } else {
        damping *= Scalar(10);
      }
    }
    if (!moved) break;
  }
  return L * L.transpose();
}

}  // namespace mcu::detail
