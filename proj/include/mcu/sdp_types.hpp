#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "mcu/core_data.hpp"

namespace mcu {

/// tr(A Q) = rhs with A symmetric, stored in full (both triangles).
template <typename Scalar>
struct TraceConstraint {
  Eigen::SparseMatrix<Scalar> matrix;
  Scalar rhs = Scalar(0);
};

/// Q_ii + Q_jj - 2 Q_ij = squared_distance.
template <typename Scalar>
TraceConstraint<Scalar> edge_isometry_constraint(Index n, Index i, Index j, Scalar squared_distance) {
  const auto a = static_cast<int>(i), b = static_cast<int>(j);
  std::vector<Eigen::Triplet<Scalar>> t{{a, a, Scalar(1)}, {b, b, Scalar(1)}, {a, b, Scalar(-1)}, {b, a, Scalar(-1)}};
  TraceConstraint<Scalar> c;
  c.matrix.resize(n, n);
  c.matrix.setFromTriplets(t.begin(), t.end());
  c.rhs = squared_distance;
  return c;
}

/// tr(1 1^T Q) = 0.
template <typename Scalar>
TraceConstraint<Scalar> centering_constraint(Index n) {
  std::vector<Eigen::Triplet<Scalar>> t;
  t.reserve(static_cast<std::size_t>(n * n));
  for (Index c = 0; c < n; ++c)
    for (Index r = 0; r < n; ++r) t.emplace_back(static_cast<int>(r), static_cast<int>(c), Scalar(1));
  TraceConstraint<Scalar> out;
  out.matrix.resize(n, n);
  out.matrix.setFromTriplets(t.begin(), t.end());
  return out;
}

/// maximize tr(objective Q)  s.t.  Q PSD, tr(A_i Q) = b_i, tr(Q) <= trace_bound.
template <typename Scalar>
struct SdpProblem {
  MatrixX<Scalar> objective;
  std::vector<TraceConstraint<Scalar>> equalities;
  Scalar trace_bound = Scalar(1);
  std::optional<MatrixX<Scalar>> initial_point;
  std::vector<std::string> notes;

  Index size() const { return objective.rows(); }
};

enum class SdpAlgorithm { InteriorPoint, Admm };

inline const char* to_string(SdpAlgorithm a) { return a == SdpAlgorithm::Admm ? "admm" : "interior-point"; }

template <typename Scalar>
struct SdpTolerances {
  SdpAlgorithm algorithm = SdpAlgorithm::InteriorPoint;
  Scalar equality = Scalar(1e-6);  // max_i |tr(A_i Q) - b_i| / (1 + |b_i|)
  Scalar psd = Scalar(1e-7);       // scaled by (1 + tr(Q)/N)
  Scalar dual = Scalar(1e-6);      // scaled dual infeasibility
  Scalar gap = Scalar(1e-5);       // relative duality gap
  int max_iterations = 50000;      // ADMM iterations
  int max_interior_iterations = 200;
  int report_every = 100;          // ADMM diagnostics cadence
  int stall_window = 500;
  Scalar stall_change = Scalar(1e-12);
};

template <typename Scalar>
struct SdpIterationRecord {
  int iteration = 0;
  Scalar objective = Scalar(0);
  Scalar primal_residual = Scalar(0);
  Scalar dual_residual = Scalar(0);
  Scalar gap = Scalar(0);
  Scalar penalty = Scalar(0);  // ADMM penalty, or barrier parameter for interior point
};

template <typename Scalar>
struct SdpSolution {
  MatrixX<Scalar> Q;
  Scalar objective_value = Scalar(0);
  Scalar initial_objective = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar primal_residual = Scalar(0);  // max relative equality residual
  Scalar trace_value = Scalar(0);
  Scalar psd_violation = Scalar(0);
  Scalar dual_residual = Scalar(0);
  Scalar gap = Scalar(0);
  int iterations = 0;
  bool converged = false;
  SdpAlgorithm algorithm = SdpAlgorithm::InteriorPoint;
  std::string status;
  std::vector<SdpIterationRecord<Scalar>> history;
};

template <typename Scalar>
using SdpReporter = std::function<void(const SdpIterationRecord<Scalar>&)>;

/// In-place (M + M^T) / 2.
template <typename Scalar>
void symmetrize(MatrixX<Scalar>& m) {
  m = ((m + m.transpose()) / Scalar(2)).eval();
}

/// Frobenius-nearest PSD matrix: negative eigenvalues clamped to zero.
template <typename Derived>
MatrixX<typename Derived::Scalar> project_psd(const Eigen::MatrixBase<Derived>& symmetric) {
  using Scalar = typename Derived::Scalar;
  if (symmetric.rows() != symmetric.cols()) throw Error(ErrorCode::DimensionMismatch, "matrix must be square");
  require_finite(symmetric, "matrix");
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> eig(symmetric.derived());
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::EigenFailure, "eigendecomposition did not converge");
  const VectorX<Scalar> clamped = eig.eigenvalues().cwiseMax(Scalar(0));
  MatrixX<Scalar> out = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
  return (out + out.transpose()) / Scalar(2);
}

/// -min eigenvalue clamped at zero.
template <typename Derived>
typename Derived::Scalar psd_violation(const Eigen::MatrixBase<Derived>& symmetric) {
  using Scalar = typename Derived::Scalar;
  if (symmetric.size() == 0) return Scalar(0);
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> eig(symmetric.derived(), Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::EigenFailure, "eigendecomposition did not converge");
  return std::max(Scalar(0), -eig.eigenvalues()(0));
}

template <typename Scalar>
Scalar constraint_value(const TraceConstraint<Scalar>& c, const MatrixX<Scalar>& Q) {
  Scalar value = Scalar(0);
  for (Index col = 0; col < c.matrix.outerSize(); ++col)
    for (typename Eigen::SparseMatrix<Scalar>::InnerIterator it(c.matrix, col); it; ++it)
      value += it.value() * Q(it.row(), it.col());
  return value;
}

/// Largest relative equality residual max_i |tr(A_i Q) - b_i| / (1 + |b_i|).
template <typename Scalar>
Scalar equality_residual(const SdpProblem<Scalar>& problem, const MatrixX<Scalar>& Q) {
  Scalar worst = Scalar(0);
  for (const auto& c : problem.equalities)
    worst = std::max(worst, std::abs(constraint_value(c, Q) - c.rhs) / (Scalar(1) + std::abs(c.rhs)));
  return worst;
}

}  // namespace mcu
