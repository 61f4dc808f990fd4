#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "mcu/core_data.hpp"
#include "mcu/sdp_types.hpp"

namespace mcu {

namespace detail {

// Stacked vectorized constraints. Row r holds vec(A_r) (column-major); the
// final row is the trace row tr(Q) + s = tau, whose slack s >= 0 lives in a
// separate 1x1 cone block.
//
// A constraint tr(c 1 1^T Q) = 0 together with Q PSD is equivalent to Q 1 = 0,
// so when one is present it is dropped from the rows and the cone is replaced
// by {Q PSD, Q 1 = 0}. Iterates then live in the range of P = I - 1 1^T / N,
// and the adjoint is P A^T(y) P.
template <typename Scalar>
struct ConstraintOperator {
  using RowSparse = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;
  Index n = 0;
  bool centered = false;
  RowSparse rows;
  VectorX<Scalar> slack_column;  // coefficient of s in every row
  VectorX<Scalar> rhs;
  MatrixX<Scalar> row_sums;      // m x N, row r = A_r 1
  std::vector<Index> source;     // original equality index per row (-1 = trace row)

  Index count() const { return rows.rows(); }

  VectorX<Scalar> apply(const MatrixX<Scalar>& X, Scalar s) const {
    return rows * X.reshaped() + slack_column * s;
  }

  void adjoint(const VectorX<Scalar>& y, MatrixX<Scalar>& out, Scalar& slack_out) const {
    out = (rows.transpose() * y).reshaped(n, n);
    symmetrize(out);
    if (centered) out = center(out);
    slack_out = slack_column.dot(y);
  }

  MatrixX<Scalar> center(const MatrixX<Scalar>& M) const {
    if (!centered) return M;
    const VectorX<Scalar> r = M.rowwise().sum() / Scalar(n);
    const Scalar total = r.sum() / Scalar(n);
    MatrixX<Scalar> out = M;
    out.colwise() -= r;
    out.rowwise() -= r.transpose();
    out.array() += total;
    return out;
  }

  /// Gram matrix of the (restricted) rows, <P A_i P, P A_j P> + slack terms.
  MatrixX<Scalar> gram() const {
    MatrixX<Scalar> g = MatrixX<Scalar>(rows * rows.transpose());
    if (centered) {
      const VectorX<Scalar> totals = row_sums.rowwise().sum();
      g -= (Scalar(2) / Scalar(n)) * (row_sums * row_sums.transpose());
      g += (totals * totals.transpose()) / Scalar(n * n);
    }
    g += slack_column * slack_column.transpose();
    return g;
  }

  void scale_rows(const VectorX<Scalar>& d) {
    rows = d.asDiagonal() * rows;
    slack_column = slack_column.cwiseProduct(d);
    rhs = rhs.cwiseProduct(d);
    row_sums = d.asDiagonal() * row_sums;
  }
};

template <typename Scalar>
bool is_centering(const TraceConstraint<Scalar>& c, Index n) {
  if (c.rhs != Scalar(0) || c.matrix.nonZeros() != n * n) return false;
  const Scalar* v = c.matrix.valuePtr();
  if (!(v[0] > Scalar(0))) return false;
  for (Index t = 1; t < n * n; ++t)
    if (v[t] != v[0]) return false;
  return true;
}

template <typename Scalar>
ConstraintOperator<Scalar> assemble(const SdpProblem<Scalar>& problem) {
  const Index n = problem.size();
  ConstraintOperator<Scalar> op;
  op.n = n;
  std::vector<Index> kept;
  for (Index r = 0; r < static_cast<Index>(problem.equalities.size()); ++r) {
    const auto& c = problem.equalities[static_cast<std::size_t>(r)];
    if (c.matrix.rows() != n || c.matrix.cols() != n)
      throw Error(ErrorCode::DimensionMismatch, "constraint matrix size differs from objective");
    if (!std::isfinite(c.rhs)) throw Error(ErrorCode::NonFiniteInput, "constraint right-hand side");
    if (!op.centered && n > 1 && is_centering(c, n)) {
      op.centered = true;
      continue;
    }
    kept.push_back(r);
  }
  const Index m = static_cast<Index>(kept.size()) + 1;
  op.rhs.resize(m);
  op.slack_column = VectorX<Scalar>::Zero(m);
  op.row_sums = MatrixX<Scalar>::Zero(m, n);
  std::vector<Eigen::Triplet<Scalar>> t;
  for (Index r = 0; r + 1 < m; ++r) {
    const auto& c = problem.equalities[static_cast<std::size_t>(kept[static_cast<std::size_t>(r)])];
    for (Index col = 0; col < c.matrix.outerSize(); ++col)
      for (typename Eigen::SparseMatrix<Scalar>::InnerIterator it(c.matrix, col); it; ++it) {
        t.emplace_back(static_cast<int>(r), static_cast<int>(it.col() * n + it.row()), it.value());
        op.row_sums(r, it.row()) += it.value();
      }
    op.rhs(r) = c.rhs;
    op.source.push_back(kept[static_cast<std::size_t>(r)]);
  }
  for (Index d = 0; d < n; ++d) t.emplace_back(static_cast<int>(m - 1), static_cast<int>(d * n + d), Scalar(1));
  op.row_sums.row(m - 1).setOnes();
  op.slack_column(m - 1) = Scalar(1);
  op.rhs(m - 1) = problem.trace_bound;
  op.source.push_back(-1);
  op.rows.resize(m, n * n);
  op.rows.setFromTriplets(t.begin(), t.end());
  op.rows.makeCompressed();
  return op;
}

}  // namespace detail

}  // namespace mcu
