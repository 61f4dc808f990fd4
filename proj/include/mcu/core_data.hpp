#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "mcu/error.hpp"

namespace mcu {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (!m.allFinite()) throw Error(ErrorCode::NonFiniteInput, std::string(what) + " contains NaN or Inf");
}

/// Per-column sample standard deviation with denominator N-1.
template <typename Derived>
VectorX<typename Derived::Scalar> column_std(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  const Index n = m.rows();
  VectorX<Scalar> out(m.cols());
  for (Index c = 0; c < m.cols(); ++c) {
    const Scalar mean = m.col(c).mean();
    out(c) = std::sqrt((m.col(c).array() - mean).square().sum() / Scalar(n - 1));
  }
  return out;
}

/// Control variables X (N x P) together with the affine transform that
/// standardized them.
template <typename Scalar>
struct CovariateMatrix {
  MatrixX<Scalar> values;
  VectorX<Scalar> column_means;
  VectorX<Scalar> column_stds;
  bool standardized = false;

  Index samples() const { return values.rows(); }
  Index covariates() const { return values.cols(); }

  /// Maps one raw control setting into the standardized frame.
  template <typename Derived>
  VectorX<Scalar> standardize(const Eigen::MatrixBase<Derived>& raw) const {
    if (raw.size() != covariates()) throw Error(ErrorCode::DimensionMismatch, "covariate length differs from P");
    return ((raw.derived().reshaped().array() - column_means.array()) / column_stds.array()).matrix();
  }

  template <typename Derived>
  VectorX<Scalar> unstandardize(const Eigen::MatrixBase<Derived>& z) const {
    if (z.size() != covariates()) throw Error(ErrorCode::DimensionMismatch, "covariate length differs from P");
    return (z.derived().reshaped().array() * column_stds.array() + column_means.array()).matrix();
  }

  /// Inverse transform of the whole matrix back to control units.
  MatrixX<Scalar> raw() const {
    MatrixX<Scalar> out = values;
    for (Index c = 0; c < out.cols(); ++c)
      out.col(c) = (out.col(c).array() * column_stds(c) + column_means(c)).matrix();
    return out;
  }
};

/// Flattened point clouds Y (N x M, M = n*d) after centering and global
/// scaling. Row layout is point-major: (p0.x, p0.y, ..., p1.x, ...).
template <typename Scalar>
struct ResponseMatrix {
  MatrixX<Scalar> values;
  VectorX<Scalar> column_means;
  Scalar global_scale = Scalar(1);
  Index points_per_cloud = 0;
  Index ambient_dim = 1;

  Index samples() const { return values.rows(); }
  Index features() const { return values.cols(); }

  /// Applies the stored centering and scaling to a raw flattened response.
  template <typename Derived>
  RowVectorX<Scalar> transform(const Eigen::MatrixBase<Derived>& raw) const {
    if (raw.size() != features())
      throw Error(ErrorCode::ShapeMismatch, "response length " + std::to_string(raw.size()) + " differs from M=" +
                                                std::to_string(features()));
    return ((raw.derived().reshaped().array() - column_means.array()) * global_scale).matrix().transpose();
  }

  template <typename Derived>
  RowVectorX<Scalar> inverse_transform(const Eigen::MatrixBase<Derived>& scaled) const {
    if (scaled.size() != features()) throw Error(ErrorCode::ShapeMismatch, "response length differs from M");
    return (scaled.derived().reshaped().array() / global_scale + column_means.array()).matrix().transpose();
  }
};

/// Symmetric PSD inner-product matrix G = Y Y^T.
template <typename Scalar>
struct GramMatrix {
  MatrixX<Scalar> values;
  Index size() const { return values.rows(); }
};

template <typename Derived>
CovariateMatrix<typename Derived::Scalar> standardize_covariates(const Eigen::MatrixBase<Derived>& raw) {
  using Scalar = typename Derived::Scalar;
  if (raw.rows() < 2) throw Error(ErrorCode::InvalidArgument, "need at least two samples to standardize");
  if (raw.cols() < 1) throw Error(ErrorCode::InvalidArgument, "need at least one covariate");
  require_finite(raw, "covariate matrix");

  CovariateMatrix<Scalar> out;
  out.column_means = raw.colwise().mean().transpose();
  out.column_stds = column_std(raw);
  for (Index c = 0; c < raw.cols(); ++c) {
    const Scalar spread = raw.col(c).cwiseAbs().maxCoeff();
    if (!(out.column_stds(c) > Scalar(0)) || out.column_stds(c) <= spread * Eigen::NumTraits<Scalar>::epsilon())
      throw Error(ErrorCode::ZeroVarianceColumn, "covariate column " + std::to_string(c) + " is constant");
  }
  out.values = raw;
  for (Index c = 0; c < raw.cols(); ++c)
    out.values.col(c) = ((out.values.col(c).array() - out.column_means(c)) / out.column_stds(c)).matrix();
  out.standardized = true;
  return out;
}

/// Centers every column and multiplies the matrix by 1 / (mean per-column
/// sample std), so the average column std of the result is one.
template <typename Derived>
ResponseMatrix<typename Derived::Scalar> center_scale_responses(const Eigen::MatrixBase<Derived>& raw,
                                                                Index ambient_dim = 1) {
  using Scalar = typename Derived::Scalar;
  if (raw.rows() < 2) throw Error(ErrorCode::InvalidArgument, "need at least two samples");
  if (ambient_dim < 1 || raw.cols() % ambient_dim != 0)
    throw Error(ErrorCode::ShapeMismatch, "M=" + std::to_string(raw.cols()) + " is not a multiple of d=" +
                                              std::to_string(ambient_dim));
  require_finite(raw, "response matrix");

  ResponseMatrix<Scalar> out;
  out.ambient_dim = ambient_dim;
  out.points_per_cloud = raw.cols() / ambient_dim;
  out.column_means = raw.colwise().mean().transpose();
  out.values = raw.rowwise() - out.column_means.transpose();

  const Scalar mean_std = column_std(out.values).mean();
  const Scalar magnitude = raw.cwiseAbs().maxCoeff();
  if (!(mean_std > magnitude * Eigen::NumTraits<Scalar>::epsilon()) || mean_std == Scalar(0))
    throw Error(ErrorCode::AllZeroVariance, "every response column is constant; scale undefined");
  out.global_scale = Scalar(1) / mean_std;
  out.values *= out.global_scale;
  return out;
}

template <typename Derived>
GramMatrix<typename Derived::Scalar> gram(const Eigen::MatrixBase<Derived>& rows) {
  using Scalar = typename Derived::Scalar;
  require_finite(rows, "response matrix");
  GramMatrix<Scalar> g;
  g.values = MatrixX<Scalar>::Zero(rows.rows(), rows.rows());
  g.values.template selfadjointView<Eigen::Lower>().rankUpdate(rows.derived());
  g.values.template triangularView<Eigen::StrictlyUpper>() = g.values.transpose();
  return g;
}

template <typename Scalar>
GramMatrix<Scalar> gram(const ResponseMatrix<Scalar>& responses) {
  return gram(responses.values);
}

}  // namespace mcu
