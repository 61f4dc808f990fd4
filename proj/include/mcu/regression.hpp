#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mcu/core_data.hpp"

namespace mcu {

/// Linear map from standardized covariates to embedding coordinates, with
/// no intercept.
template <typename Scalar>
struct RegressionModel {
  MatrixX<Scalar> B_hat;  // P x M~
  Scalar lambda = Scalar(0);

  Index predictors() const { return B_hat.rows(); }
  Index outputs() const { return B_hat.cols(); }
};

/// B = (X^T X + lambda I)^{-1} X^T Y~. At lambda = 0 this is the least-squares
/// solution from a column-pivoted QR of X.
template <typename DerivedX, typename DerivedY>
RegressionModel<typename DerivedX::Scalar> fit_ridge(const Eigen::MatrixBase<DerivedX>& X,
                                                     const Eigen::MatrixBase<DerivedY>& Y_tilde,
                                                     typename DerivedX::Scalar lambda) {
  using Scalar = typename DerivedX::Scalar;
  if (X.rows() != Y_tilde.rows())
    throw Error(ErrorCode::DimensionMismatch, "X has " + std::to_string(X.rows()) + " rows, Y~ has " +
                                                  std::to_string(Y_tilde.rows()));
  if (!(lambda >= Scalar(0)) || !std::isfinite(lambda))
    throw Error(ErrorCode::InvalidArgument, "lambda must be finite and nonnegative");
  require_finite(X, "covariate matrix");
  require_finite(Y_tilde, "embedding");

  RegressionModel<Scalar> model;
  model.lambda = lambda;
  const Index p = X.cols();
  if (lambda == Scalar(0)) {
    Eigen::ColPivHouseholderQR<MatrixX<Scalar>> qr(X.derived());
    if (qr.rank() < p) throw Error(ErrorCode::SingularSystem, "X^T X is singular; use lambda > 0");
    model.B_hat = qr.solve(Y_tilde.derived());
  } else {
    MatrixX<Scalar> normal = X.transpose() * X;
    normal.diagonal().array() += lambda;
    Eigen::LLT<MatrixX<Scalar>> llt(normal);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::SingularSystem, "ridge system is not positive definite");
    model.B_hat = llt.solve(X.transpose() * Y_tilde);
  }
  if (!model.B_hat.allFinite()) throw Error(ErrorCode::SingularSystem, "regression coefficients are not finite");
  return model;
}

/// x B for one standardized covariate vector.
template <typename Scalar, typename Derived>
RowVectorX<Scalar> predict(const RegressionModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x) {
  if (x.size() != model.predictors())
    throw Error(ErrorCode::DimensionMismatch, "expected " + std::to_string(model.predictors()) + " covariates, got " +
                                                  std::to_string(x.size()));
  return x.derived().reshaped().transpose() * model.B_hat;
}

/// Row-wise predictions X B.
template <typename Scalar, typename Derived>
MatrixX<Scalar> predict_batch(const RegressionModel<Scalar>& model, const Eigen::MatrixBase<Derived>& X) {
  if (X.cols() != model.predictors()) throw Error(ErrorCode::DimensionMismatch, "covariate count differs from model");
  return X * model.B_hat;
}

/// ||y~ - y^|| / ||y~||.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar rre(const Eigen::MatrixBase<DerivedA>& y_tilde, const Eigen::MatrixBase<DerivedB>& y_hat) {
  using Scalar = typename DerivedA::Scalar;
  if (y_tilde.size() != y_hat.size()) throw Error(ErrorCode::DimensionMismatch, "vectors differ in length");
  const Scalar reference = y_tilde.norm();
  if (!(reference > Scalar(0))) throw Error(ErrorCode::ZeroReference, "reference embedding has zero norm");
  return (y_tilde.derived().reshaped() - y_hat.derived().reshaped()).norm() / reference;
}

/// Per-sample RRE between matching rows.
template <typename DerivedA, typename DerivedB>
VectorX<typename DerivedA::Scalar> rre_rows(const Eigen::MatrixBase<DerivedA>& Y_tilde,
                                            const Eigen::MatrixBase<DerivedB>& Y_hat) {
  if (Y_tilde.rows() != Y_hat.rows() || Y_tilde.cols() != Y_hat.cols())
    throw Error(ErrorCode::DimensionMismatch, "embedding and prediction shapes differ");
  VectorX<typename DerivedA::Scalar> out(Y_tilde.rows());
  for (Index i = 0; i < Y_tilde.rows(); ++i) out(i) = rre(Y_tilde.row(i), Y_hat.row(i));
  return out;
}

/// Euclidean distance between two control settings, in the units given.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar covariate_deviation(const Eigen::MatrixBase<DerivedA>& x_hat,
                                              const Eigen::MatrixBase<DerivedB>& x_nom) {
  if (x_hat.size() != x_nom.size()) throw Error(ErrorCode::DimensionMismatch, "covariate vectors differ in length");
  return (x_hat.derived().reshaped() - x_nom.derived().reshaped()).norm();
}

/// Per-point distances between corresponding points of two n x d clouds.
/// With a mask, only points whose flag is set are reported, in order.
template <typename DerivedA, typename DerivedB>
VectorX<typename DerivedA::Scalar> pointwise_deviation(const Eigen::MatrixBase<DerivedA>& y_hat,
                                                       const Eigen::MatrixBase<DerivedB>& y_nom,
                                                       const std::optional<std::vector<bool>>& mask = std::nullopt) {
  if (y_hat.rows() != y_nom.rows() || y_hat.cols() != y_nom.cols())
    throw Error(ErrorCode::ShapeMismatch, "point clouds differ in shape");
  if (mask && static_cast<Index>(mask->size()) != y_hat.rows())
    throw Error(ErrorCode::ShapeMismatch, "mask length differs from point count");
  std::vector<typename DerivedA::Scalar> kept;
  kept.reserve(static_cast<std::size_t>(y_hat.rows()));
  for (Index i = 0; i < y_hat.rows(); ++i)
    if (!mask || (*mask)[static_cast<std::size_t>(i)]) kept.push_back((y_hat.row(i) - y_nom.row(i)).norm());
  return Eigen::Map<VectorX<typename DerivedA::Scalar>>(kept.data(), static_cast<Index>(kept.size()));
}

/// Quantile with linear interpolation between order statistics:
/// h = (n - 1) p, q = x[floor h] + (h - floor h)(x[floor h + 1] - x[floor h]).
template <typename Derived>
typename Derived::Scalar quantile(const Eigen::MatrixBase<Derived>& values, double p) {
  using Scalar = typename Derived::Scalar;
  if (values.size() == 0) throw Error(ErrorCode::InvalidArgument, "quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile level must lie in [0, 1]");
  std::vector<Scalar> sorted(values.derived().data(), values.derived().data() + values.size());
  std::sort(sorted.begin(), sorted.end());
  const double h = double(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + Scalar(h - double(lo)) * (sorted[hi] - sorted[lo]);
}

template <typename Scalar>
struct SummaryStats {
  Index count = 0;
  Scalar min = Scalar(0), q1 = Scalar(0), median = Scalar(0), q3 = Scalar(0), max = Scalar(0);
  Scalar mean = Scalar(0);
  Scalar iqr() const { return q3 - q1; }
};

template <typename Derived>
SummaryStats<typename Derived::Scalar> summarize(const Eigen::MatrixBase<Derived>& values) {
  const VectorX<typename Derived::Scalar> v = values.derived().reshaped();
  SummaryStats<typename Derived::Scalar> s;
  s.count = v.size();
  s.min = quantile(v, 0.0);
  s.q1 = quantile(v, 0.25);
  s.median = quantile(v, 0.5);
  s.q3 = quantile(v, 0.75);
  s.max = quantile(v, 1.0);
  s.mean = v.mean();
  return s;
}

}  // namespace mcu
