#include <cmath>
#include <random>

#include <doctest.h>

#include "mcu/core_data.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

bool throws_code(auto&& f, mcu::ErrorCode code) {
  try {
    f();
  } catch (const mcu::Error& e) {
    return e.code() == code;
  }
  return false;
}

}  // namespace

TEST_CASE("two-point standardization") {
  MatrixXd raw(2, 1);
  raw << 1, 3;
  const auto X = mcu::standardize_covariates(raw);
  CHECK(X.values(0, 0) == doctest::Approx(-1 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(X.values(1, 0) == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(X.column_means(0) == 2.0);
  CHECK(X.column_stds(0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(X.standardized);
}

TEST_CASE("standardization is idempotent and invertible") {
  const MatrixXd raw = random_matrix(15, 3, 1) * 4.0 + MatrixXd::Constant(15, 3, 7.0);
  const auto X = mcu::standardize_covariates(raw);
  for (Eigen::Index c = 0; c < 3; ++c) {
    CHECK(std::abs(X.values.col(c).mean()) < 1e-10);
    CHECK(std::abs(mcu::column_std(X.values)(c) - 1.0) < 1e-10);
  }
  const auto again = mcu::standardize_covariates(X.values);
  CHECK((again.values - X.values).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((X.raw() - raw).cwiseAbs().maxCoeff() < 1e-10);
  const VectorXd row = raw.row(4).transpose();
  CHECK((X.unstandardize(X.standardize(row)) - row).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("standardization rejects degenerate input") {
  MatrixXd constant(3, 2);
  constant << 1, 5, 2, 5, 3, 5;
  CHECK(throws_code([&] { mcu::standardize_covariates(constant); }, mcu::ErrorCode::ZeroVarianceColumn));
  MatrixXd bad = random_matrix(4, 2, 2);
  bad(1, 1) = std::nan("");
  CHECK(throws_code([&] { mcu::standardize_covariates(bad); }, mcu::ErrorCode::NonFiniteInput));
  CHECK(throws_code([&] { mcu::standardize_covariates(MatrixXd::Ones(1, 2)); }, mcu::ErrorCode::InvalidArgument));
}

TEST_CASE("response centering and scaling") {
  MatrixXd raw(2, 1);
  raw << 0, 2;
  const auto Y = mcu::center_scale_responses(raw);
  CHECK(Y.values(0, 0) == doctest::Approx(-1 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(Y.values(1, 0) == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(Y.global_scale == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-15));

  CHECK(throws_code([&] { mcu::center_scale_responses(MatrixXd::Constant(3, 2, 4.0)); },
                    mcu::ErrorCode::AllZeroVariance));
  CHECK(throws_code([&] { mcu::center_scale_responses(random_matrix(3, 5, 3), 3); }, mcu::ErrorCode::ShapeMismatch));
}

TEST_CASE("scaled responses have unit average column std") {
  const MatrixXd raw = random_matrix(5, 4, 4) * 3.0;
  const auto Y = mcu::center_scale_responses(raw);
  // Independent recomputation of the per-column std.
  double total = 0.0;
  for (Eigen::Index c = 0; c < 4; ++c) {
    double mean = 0.0;
    for (Eigen::Index r = 0; r < 5; ++r) mean += Y.values(r, c);
    mean /= 5.0;
    CHECK(std::abs(mean) < 1e-10);
    double ss = 0.0;
    for (Eigen::Index r = 0; r < 5; ++r) ss += (Y.values(r, c) - mean) * (Y.values(r, c) - mean);
    total += std::sqrt(ss / 4.0);
  }
  CHECK(std::abs(total / 4.0 - 1.0) < 1e-10);
  CHECK(Y.features() == Y.points_per_cloud * Y.ambient_dim);

  const Eigen::RowVectorXd row = raw.row(2);
  CHECK((Y.transform(row) - Y.values.row(2)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((Y.inverse_transform(Y.transform(row)) - row).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("scaling preserves distance ratios") {
  const MatrixXd raw = random_matrix(8, 6, 5);
  const auto Y = mcu::center_scale_responses(raw, 2);
  const double expected = Y.global_scale * Y.global_scale;
  for (Eigen::Index i = 0; i < 8; ++i)
    for (Eigen::Index j = i + 1; j < 8; ++j) {
      const double before = (raw.row(i) - raw.row(j)).squaredNorm();
      const double after = (Y.values.row(i) - Y.values.row(j)).squaredNorm();
      CHECK(std::abs(after / before - expected) < 1e-10 * expected);
    }
}

TEST_CASE("gram matrix") {
  CHECK(mcu::gram(MatrixXd(MatrixXd::Identity(2, 2))).values.isApprox(MatrixXd::Identity(2, 2)));
  MatrixXd y(2, 2);
  y << 1, 0, -1, 0;
  MatrixXd expected(2, 2);
  expected << 1, -1, -1, 1;
  CHECK(mcu::gram(y).values == expected);

  const MatrixXd r = random_matrix(6, 3, 6);
  const auto G = mcu::gram(r);
  for (Eigen::Index i = 0; i < 6; ++i)
    for (Eigen::Index j = 0; j < 6; ++j) {
      double dot = 0.0;
      for (Eigen::Index c = 0; c < 3; ++c) dot += r(i, c) * r(j, c);
      CHECK(std::abs(G.values(i, j) - dot) < 1e-12);
    }
}

TEST_CASE("gram of centered responses is symmetric PSD with zero row sums") {
  const auto Y = mcu::center_scale_responses(random_matrix(10, 7, 7));
  const auto G = mcu::gram(Y);
  CHECK((G.values - G.values.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * G.values.cwiseAbs().maxCoeff());
  const double min_eig = Eigen::SelfAdjointEigenSolver<MatrixXd>(G.values).eigenvalues()(0);
  CHECK(min_eig >= -1e-9 * G.values.trace() / 10.0);
  CHECK(G.values.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-8 * G.values.norm());
}
