#include <cmath>
#include <random>

#include <doctest.h>

#include "mcu/unfolding.hpp"
#include "oracles.hpp"

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

struct Instance {
  mcu::CovariateMatrix<double> X;
  mcu::ResponseMatrix<double> Y;
  mcu::NeighborGraph<double> graph;
};

Instance random_instance(unsigned seed, Eigen::Index n = 14) {
  const MatrixXd x = random_matrix(n, 2, seed);
  MatrixXd y(n, 3);
  // A noisy curved sheet driven by the covariates.
  const MatrixXd noise = random_matrix(n, 3, seed + 100) * 0.05;
  for (Eigen::Index i = 0; i < n; ++i)
    y.row(i) << std::cos(x(i, 0)), std::sin(x(i, 0)), x(i, 1);
  y += noise;
  Instance out{mcu::standardize_covariates(x), mcu::center_scale_responses(y), {}};
  out.graph = mcu::build_knn_graph(out.Y, 4);
  return out;
}

}  // namespace

TEST_CASE("MCU problem assembly") {
  const auto inst = random_instance(1);
  mcu::UnfoldConfig cfg;
  const auto p = mcu::build_mcu_problem(inst.X, inst.Y, inst.graph, cfg);
  CHECK((p.objective - inst.X.values * inst.X.values.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(p.trace_bound == doctest::Approx(13.0 * 1e5 * 2.0));
  REQUIRE(p.equalities.size() == inst.graph.edges.size() + 1);
  const MatrixXd Yv = inst.Y.values;
  for (std::size_t e = 0; e < inst.graph.edges.size(); ++e) {
    const auto [i, j] = inst.graph.edges[e];
    double d = 0.0;
    for (Eigen::Index c = 0; c < Yv.cols(); ++c) d += (Yv(i, c) - Yv(j, c)) * (Yv(i, c) - Yv(j, c));
    CHECK(std::abs(p.equalities[e + 1].rhs - d) <= 1e-12 * (1 + d));
  }
  REQUIRE(p.initial_point);
  CHECK(mcu::equality_residual(p, *p.initial_point) < 1e-12);
}

TEST_CASE("two-sample objective is the covariate outer product") {
  MatrixXd x(2, 1), y(2, 1);
  x << 1, -1;
  y << 0, 2;
  const auto X = mcu::standardize_covariates(x);
  const auto Y = mcu::center_scale_responses(y);
  const auto p = mcu::build_mcu_problem(X, Y, mcu::build_knn_graph(Y, 1), mcu::UnfoldConfig{});
  const double a = X.values(0, 0), b = X.values(1, 0);
  CHECK(p.objective(0, 0) == a * a);
  CHECK(p.objective(0, 1) == a * b);
  CHECK(p.objective(1, 1) == b * b);
}

TEST_CASE("variance budget") {
  mcu::UnfoldConfig cfg;
  cfg.alpha = 1.0;
  cfg.dimension_mode = mcu::DimensionMode::Fixed;
  cfg.m_tilde = 2;
  CHECK(mcu::variance_budget<double>(11, cfg, 5) == 20.0);
}

TEST_CASE("budget is raised to admit the feasible start") {
  const auto inst = random_instance(2);
  mcu::UnfoldConfig cfg;
  cfg.alpha = 1.0;
  cfg.dimension_mode = mcu::DimensionMode::Fixed;
  cfg.m_tilde = 1;
  const auto p = mcu::build_mcu_problem(inst.X, inst.Y, inst.graph, cfg);
  const double g_trace = mcu::gram(inst.Y).values.trace();
  CHECK(g_trace > 13.0);
  CHECK(p.trace_bound >= g_trace);
  CHECK(!p.notes.empty());
}

TEST_CASE("MVU shares the MCU constraints") {
  const auto inst = random_instance(3);
  mcu::UnfoldConfig cfg;
  const auto mcu_p = mcu::build_mcu_problem(inst.X, inst.Y, inst.graph, cfg);
  const auto mvu_p = mcu::build_mvu_problem(inst.Y, inst.graph, cfg, 2);
  CHECK(mvu_p.objective == MatrixXd::Identity(14, 14));
  REQUIRE(mvu_p.equalities.size() == mcu_p.equalities.size());
  for (std::size_t c = 0; c < mvu_p.equalities.size(); ++c) {
    CHECK(mvu_p.equalities[c].rhs == mcu_p.equalities[c].rhs);
    CHECK(MatrixXd(mvu_p.equalities[c].matrix) == MatrixXd(mcu_p.equalities[c].matrix));
  }
  CHECK(mvu_p.trace_bound == mcu_p.trace_bound);
}

TEST_CASE("MCU objective dominates the MVU solution") {
  for (unsigned seed = 1; seed <= 3; ++seed) {
    const auto inst = random_instance(seed);
    mcu::UnfoldConfig cfg;
    const auto mcu_p = mcu::build_mcu_problem(inst.X, inst.Y, inst.graph, cfg);
    const auto mvu_p = mcu::build_mvu_problem(inst.Y, inst.graph, cfg, 2);
    const auto a = mcu::solve(mcu_p);
    const auto b = mcu::solve(mvu_p);
    REQUIRE(a.converged);
    REQUIRE(b.converged);
    const double at_mvu = mcu_p.objective.cwiseProduct(b.Q).sum();
    CHECK(a.objective_value >= at_mvu * (1 - 1e-6));
    // Objective bound from the trace budget.
    CHECK(a.objective_value <= inst.X.values.squaredNorm() * mcu_p.trace_bound);
  }
}

TEST_CASE("covariance identity") {
  for (unsigned seed = 1; seed <= 5; ++seed) {
    const auto inst = random_instance(seed);
    const auto s = mcu::solve(mcu::build_mcu_problem(inst.X, inst.Y, inst.graph, mcu::UnfoldConfig{}));
    const auto emb = mcu::recover_embedding(s, 14);
    const Eigen::Index n = 14;
    const MatrixXd Yt = emb.Y_tilde.rowwise() - emb.Y_tilde.colwise().mean();
    double sum = 0.0;
    for (Eigen::Index p = 0; p < 2; ++p)
      for (Eigen::Index m = 0; m < Yt.cols(); ++m) {
        const double cov = inst.X.values.col(p).dot(Yt.col(m)) / double(n - 1);
        sum += cov * cov;
      }
    const double rhs = (inst.X.values * inst.X.values.transpose() * s.Q).trace() / double((n - 1) * (n - 1));
    // Identity holds with Q replaced by the centered rank-N reconstruction.
    const double rhs_rebuilt =
        (inst.X.values * inst.X.values.transpose() * Yt * Yt.transpose()).trace() / double((n - 1) * (n - 1));
    CHECK(std::abs(sum - rhs_rebuilt) <= 1e-8 * std::abs(rhs_rebuilt));
    CHECK(std::abs(sum - rhs) <= 1e-8 * std::abs(rhs));
  }
}

TEST_CASE("rank-one recovery") {
  MatrixXd Q(2, 2);
  Q << 1, -1, -1, 1;
  const auto e = mcu::recover_embedding(Q, 1);
  CHECK(e.eigenvalues(0) == doctest::Approx(2.0));
  CHECK(std::abs(std::abs(e.Y_tilde(0, 0)) - 1.0) < 1e-12);
  CHECK(e.Y_tilde(0, 0) == doctest::Approx(-e.Y_tilde(1, 0)));
  CHECK(e.Y_tilde.cwiseAbs().maxCoeff() == doctest::Approx(1.0));
}

TEST_CASE("identity recovery") {
  const auto e = mcu::recover_embedding(MatrixXd(MatrixXd::Identity(3, 3)), 3);
  CHECK((e.Y_tilde * e.Y_tilde.transpose() - MatrixXd::Identity(3, 3)).norm() < 1e-12);
  CHECK((e.Y_tilde.transpose() * e.Y_tilde - MatrixXd::Identity(3, 3)).norm() < 1e-12);
}

TEST_CASE("truncation error equals the discarded spectrum") {
  for (unsigned seed = 1; seed <= 10; ++seed) {
    const MatrixXd a = random_matrix(9, 9, seed);
    const MatrixXd Q = a * a.transpose();
    for (Eigen::Index m = 1; m <= 9; ++m) {
      const auto e = mcu::recover_embedding(Q, m);
      const double err = (Q - e.Y_tilde * e.Y_tilde.transpose()).squaredNorm();
      const double discarded = e.eigenvalues.tail(9 - m).squaredNorm();
      CHECK(std::abs(err - discarded) <= 1e-8 * std::max(discarded, 1e-8 * Q.squaredNorm()));
      const MatrixXd gram_cols = e.Y_tilde.transpose() * e.Y_tilde;
      CHECK((gram_cols - MatrixXd(gram_cols.diagonal().asDiagonal())).cwiseAbs().maxCoeff() <=
            1e-8 * gram_cols.diagonal().maxCoeff());
    }
    const auto full = mcu::recover_embedding(Q, 9);
    CHECK((full.Y_tilde * full.Y_tilde.transpose() - Q).norm() <= 1e-8 * Q.norm());
  }
}

TEST_CASE("rank deficiency warning") {
  const MatrixXd a = random_matrix(6, 2, 4);
  const auto e = mcu::recover_embedding(MatrixXd(a * a.transpose()), 4);
  REQUIRE(!e.warnings.empty());
  CHECK(e.warnings[0].rfind("RankDeficient", 0) == 0);
}

TEST_CASE("recovery is bit-reproducible and sign-normalized") {
  const MatrixXd a = random_matrix(7, 7, 5);
  const MatrixXd Q = a * a.transpose();
  const auto e1 = mcu::recover_embedding(Q, 3);
  const auto e2 = mcu::recover_embedding(Q, 3);
  CHECK(e1.Y_tilde == e2.Y_tilde);
  for (Eigen::Index c = 0; c < 3; ++c) {
    Eigen::Index arg;
    e1.Y_tilde.col(c).cwiseAbs().maxCoeff(&arg);
    CHECK(e1.Y_tilde(arg, c) > 0);
  }
}

namespace {

// Exhaustive scan written independently: try every threshold between
// consecutive sorted log-values and count the values above the best one.
Eigen::Index otsu_oracle(const std::vector<double>& values) {
  std::vector<double> logs;
  for (double v : values)
    if (v > 0) logs.push_back(std::log(v));
  std::sort(logs.begin(), logs.end());
  double best = 0.0;
  Eigen::Index above = static_cast<Eigen::Index>(logs.size());
  for (std::size_t s = 1; s < logs.size(); ++s) {
    double m0 = 0, m1 = 0;
    for (std::size_t i = 0; i < s; ++i) m0 += logs[i];
    for (std::size_t i = s; i < logs.size(); ++i) m1 += logs[i];
    m0 /= double(s);
    m1 /= double(logs.size() - s);
    const double w0 = double(s) / double(logs.size());
    const double between = w0 * (1 - w0) * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      above = static_cast<Eigen::Index>(logs.size() - s);
    }
  }
  return above;
}

}  // namespace

TEST_CASE("Otsu dimension") {
  CHECK(mcu::otsu_dimension(Eigen::Vector4d(std::exp(5.1), std::exp(5.0), std::exp(1.0), std::exp(0.9))) == 2);
  CHECK(mcu::otsu_dimension(Eigen::VectorXd::Constant(1, 7.0)) == 1);
  CHECK(mcu::otsu_dimension(Eigen::Vector4d(5, 5, 5, 5)) == 4);
  CHECK_THROWS_AS(mcu::otsu_dimension(Eigen::Vector3d(0, 0, 0)), mcu::Error);

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-6.0, 6.0);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> v(12);
    for (auto& x : v) x = std::exp(u(rng));
    std::sort(v.rbegin(), v.rend());
    const Eigen::Map<VectorXd> ev(v.data(), 12);
    CHECK(mcu::otsu_dimension(ev) == otsu_oracle(v));
  }
}

TEST_CASE("PCA scores") {
  MatrixXd y(3, 2);
  y << 1, 0, -1, 0, 0, 0;
  const auto e = mcu::pca_embed(y, 1);
  CHECK(std::abs(e.Y_tilde(0, 0)) == doctest::Approx(1.0));
  CHECK(e.Y_tilde(1, 0) == doctest::Approx(-e.Y_tilde(0, 0)));
  CHECK(std::abs(e.Y_tilde(2, 0)) < 1e-12);

  MatrixXd r = random_matrix(10, 6, 9);
  r.rowwise() -= r.colwise().mean();
  const auto full = mcu::pca_embed(r, 6);
  // Full-rank scores reproduce Y up to an orthogonal map: equal Gram matrices.
  CHECK((full.Y_tilde * full.Y_tilde.transpose() - r * r.transpose()).norm() <= 1e-8 * (r * r.transpose()).norm());

  // Scores against the Gram eigendecomposition, up to column sign.
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(r * r.transpose());
  for (Eigen::Index c = 0; c < 3; ++c) {
    const VectorXd ref = eig.eigenvectors().col(9 - c) * std::sqrt(eig.eigenvalues()(9 - c));
    const double sign = ref.dot(full.Y_tilde.col(c)) >= 0 ? 1.0 : -1.0;
    CHECK((sign * ref - full.Y_tilde.col(c)).cwiseAbs().maxCoeff() < 1e-8);
  }
  // Eigenvalues are squared singular values.
  Eigen::JacobiSVD<MatrixXd> svd(r);
  for (Eigen::Index c = 0; c < 6; ++c)
    CHECK(full.eigenvalues(c) == doctest::Approx(svd.singularValues()(c) * svd.singularValues()(c)).epsilon(1e-10));
}
