#include <cmath>
#include <numbers>
#include <random>

#include <doctest.h>

#include "mcu/optimizer.hpp"
#include "oracles.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

mcu::AnnealConfig<double> box(Eigen::Index dim, double lo, double hi, std::uint64_t seed) {
  mcu::AnnealConfig<double> c;
  c.lower = VectorXd::Constant(dim, lo);
  c.upper = VectorXd::Constant(dim, hi);
  c.seed = seed;
  return c;
}

double rastrigin(const VectorXd& x) {
  double s = 10.0 * double(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) s += x(i) * x(i) - 10.0 * std::cos(2 * std::numbers::pi * x(i));
  return s;
}

MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

mcu::Embedding<double> embedding_of(const MatrixXd& y) {
  mcu::Embedding<double> e;
  e.Y_tilde = y;
  e.m_tilde = y.cols();
  return e;
}

}  // namespace

TEST_CASE("quadratic minimum") {
  const Eigen::Vector3d x0(0.3, -1.2, 2.0);
  const auto r = mcu::anneal_minimize<double>([&](const VectorXd& x) { return (x - x0).squaredNorm(); },
                                              box(3, -5, 5, 1));
  CHECK((r.x_best - x0).norm() < 1e-4);
  CHECK(r.evaluations <= 10000);
}

TEST_CASE("constant objective") {
  const auto cfg = box(2, -1, 2, 3);
  const auto r = mcu::anneal_minimize<double>([](const VectorXd&) { return 4.25; }, cfg);
  CHECK(r.f_best == 4.25);
  CHECK((r.x_best.array() >= cfg.lower.array()).all());
  CHECK((r.x_best.array() <= cfg.upper.array()).all());
}

TEST_CASE("Rastrigin benchmark") {
  // The grid oracle confirms the global minimum of the box.
  const auto [gx, gv] = oracle::grid_minimum(
      [](const Eigen::Vector2d& x) { return rastrigin(x); }, Eigen::Vector2d(-5.12, -5.12), Eigen::Vector2d(5.12, 5.12),
      1024);
  CHECK(gx.norm() < 1e-12);
  CHECK(gv == doctest::Approx(0.0));

  int hits = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto cfg = box(2, -5.12, 5.12, seed);
    cfg.budget = 20000;
    const auto r = mcu::anneal_minimize<double>(rastrigin, cfg);
    if (r.f_best <= 1e-3) ++hits;
    CHECK(r.evaluations <= 20000);
  }
  CHECK(hits >= 9);
}

TEST_CASE("annealer is deterministic per seed and stays in bounds") {
  auto cfg = box(2, -5.12, 5.12, 42);
  cfg.budget = 3000;
  std::vector<VectorXd> visited;
  const auto f = [&](const VectorXd& x) {
    visited.push_back(x);
    return rastrigin(x);
  };
  const auto a = mcu::anneal_minimize<double>(f, cfg);
  const std::size_t first_run = visited.size();
  const auto b = mcu::anneal_minimize<double>(f, cfg);
  CHECK(a.x_best == b.x_best);
  CHECK(a.f_best == b.f_best);
  CHECK(a.evaluations == b.evaluations);
  double best_seen = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < visited.size(); ++i) {
    CHECK((visited[i].array() >= cfg.lower.array()).all());
    CHECK((visited[i].array() <= cfg.upper.array()).all());
    if (i < first_run) best_seen = std::min(best_seen, rastrigin(visited[i]));
  }
  CHECK(a.f_best == best_seen);
  for (std::size_t t = 1; t < a.trace.size(); ++t) CHECK(a.trace[t].incumbent <= a.trace[t - 1].incumbent);
}

TEST_CASE("invalid annealer settings") {
  auto cfg = box(2, 0, 1, 0);
  cfg.upper(1) = -1;
  CHECK_THROWS_AS(cfg.validate(), mcu::Error);
  cfg = box(2, 0, 1, 0);
  cfg.budget = 0;
  CHECK_THROWS_AS(cfg.validate(), mcu::Error);
  cfg = box(2, 0, 1, 0);
  cfg.visiting_parameter = 3.5;
  CHECK_THROWS_AS(cfg.validate(), mcu::Error);
}

TEST_CASE("nominal target") {
  const MatrixXd raw = random_matrix(25, 6, 1);
  const auto Y = mcu::center_scale_responses(raw, 3);
  const auto t = mcu::make_target(Eigen::RowVectorXd(raw.row(7)), Y, 4);
  CHECK(t.neighbor_indices[0] == 7);
  CHECK(t.target_distances(0) < 1e-12);

  const auto one = mcu::make_target(Eigen::RowVectorXd(random_matrix(1, 6, 2)), Y, 1);
  REQUIRE(one.k() == 1);

  for (unsigned seed = 3; seed < 13; ++seed) {
    const Eigen::RowVectorXd q = random_matrix(1, 6, seed);
    const auto target = mcu::make_target(q, Y, 5);
    MatrixXd with_query(26, 6);
    with_query.topRows(25) = Y.values;
    with_query.row(25) = Y.transform(q);
    CHECK(target.neighbor_indices == oracle::knn_by_sort(with_query, 25, 5));
    for (Eigen::Index i = 0; i < 5; ++i)
      CHECK(target.target_distances(i) ==
            doctest::Approx((Y.values.row(target.neighbor_indices[std::size_t(i)]) - with_query.row(25)).norm()));
  }
  CHECK_THROWS_AS(mcu::make_target(Eigen::RowVectorXd(random_matrix(1, 5, 2)), Y, 2), mcu::Error);
}

TEST_CASE("embedding objective") {
  const MatrixXd y = random_matrix(10, 2, 4);
  const auto emb = embedding_of(y);
  mcu::NominalTarget<double> t;
  t.neighbor_indices = {1, 4, 6};
  t.target_distances.resize(3);
  for (int i = 0; i < 3; ++i) t.target_distances(i) = (y.row(t.neighbor_indices[std::size_t(i)]) - y.row(2)).norm();
  CHECK(mcu::embedding_objective(VectorXd(y.row(2).transpose()), t, emb) == doctest::Approx(0.0));

  mcu::NominalTarget<double> single;
  single.neighbor_indices = {3};
  single.target_distances = VectorXd::Zero(1);
  const Eigen::Vector2d v(0.7, -0.2);
  CHECK(mcu::embedding_objective(v, single, emb) == doctest::Approx((v.transpose() - y.row(3)).squaredNorm()));

  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 1.0);
  t.target_distances << 0.5, 1.5, 2.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Vector2d p(g(rng), g(rng));
    double expected = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double d = (p.transpose() - y.row(t.neighbor_indices[std::size_t(i)])).norm() - t.target_distances(i);
      expected += d * d;
    }
    CHECK(mcu::embedding_objective(p, t, emb) == doctest::Approx(expected).epsilon(1e-14));
  }
  CHECK_THROWS_AS(mcu::embedding_objective(Eigen::Vector3d(0, 0, 0), t, emb), mcu::Error);
}

TEST_CASE("nominal embedding beats its starts") {
  const MatrixXd y = random_matrix(20, 2, 7);
  const auto emb = embedding_of(y);
  mcu::NominalTarget<double> t;
  t.neighbor_indices = {0, 5, 9, 13};
  t.target_distances = Eigen::Vector4d(0.0, 1.1, 0.8, 2.0);
  const auto r = mcu::infer_nominal_embedding(t, emb);
  for (auto i : t.neighbor_indices) CHECK(r.objective <= mcu::embedding_objective(VectorXd(y.row(i).transpose()), t, emb));
  CHECK(r.objective == doctest::Approx(mcu::embedding_objective(r.y_tilde, t, emb)));
}

TEST_CASE("single neighbor target lands on the sphere") {
  const MatrixXd y = random_matrix(8, 2, 8);
  const auto emb = embedding_of(y);
  mcu::NominalTarget<double> t;
  t.neighbor_indices = {2};
  t.target_distances = VectorXd::Constant(1, 0.75);
  const auto r = mcu::infer_nominal_embedding(t, emb);
  CHECK(std::abs((r.y_tilde.transpose() - y.row(2)).norm() - 0.75) < 1e-6);
}

TEST_CASE("unique planar zero is found") {
  MatrixXd y(6, 2);
  y << 0, 0, 3, 0, 0, 3, 3, 3, -2, 1, 1, -2;
  const auto emb = embedding_of(y);
  const Eigen::Vector2d truth(1.3, 0.9);
  mcu::NominalTarget<double> t;
  t.neighbor_indices = {0, 1, 2};
  t.target_distances.resize(3);
  for (int i = 0; i < 3; ++i) t.target_distances(i) = (y.row(t.neighbor_indices[std::size_t(i)]) - truth.transpose()).norm();
  const auto r = mcu::infer_nominal_embedding(t, emb);
  const auto [gx, gv] = oracle::grid_minimum(
      [&](const Eigen::Vector2d& v) { return mcu::embedding_objective(v, t, emb); }, Eigen::Vector2d(-3, -3),
      Eigen::Vector2d(6, 6), 900);
  CHECK((gx - truth).norm() < 0.02);
  CHECK(gv < 1e-3);
  CHECK((r.y_tilde - truth).norm() < 1e-4);
}

namespace {

struct Fixture {
  mcu::CovariateMatrix<double> X;
  mcu::ResponseMatrix<double> Y;
  mcu::Embedding<double> emb;
  mcu::RegressionModel<double> model;
};

// Responses linear in the covariates; the PCA embedding then matches a
// linear map of X exactly.
Fixture linear_fixture(unsigned seed) {
  const MatrixXd x = random_matrix(30, 2, seed) * 2.0 + MatrixXd::Constant(30, 2, 5.0);
  const MatrixXd A = random_matrix(2, 6, seed + 1);
  Fixture f{mcu::standardize_covariates(x), mcu::center_scale_responses(MatrixXd(x * A)), {}, {}};
  f.emb = mcu::pca_embed(f.Y, 2);
  f.model = mcu::fit_ridge(f.X.values, f.emb.Y_tilde, 0.0);
  return f;
}

}  // namespace

TEST_CASE("covariate recovery on a training sample") {
  const auto f = linear_fixture(11);
  const Eigen::RowVectorXd y_raw = f.Y.inverse_transform(Eigen::RowVectorXd(f.Y.values.row(4)));
  const auto target = mcu::make_target(y_raw, f.Y, 4);
  mcu::AnnealConfig<double> cfg;
  cfg.seed = 3;
  const auto r = mcu::recover_covariates(target, f.model, f.emb, f.X, cfg);
  const double at_truth = mcu::embedding_objective(VectorXd(f.model.B_hat.transpose() * f.X.values.row(4).transpose()),
                                                   target, f.emb);
  CHECK(r.objective <= at_truth + 1e-12);
  CHECK((r.x_original - f.X.raw().row(4).transpose()).norm() < 1e-3);
  // Closed form: x* solves x B = y~ for an invertible 2 x 2 map.
  const VectorXd closed = f.model.B_hat.transpose().fullPivLu().solve(f.emb.Y_tilde.row(4).transpose());
  CHECK((r.x_standardized - closed).norm() < 1e-3);

  const auto again = mcu::recover_covariates(target, f.model, f.emb, f.X, cfg);
  CHECK(again.x_original == r.x_original);
}

TEST_CASE("objective is invariant to a common rotation") {
  const auto f = linear_fixture(12);
  const auto target = mcu::make_target(Eigen::RowVectorXd(f.Y.inverse_transform(Eigen::RowVectorXd(f.Y.values.row(9)))),
                                       f.Y, 4);
  const double a = 0.7;
  MatrixXd R(2, 2);
  R << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
  auto rotated = f.emb;
  rotated.Y_tilde = f.emb.Y_tilde * R;
  const MatrixXd BR = f.model.B_hat * R;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int t = 0; t < 25; ++t) {
    const Eigen::Vector2d x(g(rng), g(rng));
    const double plain = mcu::embedding_objective(VectorXd(f.model.B_hat.transpose() * x), target, f.emb);
    const double turned = mcu::embedding_objective(VectorXd(BR.transpose() * x), target, rotated);
    CHECK(turned == doctest::Approx(plain).epsilon(1e-12));
  }
}
