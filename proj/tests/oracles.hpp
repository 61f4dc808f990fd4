#pragma once

// Slow, independent reference implementations used as test oracles.

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mcu/neighbor_graph.hpp"
#include "mcu/sdp.hpp"

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using mcu::Index;

/// k nearest rows of `rows` to row `i` by full sort, ties to the smaller index.
inline std::vector<Index> knn_by_sort(const MatrixXd& rows, Index i, Index k) {
  std::vector<std::pair<double, Index>> all;
  for (Index j = 0; j < rows.rows(); ++j)
    if (j != i) all.emplace_back((rows.row(i) - rows.row(j)).squaredNorm(), j);
  std::sort(all.begin(), all.end());
  std::vector<Index> out;
  for (Index t = 0; t < k; ++t) out.push_back(all[static_cast<std::size_t>(t)].second);
  return out;
}

/// Component count by breadth-first search over an adjacency matrix.
inline Index bfs_components(Index n, const std::vector<mcu::Edge>& edges) {
  Eigen::MatrixXi adj = Eigen::MatrixXi::Zero(n, n);
  for (const auto& e : edges) adj(e.i, e.j) = adj(e.j, e.i) = 1;
  std::vector<int> seen(static_cast<std::size_t>(n), 0);
  Index count = 0;
  for (Index s = 0; s < n; ++s) {
    if (seen[static_cast<std::size_t>(s)]) continue;
    ++count;
    std::queue<Index> q;
    q.push(s);
    seen[static_cast<std::size_t>(s)] = 1;
    while (!q.empty()) {
      const Index u = q.front();
      q.pop();
      for (Index v = 0; v < n; ++v)
        if (adj(u, v) && !seen[static_cast<std::size_t>(v)]) {
          seen[static_cast<std::size_t>(v)] = 1;
          q.push(v);
        }
    }
  }
  return count;
}

/// Euclidean projection onto {Q PSD, tr Q <= tau}.
inline MatrixXd project_psd_trace(const MatrixXd& M, double tau) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig((M + M.transpose()) / 2.0);
  VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
  if (lam.sum() > tau) {
    // Find theta with sum max(lambda - theta, 0) = tau by bisection.
    double lo = 0.0, hi = lam.maxCoeff();
    for (int it = 0; it < 200; ++it) {
      const double mid = (lo + hi) / 2;
      if ((lam.array() - mid).cwiseMax(0.0).sum() > tau) lo = mid;
      else hi = mid;
    }
    lam = (lam.array() - hi).cwiseMax(0.0);
  }
  return eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
}

struct ReferenceResult {
  MatrixXd Q;
  double objective = 0.0;
  double residual = 0.0;
};

/// Augmented Lagrangian with accelerated projected-gradient inner solves on
/// {PSD, tr <= tau}. Dense constraint matrices, no factorization tricks.
inline ReferenceResult reference_sdp(const mcu::SdpProblem<double>& p, int outer = 1000, int inner = 3000) {
  const Index n = p.size();
  const auto m = static_cast<Index>(p.equalities.size());
  std::vector<MatrixXd> A;
  VectorXd b(m);
  for (Index i = 0; i < m; ++i) {
    MatrixXd a = MatrixXd(p.equalities[static_cast<std::size_t>(i)].matrix);
    const double s = a.norm();
    A.push_back(a / s);
    b(i) = p.equalities[static_cast<std::size_t>(i)].rhs / s;
  }
  const double c_scale = std::max(1.0, p.objective.norm());
  const MatrixXd C = p.objective / c_scale;
  MatrixXd gram(m, m);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j) gram(i, j) = A[static_cast<std::size_t>(i)].cwiseProduct(A[static_cast<std::size_t>(j)]).sum();
  const double op_norm = Eigen::SelfAdjointEigenSolver<MatrixXd>(gram).eigenvalues().maxCoeff();

  auto apply = [&](const MatrixXd& Q) {
    VectorXd r(m);
    for (Index i = 0; i < m; ++i) r(i) = A[static_cast<std::size_t>(i)].cwiseProduct(Q).sum();
    return r;
  };
  auto adjoint = [&](const VectorXd& y) {
    MatrixXd out = MatrixXd::Zero(n, n);
    for (Index i = 0; i < m; ++i) out += y(i) * A[static_cast<std::size_t>(i)];
    return out;
  };

  const double scale_b = std::max(1.0, b.cwiseAbs().maxCoeff());
  const VectorXd bs = b / scale_b;
  const double tau = p.trace_bound / scale_b;
  MatrixXd Q = p.initial_point ? MatrixXd(*p.initial_point / scale_b) : MatrixXd::Zero(n, n);
  VectorXd y = VectorXd::Zero(m);
  double rho = 10.0;
  for (int o = 0; o < outer; ++o) {
    const double step = 1.0 / (rho * op_norm);
    MatrixXd Z = Q, Q_prev = Q;
    double t = 1.0;
    for (int k = 0; k < inner; ++k) {
      const VectorXd r = apply(Z) - bs;
      const MatrixXd grad = -C - adjoint(y) + rho * adjoint(r);
      const MatrixXd next = project_psd_trace(Z - step * grad, tau);
      const double t_next = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
      Z = next + ((t - 1.0) / t_next) * (next - Q_prev);
      if ((next - Q_prev).norm() < 1e-13 * (1.0 + next.norm())) {
        Q_prev = next;
        break;
      }
      Q_prev = next;
      t = t_next;
    }
    Q = Q_prev;
    const VectorXd r = apply(Q) - bs;
    y -= rho * r;
    if (r.cwiseAbs().maxCoeff() < 1e-11) break;
    rho = std::min(rho * 1.5, 1e6);
  }
  ReferenceResult out;
  out.Q = Q * scale_b;
  out.objective = p.objective.cwiseProduct(out.Q).sum();
  out.residual = mcu::equality_residual(p, out.Q);
  return out;
}

/// B = (X^T X + lambda I)^{-1} X^T Y through an explicit dense inverse.
inline MatrixXd normal_equations(const MatrixXd& X, const MatrixXd& Y, double lambda) {
  MatrixXd G = X.transpose() * X;
  G.diagonal().array() += lambda;
  return G.inverse() * X.transpose() * Y;
}

/// Quantile by sorting, with the (n - 1) p linear interpolation rule.
inline double sorted_quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (double(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] + (h - double(lo)) * (v[lo + 1] - v[lo]);
}

/// Grid minimum of a 2-D function over a box.
template <typename F>
std::pair<Eigen::Vector2d, double> grid_minimum(F f, Eigen::Vector2d lo, Eigen::Vector2d hi, int steps) {
  Eigen::Vector2d best = lo;
  double best_value = f(lo);
  for (int i = 0; i <= steps; ++i)
    for (int j = 0; j <= steps; ++j) {
      const Eigen::Vector2d x(lo(0) + (hi(0) - lo(0)) * i / steps, lo(1) + (hi(1) - lo(1)) * j / steps);
      const double v = f(x);
      if (v < best_value) {
        best_value = v;
        best = x;
      }
    }
  return {best, best_value};
}

/// Random small unfolding instance: points in R^3, covariates in R^2, k-NN
/// union graph, trace bound a multiple of the start trace.
inline mcu::SdpProblem<double> random_unfolding_problem(std::uint64_t seed, Index n = 12, Index k = 3,
                                                        double budget_factor = 3.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXd Y(n, 3), X(n, 2);
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < 3; ++c) Y(i, c) = g(rng);
    for (Index c = 0; c < 2; ++c) X(i, c) = g(rng);
  }
  Y.rowwise() -= Y.colwise().mean();
  X.rowwise() -= X.colwise().mean();
  const auto graph = mcu::build_knn_graph(Y, k);
  mcu::SdpProblem<double> p;
  p.objective = X * X.transpose();
  p.equalities.push_back(mcu::centering_constraint<double>(n));
  const MatrixXd G = Y * Y.transpose();
  for (const auto& e : graph.edges)
    p.equalities.push_back(mcu::edge_isometry_constraint<double>(n, e.i, e.j, G(e.i, e.i) + G(e.j, e.j) - 2 * G(e.i, e.j)));
  p.trace_bound = budget_factor * G.trace();
  p.initial_point = G;
  return p;
}

}  // namespace oracle
