#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mcu/core_data.hpp"
#include "mcu/neighbor_graph.hpp"
#include "mcu/sdp.hpp"

namespace mcu {

enum class Method { MCU, MVU, PCA };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::MCU: return "MCU";
    case Method::MVU: return "MVU";
    case Method::PCA: return "PCA";
  }
  return "?";
}

/// How the reduced dimension M~ is chosen.
enum class DimensionMode { Predictors, Fixed, Otsu };

struct UnfoldConfig {
  Index k = 4;
  double alpha = 1e5;
  DimensionMode dimension_mode = DimensionMode::Predictors;
  Index m_tilde = 0;  // used when dimension_mode == Fixed
  NeighborRule rule = NeighborRule::Union;
  Method method = Method::MCU;

  /// M~ used for the variance budget C = alpha * M~. Otsu mode has no
  /// dimension before the solve, so it budgets for P.
  Index budget_dimension(Index predictors) const {
    return dimension_mode == DimensionMode::Fixed ? m_tilde : predictors;
  }

  void validate(Index samples) const {
    if (!(alpha >= 1.0) || !std::isfinite(alpha)) throw Error(ErrorCode::InvalidArgument, "alpha must be >= 1");
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be positive");
    if (dimension_mode == DimensionMode::Fixed && (m_tilde < 1 || m_tilde > samples))
      throw Error(ErrorCode::InvalidArgument, "m_tilde must lie in [1, N]");
  }
};

template <typename Scalar>
struct Embedding {
  MatrixX<Scalar> Y_tilde;      // N x M~
  VectorX<Scalar> eigenvalues;  // length N, nonincreasing, clamped at 0
  Index m_tilde = 0;
  Method method = Method::MCU;
  std::vector<std::string> warnings;

  Index samples() const { return Y_tilde.rows(); }
};

namespace detail {

template <typename Scalar>
SdpProblem<Scalar> unfolding_constraints(const ResponseMatrix<Scalar>& Y, const NeighborGraph<Scalar>& graph,
                                         Scalar trace_bound) {
  const Index n = Y.samples();
  if (graph.node_count != n) throw Error(ErrorCode::DimensionMismatch, "graph built on a different sample count");

  const GramMatrix<Scalar> G = gram(Y);
  SdpProblem<Scalar> problem;
  problem.equalities.reserve(graph.edges.size() + 1);
  problem.equalities.push_back(centering_constraint<Scalar>(n));
  for (const Edge& e : graph.edges) {
    const Scalar target = G.values(e.i, e.i) + G.values(e.j, e.j) - Scalar(2) * G.values(e.i, e.j);
    problem.equalities.push_back(edge_isometry_constraint<Scalar>(n, e.i, e.j, target));
  }

  const Scalar start_trace = G.values.trace();
  problem.trace_bound = trace_bound;
  if (start_trace > trace_bound) {
    problem.trace_bound = std::max(trace_bound, start_trace * Scalar(1 + 1e-9));
    problem.notes.push_back("trace bound raised from " + std::to_string(trace_bound) + " to " +
                            std::to_string(problem.trace_bound) + " so the centered Gram start is feasible");
  }
  if (connected_components(graph).size() > 1)
    problem.notes.push_back("neighbor graph is disconnected; the variance budget bounds the objective");
  problem.initial_point = G.values;
  return problem;
}

}  // namespace detail

/// tau = (N - 1) * alpha * M~.
template <typename Scalar>
Scalar variance_budget(Index samples, const UnfoldConfig& config, Index predictors) {
  return Scalar(samples - 1) * Scalar(config.alpha) * Scalar(config.budget_dimension(predictors));
}

/// MCU: maximize tr(X X^T Q) subject to centering, local isometry on the
/// graph edges, and tr(Q) <= (N-1) * alpha * M~.
template <typename Scalar>
SdpProblem<Scalar> build_mcu_problem(const CovariateMatrix<Scalar>& X, const ResponseMatrix<Scalar>& Y,
                                     const NeighborGraph<Scalar>& graph, const UnfoldConfig& config) {
  if (X.samples() != Y.samples()) throw Error(ErrorCode::DimensionMismatch, "X and Y sample counts differ");
  config.validate(Y.samples());
  SdpProblem<Scalar> problem = detail::unfolding_constraints(
      Y, graph, variance_budget<Scalar>(Y.samples(), config, X.covariates()));
  problem.objective = X.values * X.values.transpose();
  return problem;
}

/// MVU: identical constraints, objective tr(Q).
template <typename Scalar>
SdpProblem<Scalar> build_mvu_problem(const ResponseMatrix<Scalar>& Y, const NeighborGraph<Scalar>& graph,
                                     const UnfoldConfig& config, Index predictors) {
  config.validate(Y.samples());
  SdpProblem<Scalar> problem =
      detail::unfolding_constraints(Y, graph, variance_budget<Scalar>(Y.samples(), config, predictors));
  problem.objective = MatrixX<Scalar>::Identity(Y.samples(), Y.samples());
  return problem;
}

/// Number of log-eigenvalues above the threshold that maximizes the
/// between-class variance, found by scanning every split of the sorted
/// values. A sequence with no spread returns its full length.
template <typename Derived>
Index otsu_dimension(const Eigen::MatrixBase<Derived>& eigenvalues) {
  using Scalar = typename Derived::Scalar;
  std::vector<Scalar> logs;
  for (Index i = 0; i < eigenvalues.size(); ++i)
    if (eigenvalues(i) > Scalar(0)) logs.push_back(std::log(eigenvalues(i)));
  if (logs.empty()) throw Error(ErrorCode::AllZero, "no positive eigenvalues");
  std::sort(logs.begin(), logs.end());

  const auto count = static_cast<Index>(logs.size());
  const Scalar total = std::accumulate(logs.begin(), logs.end(), Scalar(0));
  Scalar best = Scalar(0);
  Index above = count;
  Scalar low_sum = Scalar(0);
  for (Index split = 1; split < count; ++split) {  // lower class = first `split` values
    low_sum += logs[static_cast<std::size_t>(split - 1)];
    const Scalar w0 = Scalar(split) / Scalar(count);
    const Scalar w1 = Scalar(1) - w0;
    const Scalar mean0 = low_sum / Scalar(split);
    const Scalar mean1 = (total - low_sum) / Scalar(count - split);
    const Scalar between = w0 * w1 * (mean0 - mean1) * (mean0 - mean1);
    if (between > best) {
      best = between;
      above = count - split;
    }
  }
  const Scalar spread = logs.back() - logs.front();
  if (!(spread > Scalar(1e-12) * (Scalar(1) + std::abs(logs.back())))) return count;
  return above;
}

namespace detail {

// Eigenvectors of a symmetric PSD matrix, nonincreasing eigenvalues, each
// vector signed so its largest-magnitude entry (first on ties) is positive.
template <typename Scalar>
void sorted_eigen(const MatrixX<Scalar>& Q, VectorX<Scalar>& values, MatrixX<Scalar>& vectors) {
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> eig(Q);
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::EigenFailure, "eigendecomposition did not converge");
  const Index n = Q.rows();
  values = eig.eigenvalues().reverse().cwiseMax(Scalar(0));
  vectors = eig.eigenvectors().rowwise().reverse();
  for (Index c = 0; c < n; ++c) {
    Index arg = 0;
    Scalar best = Scalar(-1);
    for (Index r = 0; r < n; ++r) {
      const Scalar a = std::abs(vectors(r, c));
      if (a > best * (Scalar(1) + Scalar(1e-12))) {
        best = a;
        arg = r;
      }
    }
    if (vectors(arg, c) < Scalar(0)) vectors.col(c) *= Scalar(-1);
  }
}

}  // namespace detail

/// Y~ = U_{1:M~} Sigma_{1:M~}^{1/2} from Q = U Sigma U^T. Pass m_tilde = 0 to
/// choose M~ with otsu_dimension().
template <typename Scalar>
Embedding<Scalar> recover_embedding(const MatrixX<Scalar>& Q, Index m_tilde, Method method = Method::MCU) {
  if (Q.rows() != Q.cols() || Q.rows() < 1) throw Error(ErrorCode::DimensionMismatch, "Q must be square");
  require_finite(Q, "Gram solution");
  const MatrixX<Scalar> sym = (Q + Q.transpose()) / Scalar(2);

  Embedding<Scalar> out;
  out.method = method;
  MatrixX<Scalar> U;
  detail::sorted_eigen(sym, out.eigenvalues, U);
  const Index n = sym.rows();
  if (m_tilde == 0) m_tilde = otsu_dimension(out.eigenvalues);
  if (m_tilde < 1 || m_tilde > n) throw Error(ErrorCode::InvalidArgument, "m_tilde must lie in [1, N]");
  out.m_tilde = m_tilde;

  const Scalar floor = Scalar(1e-10) * out.eigenvalues(0);
  const Index rank = (out.eigenvalues.array() > floor).count();
  if (m_tilde > rank)
    out.warnings.push_back("RankDeficient: m_tilde=" + std::to_string(m_tilde) + " exceeds numerical rank " +
                           std::to_string(rank));
  out.Y_tilde = U.leftCols(m_tilde) * out.eigenvalues.head(m_tilde).cwiseSqrt().asDiagonal();
  return out;
}

template <typename Scalar>
Embedding<Scalar> recover_embedding(const SdpSolution<Scalar>& solution, Index m_tilde, Method method = Method::MCU) {
  return recover_embedding(solution.Q, m_tilde, method);
}

/// Principal component scores of centered Y via the N x N Gram matrix;
/// eigenvalues are the squared singular values of Y.
template <typename Scalar>
Embedding<Scalar> pca_embed(const ResponseMatrix<Scalar>& Y, Index m_tilde) {
  return recover_embedding(gram(Y).values, m_tilde, Method::PCA);
}

template <typename Derived>
Embedding<typename Derived::Scalar> pca_embed(const Eigen::MatrixBase<Derived>& centered, Index m_tilde) {
  return recover_embedding(gram(centered).values, m_tilde, Method::PCA);
}

}  // namespace mcu
