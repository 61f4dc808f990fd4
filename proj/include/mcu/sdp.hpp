#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>

#include "mcu/core_data.hpp"
#include "mcu/detail/sdp_admm.hpp"
#include "mcu/detail/sdp_interior.hpp"
#include "mcu/detail/sdp_operator.hpp"
#include "mcu/detail/sdp_polish.hpp"
#include "mcu/sdp_types.hpp"

namespace mcu {

/// Solves the SDP with the algorithm selected in `tol`.
///
/// The interior-point path reaches high accuracy in a few dozen Newton
/// steps; ADMM needs only one eigendecomposition per iteration but many
/// iterations. Both finish with a factored Gauss-Newton equality correction, and the
/// result is flagged converged only if the returned Q meets every tolerance.
template <typename Scalar>
SdpSolution<Scalar> solve(const SdpProblem<Scalar>& problem, const SdpTolerances<Scalar>& tol = {},
                          const std::type_identity_t<SdpReporter<Scalar>>& on_report = {}) {
  const Index n = problem.size();
  if (n < 1 || problem.objective.cols() != n) throw Error(ErrorCode::DimensionMismatch, "objective must be square");
  if (!(problem.trace_bound > Scalar(0)) || !std::isfinite(problem.trace_bound))
    throw Error(ErrorCode::InvalidArgument, "trace bound must be positive and finite");
  require_finite(problem.objective, "objective matrix");
  if ((problem.objective - problem.objective.transpose()).cwiseAbs().maxCoeff() >
      Scalar(1e-12) * (Scalar(1) + problem.objective.cwiseAbs().maxCoeff()))
    throw Error(ErrorCode::InvalidArgument, "objective matrix is not symmetric");

  SdpSolution<Scalar> result;
  result.algorithm = tol.algorithm;

  MatrixX<Scalar> start = MatrixX<Scalar>::Zero(n, n);
  if (problem.initial_point) {
    start = *problem.initial_point;
    if (start.rows() != n || start.cols() != n) throw Error(ErrorCode::DimensionMismatch, "initial point size");
    const Scalar tr0 = start.trace();
    const Scalar psd_tol = tol.psd * (Scalar(1) + std::abs(tr0) / Scalar(n));
    if (equality_residual(problem, start) > tol.equality || tr0 > problem.trace_bound * (Scalar(1) + Scalar(1e-8)) ||
        psd_violation(start) > psd_tol)
      throw Error(ErrorCode::InfeasibleStart, "initial point violates the constraints");
    result.initial_objective = (problem.objective.cwiseProduct(start)).sum();
  }

  if (tol.algorithm == SdpAlgorithm::Admm)
    detail::admm_solve(problem, tol, start, problem.initial_point.has_value(), on_report, result);
  else
    detail::interior_solve(problem, tol, on_report, result);

  symmetrize(result.Q);
  {
    MatrixX<Scalar> polished = detail::polish_factored(problem, tol, result.Q);
    const Scalar before = equality_residual(problem, result.Q);
    const Scalar after = polished.allFinite() ? equality_residual(problem, polished) : before + Scalar(1);
    if (after <= before || after <= tol.equality) result.Q = std::move(polished);
  }
  result.objective_value = problem.objective.cwiseProduct(result.Q).sum();
  result.primal_residual = equality_residual(problem, result.Q);
  result.trace_value = result.Q.trace();
  result.psd_violation = psd_violation(result.Q);
  const Scalar psd_tol = tol.psd * (Scalar(1) + std::abs(result.trace_value) / Scalar(n));
  const bool no_worse = !std::isfinite(result.initial_objective) ||
                       result.objective_value >= result.initial_objective -
                                                     Scalar(1e-6) * (Scalar(1) + std::abs(result.initial_objective));
  const bool within = result.primal_residual <= tol.equality && result.psd_violation <= psd_tol &&
                      result.trace_value <= problem.trace_bound * (Scalar(1) + Scalar(1e-8)) &&
                      result.dual_residual <= tol.dual && result.gap <= tol.gap && no_worse;
  result.converged = within;
  if (within)
    result.status = "converged";
  else if (result.status.empty() || result.status == "converged")
    result.status = "tolerance_check_failed";
  return result;
}

/// Throws NotConverged unless the solution met every tolerance.
template <typename Scalar>
const SdpSolution<Scalar>& require_converged(const SdpSolution<Scalar>& solution) {
  if (!solution.converged)
    throw Error(ErrorCode::NotConverged, "SDP solver stopped (" + solution.status + ") after " +
                                             std::to_string(solution.iterations) + " iterations; equality residual " +
                                             std::to_string(solution.primal_residual));
  return solution;
}

}  // namespace mcu
