#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "mcu/detail/sdp_operator.hpp"

namespace mcu::detail {

// Equality constraints written as sums of weighted outer products,
// A_k = sum_t w_t a_t a_t^T, in the coordinates of `basis` (Q = V X V^T).
// The trace row is kept implicit: theta * tr(X) + s = rhs(m-1).
template <typename Scalar>
struct FactoredConstraints {
  Index dim = 0;
  MatrixX<Scalar> basis;        // N x dim, orthonormal columns
  MatrixX<Scalar> vectors;      // dim x K
  VectorX<Scalar> weights;      // K
  std::vector<Index> owner;     // row of each factor column
  VectorX<Scalar> rhs;          // m, last entry is the trace row
  Scalar theta = Scalar(1);     // trace row coefficient
  Index rows() const { return rhs.size(); }
};

// Orthonormal basis of the complement of the all-ones vector.
template <typename Scalar>
MatrixX<Scalar> centered_basis(Index n) {
  const MatrixX<Scalar> ones = MatrixX<Scalar>::Ones(n, 1);
  Eigen::HouseholderQR<MatrixX<Scalar>> qr(ones);
  const MatrixX<Scalar> full = qr.householderQ() * MatrixX<Scalar>::Identity(n, n);
  return full.rightCols(n - 1);
}

template <typename Scalar>
FactoredConstraints<Scalar> factor_constraints(const SdpProblem<Scalar>& problem) {
  const Index n = problem.size();
  FactoredConstraints<Scalar> f;
  bool centered = false;
  std::vector<Index> kept;
  for (Index r = 0; r < static_cast<Index>(problem.equalities.size()); ++r) {
    const auto& c = problem.equalities[static_cast<std::size_t>(r)];
    if (c.matrix.rows() != n || c.matrix.cols() != n)
      throw Error(ErrorCode::DimensionMismatch, "constraint matrix size differs from objective");
    if (!std::isfinite(c.rhs)) throw Error(ErrorCode::NonFiniteInput, "constraint right-hand side");
    if (!centered && n > 1 && is_centering(c, n)) {
      centered = true;
      continue;
    }
    kept.push_back(r);
  }
  f.basis = centered ? centered_basis<Scalar>(n) : MatrixX<Scalar>::Identity(n, n);
  f.dim = f.basis.cols();

  const Index m = static_cast<Index>(kept.size()) + 1;
  f.rhs.resize(m);
  std::vector<VectorX<Scalar>> cols;
  std::vector<Scalar> w;
  for (Index r = 0; r + 1 < m; ++r) {
    const auto& c = problem.equalities[static_cast<std::size_t>(kept[static_cast<std::size_t>(r)])];
    std::vector<Index> support;
    for (Index col = 0; col < c.matrix.outerSize(); ++col)
      for (typename Eigen::SparseMatrix<Scalar>::InnerIterator it(c.matrix, col); it; ++it)
        if (it.value() != Scalar(0)) {
          support.push_back(it.row());
          support.push_back(it.col());
        }
    std::sort(support.begin(), support.end());
    support.erase(std::unique(support.begin(), support.end()), support.end());
    const Index s = static_cast<Index>(support.size());
    MatrixX<Scalar> block = MatrixX<Scalar>::Zero(s, s);
    for (Index col = 0; col < c.matrix.outerSize(); ++col)
      for (typename Eigen::SparseMatrix<Scalar>::InnerIterator it(c.matrix, col); it; ++it) {
        const auto a = std::lower_bound(support.begin(), support.end(), it.row()) - support.begin();
        const auto b = std::lower_bound(support.begin(), support.end(), it.col()) - support.begin();
        block(a, b) += it.value();
      }
    symmetrize(block);
    Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> eig(block);
    if (eig.info() != Eigen::Success) throw Error(ErrorCode::EigenFailure, "constraint factorization failed");
    const Scalar big = s > 0 ? eig.eigenvalues().cwiseAbs().maxCoeff() : Scalar(0);
    // Frobenius norm of the restricted constraint, used for row equilibration.
    MatrixX<Scalar> local(f.dim, 0);
    std::vector<Scalar> local_w;
    for (Index t = 0; t < s; ++t) {
      const Scalar lambda = eig.eigenvalues()(t);
      if (!(std::abs(lambda) > Scalar(1e-12) * big)) continue;
      VectorX<Scalar> u = VectorX<Scalar>::Zero(n);
      for (Index q = 0; q < s; ++q) u(support[static_cast<std::size_t>(q)]) = eig.eigenvectors()(q, t);
      local.conservativeResize(Eigen::NoChange, local.cols() + 1);
      local.col(local.cols() - 1) = f.basis.transpose() * u;
      local_w.push_back(lambda);
    }
    Scalar norm = Scalar(0);
    if (local.cols() > 0) {
      const MatrixX<Scalar> g = local.transpose() * local;
      const Eigen::Map<const VectorX<Scalar>> lw(local_w.data(), static_cast<Index>(local_w.size()));
      const MatrixX<Scalar> wg = lw.asDiagonal() * g;
      norm = std::sqrt(std::max(Scalar(0), (wg * wg).trace()));
    }
    if (!(norm > Scalar(1e-14)))
      throw Error(ErrorCode::InvalidArgument, "constraint " + std::to_string(kept[static_cast<std::size_t>(r)]) +
                                                   " vanishes on the feasible face");
    for (Index t = 0; t < local.cols(); ++t) {
      cols.push_back(local.col(t));
      w.push_back(local_w[static_cast<std::size_t>(t)] / norm);
      f.owner.push_back(r);
    }
    f.rhs(r) = c.rhs / norm;
  }
  f.theta = Scalar(1) / std::sqrt(Scalar(f.dim));
  f.rhs(m - 1) = problem.trace_bound * f.theta;
  f.vectors.resize(f.dim, static_cast<Index>(cols.size()));
  f.weights.resize(static_cast<Index>(w.size()));
  for (std::size_t t = 0; t < cols.size(); ++t) {
    f.vectors.col(static_cast<Index>(t)) = cols[t];
    f.weights(static_cast<Index>(t)) = w[t];
  }
  return f;
}

// Largest step a in (0, inf] keeping X + a D PSD, from the Cholesky factor of X.
template <typename Scalar>
Scalar max_psd_step(const Eigen::LLT<MatrixX<Scalar>>& chol, const MatrixX<Scalar>& D) {
  MatrixX<Scalar> t = chol.matrixL().solve(D);
  t = chol.matrixL().solve(t.transpose()).transpose();
  symmetrize(t);
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> eig(t, Eigen::EigenvaluesOnly);
  const Scalar lo = eig.eigenvalues()(0);
  return lo < Scalar(0) ? Scalar(-1) / lo : std::numeric_limits<Scalar>::infinity();
}

template <typename Scalar>
Scalar max_scalar_step(Scalar x, Scalar dx) {
  return dx < Scalar(0) ? -x / dx : std::numeric_limits<Scalar>::infinity();
}

// Infeasible primal-dual path following with the HKM search direction and
// Mehrotra predictor-corrector steps, on
//   min <C, X>  s.t.  A(X) + e_m s = b,  X PSD,  s >= 0
// in the coordinates of the factored constraints. Fills Q and diagnostics.
template <typename Scalar>
void interior_solve(const SdpProblem<Scalar>& problem, const SdpTolerances<Scalar>& tol,
                    const SdpReporter<Scalar>& on_report, SdpSolution<Scalar>& result) {
  const FactoredConstraints<Scalar> f = factor_constraints(problem);
  const Index d = f.dim;
  const Index m = f.rows();
  const Index K = f.vectors.cols();
  const MatrixX<Scalar>& F = f.vectors;
  const VectorX<Scalar>& w = f.weights;

  // Scale b by its largest equality entry and C to unit norm.
  Scalar b_scale = Scalar(1);
  for (Index r = 0; r + 1 < m; ++r) b_scale = std::max(b_scale, std::abs(f.rhs(r)));
  const VectorX<Scalar> b = f.rhs / b_scale;
  MatrixX<Scalar> C = -(f.basis.transpose() * problem.objective * f.basis);
  symmetrize(C);
  const Scalar c_scale = std::max(Scalar(1e-300), C.norm());
  if (C.norm() > Scalar(0)) C /= c_scale;

  auto apply = [&](const MatrixX<Scalar>& M, Scalar s) {
    VectorX<Scalar> out = VectorX<Scalar>::Zero(m);
    const MatrixX<Scalar> MF = M * F;
    for (Index t = 0; t < K; ++t) out(f.owner[static_cast<std::size_t>(t)]) += w(t) * F.col(t).dot(MF.col(t));
    out(m - 1) = f.theta * M.trace() + s;
    return out;
  };
  auto adjoint = [&](const VectorX<Scalar>& y) {
    VectorX<Scalar> coef(K);
    for (Index t = 0; t < K; ++t) coef(t) = w(t) * y(f.owner[static_cast<std::size_t>(t)]);
    MatrixX<Scalar> out = F * coef.asDiagonal() * F.transpose();
    out.diagonal().array() += f.theta * y(m - 1);
    return out;
  };

  // Starting point in the style of SDPT3.
  Scalar xi = std::max(Scalar(10), std::sqrt(Scalar(d)));
  for (Index r = 0; r < m; ++r) xi = std::max(xi, Scalar(d) * (Scalar(1) + std::abs(b(r))) / Scalar(2));
  const Scalar eta = std::max({Scalar(10), std::sqrt(Scalar(d)), Scalar(1)});
  MatrixX<Scalar> X = xi * MatrixX<Scalar>::Identity(d, d);
  MatrixX<Scalar> Z = eta * MatrixX<Scalar>::Identity(d, d);
  Scalar s = xi, z = eta;
  VectorX<Scalar> y = VectorX<Scalar>::Zero(m);

  const Scalar b_norm = b.norm();
  const Scalar c_norm = C.norm();
  const Scalar target = Scalar(1e-10);

  MatrixX<Scalar> best_X = X;
  Scalar best_score = std::numeric_limits<Scalar>::infinity(), best_dual = best_score, best_gap = best_score;
  int slow = 0;

  for (int iter = 1; iter <= tol.max_interior_iterations; ++iter) {
    const VectorX<Scalar> rp = b - apply(X, s);
    const MatrixX<Scalar> Rd = C - adjoint(y) - Z;
    const Scalar rd = -y(m - 1) - z;
    const Scalar mu = ((X.cwiseProduct(Z)).sum() + s * z) / Scalar(d + 1);
    const Scalar pobj = C.cwiseProduct(X).sum();
    const Scalar dobj = b.dot(y);
    const Scalar primal = rp.norm() / (Scalar(1) + b_norm);
    const Scalar dual = std::sqrt(Rd.squaredNorm() + rd * rd) / (Scalar(1) + c_norm);
    const Scalar gap = std::abs(pobj - dobj) / (Scalar(1) + std::abs(pobj) + std::abs(dobj));
    const Scalar score = std::max({primal, dual, gap});
    if (score < best_score) {
      best_score = score;
      best_X = X;
      best_dual = dual;
      best_gap = gap;
    }
    SdpIterationRecord<Scalar> rec{iter, -pobj * c_scale * b_scale, primal, dual, gap, mu};
    result.history.push_back(rec);
    if (on_report) on_report(rec);
    result.iterations = iter;
    if (score < target) {
      result.converged = true;
      result.status = "converged";
      break;
    }

    Eigen::LLT<MatrixX<Scalar>> zchol(Z), xchol(X);
    if (zchol.info() != Eigen::Success || xchol.info() != Eigen::Success) {
      result.status = "lost_positivity";
      break;
    }
    const MatrixX<Scalar> Zinv = zchol.solve(MatrixX<Scalar>::Identity(d, d));

    // Schur complement M_ij = tr(A_i X A_j Z^-1) plus the slack block.
    const MatrixX<Scalar> XF = X * F;
    const MatrixX<Scalar> ZF = Zinv * F;
    MatrixX<Scalar> H = (F.transpose() * XF).cwiseProduct(F.transpose() * ZF);
    H = w.asDiagonal() * H * w.asDiagonal();
    MatrixX<Scalar> M = MatrixX<Scalar>::Zero(m, m);
    for (Index a = 0; a < K; ++a)
      for (Index c = 0; c < K; ++c)
        M(f.owner[static_cast<std::size_t>(a)], f.owner[static_cast<std::size_t>(c)]) += H(a, c);
    const MatrixX<Scalar> ZX = Zinv * X;
    for (Index t = 0; t < K; ++t) {
      const Scalar v = f.theta * w(t) * F.col(t).dot(ZX * F.col(t));
      M(m - 1, f.owner[static_cast<std::size_t>(t)]) += v;
      M(f.owner[static_cast<std::size_t>(t)], m - 1) += v;
    }
    M(m - 1, m - 1) += f.theta * f.theta * ZX.trace() + s / z;
    symmetrize(M);
    // Self-stresses of low-rank configurations make M nearly singular; the
    // small shift is removed again by iterative refinement below.
    const VectorX<Scalar> mdiag = M.diagonal().cwiseMax(Scalar(1e-300));
    const VectorX<Scalar> msc = mdiag.cwiseSqrt().cwiseInverse();
    MatrixX<Scalar> Ms = msc.asDiagonal() * M * msc.asDiagonal();
    Ms.diagonal().array() += Scalar(1e-14);
    Eigen::LLT<MatrixX<Scalar>> mchol(Ms);
    Eigen::LDLT<MatrixX<Scalar>> mldlt;
    const bool use_llt = mchol.info() == Eigen::Success;
    if (!use_llt) mldlt.compute(Ms);

    // One Newton system for a given centering sigma and second-order terms.
    struct Step {
      MatrixX<Scalar> dX, dZ;
      VectorX<Scalar> dy;
      Scalar ds, dz;
    };
    auto direction = [&](Scalar sigma_mu, const MatrixX<Scalar>& corr, Scalar lp_corr) {
      const MatrixX<Scalar> G = sigma_mu * Zinv - X - X * Rd * Zinv - corr;
      VectorX<Scalar> rhs = rp - apply(G, Scalar(0));
      rhs(m - 1) -= (sigma_mu - lp_corr) / z - s - (s / z) * rd;
      Step st;
      auto solve_m = [&](const VectorX<Scalar>& r) {
        const VectorX<Scalar> rs = msc.cwiseProduct(r);
        return VectorX<Scalar>(msc.cwiseProduct(use_llt ? VectorX<Scalar>(mchol.solve(rs)) : VectorX<Scalar>(mldlt.solve(rs))));
      };
      auto complete = [&](Step& out) {
        out.dZ = Rd - adjoint(out.dy);
        symmetrize(out.dZ);
        out.dX = sigma_mu * Zinv - X - X * out.dZ * Zinv - corr;
        symmetrize(out.dX);
        out.dz = rd - out.dy(m - 1);
        out.ds = (sigma_mu - s * z - lp_corr) / z - (s / z) * out.dz;
      };
      st.dy = solve_m(rhs);
      complete(st);
      // Iterative refinement against the unreduced primal equation.
      Scalar err = (rp - apply(st.dX, st.ds)).norm();
      for (int pass = 0; pass < 8 && err > Scalar(0); ++pass) {
        Step trial = st;
        trial.dy += solve_m(rp - apply(st.dX, st.ds));
        complete(trial);
        const Scalar trial_err = (rp - apply(trial.dX, trial.ds)).norm();
        if (!(trial_err < Scalar(0.5) * err)) break;
        st = std::move(trial);
        err = trial_err;
      }
      return st;
    };
    auto steps = [&](const Step& st) {
      const Scalar ap = std::min(max_psd_step(xchol, st.dX), max_scalar_step(s, st.ds));
      const Scalar ad = std::min(max_psd_step(zchol, st.dZ), max_scalar_step(z, st.dz));
      return std::pair<Scalar, Scalar>(ap, ad);
    };

    const Step pred = direction(Scalar(0), MatrixX<Scalar>::Zero(d, d), Scalar(0));
    auto [ap0, ad0] = steps(pred);
    ap0 = std::min(Scalar(1), ap0);
    ad0 = std::min(Scalar(1), ad0);
    const Scalar mu_aff = (((X + ap0 * pred.dX).cwiseProduct(Z + ad0 * pred.dZ)).sum() +
                           (s + ap0 * pred.ds) * (z + ad0 * pred.dz)) /
                          Scalar(d + 1);
    const Scalar sigma = std::clamp(std::pow(std::max(Scalar(0), mu_aff) / mu, Scalar(3)), Scalar(0), Scalar(1));
    const Step corr = direction(sigma * mu, pred.dX * pred.dZ * Zinv, pred.ds * pred.dz);
    const auto [ap1, ad1] = steps(corr);
    const Scalar gamma = Scalar(0.9) + Scalar(0.09) * std::min(std::min(Scalar(1), ap1), std::min(Scalar(1), ad1));
    const Scalar ap = std::min(Scalar(1), gamma * ap1);
    const Scalar ad = std::min(Scalar(1), gamma * ad1);

    X += ap * corr.dX;
    s += ap * corr.ds;
    y += ad * corr.dy;
    Z += ad * corr.dZ;
    z += ad * corr.dz;
    symmetrize(X);
    symmetrize(Z);

    slow = (std::max(ap, ad) < Scalar(1e-6)) ? slow + 1 : 0;
    if (slow >= 3) {
      result.status = "stalled";
      break;
    }
  }
  if (!result.converged && result.status.empty()) result.status = "max_iterations";
  result.Q = f.basis * best_X * f.basis.transpose() * b_scale;
  result.dual_residual = best_dual;
  result.gap = best_gap;
}

}  // namespace mcu::detail
