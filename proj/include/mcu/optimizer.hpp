#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mcu/core_data.hpp"
#include "mcu/neighbor_graph.hpp"
#include "mcu/regression.hpp"
#include "mcu/unfolding.hpp"

namespace mcu {

template <typename Scalar>
struct AnnealConfig {
  VectorX<Scalar> lower;
  VectorX<Scalar> upper;
  std::uint64_t seed = 0;
  long budget = 10000;                 // objective evaluations
  double initial_temperature = 5230.0;
  double visiting_parameter = 2.62;
  double acceptance_parameter = -5.0;
  int restarts = 4;                    // reannealing cycles after the first
  double restart_temperature_ratio = 2e-5;
  bool local_polish = true;

  Index dimension() const { return lower.size(); }

  void validate() const {
    if (lower.size() < 1 || lower.size() != upper.size())
      throw Error(ErrorCode::InvalidArgument, "bounds must be nonempty and of equal length");
    if (!lower.allFinite() || !upper.allFinite()) throw Error(ErrorCode::InvalidArgument, "bounds must be finite");
    if ((upper.array() < lower.array()).any()) throw Error(ErrorCode::InvalidArgument, "upper bound below lower bound");
    if (budget < 1) throw Error(ErrorCode::InvalidArgument, "budget must be at least 1");
    if (!(initial_temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "initial temperature must be positive");
    if (!(visiting_parameter > 1.0 && visiting_parameter < 3.0))
      throw Error(ErrorCode::InvalidArgument, "visiting parameter must lie in (1, 3)");
    if (!(acceptance_parameter < 1.0)) throw Error(ErrorCode::InvalidArgument, "acceptance parameter must be below 1");
    if (restarts < 0) throw Error(ErrorCode::InvalidArgument, "restarts must be nonnegative");
    if (!(restart_temperature_ratio > 0.0 && restart_temperature_ratio < 1.0))
      throw Error(ErrorCode::InvalidArgument, "restart temperature ratio must lie in (0, 1)");
  }
};

template <typename Scalar>
struct AnnealTraceRow {
  long evaluation = 0;
  double temperature = 0.0;
  Scalar incumbent = Scalar(0);
};

template <typename Scalar>
struct AnnealResult {
  VectorX<Scalar> x_best;
  Scalar f_best = std::numeric_limits<Scalar>::infinity();
  long evaluations = 0;
  bool budget_exhausted = false;
  int cycles = 0;
  std::vector<AnnealTraceRow<Scalar>> trace;
};

template <typename Scalar>
using Objective = std::function<Scalar(const VectorX<Scalar>&)>;

namespace detail {

// Counts evaluations against the budget and tracks the best point seen.
template <typename Scalar>
class BudgetedObjective {
 public:
  BudgetedObjective(const Objective<Scalar>& f, long budget) : f_(f), budget_(budget) {}

  bool exhausted() const { return used_ >= budget_; }
  long used() const { return used_; }
  long remaining() const { return budget_ - used_; }

  Scalar operator()(const VectorX<Scalar>& x) {
    ++used_;
    const Scalar value = f_(x);
    const Scalar v = std::isfinite(value) ? value : std::numeric_limits<Scalar>::infinity();
    if (v < best_value) {
      best_value = v;
      best_point = x;
    }
    return v;
  }

  Scalar best_value = std::numeric_limits<Scalar>::infinity();
  VectorX<Scalar> best_point;

 private:
  const Objective<Scalar>& f_;
  long budget_;
  long used_ = 0;
};

class Uniform01 {
 public:
  explicit Uniform01(std::uint64_t seed) : engine_(seed) {}
  double operator()() { return double(engine_() >> 11) * 0x1.0p-53; }
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u = 0.0;
    while (u <= 0.0) u = (*this)();
    const double v = (*this)();
    const double radius = std::sqrt(-2.0 * std::log(u));
    spare_ = radius * std::sin(2.0 * std::numbers::pi * v);
    has_spare_ = true;
    return radius * std::cos(2.0 * std::numbers::pi * v);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <typename Scalar>
VectorX<Scalar> clip(const VectorX<Scalar>& x, const VectorX<Scalar>& lower, const VectorX<Scalar>& upper) {
  return x.cwiseMax(lower).cwiseMin(upper);
}

// Tsallis visiting distribution with parameter q.
class Visitor {
 public:
  explicit Visitor(double q) : q_(q) {
    const double factor2 = std::exp((4.0 - q) * std::log(q - 1.0));
    const double factor3 = std::exp((2.0 - q) * std::log(2.0) / (q - 1.0));
    factor4_p_ = std::sqrt(std::numbers::pi) * factor2 / (factor3 * (3.0 - q));
    const double factor5 = 1.0 / (q - 1.0) - 0.5;
    const double d1 = 2.0 - factor5;
    factor6_ = std::numbers::pi * (1.0 - factor5) / std::sin(std::numbers::pi * (1.0 - factor5)) /
               std::exp(std::lgamma(d1));
  }

  double draw(double temperature, Uniform01& rng) const {
    double x = rng.normal();
    const double y = rng.normal();
    const double factor1 = std::exp(std::log(temperature) / (q_ - 1.0));
    const double factor4 = factor4_p_ * factor1;
    x *= std::exp(-(q_ - 1.0) * std::log(factor6_ / factor4) / (3.0 - q_));
    const double den = std::exp((q_ - 1.0) * std::log(std::abs(y)) / (3.0 - q_));
    double step = x / den;
    if (!std::isfinite(step) || step > kTail) step = kTail * rng();
    else if (step < -kTail) step = -kTail * rng();
    return step;
  }

 private:
  static constexpr double kTail = 1e8;
  double q_;
  double factor4_p_ = 0.0;
  double factor6_ = 0.0;
};

}  // namespace detail

/// Bounded Nelder-Mead simplex descent. Trial points are clipped to the box.
/// Stops on evaluation count or when the simplex collapses.
template <typename Scalar>
VectorX<Scalar> nelder_mead(const std::function<Scalar(const VectorX<Scalar>&)>& f, const VectorX<Scalar>& start,
                            const VectorX<Scalar>& lower, const VectorX<Scalar>& upper, long max_evaluations,
                            Scalar* f_out = nullptr, Scalar initial_step = Scalar(0.05)) {
  const Index dim = start.size();
  const VectorX<Scalar> range = (upper - lower).cwiseMax(Scalar(1e-12));
  std::vector<VectorX<Scalar>> simplex;
  std::vector<Scalar> values;
  long used = 0;
  auto eval = [&](const VectorX<Scalar>& x) {
    ++used;
    const Scalar v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<Scalar>::infinity();
  };

  const VectorX<Scalar> x0 = detail::clip(start, lower, upper);
  simplex.push_back(x0);
  values.push_back(eval(x0));
  for (Index i = 0; i < dim && used < max_evaluations; ++i) {
    VectorX<Scalar> v = x0;
    const Scalar step = initial_step * range(i);
    v(i) = (v(i) + step <= upper(i)) ? v(i) + step : v(i) - step;
    v = detail::clip(v, lower, upper);
    simplex.push_back(v);
    values.push_back(eval(v));
  }
  if (static_cast<Index>(simplex.size()) < dim + 1) {
    if (f_out) *f_out = values.front();
    return x0;
  }

  std::vector<std::size_t> order(simplex.size());
  auto sort_simplex = [&] {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<VectorX<Scalar>> s;
    std::vector<Scalar> v;
    for (auto i : order) {
      s.push_back(simplex[i]);
      v.push_back(values[i]);
    }
    simplex = std::move(s);
    values = std::move(v);
  };

  const auto n = static_cast<std::size_t>(dim);
  while (used < max_evaluations) {
    sort_simplex();
    Scalar size = Scalar(0);
    for (std::size_t i = 1; i <= n; ++i)
      size = std::max(size, ((simplex[i] - simplex[0]).array() / range.array()).abs().maxCoeff());
    const Scalar spread = values[n] - values[0];
    if (size < Scalar(1e-12) || (std::isfinite(spread) && spread <= Scalar(1e-15) * (Scalar(1) + std::abs(values[0])) &&
                                 size < Scalar(1e-8)))
      break;

    VectorX<Scalar> centroid = VectorX<Scalar>::Zero(dim);
    for (std::size_t i = 0; i < n; ++i) centroid += simplex[i];
    centroid /= Scalar(dim);

    const VectorX<Scalar> reflected = detail::clip<Scalar>(centroid + (centroid - simplex[n]), lower, upper);
    const Scalar fr = eval(reflected);
    if (fr < values[0]) {
      if (used >= max_evaluations) {
        simplex[n] = reflected;
        values[n] = fr;
        break;
      }
      const VectorX<Scalar> expanded = detail::clip<Scalar>(centroid + Scalar(2) * (centroid - simplex[n]), lower, upper);
      const Scalar fe = eval(expanded);
      if (fe < fr) {
        simplex[n] = expanded;
        values[n] = fe;
      } else {
        simplex[n] = reflected;
        values[n] = fr;
      }
      continue;
    }
    if (fr < values[n - 1]) {
      simplex[n] = reflected;
      values[n] = fr;
      continue;
    }
    if (used >= max_evaluations) break;
    const bool outside = fr < values[n];
    const VectorX<Scalar> contracted = outside ? VectorX<Scalar>(centroid + Scalar(0.5) * (reflected - centroid))
                                               : VectorX<Scalar>(centroid + Scalar(0.5) * (simplex[n] - centroid));
    const Scalar fc = eval(contracted);
    if (fc < std::min(fr, values[n])) {
      simplex[n] = contracted;
      values[n] = fc;
      continue;
    }
    for (std::size_t i = 1; i <= n && used < max_evaluations; ++i) {
      simplex[i] = simplex[0] + Scalar(0.5) * (simplex[i] - simplex[0]);
      values[i] = eval(simplex[i]);
    }
  }
  sort_simplex();
  if (f_out) *f_out = values[0];
  return simplex[0];
}

/// Generalized simulated annealing over a box.
///
/// Each temperature level runs a Markov chain of 2P moves: the first P
/// perturb every coordinate, the rest one coordinate each. Moves are
/// accepted with the generalized Metropolis rule. The temperature follows
/// T(t) = T0 (2^{q-1} - 1) / ((1 + t)^{q-1} - 1); when it falls below
/// restart_temperature_ratio * T0 a new cycle starts from a fresh random
/// point. The incumbent is polished with Nelder-Mead whenever a chain
/// improves it and at the end of every cycle.
template <typename Scalar>
AnnealResult<Scalar> anneal_minimize(const Objective<Scalar>& objective, const AnnealConfig<Scalar>& config) {
  config.validate();
  const Index dim = config.dimension();
  const double q = config.visiting_parameter;
  const double qa = config.acceptance_parameter;
  const detail::Visitor visitor(q);
  detail::BudgetedObjective<Scalar> f(objective, config.budget);
  AnnealResult<Scalar> result;

  auto polish = [&](const VectorX<Scalar>& from, Scalar& value) {
    if (!config.local_polish || f.exhausted()) return from;
    const long allowance = std::min<long>(f.remaining(), 200L * (dim + 1));
    Scalar polished_value = value;
    const VectorX<Scalar> x = nelder_mead<Scalar>([&](const VectorX<Scalar>& v) { return f(v); }, from, config.lower,
                                                  config.upper, allowance, &polished_value);
    if (polished_value < value) {
      value = polished_value;
      return x;
    }
    return from;
  };

  const double t1 = std::exp((q - 1.0) * std::log(2.0)) - 1.0;
  const double restart_temperature = config.initial_temperature * config.restart_temperature_ratio;

  for (int cycle = 0; cycle <= config.restarts && !f.exhausted(); ++cycle) {
    result.cycles = cycle + 1;
    detail::Uniform01 rng(detail::mix_seed(config.seed, static_cast<std::uint64_t>(cycle)));
    VectorX<Scalar> current(dim);
    for (Index i = 0; i < dim; ++i)
      current(i) = config.lower(i) + Scalar(rng()) * (config.upper(i) - config.lower(i));
    Scalar current_value = f(current);

    for (long step = 0; !f.exhausted(); ++step) {
      const double t2 = std::exp((q - 1.0) * std::log(double(step) + 2.0)) - 1.0;
      const double temperature = config.initial_temperature * t1 / t2;
      if (temperature < restart_temperature) break;
      const double temperature_step = temperature / double(step + 1);

      const Scalar best_before = f.best_value;
      for (Index j = 0; j < 2 * dim && !f.exhausted(); ++j) {
        VectorX<Scalar> candidate = current;
        if (j < dim) {
          for (Index i = 0; i < dim; ++i) candidate(i) += Scalar(visitor.draw(temperature, rng));
        } else {
          candidate(j - dim) += Scalar(visitor.draw(temperature, rng));
        }
        candidate = detail::clip(candidate, config.lower, config.upper);
        const Scalar value = f(candidate);
        bool accept = value < current_value;
        if (!accept && std::isfinite(value)) {
          const double r = rng();
          const double base = 1.0 - (1.0 - qa) * double(value - current_value) / temperature_step;
          const double probability = base <= 0.0 ? 0.0 : std::exp(std::log(base) / (1.0 - qa));
          accept = r <= probability;
        }
        if (accept) {
          current = std::move(candidate);
          current_value = value;
        }
      }
      if (f.best_value < best_before) {
        Scalar value = f.best_value;
        current = polish(f.best_point, value);
        current_value = value;
      }
      result.trace.push_back({f.used(), temperature, f.best_value});
    }
    if (f.best_point.size() == dim) {
      Scalar value = f.best_value;
      polish(f.best_point, value);
    }
  }

  result.x_best = f.best_point;
  result.f_best = f.best_value;
  result.evaluations = f.used();
  result.budget_exhausted = f.exhausted();
  return result;
}

/// Nominal response in the training frame together with its k nearest
/// training rows and the distances to them.
template <typename Scalar>
struct NominalTarget {
  RowVectorX<Scalar> y_nom;
  std::vector<Index> neighbor_indices;
  VectorX<Scalar> target_distances;

  Index k() const { return static_cast<Index>(neighbor_indices.size()); }
};

/// Scales a raw flattened nominal response like the training data and
/// records its k nearest training rows.
template <typename Scalar, typename Derived>
NominalTarget<Scalar> make_target(const Eigen::MatrixBase<Derived>& y_nom_raw, const ResponseMatrix<Scalar>& training,
                                  Index k) {
  if (k < 1 || k > training.samples())
    throw Error(ErrorCode::InvalidArgument, "k must lie in [1, N] for the nominal target");
  NominalTarget<Scalar> target;
  target.y_nom = training.transform(y_nom_raw);
  require_finite(target.y_nom, "nominal response");
  target.neighbor_indices = nearest_rows(training.values, target.y_nom, k);
  target.target_distances.resize(k);
  for (Index t = 0; t < k; ++t)
    target.target_distances(t) =
        (training.values.row(target.neighbor_indices[static_cast<std::size_t>(t)]) - target.y_nom).norm();
  return target;
}

/// sum_i (||v - y~_i|| - ||y_nom - y_i||)^2 over the target's neighbors.
template <typename Scalar, typename Derived>
Scalar embedding_objective(const Eigen::MatrixBase<Derived>& v, const NominalTarget<Scalar>& target,
                           const Embedding<Scalar>& embedding) {
  if (v.size() != embedding.Y_tilde.cols())
    throw Error(ErrorCode::DimensionMismatch, "point has " + std::to_string(v.size()) + " coordinates, embedding has " +
                                                  std::to_string(embedding.Y_tilde.cols()));
  Scalar total = Scalar(0);
  for (Index t = 0; t < target.k(); ++t) {
    const Index i = target.neighbor_indices[static_cast<std::size_t>(t)];
    if (i < 0 || i >= embedding.samples()) throw Error(ErrorCode::DimensionMismatch, "neighbor index outside embedding");
    const Scalar gap = (v.derived().reshaped().transpose() - embedding.Y_tilde.row(i)).norm() - target.target_distances(t);
    total += gap * gap;
  }
  return total;
}

template <typename Scalar>
struct NominalEmbedding {
  VectorX<Scalar> y_tilde;
  Scalar objective = Scalar(0);
  long evaluations = 0;
};

/// Minimizes embedding_objective by Nelder-Mead from the inverse-distance
/// weighted mean of the neighbor embeddings and from each neighbor.
template <typename Scalar>
NominalEmbedding<Scalar> infer_nominal_embedding(const NominalTarget<Scalar>& target, const Embedding<Scalar>& embedding,
                                                 long evaluations_per_start = 4000) {
  const Index m = embedding.Y_tilde.cols();
  if (target.k() < 1) throw Error(ErrorCode::InvalidArgument, "target has no neighbors");
  std::vector<VectorX<Scalar>> starts;
  VectorX<Scalar> weighted = VectorX<Scalar>::Zero(m);
  Scalar weight_sum = Scalar(0);
  for (Index t = 0; t < target.k(); ++t) {
    const Index i = target.neighbor_indices[static_cast<std::size_t>(t)];
    const Scalar w = Scalar(1) / std::max(target.target_distances(t), Scalar(1e-12));
    weighted += w * embedding.Y_tilde.row(i).transpose();
    weight_sum += w;
  }
  starts.push_back(weighted / weight_sum);
  for (Index t = 0; t < target.k(); ++t)
    starts.push_back(embedding.Y_tilde.row(target.neighbor_indices[static_cast<std::size_t>(t)]).transpose());

  // A box wide enough to contain every minimizer: within the farthest
  // neighbor distance of the embedding's extent.
  const Scalar reach = target.target_distances.maxCoeff() + Scalar(1);
  const VectorX<Scalar> lower = embedding.Y_tilde.colwise().minCoeff().transpose().array() - reach;
  const VectorX<Scalar> upper = embedding.Y_tilde.colwise().maxCoeff().transpose().array() + reach;
  const std::function<Scalar(const VectorX<Scalar>&)> f = [&](const VectorX<Scalar>& v) {
    return embedding_objective(v, target, embedding);
  };

  NominalEmbedding<Scalar> best;
  best.objective = std::numeric_limits<Scalar>::infinity();
  const Scalar step = Scalar(0.05);
  for (const auto& s : starts) {
    const Scalar at_start = f(s);
    Scalar value = at_start;
    VectorX<Scalar> x = s;
    // Restarting the simplex around the incumbent escapes premature collapse.
    for (int round = 0; round < 3; ++round) {
      Scalar next = value;
      const VectorX<Scalar> y = nelder_mead<Scalar>(f, x, lower, upper, evaluations_per_start / 3, &next, step);
      best.evaluations += evaluations_per_start / 3;
      if (!(next < value)) break;
      x = y;
      value = next;
    }
    if (at_start < value) {
      x = s;
      value = at_start;
    }
    if (value < best.objective) {
      best.objective = value;
      best.y_tilde = x;
    }
  }
  return best;
}

template <typename Scalar>
struct CovariateRecovery {
  VectorX<Scalar> x_standardized;
  VectorX<Scalar> x_original;
  Scalar objective = Scalar(0);
  long evaluations = 0;
  bool budget_exhausted = false;
  std::vector<std::string> warnings;
  std::vector<AnnealTraceRow<Scalar>> trace;
};

/// [min - margin, max + margin] of each standardized covariate column.
template <typename Scalar>
void default_bounds(const CovariateMatrix<Scalar>& X, AnnealConfig<Scalar>& config, Scalar margin = Scalar(0.5)) {
  config.lower = X.values.colwise().minCoeff().transpose().array() - margin;
  config.upper = X.values.colwise().maxCoeff().transpose().array() + margin;
}

/// Searches the box for the standardized control setting whose predicted
/// embedding x B best matches the target's distance profile, and maps it
/// back to control units.
template <typename Scalar>
CovariateRecovery<Scalar> recover_covariates(const NominalTarget<Scalar>& target, const RegressionModel<Scalar>& model,
                                             const Embedding<Scalar>& embedding, const CovariateMatrix<Scalar>& X,
                                             const AnnealConfig<Scalar>& config) {
  if (model.outputs() != embedding.Y_tilde.cols())
    throw Error(ErrorCode::DimensionMismatch, "model outputs differ from embedding dimension");
  if (model.predictors() != X.covariates()) throw Error(ErrorCode::DimensionMismatch, "model predictors differ from P");
  AnnealConfig<Scalar> cfg = config;
  if (cfg.lower.size() == 0) default_bounds(X, cfg);
  if (cfg.dimension() != X.covariates()) throw Error(ErrorCode::DimensionMismatch, "bounds length differs from P");

  const Objective<Scalar> f = [&](const VectorX<Scalar>& x) {
    return embedding_objective(VectorX<Scalar>(model.B_hat.transpose() * x), target, embedding);
  };
  const AnnealResult<Scalar> run = anneal_minimize(f, cfg);

  CovariateRecovery<Scalar> out;
  out.x_standardized = run.x_best;
  out.x_original = X.unstandardize(run.x_best);
  out.objective = run.f_best;
  out.evaluations = run.evaluations;
  out.budget_exhausted = run.budget_exhausted;
  out.trace = run.trace;
  if (run.budget_exhausted)
    out.warnings.push_back("BudgetExhausted: returned the best point after " + std::to_string(run.evaluations) +
                           " evaluations");
  return out;
}

}  // namespace mcu
