#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crewfolio/market_data.hpp"
#include "crewfolio/metrics.hpp"
#include "crewfolio/weights.hpp"

namespace crewfolio {

enum class FallbackPolicy { EqualWeights, CarryForward };

struct OptimizerConfig {
  int restarts = 16;            // equal-weight start plus seeded random starts
  int max_iterations = 500;
  double convergence_tol = 1e-8;  // on objective change
  double step_shrink = 0.5;       // backtracking factor, in (0,1)
  std::uint64_t seed = 0;
  FallbackPolicy fallback_policy = FallbackPolicy::EqualWeights;

  void validate() const;
};

/// Annualized Sharpe of the portfolio series p_t = sum_i w_i * r_{t,i},
/// using the same conventions as the metrics module. Empty when the
/// portfolio variance is zero (the search treats that as -inf).
std::optional<double> sharpe_objective(const WeightVector& w,
                                       const ReturnPanel& returns,
                                       const MetricsConfig& cfg);

/// Same objective on a raw coefficient vector, no simplex validation; this
/// is the function the gradient check differentiates.
std::optional<double> sharpe_objective_raw(std::span<const double> w,
                                           const ReturnPanel& returns,
                                           const MetricsConfig& cfg);

/// Analytic gradient of sharpe_objective_raw. Empty when the objective is
/// undefined at w.
std::optional<std::vector<double>> sharpe_gradient(std::span<const double> w,
                                                   const ReturnPanel& returns,
                                                   const MetricsConfig& cfg);

/// Euclidean projection onto the unit simplex (sorting-based).
std::vector<double> project_to_simplex(std::span<const double> v);

struct OptimizationResult {
  WeightVector weights;
  std::optional<double> objective;  // empty when the fallback was used
  bool fallback_used = false;
  std::vector<std::string> warnings;
};

/// Projected-gradient ascent with backtracking line search from
/// cfg.restarts start points (equal weights first, then seeded random
/// simplex samples). Ties between local optima break by objective, then by
/// lexicographic weight order, so the result is independent of evaluation
/// order. When every start has an undefined objective the fallback policy
/// decides the result; `carry` supplies the previous weights for
/// FallbackPolicy::CarryForward.
OptimizationResult optimize_static(const ReturnPanel& returns,
                                   const MetricsConfig& mcfg,
                                   const OptimizerConfig& ocfg,
                                   const WeightVector* carry = nullptr);

struct GridOracleResult {
  WeightVector weights;
  double objective = 0;
  std::size_t evaluated = 0;  // lattice points visited
};

/// Exhaustive evaluation on the simplex lattice of the given resolution;
/// ties break toward the lexicographically smallest weight vector. Guarded
/// to <= 4 assets.
GridOracleResult grid_oracle(const ReturnPanel& returns, double resolution,
                             const MetricsConfig& cfg);

/// Re-optimize every `holding` rows over the trailing `window` rows. The
/// first `window` rows are an equal-weight warm-up entry; each subsequent entry
/// covers [t, t+holding) using weights fitted on [t-window, t). The final
/// entry may be shorter. Rebalancing is row-based, so the schedule never
/// looks ahead of its own window.
WeightSchedule optimize_rolling(const ReturnPanel& returns,
                                const MetricsConfig& mcfg,
                                const OptimizerConfig& ocfg, int window = 30,
                                int holding = 30);

}  // namespace crewfolio
