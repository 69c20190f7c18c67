#pragma once

#include <string>
#include <vector>

#include "crewfolio/market_data.hpp"
#include "crewfolio/metrics.hpp"
#include "crewfolio/weights.hpp"

namespace crewfolio {

struct BacktestResult {
  PortfolioReturns portfolio_returns;
  std::vector<double> equity_curve;  // wealth after each row, initial wealth 1.0
  WeightSchedule applied_weights;    // a static run is a one-entry schedule
  std::vector<double> turnover;      // sum |dw| at each entry boundary

  double final_equity() const {
    return equity_curve.empty() ? 1.0 : equity_curve.back();
  }
};

/// Daily portfolio return p_t = sum_i w_i * r_{t,i}; weights are re-struck
/// to their targets every day. equity_t = exp(sum of p up to t).
BacktestResult run_static(const ReturnPanel& returns, const WeightVector& w);

/// Each row uses the weights of the schedule entry covering its date.
/// Throws std::invalid_argument on a coverage gap or overlap, naming the
/// first offending date.
BacktestResult run_schedule(const ReturnPanel& returns,
                            const WeightSchedule& schedule);

/// Delimited rows (date, portfolio_return, equity) at full precision;
/// turnover recorded as comment lines. The applied schedule serializes
/// separately via to_delimited(WeightSchedule).
std::string to_delimited(const BacktestResult& result, char delimiter = ',');

}  // namespace crewfolio
