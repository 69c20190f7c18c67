#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "crewfolio/weights.hpp"

namespace crewfolio {

struct MetricsConfig {
  double risk_free_rate = 0.0;     // annualized fraction
  double periods_per_year = 252.0;
  std::optional<double> mar;       // annualized; defaults to risk_free_rate
  double regime_var_ratio_threshold = 2.0;
  std::pair<double, double> liquidity_hhi_thresholds{0.15, 0.30};

  double mar_or_default() const {
    return mar.has_value() ? *mar : risk_free_rate;
  }
  /// Throws std::invalid_argument on: periods_per_year <= 0, thresholds not
  /// strictly increasing, regime threshold <= 1.
  void validate() const;
};

/// Daily portfolio log returns, date-indexed.
struct PortfolioReturns {
  std::vector<std::string> dates;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  bool empty() const { return values.empty(); }
};

enum class LiquidityRisk { Low, ModeratelyLow, Moderate, High, NotAssessed };

std::string to_string(LiquidityRisk risk);

struct RegimeAssessment {
  bool flagged = false;
  double statistic = 0;
};

/// Undefined metrics are absent optionals, never NaN; serialization renders
/// them as "--".
struct MetricsReport {
  std::optional<double> expected_return;
  std::optional<double> volatility;
  std::optional<double> sharpe;
  std::optional<double> sortino;
  std::optional<double> max_drawdown;
  LiquidityRisk liquidity_risk = LiquidityRisk::NotAssessed;
  std::optional<RegimeAssessment> regime_change;
};

double annualized_return(const PortfolioReturns& r, const MetricsConfig& cfg);
double annualized_volatility(const PortfolioReturns& r, const MetricsConfig& cfg);

/// (annualized return - risk-free rate) / annualized volatility.
/// Throws UndefinedMetricError on zero volatility.
double sharpe_ratio(const PortfolioReturns& r, const MetricsConfig& cfg);

/// Downside deviation uses the full-sample denominator: the mean over all
/// observations of min(value - daily MAR, 0)^2. Throws UndefinedMetricError
/// when no observation falls below the daily MAR.
double sortino_ratio(const PortfolioReturns& r, const MetricsConfig& cfg);

/// Largest peak-to-trough decline of the compounded equity curve started at
/// 1.0; always in [-1, 0].
double max_drawdown(const PortfolioReturns& r);

/// Variance-ratio heuristic: statistic = max(var) / min(var) of the two
/// sides, flagged when it exceeds cfg.regime_var_ratio_threshold. Symmetric
/// in its arguments. Throws UndefinedMetricError on zero-variance input.
RegimeAssessment detect_regime_change(const PortfolioReturns& train,
                                      const PortfolioReturns& test,
                                      const MetricsConfig& cfg);

/// Weight-concentration proxy: HHI = sum of squared weights, banded by
/// cfg.liquidity_hhi_thresholds. The middle band splits at its midpoint into
/// ModeratelyLow / Moderate.
LiquidityRisk classify_liquidity(const WeightVector& weights,
                                 const MetricsConfig& cfg);
double herfindahl_index(const WeightVector& weights);

struct BenchmarkComparison {
  MetricsReport portfolio;
  MetricsReport benchmark;
  double excess_return = 0;   // annualized, portfolio minus benchmark
  double tracking_error = 0;  // annualized std of daily differences
  std::size_t common_days = 0;
};

/// Inner join on dates, metrics for both series on the common dates.
/// Throws std::invalid_argument on an empty date intersection.
BenchmarkComparison compare_with_benchmark(const PortfolioReturns& portfolio,
                                           const PortfolioReturns& benchmark,
                                           const MetricsConfig& cfg);

/// Aggregate every metric; fields whose series is too short carry their
/// undefined marker instead of failing the whole report. Regime change is
/// assessed only when train_context is given, liquidity only when
/// final_weights is given.
MetricsReport full_report(const PortfolioReturns& r,
                          const WeightVector* final_weights,
                          const PortfolioReturns* train_context,
                          const MetricsConfig& cfg);

/// Key-value text block, one metric per line, values rounded to 4 decimals
/// for display ("--" for undefined). Full precision lives only in memory.
std::string to_kv_text(const MetricsReport& report);

/// Keys expected in every serialized metrics block.
const std::vector<std::string>& metrics_kv_keys();

/// Parse "key value" lines (comments and blanks skipped).
std::map<std::string, std::string> parse_kv_block(const std::string& text);

/// Rebuild a report from displayed values; "--" maps back to absent.
MetricsReport metrics_from_kv(const std::map<std::string, std::string>& kv);

/// Fixed 4-decimal display form used in reports and tables; negative zero
/// normalizes to "0.0000".
std::string format_display(double value);

/// Keep rows with first <= date <= last.
PortfolioReturns slice_between(const PortfolioReturns& r,
                               const std::string& first,
                               const std::string& last);

}  // namespace crewfolio
