#include "crewfolio/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "crewfolio/errors.hpp"
#include "text.hpp"

namespace crewfolio {

namespace {

double mean_of(const std::vector<double>& xs) {
  double acc = 0;
  for (double x : xs) acc += x;
  return acc / static_cast<double>(xs.size());
}

bool all_equal(const std::vector<double>& xs) {
  for (double x : xs)
    if (x != xs.front()) return false;
  return true;
}

double sample_variance(const std::vector<double>& xs) {
  // A constant series has zero variance exactly, even when its rounded mean
  // does not reproduce the common value.
  if (all_equal(xs)) return 0.0;
  double m = mean_of(xs);
  double acc = 0;
  for (double x : xs) acc += (x - m) * (x - m);
  return acc / static_cast<double>(xs.size() - 1);
}

}  // namespace

void MetricsConfig::validate() const {
  if (!(periods_per_year > 0))
    throw std::invalid_argument("periods_per_year must be positive");
  if (!(liquidity_hhi_thresholds.first < liquidity_hhi_thresholds.second))
    throw std::invalid_argument("liquidity thresholds must be strictly increasing");
  if (!(regime_var_ratio_threshold > 1))
    throw std::invalid_argument("regime variance-ratio threshold must exceed 1");
}

std::string to_string(LiquidityRisk risk) {
  switch (risk) {
    case LiquidityRisk::Low: return "Low";
    case LiquidityRisk::ModeratelyLow: return "ModeratelyLow";
    case LiquidityRisk::Moderate: return "Moderate";
    case LiquidityRisk::High: return "High";
    case LiquidityRisk::NotAssessed: return "--";
  }
  return "--";
}

double annualized_return(const PortfolioReturns& r, const MetricsConfig& cfg) {
  if (r.empty()) throw std::invalid_argument("annualized_return: empty series");
  return mean_of(r.values) * cfg.periods_per_year;
}

double annualized_volatility(const PortfolioReturns& r, const MetricsConfig& cfg) {
  if (r.size() < 2)
    throw std::invalid_argument("annualized_volatility: need at least 2 observations");
  return std::sqrt(sample_variance(r.values)) * std::sqrt(cfg.periods_per_year);
}

double sharpe_ratio(const PortfolioReturns& r, const MetricsConfig& cfg) {
  double vol = annualized_volatility(r, cfg);
  if (vol == 0)
    throw UndefinedMetricError("Sharpe ratio undefined: zero volatility");
  return (annualized_return(r, cfg) - cfg.risk_free_rate) / vol;
}

double sortino_ratio(const PortfolioReturns& r, const MetricsConfig& cfg) {
  if (r.empty()) throw std::invalid_argument("sortino_ratio: empty series");
  double daily_mar = cfg.mar_or_default() / cfg.periods_per_year;
  double acc = 0;
  std::size_t downside = 0;
  for (double v : r.values) {
    double d = std::min(v - daily_mar, 0.0);
    acc += d * d;
    if (v < daily_mar) ++downside;
  }
  if (downside == 0)
    throw UndefinedMetricError("Sortino ratio undefined: no downside observations");
  double downside_dev = std::sqrt(acc / static_cast<double>(r.size())) *
                        std::sqrt(cfg.periods_per_year);
  return (annualized_return(r, cfg) - cfg.mar_or_default()) / downside_dev;
}

double max_drawdown(const PortfolioReturns& r) {
  if (r.empty()) throw std::invalid_argument("max_drawdown: empty series");
  double cum = 0, peak = 1.0, worst = 0;
  for (double v : r.values) {
    cum += v;
    double equity = std::exp(cum);
    peak = std::max(peak, equity);
    worst = std::min(worst, equity / peak - 1.0);
  }
  return worst;
}

RegimeAssessment detect_regime_change(const PortfolioReturns& train,
                                      const PortfolioReturns& test,
                                      const MetricsConfig& cfg) {
  if (train.size() < 2 || test.size() < 2)
    throw std::invalid_argument("regime detection needs >= 2 observations per side");
  double var_train = sample_variance(train.values);
  double var_test = sample_variance(test.values);
  if (var_train <= 0 || var_test <= 0)
    throw UndefinedMetricError("regime detection undefined: zero-variance side");
  RegimeAssessment out;
  out.statistic = std::max(var_train, var_test) / std::min(var_train, var_test);
  out.flagged = out.statistic > cfg.regime_var_ratio_threshold;
  return out;
}

double herfindahl_index(const WeightVector& weights) {
  double acc = 0;
  for (double w : weights.weights) acc += w * w;
  return acc;
}

LiquidityRisk classify_liquidity(const WeightVector& weights,
                                 const MetricsConfig& cfg) {
  weights.validate();
  double hhi = herfindahl_index(weights);
  auto [low, high] = cfg.liquidity_hhi_thresholds;
  if (hhi <= low) return LiquidityRisk::Low;
  if (hhi > high) return LiquidityRisk::High;
  // Middle band splits at its midpoint.
  return hhi <= (low + high) / 2 ? LiquidityRisk::ModeratelyLow
                                 : LiquidityRisk::Moderate;
}

BenchmarkComparison compare_with_benchmark(const PortfolioReturns& portfolio,
                                           const PortfolioReturns& benchmark,
                                           const MetricsConfig& cfg) {
  if (portfolio.empty() || benchmark.empty())
    throw std::invalid_argument("benchmark comparison: empty series");

  PortfolioReturns p, b;
  std::vector<double> diffs;
  std::size_t i = 0, j = 0;
  while (i < portfolio.size() && j < benchmark.size()) {
    if (portfolio.dates[i] < benchmark.dates[j]) {
      ++i;
    } else if (benchmark.dates[j] < portfolio.dates[i]) {
      ++j;
    } else {
      p.dates.push_back(portfolio.dates[i]);
      p.values.push_back(portfolio.values[i]);
      b.dates.push_back(benchmark.dates[j]);
      b.values.push_back(benchmark.values[j]);
      diffs.push_back(portfolio.values[i] - benchmark.values[j]);
      ++i;
      ++j;
    }
  }
  if (p.empty())
    throw std::invalid_argument("benchmark comparison: no common dates");

  BenchmarkComparison out;
  out.common_days = p.size();
  out.portfolio = full_report(p, nullptr, nullptr, cfg);
  out.benchmark = full_report(b, nullptr, nullptr, cfg);
  out.excess_return = mean_of(diffs) * cfg.periods_per_year;
  if (diffs.size() >= 2) {
    out.tracking_error =
        std::sqrt(sample_variance(diffs)) * std::sqrt(cfg.periods_per_year);
  }
  return out;
}

MetricsReport full_report(const PortfolioReturns& r,
                          const WeightVector* final_weights,
                          const PortfolioReturns* train_context,
                          const MetricsConfig& cfg) {
  cfg.validate();
  MetricsReport report;
  if (!r.empty()) {
    report.expected_return = annualized_return(r, cfg);
    report.max_drawdown = max_drawdown(r);
  }
  if (r.size() >= 2) {
    report.volatility = annualized_volatility(r, cfg);
    if (*report.volatility > 0) report.sharpe = sharpe_ratio(r, cfg);
  }
  try {
    if (!r.empty()) report.sortino = sortino_ratio(r, cfg);
  } catch (const UndefinedMetricError&) {
  }
  if (final_weights != nullptr)
    report.liquidity_risk = classify_liquidity(*final_weights, cfg);
  if (train_context != nullptr && train_context->size() >= 2 && r.size() >= 2) {
    try {
      report.regime_change = detect_regime_change(*train_context, r, cfg);
    } catch (const UndefinedMetricError&) {
    }
  }
  return report;
}

std::string format_display(double value) {
  if (value == 0) value = 0;  // avoid "-0.0000"
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4f", value);
  return buf;
}

namespace {

std::string display_or_dash(const std::optional<double>& v) {
  return v.has_value() ? format_display(*v) : "--";
}

}  // namespace

const std::vector<std::string>& metrics_kv_keys() {
  static const std::vector<std::string> keys = {
      "expected_return", "volatility",     "sharpe",
      "sortino",         "max_drawdown",   "liquidity_risk",
      "regime_change",   "regime_statistic"};
  return keys;
}

std::string to_kv_text(const MetricsReport& report) {
  std::string out;
  out += "expected_return " + display_or_dash(report.expected_return) + "\n";
  out += "volatility " + display_or_dash(report.volatility) + "\n";
  out += "sharpe " + display_or_dash(report.sharpe) + "\n";
  out += "sortino " + display_or_dash(report.sortino) + "\n";
  out += "max_drawdown " + display_or_dash(report.max_drawdown) + "\n";
  out += "liquidity_risk " + to_string(report.liquidity_risk) + "\n";
  if (report.regime_change.has_value()) {
    out += std::string("regime_change ") +
           (report.regime_change->flagged ? "yes" : "no") + "\n";
    out += "regime_statistic " + format_display(report.regime_change->statistic) +
           "\n";
  } else {
    out += "regime_change --\n";
    out += "regime_statistic --\n";
  }
  return out;
}

std::map<std::string, std::string> parse_kv_block(const std::string& content) {
  std::map<std::string, std::string> out;
  for (auto line : text::split_lines(content)) {
    auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    std::size_t sp = t.find(' ');
    if (sp == std::string_view::npos) continue;
    out[std::string(t.substr(0, sp))] = std::string(text::trim(t.substr(sp + 1)));
  }
  return out;
}

MetricsReport metrics_from_kv(const std::map<std::string, std::string>& kv) {
  MetricsReport report;
  auto num = [&](const char* key) -> std::optional<double> {
    auto it = kv.find(key);
    if (it == kv.end() || it->second == "--") return std::nullopt;
    return text::parse_double(it->second);
  };
  report.expected_return = num("expected_return");
  report.volatility = num("volatility");
  report.sharpe = num("sharpe");
  report.sortino = num("sortino");
  report.max_drawdown = num("max_drawdown");
  if (auto it = kv.find("liquidity_risk"); it != kv.end()) {
    const std::string& s = it->second;
    report.liquidity_risk = s == "Low"             ? LiquidityRisk::Low
                            : s == "ModeratelyLow" ? LiquidityRisk::ModeratelyLow
                            : s == "Moderate"      ? LiquidityRisk::Moderate
                            : s == "High"          ? LiquidityRisk::High
                                                   : LiquidityRisk::NotAssessed;
  }
  if (auto it = kv.find("regime_change"); it != kv.end() && it->second != "--") {
    RegimeAssessment regime;
    regime.flagged = it->second == "yes";
    if (auto stat = num("regime_statistic")) regime.statistic = *stat;
    report.regime_change = regime;
  }
  return report;
}

PortfolioReturns slice_between(const PortfolioReturns& r,
                               const std::string& first,
                               const std::string& last) {
  PortfolioReturns out;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (r.dates[i] >= first && r.dates[i] <= last) {
      out.dates.push_back(r.dates[i]);
      out.values.push_back(r.values[i]);
    }
  }
  return out;
}

}  // namespace crewfolio
