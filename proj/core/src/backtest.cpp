#include "crewfolio/backtest.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>

#include "text.hpp"

namespace crewfolio {

namespace {

void append_rows(BacktestResult& result, const ReturnPanel& returns,
                 std::size_t begin, std::size_t end, const WeightVector& w,
                 double& cum) {
  for (std::size_t t = begin; t < end; ++t) {
    double p = 0;
    for (std::size_t i = 0; i < returns.cols(); ++i)
      p += w.weights[i] * returns.at(t, i);
    cum += p;
    result.portfolio_returns.dates.push_back(returns.dates[t]);
    result.portfolio_returns.values.push_back(p);
    result.equity_curve.push_back(std::exp(cum));
  }
}

}  // namespace

BacktestResult run_static(const ReturnPanel& returns, const WeightVector& w) {
  if (returns.empty()) throw std::invalid_argument("backtest: empty panel");
  w.validate();
  if (w.assets != returns.assets)
    throw std::invalid_argument("backtest: weight assets do not match panel");

  BacktestResult result;
  double cum = 0;
  append_rows(result, returns, 0, returns.rows(), w, cum);
  result.applied_weights.entries.push_back({returns.dates.front(),
                                            returns.dates.back(), w,
                                            ScheduleEntry::Source::Optimized});
  return result;
}

BacktestResult run_schedule(const ReturnPanel& returns,
                            const WeightSchedule& schedule) {
  if (returns.empty()) throw std::invalid_argument("backtest: empty panel");
  if (schedule.entries.empty())
    throw std::invalid_argument("backtest: empty schedule");
  schedule.validate();
  for (const auto& e : schedule.entries)
    if (e.weights.assets != returns.assets)
      throw std::invalid_argument("backtest: schedule assets do not match panel");

  BacktestResult result;
  result.applied_weights = schedule;
  double cum = 0;
  std::size_t row = 0;
  for (std::size_t k = 0; k < schedule.entries.size(); ++k) {
    const auto& entry = schedule.entries[k];
    if (row < returns.rows() && returns.dates[row] < entry.start_date)
      throw std::invalid_argument("schedule coverage gap at date " +
                                  returns.dates[row]);
    std::size_t begin = row;
    while (row < returns.rows() && returns.dates[row] <= entry.end_date) ++row;
    append_rows(result, returns, begin, row, entry.weights, cum);
    if (k > 0) {
      const auto& prev = schedule.entries[k - 1].weights;
      double change = 0;
      for (std::size_t i = 0; i < prev.weights.size(); ++i)
        change += std::abs(entry.weights.weights[i] - prev.weights[i]);
      result.turnover.push_back(change);
    }
  }
  if (row < returns.rows())
    throw std::invalid_argument("schedule coverage gap at date " +
                                returns.dates[row]);
  return result;
}

std::string to_delimited(const BacktestResult& result, char delimiter) {
  std::string out = "date";
  out += delimiter;
  out += "portfolio_return";
  out += delimiter;
  out += "equity\n";
  for (std::size_t t = 0; t < result.portfolio_returns.size(); ++t) {
    out += result.portfolio_returns.dates[t];
    out += delimiter;
    out += text::format_full(result.portfolio_returns.values[t]);
    out += delimiter;
    out += text::format_full(result.equity_curve[t]);
    out += '\n';
  }
  for (std::size_t k = 0; k < result.turnover.size(); ++k) {
    out += "# turnover ";
    out += result.applied_weights.entries[k + 1].start_date;
    out += ' ';
    out += text::format_full(result.turnover[k]);
    out += '\n';
  }
  return out;
}

}  // namespace crewfolio
