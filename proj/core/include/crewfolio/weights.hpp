#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace crewfolio {

inline constexpr double kWeightSumTolerance = 1e-9;

/// Allocation over N assets: every weight >= 0 (no short-selling) and the
/// weights sum to 1 within kWeightSumTolerance (full investment).
struct WeightVector {
  std::vector<std::string> assets;
  std::vector<double> weights;

  double sum() const;
  /// Throws std::invalid_argument when the simplex invariants do not hold.
  void validate() const;
};

/// 1/N for every asset. For N where N copies of 1.0/N do not sum to exactly
/// 1.0 the residual stays within kWeightSumTolerance; each weight is exactly
/// the double 1.0/N.
WeightVector equal_weights(std::vector<std::string> assets);

struct ScheduleEntry {
  enum class Source { WarmUp, Optimized, Fallback };

  std::string start_date;  // inclusive
  std::string end_date;    // inclusive
  WeightVector weights;
  Source source = Source::Optimized;
};

/// Ordered, non-overlapping, contiguous list of dated weight vectors.
struct WeightSchedule {
  std::vector<ScheduleEntry> entries;
  int window_length = 0;
  int holding_period = 0;

  /// Entry ordering + per-entry simplex invariants.
  void validate() const;
};

/// Delimited text, one row per (start_date, end_date, ticker, weight), full
/// precision; round-trip safe for dates, tickers and weights.
std::string to_delimited(const WeightSchedule& schedule, char delimiter = ',');
WeightSchedule parse_schedule(const std::string& text, char delimiter = ',');

/// Bare weight vectors accept either "ticker,weight" rows or single-entry
/// schedule rows (dates ignored).
std::string to_delimited(const WeightVector& weights, char delimiter = ',');
WeightVector parse_weights(const std::string& text, char delimiter = ',');

}  // namespace crewfolio
