#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace crewfolio {

/// Date-indexed matrix of per-asset values, row-major. Dates are ISO-8601
/// (YYYY-MM-DD) strings, which order lexicographically == chronologically.
struct PanelData {
  std::vector<std::string> dates;
  std::vector<std::string> assets;
  std::vector<double> values;  // rows() x cols(), row-major

  std::size_t rows() const { return dates.size(); }
  std::size_t cols() const { return assets.size(); }
  bool empty() const { return dates.empty() || assets.empty(); }

  double at(std::size_t row, std::size_t col) const {
    return values[row * assets.size() + col];
  }
  double& at(std::size_t row, std::size_t col) {
    return values[row * assets.size() + col];
  }
};

/// Daily closing prices in USD. Clean panels hold only finite, positive
/// values; panels fresh from load_prices may carry NaN missing markers.
struct PricePanel : PanelData {};

/// Daily log returns; one row fewer than the source price panel.
struct ReturnPanel : PanelData {};

struct CsvFormat {
  char delimiter = ',';
};

struct AssetStats {
  std::string asset;
  double mean = 0, median = 0, stddev = 0, min = 0, max = 0;
};

struct PanelSummary {
  std::vector<AssetStats> per_asset;
};

struct CleaningAction {
  enum class Kind { Fill, Drop };
  std::string date;
  std::string asset;
  Kind kind = Kind::Fill;
};

struct CleaningLog {
  std::vector<CleaningAction> actions;
  std::map<std::string, std::size_t> fills_per_asset;
  std::map<std::string, std::size_t> drops_per_asset;

  /// One line per action: "date,asset,fill" or "date,asset,drop".
  std::string to_text() const;
};

struct CleanResult {
  PricePanel panel;
  CleaningLog log;
};

struct SplitPair {
  ReturnPanel train;
  ReturnPanel test;
  double ratio = 0;
};

struct PriceSplitPair {
  PricePanel train;
  PricePanel test;
  double ratio = 0;
};

/// Parse a delimited price panel: header row = date column + one column per
/// ticker; rows sorted ascending by date on return. Unparseable price cells
/// become NaN missing markers for clean_prices to resolve.
/// Throws std::invalid_argument on: empty input, no date column, zero asset
/// columns, duplicate dates (naming the date), malformed date cells.
PricePanel parse_prices_csv(const std::string& text, const CsvFormat& fmt = {});

/// Load a panel from disk. Throws IoError when the file cannot be read.
PricePanel load_prices(const std::string& path, const CsvFormat& fmt = {});

/// Canonical text form. Values are written with shortest round-trip
/// precision, so write + parse reproduces a panel bit-for-bit.
std::string to_csv(const PanelData& panel, const CsvFormat& fmt = {});
void write_csv(const PanelData& panel, const std::string& path,
               const CsvFormat& fmt = {});

/// Replace non-positive and missing prices by forward-fill from the most
/// recent valid value; drop leading rows that still have gaps. Throws
/// std::invalid_argument when an asset column has no valid price at all.
CleanResult clean_prices(const PricePanel& panel);

/// entry(t, a) = ln(price(t, a) / price(t-1, a)). Requires a clean panel
/// with at least two rows.
ReturnPanel log_returns(const PricePanel& panel);

/// Per-asset mean / median / sample standard deviation (n-1) / min / max.
PanelSummary summarize(const PricePanel& panel);

/// Chronological split rule shared by both panel kinds:
/// train = floor(ratio * rows), test = remainder, no shuffling.
/// Throws std::invalid_argument on ratio outside (0,1) or an empty side.
std::pair<std::size_t, std::size_t> split_sizes(std::size_t rows, double ratio);

SplitPair split(const ReturnPanel& returns, double ratio);
PriceSplitPair split(const PricePanel& prices, double ratio);

/// Row range [begin, end) as a new panel.
PricePanel slice_rows(const PricePanel& panel, std::size_t begin, std::size_t end);
ReturnPanel slice_rows(const ReturnPanel& panel, std::size_t begin, std::size_t end);

/// Append b's rows to a's. Requires matching assets and a.dates back() <
/// b.dates front().
PricePanel concat_rows(const PricePanel& a, const PricePanel& b);

}  // namespace crewfolio
