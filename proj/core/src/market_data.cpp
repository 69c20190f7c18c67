#include "crewfolio/market_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "crewfolio/errors.hpp"
#include "text.hpp"

namespace crewfolio {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

bool is_missing(double v) { return !std::isfinite(v); }

double sample_std(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  bool constant = true;
  for (double x : xs)
    if (x != xs.front()) {
      constant = false;
      break;
    }
  if (constant) return 0.0;  // exact, independent of mean rounding
  double acc = 0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

PanelData slice_panel(const PanelData& p, std::size_t begin, std::size_t end) {
  if (begin > end || end > p.rows())
    throw std::invalid_argument("slice_rows: range out of bounds");
  PanelData out;
  out.assets = p.assets;
  out.dates.assign(p.dates.begin() + begin, p.dates.begin() + end);
  out.values.assign(p.values.begin() + begin * p.cols(),
                    p.values.begin() + end * p.cols());
  return out;
}

}  // namespace

std::string CleaningLog::to_text() const {
  std::string out;
  for (const auto& a : actions) {
    out += a.date;
    out += ',';
    out += a.asset;
    out += ',';
    out += a.kind == CleaningAction::Kind::Fill ? "fill" : "drop";
    out += '\n';
  }
  return out;
}

PricePanel parse_prices_csv(const std::string& content, const CsvFormat& fmt) {
  auto lines = text::split_lines(content);
  // drop trailing blank lines
  while (!lines.empty() && text::trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw std::invalid_argument("empty price file");

  auto header = text::split_fields(lines[0], fmt.delimiter);
  if (header.empty() || text::trim(header[0]).empty())
    throw std::invalid_argument("no date column in header");
  if (header.size() < 2)
    throw std::invalid_argument("no asset columns in header");

  PricePanel panel;
  for (std::size_t c = 1; c < header.size(); ++c) {
    std::string name(text::trim(header[c]));
    if (name.empty())
      throw std::invalid_argument("empty asset name in header column " +
                                  std::to_string(c + 1));
    panel.assets.push_back(std::move(name));
  }

  struct Row {
    std::string date;
    std::vector<double> values;
  };
  std::vector<Row> rows;
  rows.reserve(lines.size() - 1);

  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (text::trim(lines[i]).empty()) continue;
    auto fields = text::split_fields(lines[i], fmt.delimiter);
    std::string date(text::trim(fields[0]));
    if (!text::is_iso_date(date))
      throw std::invalid_argument("row " + std::to_string(i + 1) +
                                  ": date column is not YYYY-MM-DD: '" + date +
                                  "'");
    Row row;
    row.date = std::move(date);
    row.values.resize(panel.assets.size(), kMissing);
    for (std::size_t c = 0; c < panel.assets.size(); ++c) {
      if (c + 1 < fields.size()) {
        if (auto v = text::parse_double(fields[c + 1])) row.values[c] = *v;
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("price file has no data rows");

  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return a.date < b.date; });
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].date == rows[i - 1].date)
      throw std::invalid_argument("duplicate date: " + rows[i].date);

  panel.dates.reserve(rows.size());
  panel.values.reserve(rows.size() * panel.assets.size());
  for (auto& row : rows) {
    panel.dates.push_back(std::move(row.date));
    panel.values.insert(panel.values.end(), row.values.begin(),
                        row.values.end());
  }
  return panel;
}

PricePanel load_prices(const std::string& path, const CsvFormat& fmt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open price file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_prices_csv(buf.str(), fmt);
}

std::string to_csv(const PanelData& panel, const CsvFormat& fmt) {
  std::string out = "date";
  for (const auto& a : panel.assets) {
    out += fmt.delimiter;
    out += a;
  }
  out += '\n';
  for (std::size_t r = 0; r < panel.rows(); ++r) {
    out += panel.dates[r];
    for (std::size_t c = 0; c < panel.cols(); ++c) {
      out += fmt.delimiter;
      out += text::format_full(panel.at(r, c));
    }
    out += '\n';
  }
  return out;
}

void write_csv(const PanelData& panel, const std::string& path,
               const CsvFormat& fmt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path);
  out << to_csv(panel, fmt);
}

CleanResult clean_prices(const PricePanel& panel) {
  const std::size_t n_rows = panel.rows();
  const std::size_t n_cols = panel.cols();

  CleanResult result;
  result.log = {};
  PricePanel work = panel;

  // Non-positive prices are anomalies; treat them as missing before filling.
  for (auto& v : work.values)
    if (!is_missing(v) && v <= 0) v = kMissing;

  std::size_t first_complete = 0;
  struct Fill {
    std::size_t row;
    std::size_t col;
  };
  std::vector<Fill> fills;
  for (std::size_t c = 0; c < n_cols; ++c) {
    std::size_t first_valid = n_rows;
    for (std::size_t r = 0; r < n_rows; ++r) {
      if (!is_missing(work.at(r, c))) {
        first_valid = r;
        break;
      }
    }
    if (first_valid == n_rows)
      throw std::invalid_argument("asset '" + panel.assets[c] +
                                  "' has no valid prices");
    first_complete = std::max(first_complete, first_valid);
    double last = work.at(first_valid, c);
    for (std::size_t r = first_valid + 1; r < n_rows; ++r) {
      double& v = work.at(r, c);
      if (is_missing(v)) {
        v = last;
        fills.push_back({r, c});
      } else {
        last = v;
      }
    }
  }

  // Fills landing in rows that get dropped anyway are not reported.
  for (const auto& fill : fills) {
    if (fill.row < first_complete) continue;
    result.log.actions.push_back({panel.dates[fill.row],
                                  panel.assets[fill.col],
                                  CleaningAction::Kind::Fill});
    ++result.log.fills_per_asset[panel.assets[fill.col]];
  }

  // Leading rows where any asset still lacks a value get dropped, one log
  // line per missing cell.
  for (std::size_t r = 0; r < first_complete; ++r) {
    for (std::size_t c = 0; c < n_cols; ++c) {
      if (is_missing(work.at(r, c))) {
        result.log.actions.push_back(
            {panel.dates[r], panel.assets[c], CleaningAction::Kind::Drop});
        ++result.log.drops_per_asset[panel.assets[c]];
      }
    }
  }

  std::sort(result.log.actions.begin(), result.log.actions.end(),
            [](const CleaningAction& a, const CleaningAction& b) {
              if (a.date != b.date) return a.date < b.date;
              return a.asset < b.asset;
            });

  PanelData kept = slice_panel(work, first_complete, n_rows);
  result.panel.dates = std::move(kept.dates);
  result.panel.assets = std::move(kept.assets);
  result.panel.values = std::move(kept.values);
  return result;
}

ReturnPanel log_returns(const PricePanel& panel) {
  if (panel.rows() < 2)
    throw std::invalid_argument("log returns need at least two price rows");
  for (double v : panel.values)
    if (is_missing(v) || v <= 0)
      throw std::invalid_argument("log returns require a clean panel");

  ReturnPanel out;
  out.assets = panel.assets;
  out.dates.assign(panel.dates.begin() + 1, panel.dates.end());
  out.values.reserve((panel.rows() - 1) * panel.cols());
  for (std::size_t r = 1; r < panel.rows(); ++r)
    for (std::size_t c = 0; c < panel.cols(); ++c)
      out.values.push_back(std::log(panel.at(r, c) / panel.at(r - 1, c)));
  return out;
}

PanelSummary summarize(const PricePanel& panel) {
  if (panel.empty()) throw std::invalid_argument("summarize: empty panel");
  PanelSummary summary;
  std::vector<double> column(panel.rows());
  for (std::size_t c = 0; c < panel.cols(); ++c) {
    for (std::size_t r = 0; r < panel.rows(); ++r) column[r] = panel.at(r, c);
    AssetStats s;
    s.asset = panel.assets[c];
    s.mean = std::accumulate(column.begin(), column.end(), 0.0) /
             static_cast<double>(column.size());
    std::vector<double> sorted = column;
    std::sort(sorted.begin(), sorted.end());
    std::size_t mid = sorted.size() / 2;
    s.median = sorted.size() % 2 ? sorted[mid]
                                 : (sorted[mid - 1] + sorted[mid]) / 2.0;
    s.stddev = sample_std(column, s.mean);
    s.min = sorted.front();
    s.max = sorted.back();
    summary.per_asset.push_back(std::move(s));
  }
  return summary;
}

std::pair<std::size_t, std::size_t> split_sizes(std::size_t rows, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0))
    throw std::invalid_argument("split ratio must be in (0,1)");
  if (rows == 0) throw std::invalid_argument("split: empty panel");
  auto train = static_cast<std::size_t>(
      std::floor(ratio * static_cast<double>(rows)));
  std::size_t test = rows - train;
  if (train == 0 || test == 0)
    throw std::invalid_argument("split produces an empty side");
  return {train, test};
}

SplitPair split(const ReturnPanel& returns, double ratio) {
  auto [train, test] = split_sizes(returns.rows(), ratio);
  SplitPair out;
  out.train = slice_rows(returns, 0, train);
  out.test = slice_rows(returns, train, train + test);
  out.ratio = ratio;
  return out;
}

PriceSplitPair split(const PricePanel& prices, double ratio) {
  auto [train, test] = split_sizes(prices.rows(), ratio);
  PriceSplitPair out;
  out.train = slice_rows(prices, 0, train);
  out.test = slice_rows(prices, train, train + test);
  out.ratio = ratio;
  return out;
}

PricePanel slice_rows(const PricePanel& panel, std::size_t begin,
                      std::size_t end) {
  PanelData d = slice_panel(panel, begin, end);
  PricePanel out;
  static_cast<PanelData&>(out) = std::move(d);
  return out;
}

ReturnPanel slice_rows(const ReturnPanel& panel, std::size_t begin,
                       std::size_t end) {
  PanelData d = slice_panel(panel, begin, end);
  ReturnPanel out;
  static_cast<PanelData&>(out) = std::move(d);
  return out;
}

PricePanel concat_rows(const PricePanel& a, const PricePanel& b) {
  if (a.assets != b.assets)
    throw std::invalid_argument("concat_rows: asset lists differ");
  if (!a.dates.empty() && !b.dates.empty() && !(a.dates.back() < b.dates.front()))
    throw std::invalid_argument("concat_rows: segments out of order");
  PricePanel out = a;
  out.dates.insert(out.dates.end(), b.dates.begin(), b.dates.end());
  out.values.insert(out.values.end(), b.values.begin(), b.values.end());
  return out;
}

}  // namespace crewfolio
