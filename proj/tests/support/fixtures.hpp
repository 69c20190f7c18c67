// Deterministic fixture builders shared by the test suites.
#pragma once

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "crewfolio/market_data.hpp"
#include "crewfolio/metrics.hpp"

namespace fixtures {

// ISO date `offset` days after 2021-01-01.
inline std::string iso_date(int offset) {
  using namespace std::chrono;
  sys_days base = sys_days(year{2021} / January / 1) + days{offset};
  year_month_day ymd(base);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", int(ymd.year()),
                unsigned(ymd.month()), unsigned(ymd.day()));
  return buf;
}

inline std::vector<std::string> date_range(std::size_t count, int start = 0) {
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(iso_date(start + static_cast<int>(i)));
  return out;
}

inline crewfolio::PricePanel make_prices(
    const std::vector<std::string>& assets,
    const std::vector<std::vector<double>>& rows, int start_day = 0) {
  crewfolio::PricePanel panel;
  panel.assets = assets;
  panel.dates = date_range(rows.size(), start_day);
  for (const auto& row : rows)
    panel.values.insert(panel.values.end(), row.begin(), row.end());
  return panel;
}

inline crewfolio::ReturnPanel make_returns(
    const std::vector<std::string>& assets,
    const std::vector<std::vector<double>>& rows, int start_day = 0) {
  crewfolio::ReturnPanel panel;
  panel.assets = assets;
  panel.dates = date_range(rows.size(), start_day);
  for (const auto& row : rows)
    panel.values.insert(panel.values.end(), row.begin(), row.end());
  return panel;
}

inline crewfolio::PortfolioReturns make_series(const std::vector<double>& values,
                                               int start_day = 0) {
  crewfolio::PortfolioReturns out;
  out.values = values;
  out.dates = date_range(values.size(), start_day);
  return out;
}

// Uniform in (0,1) from raw engine bits; stable across standard libraries.
inline double uniform_open(std::mt19937_64& engine) {
  return (static_cast<double>(engine() >> 11) + 0.5) * 0x1.0p-53;
}

// Box-Muller normal deviate.
inline double normal(std::mt19937_64& engine) {
  double u1 = uniform_open(engine);
  double u2 = uniform_open(engine);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

inline crewfolio::ReturnPanel random_returns(std::uint64_t seed,
                                             std::size_t rows,
                                             std::size_t assets,
                                             double base_mean = 0.001,
                                             double base_vol = 0.02) {
  std::mt19937_64 engine(seed);
  std::vector<std::string> tickers;
  for (std::size_t a = 0; a < assets; ++a)
    tickers.push_back("A" + std::to_string(a));
  std::vector<double> means(assets), vols(assets);
  for (std::size_t a = 0; a < assets; ++a) {
    means[a] = base_mean * (uniform_open(engine) * 4.0 - 1.0);
    vols[a] = base_vol * (0.5 + uniform_open(engine));
  }
  crewfolio::ReturnPanel panel;
  panel.assets = tickers;
  panel.dates = date_range(rows);
  panel.values.reserve(rows * assets);
  for (std::size_t t = 0; t < rows; ++t)
    for (std::size_t a = 0; a < assets; ++a)
      panel.values.push_back(means[a] + vols[a] * normal(engine));
  return panel;
}

inline crewfolio::PricePanel random_prices(std::uint64_t seed, std::size_t rows,
                                           std::size_t assets) {
  crewfolio::ReturnPanel returns = random_returns(seed, rows - 1, assets);
  crewfolio::PricePanel panel;
  panel.assets = returns.assets;
  panel.dates = date_range(rows);
  panel.values.reserve(rows * assets);
  std::vector<double> level(assets, 100.0);
  for (double v : level) panel.values.push_back(v);
  for (std::size_t t = 0; t < returns.rows(); ++t)
    for (std::size_t a = 0; a < assets; ++a) {
      level[a] *= std::exp(returns.at(t, a));
      panel.values.push_back(level[a]);
    }
  return panel;
}

// Unique writable directory under the system temp dir.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("crewfolio-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }
  std::string sub(const std::string& name) const {
    return (path_ / name).string();
  }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  return content;
}

}  // namespace fixtures
