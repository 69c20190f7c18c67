#include "crewfolio/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>

#include "crewfolio/errors.hpp"

namespace crewfolio {

namespace {

// Column means and the centered return matrix; everything the objective and
// its gradient need, computed once per panel.
struct ObjectiveWorkspace {
  std::size_t rows = 0, cols = 0;
  double annualize_return = 252;  // periods per year
  double annualize_vol = 0;       // sqrt(periods per year)
  double risk_free = 0;
  std::vector<double> col_means;
  std::vector<double> centered;  // row-major rows x cols

  explicit ObjectiveWorkspace(const ReturnPanel& returns,
                              const MetricsConfig& cfg)
      : rows(returns.rows()),
        cols(returns.cols()),
        annualize_return(cfg.periods_per_year),
        annualize_vol(std::sqrt(cfg.periods_per_year)),
        risk_free(cfg.risk_free_rate) {
    col_means.assign(cols, 0.0);
    for (std::size_t t = 0; t < rows; ++t)
      for (std::size_t i = 0; i < cols; ++i)
        col_means[i] += returns.at(t, i);
    for (auto& m : col_means) m /= static_cast<double>(rows);
    centered.resize(rows * cols);
    for (std::size_t t = 0; t < rows; ++t)
      for (std::size_t i = 0; i < cols; ++i)
        centered[t * cols + i] = returns.at(t, i) - col_means[i];
  }

  // Annualized Sharpe of w; also exposes the daily std and the centered
  // portfolio series for gradient reuse.
  std::optional<double> objective(std::span<const double> w,
                                  double* daily_std = nullptr,
                                  std::vector<double>* centered_series = nullptr) const {
    double mean_p = 0;
    for (std::size_t i = 0; i < cols; ++i) mean_p += w[i] * col_means[i];
    double ss = 0;
    bool constant = true;
    double first_q = 0;
    if (centered_series) centered_series->resize(rows);
    for (std::size_t t = 0; t < rows; ++t) {
      double q = 0;
      const double* row = centered.data() + t * cols;
      for (std::size_t i = 0; i < cols; ++i) q += w[i] * row[i];
      if (t == 0) first_q = q;
      else if (q != first_q) constant = false;
      ss += q * q;
      if (centered_series) (*centered_series)[t] = q;
    }
    // A constant portfolio series has zero variance exactly; rounding in the
    // column means must not leak spurious variance into the objective.
    double s = constant ? 0.0 : std::sqrt(ss / static_cast<double>(rows - 1));
    if (daily_std) *daily_std = s;
    if (s == 0) return std::nullopt;
    return (annualize_return * mean_p - risk_free) / (annualize_vol * s);
  }

  std::optional<std::vector<double>> gradient(std::span<const double> w) const {
    double s = 0;
    std::vector<double> q;
    auto f = objective(w, &s, &q);
    if (!f) return std::nullopt;
    // (Sw)_i = sum_t centered_ti * q_t / (rows - 1)
    std::vector<double> sw(cols, 0.0);
    for (std::size_t t = 0; t < rows; ++t) {
      const double* row = centered.data() + t * cols;
      for (std::size_t i = 0; i < cols; ++i) sw[i] += row[i] * q[t];
    }
    double denom_vol = annualize_vol * s;
    std::vector<double> g(cols);
    for (std::size_t i = 0; i < cols; ++i) {
      sw[i] /= static_cast<double>(rows - 1);
      double dvol = annualize_vol * sw[i] / s;  // d(annualized vol)/dw_i
      g[i] = (annualize_return * col_means[i] - *f * dvol) / denom_vol;
    }
    return g;
  }
};

// Uniform in (0,1), derived from the raw engine bits so the stream does not
// depend on the standard library's distribution implementation.
double uniform_open(std::mt19937_64& engine) {
  return (static_cast<double>(engine() >> 11) + 0.5) * 0x1.0p-53;
}

std::vector<double> random_simplex_point(std::mt19937_64& engine,
                                         std::size_t n) {
  std::vector<double> x(n);
  double total = 0;
  for (auto& v : x) {
    v = -std::log(uniform_open(engine));
    total += v;
  }
  for (auto& v : x) v /= total;
  return x;
}

bool lex_less(const std::vector<double>& a, const std::vector<double>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

void require_panel_for_objective(const ReturnPanel& returns) {
  if (returns.cols() < 1)
    throw std::invalid_argument("objective needs at least one asset");
  if (returns.rows() < 2)
    throw std::invalid_argument("objective needs at least two return rows");
}

}  // namespace

void OptimizerConfig::validate() const {
  if (restarts < 1) throw std::invalid_argument("restarts must be >= 1");
  if (max_iterations < 1)
    throw std::invalid_argument("max_iterations must be >= 1");
  if (!(convergence_tol > 0))
    throw std::invalid_argument("convergence_tol must be positive");
  if (!(step_shrink > 0 && step_shrink < 1))
    throw std::invalid_argument("step_shrink must lie in (0,1)");
}

std::optional<double> sharpe_objective_raw(std::span<const double> w,
                                           const ReturnPanel& returns,
                                           const MetricsConfig& cfg) {
  require_panel_for_objective(returns);
  if (w.size() != returns.cols())
    throw std::invalid_argument("weight count does not match panel assets");
  const std::size_t rows = returns.rows();
  std::vector<double> p(rows);
  for (std::size_t t = 0; t < rows; ++t) {
    double acc = 0;
    for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * returns.at(t, i);
    p[t] = acc;
  }
  bool constant = true;
  for (double v : p)
    if (v != p.front()) {
      constant = false;
      break;
    }
  if (constant) return std::nullopt;
  double mean = 0;
  for (double v : p) mean += v;
  mean /= static_cast<double>(rows);
  double ss = 0;
  for (double v : p) ss += (v - mean) * (v - mean);
  double s = std::sqrt(ss / static_cast<double>(rows - 1));
  if (s == 0) return std::nullopt;
  double ann_ret = mean * cfg.periods_per_year;
  double ann_vol = s * std::sqrt(cfg.periods_per_year);
  return (ann_ret - cfg.risk_free_rate) / ann_vol;
}

std::optional<double> sharpe_objective(const WeightVector& w,
                                       const ReturnPanel& returns,
                                       const MetricsConfig& cfg) {
  w.validate();
  if (w.assets != returns.assets)
    throw std::invalid_argument("weight assets do not match panel assets");
  return sharpe_objective_raw(w.weights, returns, cfg);
}

std::optional<std::vector<double>> sharpe_gradient(std::span<const double> w,
                                                   const ReturnPanel& returns,
                                                   const MetricsConfig& cfg) {
  require_panel_for_objective(returns);
  if (w.size() != returns.cols())
    throw std::invalid_argument("weight count does not match panel assets");
  ObjectiveWorkspace ws(returns, cfg);
  return ws.gradient(w);
}

std::vector<double> project_to_simplex(std::span<const double> v) {
  const std::size_t n = v.size();
  if (n == 0) throw std::invalid_argument("cannot project an empty vector");
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double running = 0;
  double tau = 0;
  for (std::size_t j = 0; j < n; ++j) {
    running += u[j];
    double candidate = (running - 1.0) / static_cast<double>(j + 1);
    if (u[j] - candidate > 0) tau = candidate;
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::max(v[i] - tau, 0.0);
  return out;
}

OptimizationResult optimize_static(const ReturnPanel& returns,
                                   const MetricsConfig& mcfg,
                                   const OptimizerConfig& ocfg,
                                   const WeightVector* carry) {
  mcfg.validate();
  ocfg.validate();
  require_panel_for_objective(returns);

  const std::size_t n = returns.cols();
  WeightVector equal = equal_weights(returns.assets);
  if (n == 1) {
    // Full investment forces the single asset.
    OptimizationResult res;
    res.weights = equal;
    res.objective = sharpe_objective_raw(equal.weights, returns, mcfg);
    return res;
  }

  ObjectiveWorkspace ws(returns, mcfg);
  std::mt19937_64 engine(ocfg.seed);

  std::vector<std::vector<double>> finals;
  constexpr double kMinStep = 1e-14;

  for (int r = 0; r < ocfg.restarts; ++r) {
    std::vector<double> w = r == 0 ? equal.weights
                                   : random_simplex_point(engine, n);
    auto f = ws.objective(w);
    if (!f) continue;  // degenerate start, nothing to ascend from

    double step = 1.0;
    for (int iter = 0; iter < ocfg.max_iterations; ++iter) {
      auto g = ws.gradient(w);
      if (!g) break;
      double eta = step;
      bool accepted = false;
      std::vector<double> cand;
      std::optional<double> fc;
      while (eta > kMinStep) {
        std::vector<double> moved(n);
        for (std::size_t i = 0; i < n; ++i) moved[i] = w[i] + eta * (*g)[i];
        cand = project_to_simplex(moved);
        fc = ws.objective(cand);
        if (fc && *fc > *f) {
          accepted = true;
          break;
        }
        eta *= ocfg.step_shrink;
      }
      if (!accepted) break;
      double gain = *fc - *f;
      w = std::move(cand);
      f = fc;
      step = std::min(eta * 2.0, 1e6);
      if (gain < ocfg.convergence_tol) break;
    }
    finals.push_back(std::move(w));
  }

  // Select by the reference objective; ties break toward lexicographically
  // smaller weights so the outcome never depends on evaluation order.
  const std::vector<double>* best = nullptr;
  double best_objective = 0;
  for (const auto& w : finals) {
    auto f = sharpe_objective_raw(w, returns, mcfg);
    if (!f) continue;
    if (best == nullptr || *f > best_objective ||
        (*f == best_objective && lex_less(w, *best))) {
      best = &w;
      best_objective = *f;
    }
  }

  OptimizationResult res;
  if (best == nullptr) {
    res.fallback_used = true;
    if (ocfg.fallback_policy == FallbackPolicy::CarryForward && carry != nullptr) {
      res.weights = *carry;
      res.warnings.push_back(
          "objective undefined from every start; carried previous weights forward");
    } else {
      res.weights = equal;
      res.warnings.push_back(
          "objective undefined from every start; fell back to equal weights");
    }
    res.objective = sharpe_objective_raw(res.weights.weights, returns, mcfg);
    return res;
  }

  res.weights.assets = returns.assets;
  res.weights.weights = *best;
  res.objective = best_objective;
  try {
    res.weights.validate();
  } catch (const std::invalid_argument&) {
    res.weights.weights = project_to_simplex(res.weights.weights);
  }
  return res;
}

GridOracleResult grid_oracle(const ReturnPanel& returns, double resolution,
                             const MetricsConfig& cfg) {
  require_panel_for_objective(returns);
  if (returns.cols() > 4)
    throw std::invalid_argument("grid oracle supports at most 4 assets");
  if (!(resolution > 0) || resolution > 1)
    throw std::invalid_argument("resolution must lie in (0,1]");
  auto k = static_cast<long long>(std::llround(1.0 / resolution));
  if (k < 1 || std::abs(k * resolution - 1.0) > 1e-9)
    throw std::invalid_argument("resolution must divide 1 evenly");

  const std::size_t n = returns.cols();
  GridOracleResult result;
  bool found = false;
  std::vector<long long> counts(n, 0);
  std::vector<double> w(n, 0.0);

  // Ascending lexicographic enumeration of compositions of k into n parts;
  // the first maximizer seen is the lexicographically smallest tie.
  auto evaluate = [&]() {
    for (std::size_t i = 0; i < n; ++i)
      w[i] = static_cast<double>(counts[i]) / static_cast<double>(k);
    ++result.evaluated;
    auto f = sharpe_objective_raw(w, returns, cfg);
    if (f && (!found || *f > result.objective)) {
      found = true;
      result.objective = *f;
      result.weights.weights = w;
    }
  };

  auto recurse = [&](auto&& self, std::size_t index, long long remaining) -> void {
    if (index == n - 1) {
      counts[index] = remaining;
      evaluate();
      return;
    }
    for (long long c = 0; c <= remaining; ++c) {
      counts[index] = c;
      self(self, index + 1, remaining - c);
    }
  };
  recurse(recurse, 0, k);

  if (!found)
    throw UndefinedMetricError("objective undefined on the entire lattice");
  result.weights.assets = returns.assets;
  return result;
}

WeightSchedule optimize_rolling(const ReturnPanel& returns,
                                const MetricsConfig& mcfg,
                                const OptimizerConfig& ocfg, int window,
                                int holding) {
  if (window < 2 || holding < 2)
    throw std::invalid_argument("window and holding must be >= 2 rows");
  const std::size_t total = returns.rows();
  if (total < static_cast<std::size_t>(window) + 1)
    throw std::invalid_argument(
        "panel shorter than window + 1 rows (window " + std::to_string(window) +
        ", rows " + std::to_string(total) + ")");

  WeightSchedule schedule;
  schedule.window_length = window;
  schedule.holding_period = holding;

  WeightVector prev = equal_weights(returns.assets);
  schedule.entries.push_back({returns.dates.front(),
                              returns.dates[window - 1], prev,
                              ScheduleEntry::Source::WarmUp});

  std::size_t t = window;
  while (t < total) {
    std::size_t end_row = std::min(t + static_cast<std::size_t>(holding), total);
    ReturnPanel win = slice_rows(returns, t - window, t);
    OptimizationResult res = optimize_static(win, mcfg, ocfg, &prev);
    schedule.entries.push_back({returns.dates[t], returns.dates[end_row - 1],
                                res.weights,
                                res.fallback_used
                                    ? ScheduleEntry::Source::Fallback
                                    : ScheduleEntry::Source::Optimized});
    prev = res.weights;
    t = end_row;
  }
  return schedule;
}

}  // namespace crewfolio
