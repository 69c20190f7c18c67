// crewfolio command line: crew runs, audit checks, run comparison, benchmark
// comparison, and standalone stage tools.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "crewfolio/backtest.hpp"
#include "crewfolio/digest.hpp"
#include "crewfolio/errors.hpp"
#include "crewfolio/market_data.hpp"
#include "crewfolio/metrics.hpp"
#include "crewfolio/optimizer.hpp"
#include "crewfolio/pipeline.hpp"

namespace {

using namespace crewfolio;

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;  // checker/metrics/optimizer failures
constexpr int kExitUsage = 2;   // bad flags, missing files

struct CommonOptions {
  std::string dataset;
  std::string run_dir;
  double ratio = 0.8;
  int window = 30;
  int holding = 30;
  double risk_free = 0.0;
  double periods_per_year = 252.0;
  std::optional<double> mar;
  double regime_threshold = 2.0;
  double hhi_low = 0.15;
  double hhi_high = 0.30;
  std::uint64_t seed = 0;
  int restarts = 16;
  int max_iterations = 500;
  double convergence_tol = 1e-8;
  double step_shrink = 0.5;
  std::string fallback = "equal-weights";
  std::string delimiter = ",";
  double margin = 0.10;
  bool verbose = false;
};

char delimiter_of(const CommonOptions& opt) {
  if (opt.delimiter.size() != 1)
    throw CLI::ValidationError("--delimiter", "must be a single character");
  return opt.delimiter[0];
}

CrewPlan plan_of(CrewId crew, const CommonOptions& opt) {
  CrewPlan plan;
  plan.crew_id = crew;
  plan.split_ratio = opt.ratio;
  plan.window = opt.window;
  plan.holding = opt.holding;
  plan.delimiter = delimiter_of(opt);
  plan.degradation_margin = opt.margin;
  plan.metrics.risk_free_rate = opt.risk_free;
  plan.metrics.periods_per_year = opt.periods_per_year;
  plan.metrics.mar = opt.mar;
  plan.metrics.regime_var_ratio_threshold = opt.regime_threshold;
  plan.metrics.liquidity_hhi_thresholds = {opt.hhi_low, opt.hhi_high};
  plan.optimizer.seed = opt.seed;
  plan.optimizer.restarts = opt.restarts;
  plan.optimizer.max_iterations = opt.max_iterations;
  plan.optimizer.convergence_tol = opt.convergence_tol;
  plan.optimizer.step_shrink = opt.step_shrink;
  plan.optimizer.fallback_policy = opt.fallback == "carry-forward"
                                       ? FallbackPolicy::CarryForward
                                       : FallbackPolicy::EqualWeights;
  return plan;
}

void add_metrics_flags(CLI::App* cmd, CommonOptions& opt) {
  cmd->add_option("--rf", opt.risk_free, "Annualized risk-free rate")
      ->envname("CREWFOLIO_RF");
  cmd->add_option("--ppy", opt.periods_per_year, "Periods per year")
      ->envname("CREWFOLIO_PPY");
  cmd->add_option("--mar", opt.mar,
                  "Minimum acceptable return for Sortino (defaults to --rf)");
  cmd->add_option("--regime-threshold", opt.regime_threshold,
                  "Variance-ratio threshold for regime detection");
  cmd->add_option("--hhi-low", opt.hhi_low, "Lower HHI liquidity threshold");
  cmd->add_option("--hhi-high", opt.hhi_high, "Upper HHI liquidity threshold");
}

void add_optimizer_flags(CLI::App* cmd, CommonOptions& opt) {
  cmd->add_option("--seed", opt.seed, "Seed for optimizer restarts")
      ->envname("CREWFOLIO_SEED");
  cmd->add_option("--restarts", opt.restarts, "Optimizer start points");
  cmd->add_option("--max-iterations", opt.max_iterations,
                  "Projected-gradient iteration cap");
  cmd->add_option("--tol", opt.convergence_tol,
                  "Convergence tolerance on objective change");
  cmd->add_option("--step-shrink", opt.step_shrink,
                  "Backtracking shrink factor in (0,1)");
  cmd->add_option("--fallback", opt.fallback,
                  "Degenerate-window fallback policy")
      ->check(CLI::IsMember({"equal-weights", "carry-forward"}));
}

MetricsConfig metrics_config_from_plan_file(const std::string& run_dir) {
  MetricsConfig cfg;
  std::ifstream in(std::filesystem::path(run_dir) / "plan.txt");
  if (!in) return cfg;
  std::ostringstream buf;
  buf << in.rdbuf();
  auto kv = parse_kv_block(buf.str());
  auto num = [&](const char* key, double fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
      return std::stod(it->second);
    } catch (...) {
      return fallback;
    }
  };
  cfg.risk_free_rate = num("risk_free_rate", 0.0);
  cfg.periods_per_year = num("periods_per_year", 252.0);
  if (auto it = kv.find("mar"); it != kv.end() && it->second != "-")
    cfg.mar = std::stod(it->second);
  cfg.regime_var_ratio_threshold = num("regime_var_ratio_threshold", 2.0);
  cfg.liquidity_hhi_thresholds = {num("liquidity_hhi_low", 0.15),
                                  num("liquidity_hhi_high", 0.30)};
  return cfg;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// ---------------------------------------------------------------------------

int cmd_run(CrewId crew, const CommonOptions& opt) {
  CrewPlan plan = plan_of(crew, opt);
  try {
    plan.validate();
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid options: " << e.what() << "\n";
    return kExitUsage;
  }
  RunResult result = run_crew(plan, opt.dataset, opt.run_dir);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  if (opt.verbose) {
    for (const auto& s : result.stages)
      std::cout << "stage " << s.stage << ": "
                << (s.reused ? "reused" : "computed") << "\n";
    std::cout << "\n";
  }
  std::cout << result.final_report_text;
  return kExitOk;
}

int cmd_check(const std::string& run_dir) {
  CheckReport report = check_artifacts(run_dir);
  std::cout << report.to_text();
  return report.pass ? kExitOk : kExitDomain;
}

std::string metric_cell(const std::map<std::string, std::string>& kv,
                        const std::string& key) {
  auto it = kv.find(key);
  return it == kv.end() ? std::string("--") : it->second;
}

std::string pad_cell(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

void print_comparison_table(const std::string& side,
                            const std::map<std::string, std::string>& equal,
                            const std::map<std::string, std::string>& a,
                            const std::map<std::string, std::string>& b,
                            const std::string& label_a,
                            const std::string& label_b) {
  std::cout << side << " set\n";
  std::cout << "  " << pad_cell("metric", 18) << pad_cell("equal-weight", 15)
            << pad_cell(label_a, 15) << label_b << "\n";
  for (const auto& key : metrics_kv_keys()) {
    if (key == "regime_statistic") continue;
    std::cout << "  " << pad_cell(key, 18) << pad_cell(metric_cell(equal, key), 15)
              << pad_cell(metric_cell(a, key), 15) << metric_cell(b, key)
              << "\n";
  }
}

void print_dominance(const std::string& side,
                     const std::map<std::string, std::string>& a,
                     const std::map<std::string, std::string>& b,
                     const std::string& label_a, const std::string& label_b) {
  auto num = [](const std::map<std::string, std::string>& kv,
                const std::string& key) -> std::optional<double> {
    auto it = kv.find(key);
    if (it == kv.end() || it->second == "--") return std::nullopt;
    try {
      return std::stod(it->second);
    } catch (...) {
      return std::nullopt;
    }
  };
  auto sharpe_a = num(a, "sharpe"), sharpe_b = num(b, "sharpe");
  auto vol_a = num(a, "volatility"), vol_b = num(b, "volatility");
  std::cout << "dominance (" << side << "): ";
  if (!sharpe_a || !sharpe_b || !vol_a || !vol_b) {
    std::cout << "not comparable (undefined metric)\n";
    return;
  }
  if (*sharpe_a == *sharpe_b && *vol_a == *vol_b) {
    std::cout << "tie\n";
  } else if (*sharpe_a > *sharpe_b && *vol_a < *vol_b) {
    std::cout << label_a << " (higher sharpe, lower volatility)\n";
  } else if (*sharpe_b > *sharpe_a && *vol_b < *vol_a) {
    std::cout << label_b << " (higher sharpe, lower volatility)\n";
  } else {
    std::cout << "mixed (no strategy wins on both sharpe and volatility)\n";
  }
}

int cmd_compare(const std::string& run_a, const std::string& run_b) {
  for (const auto& dir : {run_a, run_b}) {
    CheckReport report = check_artifacts(dir);
    if (!report.pass) {
      std::cerr << "refusing to compare: checks failed for " << dir << "\n"
                << report.to_text();
      return kExitDomain;
    }
  }
  RunMetrics a = load_run_metrics(run_a);
  RunMetrics b = load_run_metrics(run_b);
  std::string label_a = "crew-" + to_string(a.crew_id);
  std::string label_b = "crew-" + to_string(b.crew_id);
  if (label_a == label_b) {
    label_a += " (first)";
    label_b += " (second)";
  }
  if (a.baseline_train != b.baseline_train)
    std::cerr << "note: the two runs have different equal-weight baselines "
                 "(different datasets or configs); the equal column shows the "
                 "first run's baseline\n";

  print_comparison_table("train", a.baseline_train, a.optimized_train,
                         b.optimized_train, label_a, label_b);
  print_dominance("train", a.optimized_train, b.optimized_train, label_a,
                  label_b);
  std::cout << "\n";
  print_comparison_table("test", a.baseline_test, a.optimized_test,
                         b.optimized_test, label_a, label_b);
  print_dominance("test", a.optimized_test, b.optimized_test, label_a, label_b);
  return kExitOk;
}

int cmd_benchmark(const std::string& run_dir, const std::string& benchmark_path,
                  const std::string& delimiter) {
  CheckReport report = check_artifacts(run_dir);
  if (!report.pass) {
    std::cerr << "run directory fails checks:\n" << report.to_text();
    return kExitDomain;
  }
  PortfolioReturns portfolio = recompute_test_series(run_dir);

  CsvFormat fmt{delimiter.size() == 1 ? delimiter[0] : ','};
  PricePanel raw = load_prices(benchmark_path, fmt);
  if (raw.cols() != 1)
    throw std::invalid_argument(
        "benchmark file must hold exactly one asset column");
  CleanResult cleaned = clean_prices(raw);
  ReturnPanel bench_returns = log_returns(cleaned.panel);
  PortfolioReturns benchmark;
  benchmark.dates = bench_returns.dates;
  benchmark.values = bench_returns.values;

  MetricsConfig cfg = metrics_config_from_plan_file(run_dir);
  BenchmarkComparison cmp;
  try {
    cmp = compare_with_benchmark(portfolio, benchmark, cfg);
  } catch (const std::invalid_argument& e) {
    std::cerr << "cannot compare with benchmark: " << e.what() << "\n"
              << "(the run's test period and the benchmark share no dates)\n";
    return kExitDomain;
  }

  std::cout << "test-period portfolio vs benchmark (" << cmp.common_days
            << " common days)\n\n";
  std::cout << "[portfolio]\n" << to_kv_text(cmp.portfolio);
  std::cout << "[benchmark]\n" << to_kv_text(cmp.benchmark);
  std::cout << "[comparison]\n";
  std::cout << "excess_return " << format_display(cmp.excess_return) << "\n";
  std::cout << "tracking_error " << format_display(cmp.tracking_error) << "\n";
  return kExitOk;
}

int cmd_tools_split(const CommonOptions& opt, const std::string& train_out,
                    const std::string& test_out) {
  CsvFormat fmt{delimiter_of(opt)};
  PricePanel panel = load_prices(opt.dataset, fmt);
  PriceSplitPair pair = split(panel, opt.ratio);
  write_csv(pair.train, train_out, fmt);
  write_csv(pair.test, test_out, fmt);
  std::cout << "train rows " << pair.train.rows() << "\n";
  std::cout << "test rows " << pair.test.rows() << "\n";
  return kExitOk;
}

int cmd_tools_metrics(const CommonOptions& opt, const std::string& weights_path) {
  CsvFormat fmt{delimiter_of(opt)};
  PricePanel panel = load_prices(opt.dataset, fmt);
  CleanResult cleaned = clean_prices(panel);
  ReturnPanel returns = log_returns(cleaned.panel);

  WeightVector weights;
  if (weights_path.empty()) {
    weights = equal_weights(returns.assets);
  } else {
    WeightVector file_weights = parse_weights(read_text_file(weights_path), fmt.delimiter);
    // align to panel asset order
    weights.assets = returns.assets;
    for (const auto& asset : returns.assets) {
      bool found = false;
      for (std::size_t i = 0; i < file_weights.assets.size(); ++i) {
        if (file_weights.assets[i] == asset) {
          weights.weights.push_back(file_weights.weights[i]);
          found = true;
          break;
        }
      }
      if (!found)
        throw std::invalid_argument("weights file lacks asset: " + asset);
    }
  }

  MetricsConfig cfg;
  cfg.risk_free_rate = opt.risk_free;
  cfg.periods_per_year = opt.periods_per_year;
  cfg.mar = opt.mar;
  cfg.regime_var_ratio_threshold = opt.regime_threshold;
  cfg.liquidity_hhi_thresholds = {opt.hhi_low, opt.hhi_high};

  BacktestResult bt = run_static(returns, weights);
  MetricsReport report = full_report(bt.portfolio_returns, &weights, nullptr, cfg);
  std::cout << to_kv_text(report);
  return kExitOk;
}

int cmd_tools_optimize(const CommonOptions& opt, bool rolling) {
  CsvFormat fmt{delimiter_of(opt)};
  PricePanel panel = load_prices(opt.dataset, fmt);
  CleanResult cleaned = clean_prices(panel);
  ReturnPanel returns = log_returns(cleaned.panel);

  MetricsConfig mcfg;
  mcfg.risk_free_rate = opt.risk_free;
  mcfg.periods_per_year = opt.periods_per_year;
  OptimizerConfig ocfg;
  ocfg.seed = opt.seed;
  ocfg.restarts = opt.restarts;
  ocfg.max_iterations = opt.max_iterations;
  ocfg.convergence_tol = opt.convergence_tol;
  ocfg.step_shrink = opt.step_shrink;
  ocfg.fallback_policy = opt.fallback == "carry-forward"
                             ? FallbackPolicy::CarryForward
                             : FallbackPolicy::EqualWeights;

  WeightSchedule schedule;
  if (rolling) {
    schedule = optimize_rolling(returns, mcfg, ocfg, opt.window, opt.holding);
  } else {
    OptimizationResult res = optimize_static(returns, mcfg, ocfg);
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
    if (res.objective) {
      char buf[48];
      std::snprintf(buf, sizeof buf, "%.17g", *res.objective);
      std::cout << "# objective " << buf << "\n";
    }
    schedule.entries.push_back({returns.dates.front(), returns.dates.back(),
                                res.weights,
                                ScheduleEntry::Source::Optimized});
  }
  std::cout << to_delimited(schedule, fmt.delimiter);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crewfolio: deterministic crypto portfolio crews with an "
               "auditable stage pipeline"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Flat key-value config file; flags override it");

  CommonOptions opt;

  auto* run_cmd = app.add_subcommand("run", "Execute a crew end to end");
  std::string crew_name;
  run_cmd->add_option("crew", crew_name, "Crew to run: a (static) or b (rolling)")
      ->required()
      ->check(CLI::IsMember({"a", "b"}));
  run_cmd->add_option("--data", opt.dataset, "Price panel file")
      ->required()
      ->envname("CREWFOLIO_DATA");
  run_cmd->add_option("--out", opt.run_dir, "Run directory for artifacts")
      ->required()
      ->envname("CREWFOLIO_OUT");
  run_cmd->add_option("--ratio", opt.ratio, "Train fraction of price rows")
      ->envname("CREWFOLIO_RATIO");
  run_cmd->add_option("--window", opt.window, "Rolling window (rows)")
      ->envname("CREWFOLIO_WINDOW");
  run_cmd->add_option("--holding", opt.holding, "Holding period (rows)")
      ->envname("CREWFOLIO_HOLDING");
  run_cmd->add_option("--delimiter", opt.delimiter, "Field delimiter")
      ->envname("CREWFOLIO_DELIMITER");
  run_cmd->add_option("--margin", opt.margin,
                      "Relative degradation margin for the report");
  run_cmd->add_flag("-v,--verbose", opt.verbose, "Print per-stage status");
  add_metrics_flags(run_cmd, opt);
  add_optimizer_flags(run_cmd, opt);

  auto* check_cmd = app.add_subcommand("check", "Validate a run's audit trail");
  std::string check_dir;
  check_cmd->add_option("run_dir", check_dir, "Run directory")->required();

  auto* compare_cmd =
      app.add_subcommand("compare", "Side-by-side metrics of two runs");
  std::string compare_a, compare_b;
  compare_cmd->add_option("run_a", compare_a, "First run directory")->required();
  compare_cmd->add_option("run_b", compare_b, "Second run directory")->required();

  auto* benchmark_cmd = app.add_subcommand(
      "benchmark", "Compare a run's test-period portfolio with a benchmark");
  std::string bench_run, bench_file, bench_delim = ",";
  benchmark_cmd->add_option("run_dir", bench_run, "Run directory")->required();
  benchmark_cmd
      ->add_option("benchmark_file", bench_file,
                   "Single-asset price panel (e.g. an index)")
      ->required();
  benchmark_cmd->add_option("--delimiter", bench_delim,
                            "Benchmark file delimiter");

  auto* tools_cmd =
      app.add_subcommand("tools", "Run individual stages on raw files");
  tools_cmd->require_subcommand(1);

  auto* split_cmd = tools_cmd->add_subcommand("split", "Chronological split");
  std::string split_train_out, split_test_out;
  split_cmd->add_option("--data", opt.dataset, "Price panel file")->required();
  split_cmd->add_option("--ratio", opt.ratio, "Train fraction");
  split_cmd->add_option("--train-out", split_train_out, "Train output file")
      ->required();
  split_cmd->add_option("--test-out", split_test_out, "Test output file")
      ->required();
  split_cmd->add_option("--delimiter", opt.delimiter, "Field delimiter");

  auto* metrics_cmd =
      tools_cmd->add_subcommand("metrics", "Metrics for a portfolio");
  std::string weights_path;
  metrics_cmd->add_option("--data", opt.dataset, "Price panel file")->required();
  metrics_cmd->add_option("--weights", weights_path,
                          "Weight file (ticker,weight rows); equal weights "
                          "when omitted");
  metrics_cmd->add_option("--delimiter", opt.delimiter, "Field delimiter");
  add_metrics_flags(metrics_cmd, opt);

  auto* optimize_cmd =
      tools_cmd->add_subcommand("optimize", "Sharpe-maximizing weights");
  bool rolling = false;
  optimize_cmd->add_option("--data", opt.dataset, "Price panel file")->required();
  optimize_cmd->add_flag("--rolling", rolling, "Rolling schedule instead of static");
  optimize_cmd->add_option("--window", opt.window, "Rolling window (rows)");
  optimize_cmd->add_option("--holding", opt.holding, "Holding period (rows)");
  optimize_cmd->add_option("--delimiter", opt.delimiter, "Field delimiter");
  optimize_cmd->add_option("--rf", opt.risk_free, "Annualized risk-free rate");
  optimize_cmd->add_option("--ppy", opt.periods_per_year, "Periods per year");
  add_optimizer_flags(optimize_cmd, opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (run_cmd->parsed())
      return cmd_run(crew_name == "a" ? CrewId::A : CrewId::B, opt);
    if (check_cmd->parsed()) return cmd_check(check_dir);
    if (compare_cmd->parsed()) return cmd_compare(compare_a, compare_b);
    if (benchmark_cmd->parsed())
      return cmd_benchmark(bench_run, bench_file, bench_delim);
    if (tools_cmd->parsed()) {
      if (split_cmd->parsed())
        return cmd_tools_split(opt, split_train_out, split_test_out);
      if (metrics_cmd->parsed()) return cmd_tools_metrics(opt, weights_path);
      if (optimize_cmd->parsed()) return cmd_tools_optimize(opt, rolling);
    }
  } catch (const StageError& e) {
    std::cerr << "run failed at stage '" << e.stage() << "': " << e.what()
              << "\n";
    return kExitDomain;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  }
  return kExitUsage;
}
