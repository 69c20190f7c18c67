#include "crewfolio/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "crewfolio/backtest.hpp"
#include "crewfolio/digest.hpp"
#include "crewfolio/errors.hpp"
#include "crewfolio/market_data.hpp"
#include "text.hpp"

namespace fs = std::filesystem;

namespace crewfolio {

namespace {

constexpr const char* kManifestFile = "manifest";
constexpr const char* kManifestMetaFile = "manifest.meta";
constexpr const char* kPlanFile = "plan.txt";
constexpr const char* kFailureFile = "failure.txt";
constexpr const char* kCleaningLogFile = "cleaning.log";
constexpr const char* kReportSidecarFile = "final-report.kv";

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path.string());
  out << content;
  if (!out) throw IoError("failed writing file: " + path.string());
}

std::string now_utc_iso() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// payload formats
// ---------------------------------------------------------------------------

struct SplitPayload {
  double ratio = 0;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  PricePanel train;
  PricePanel test;
};

std::string split_payload_text(const PriceSplitPair& pair, char delimiter) {
  std::string out = "# price-split v1\n";
  out += "ratio " + text::format_full(pair.ratio) + "\n";
  out += "train_rows " + std::to_string(pair.train.rows()) + "\n";
  out += "test_rows " + std::to_string(pair.test.rows()) + "\n";
  out += "[train]\n";
  out += to_csv(pair.train, {delimiter});
  out += "[test]\n";
  out += to_csv(pair.test, {delimiter});
  return out;
}

SplitPayload parse_split_payload(const std::string& content, char delimiter) {
  SplitPayload out;
  std::string section;
  std::string train_csv, test_csv;
  for (auto line : text::split_lines(content)) {
    auto t = text::trim(line);
    if (t == "[train]") {
      section = "train";
      continue;
    }
    if (t == "[test]") {
      section = "test";
      continue;
    }
    if (section.empty()) {
      if (t.empty() || t.front() == '#') continue;
      auto sp = t.find(' ');
      if (sp == std::string_view::npos)
        throw std::invalid_argument("malformed split header line");
      auto key = t.substr(0, sp);
      auto value = text::trim(t.substr(sp + 1));
      if (key == "ratio") {
        auto v = text::parse_double(value);
        if (!v) throw std::invalid_argument("bad split ratio");
        out.ratio = *v;
      } else if (key == "train_rows") {
        out.train_rows = std::stoul(std::string(value));
      } else if (key == "test_rows") {
        out.test_rows = std::stoul(std::string(value));
      }
    } else if (section == "train") {
      train_csv.append(line);
      train_csv += '\n';
    } else {
      test_csv.append(line);
      test_csv += '\n';
    }
  }
  CsvFormat fmt{delimiter};
  out.train = parse_prices_csv(train_csv, fmt);
  out.test = parse_prices_csv(test_csv, fmt);
  if (out.train.rows() != out.train_rows || out.test.rows() != out.test_rows)
    throw std::invalid_argument("split payload row counts disagree with blocks");
  return out;
}

std::string metrics_pair_text(const MetricsReport& train,
                              const MetricsReport& test) {
  std::string out = "# metrics-pair v1\n";
  out += "[train]\n";
  out += to_kv_text(train);
  out += "[test]\n";
  out += to_kv_text(test);
  return out;
}

std::map<std::string, std::map<std::string, std::string>> parse_metrics_pair(
    const std::string& content) {
  std::map<std::string, std::map<std::string, std::string>> out;
  std::string section;
  std::string block;
  auto flush = [&]() {
    if (!section.empty()) out[section] = parse_kv_block(block);
    block.clear();
  };
  for (auto line : text::split_lines(content)) {
    auto t = text::trim(line);
    if (!t.empty() && t.front() == '[' && t.back() == ']') {
      flush();
      section = std::string(t.substr(1, t.size() - 2));
      continue;
    }
    block.append(line);
    block += '\n';
  }
  flush();
  if (!out.count("train") || !out.count("test"))
    throw std::invalid_argument("metrics payload lacks [train]/[test] sections");
  return out;
}

// Decimal tokens with a fractional part; integers (section numbers, years in
// dates) are structural, metric values always carry 4 decimals.
std::vector<std::string> extract_numerals(const std::string& body) {
  std::vector<std::string> out;
  const std::size_t n = body.size();
  std::size_t i = 0;
  auto is_digit = [](char c) { return c >= '0' && c <= '9'; };
  while (i < n) {
    if (is_digit(body[i])) {
      std::size_t start = i;
      if (start > 0 && (body[start - 1] == '-' || body[start - 1] == '+')) --start;
      std::size_t j = i;
      while (j < n && is_digit(body[j])) ++j;
      if (j < n && body[j] == '.' && j + 1 < n && is_digit(body[j + 1])) {
        ++j;
        while (j < n && is_digit(body[j])) ++j;
        // date-like tokens (digit or '-' immediately before a '-') are not
        // metric numerals; a leading sign is part of the token.
        out.push_back(body.substr(start, j - start));
      }
      i = j;
    } else {
      ++i;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// plan + manifest persistence
// ---------------------------------------------------------------------------

std::string serialize_plan(const CrewPlan& plan, const std::string& dataset_digest) {
  std::string out;
  out += "crew " + to_string(plan.crew_id) + "\n";
  out += "split_ratio " + text::format_full(plan.split_ratio) + "\n";
  out += "window " + std::to_string(plan.window) + "\n";
  out += "holding " + std::to_string(plan.holding) + "\n";
  out += std::string("delimiter ") + plan.delimiter + "\n";
  out += "risk_free_rate " + text::format_full(plan.metrics.risk_free_rate) + "\n";
  out += "periods_per_year " + text::format_full(plan.metrics.periods_per_year) + "\n";
  out += "mar " + (plan.metrics.mar ? text::format_full(*plan.metrics.mar)
                                    : std::string("-")) + "\n";
  out += "regime_var_ratio_threshold " +
         text::format_full(plan.metrics.regime_var_ratio_threshold) + "\n";
  out += "liquidity_hhi_low " +
         text::format_full(plan.metrics.liquidity_hhi_thresholds.first) + "\n";
  out += "liquidity_hhi_high " +
         text::format_full(plan.metrics.liquidity_hhi_thresholds.second) + "\n";
  out += "restarts " + std::to_string(plan.optimizer.restarts) + "\n";
  out += "max_iterations " + std::to_string(plan.optimizer.max_iterations) + "\n";
  out += "convergence_tol " + text::format_full(plan.optimizer.convergence_tol) + "\n";
  out += "step_shrink " + text::format_full(plan.optimizer.step_shrink) + "\n";
  out += "seed " + std::to_string(plan.optimizer.seed) + "\n";
  out += std::string("fallback_policy ") +
         (plan.optimizer.fallback_policy == FallbackPolicy::EqualWeights
              ? "equal-weights"
              : "carry-forward") + "\n";
  out += "degradation_margin " + text::format_full(plan.degradation_margin) + "\n";
  out += "dataset_sha256 " + dataset_digest + "\n";
  return out;
}

void write_manifest(const fs::path& run_dir, const RunManifest& manifest) {
  std::string body = "# digest-algorithm: " + manifest.algorithm + "\n";
  std::string meta;
  for (const auto& a : manifest.artifacts) {
    body += a.stage_name + "\t" + a.schema_tag + "\t" + a.content_digest + "\t" +
            a.payload_path + "\n";
    meta += a.stage_name + "\t" + a.produced_at + "\t";
    if (a.input_digests.empty()) {
      meta += "-";
    } else {
      for (std::size_t i = 0; i < a.input_digests.size(); ++i) {
        if (i) meta += ',';
        meta += a.input_digests[i];
      }
    }
    meta += "\n";
  }
  write_file(run_dir / kManifestFile, body);
  write_file(run_dir / kManifestMetaFile, meta);
}

}  // namespace

std::string to_string(CrewId id) { return id == CrewId::A ? "A" : "B"; }

void CrewPlan::validate() const {
  metrics.validate();
  optimizer.validate();
  if (!(split_ratio > 0 && split_ratio < 1))
    throw std::invalid_argument("split ratio must be in (0,1)");
  if (window < 2 || holding < 2)
    throw std::invalid_argument("window and holding must be >= 2");
  if (!(degradation_margin >= 0))
    throw std::invalid_argument("degradation margin must be >= 0");
}

const StageArtifact* RunManifest::find(const std::string& stage_name) const {
  for (const auto& a : artifacts)
    if (a.stage_name == stage_name) return &a;
  return nullptr;
}

RunManifest load_manifest(const std::string& run_dir) {
  fs::path dir(run_dir);
  if (!fs::exists(dir / kManifestFile))
    throw IoError("no manifest in run directory: " + run_dir);
  RunManifest manifest;
  std::string body = read_file(dir / kManifestFile);
  for (auto line : text::split_lines(body)) {
    auto t = text::trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      auto pos = t.find("digest-algorithm:");
      if (pos != std::string_view::npos)
        manifest.algorithm = std::string(text::trim(t.substr(pos + 17)));
      continue;
    }
    auto fields = text::split_fields(t, '\t');
    if (fields.size() != 4)
      throw IoError("malformed manifest line: " + std::string(t));
    StageArtifact a;
    a.stage_name = std::string(fields[0]);
    a.schema_tag = std::string(fields[1]);
    a.content_digest = std::string(fields[2]);
    a.payload_path = std::string(fields[3]);
    manifest.artifacts.push_back(std::move(a));
  }
  if (fs::exists(dir / kManifestMetaFile)) {
    std::string meta = read_file(dir / kManifestMetaFile);
    for (auto line : text::split_lines(meta)) {
      auto t = text::trim(line);
      if (t.empty()) continue;
      auto fields = text::split_fields(t, '\t');
      if (fields.size() != 3) continue;
      for (auto& a : manifest.artifacts) {
        if (a.stage_name == std::string(fields[0])) {
          a.produced_at = std::string(fields[1]);
          if (fields[2] != "-")
            for (auto d : text::split_fields(fields[2], ','))
              a.input_digests.emplace_back(d);
          break;
        }
      }
    }
  }
  return manifest;
}

std::string CheckReport::to_text() const {
  std::string out = "# check-findings v1\n";
  out += pass ? "pass\n" : "fail\n";
  for (const auto& f : findings) {
    out += f.severity == FindingSeverity::Error ? "error " : "warning ";
    out += f.stage + " " + f.message + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// checker
// ---------------------------------------------------------------------------

CheckReport check_artifacts(const std::string& run_dir) {
  fs::path dir(run_dir);
  RunManifest manifest = load_manifest(run_dir);

  CheckReport report;
  auto error = [&](const std::string& stage, const std::string& message) {
    report.findings.push_back({FindingSeverity::Error, stage, message});
  };
  auto warning = [&](const std::string& stage, const std::string& message) {
    report.findings.push_back({FindingSeverity::Warning, stage, message});
  };

  if (manifest.algorithm != "sha256")
    error("manifest", "unknown digest algorithm: " + manifest.algorithm);

  char delimiter = ',';
  if (fs::exists(dir / kPlanFile)) {
    auto plan_kv = parse_kv_block(read_file(dir / kPlanFile));
    if (auto it = plan_kv.find("delimiter");
        it != plan_kv.end() && it->second.size() == 1)
      delimiter = it->second[0];
  }
  if (fs::exists(dir / kFailureFile))
    warning("run", "run directory records a stage failure");

  // digests reference earlier artifacts only
  std::vector<std::string> seen_digests;
  for (const auto& a : manifest.artifacts) {
    if (a.produced_at.empty()) {
      warning(a.stage_name, "no produced-at record in manifest.meta");
    }
    for (const auto& d : a.input_digests) {
      if (std::find(seen_digests.begin(), seen_digests.end(), d) ==
          seen_digests.end())
        error(a.stage_name,
              "input digest does not reference an earlier artifact: " + d);
    }
    seen_digests.push_back(a.content_digest);
  }

  std::map<std::string, std::string> payloads;
  for (const auto& a : manifest.artifacts) {
    fs::path payload = dir / a.payload_path;
    if (!fs::exists(payload)) {
      error(a.stage_name, "payload file missing: " + a.payload_path);
      continue;
    }
    std::string content = read_file(payload);
    if (sha256_hex(content) != a.content_digest) {
      error(a.stage_name, "digest mismatch for " + a.payload_path);
      continue;
    }
    payloads[a.stage_name] = std::move(content);
  }

  // schema checks
  std::optional<std::size_t> cleaner_rows;
  std::optional<SplitPayload> split_payload;
  std::vector<std::map<std::string, std::string>> metric_blocks;

  for (const auto& a : manifest.artifacts) {
    auto it = payloads.find(a.stage_name);
    if (it == payloads.end()) continue;
    const std::string& content = it->second;
    try {
      if (a.schema_tag == "price-panel/v1") {
        PricePanel panel = parse_prices_csv(content, {delimiter});
        if (a.stage_name == "cleaner") {
          cleaner_rows = panel.rows();
          for (double v : panel.values)
            if (!std::isfinite(v) || v <= 0) {
              error(a.stage_name, "cleaned panel holds invalid prices");
              break;
            }
        }
      } else if (a.schema_tag == "price-split/v1") {
        split_payload = parse_split_payload(content, delimiter);
      } else if (a.schema_tag == "metrics-pair/v1") {
        auto sections = parse_metrics_pair(content);
        for (const auto& [name, kv] : sections) {
          for (const auto& key : metrics_kv_keys()) {
            if (!kv.count(key))
              error(a.stage_name,
                    "metrics section [" + name + "] lacks key " + key);
          }
          metric_blocks.push_back(kv);
        }
      } else if (a.schema_tag == "weight-schedule/v1") {
        WeightSchedule schedule = parse_schedule(content, delimiter);
        try {
          schedule.validate();
        } catch (const std::exception& e) {
          error(a.stage_name, std::string("simplex violation: ") + e.what());
        }
      } else if (a.schema_tag == "check-findings/v1") {
        auto lines = text::split_lines(content);
        bool ok = false;
        for (auto line : lines) {
          auto t = text::trim(line);
          if (t == "pass" || t == "fail") ok = true;
        }
        if (!ok) error(a.stage_name, "findings payload lacks pass/fail line");
      } else if (a.schema_tag == "final-report/v1") {
        // handled below once metric blocks are gathered
      } else {
        warning(a.stage_name, "unknown schema tag: " + a.schema_tag);
      }
    } catch (const std::exception& e) {
      error(a.stage_name, std::string("payload does not parse: ") + e.what());
    }
  }

  // cross-stage coherence
  if (cleaner_rows && split_payload) {
    if (split_payload->train_rows + split_payload->test_rows != *cleaner_rows)
      error("splitter", "split sizes do not sum to the cleaned input size");
  }

  if (auto* report_artifact = manifest.find("final-report");
      report_artifact != nullptr && payloads.count("final-report")) {
    std::vector<std::string> allowed;
    for (const auto& kv : metric_blocks)
      for (const auto& [key, value] : kv)
        if (text::parse_double(value)) allowed.push_back(value);
    for (const auto& numeral : extract_numerals(payloads["final-report"])) {
      if (std::find(allowed.begin(), allowed.end(), numeral) == allowed.end())
        error("final-report",
              "report numeral not found in any metrics artifact: " + numeral);
    }
  }

  for (const auto& f : report.findings)
    if (f.severity == FindingSeverity::Error) report.pass = false;
  return report;
}

// ---------------------------------------------------------------------------
// final report rendering
// ---------------------------------------------------------------------------

namespace {

std::string value_or_dash(const std::map<std::string, std::string>& kv,
                          const std::string& key) {
  auto it = kv.find(key);
  return it == kv.end() ? std::string("--") : it->second;
}

std::optional<double> numeric_value(const std::map<std::string, std::string>& kv,
                                    const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) return std::nullopt;
  return text::parse_double(it->second);
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

struct Degradation {
  std::string metric;
  std::string train_value;
  std::string test_value;
};

// Higher-better metrics degrade when test < train - margin*|train|;
// volatility (lower-better) when test > train + margin*|train|.
std::vector<Degradation> degraded_metrics(
    const std::map<std::string, std::string>& train,
    const std::map<std::string, std::string>& test, double margin) {
  std::vector<Degradation> out;
  const std::vector<std::pair<std::string, bool>> metrics = {
      {"expected_return", true}, {"volatility", false},   {"sharpe", true},
      {"sortino", true},         {"max_drawdown", true}};
  for (const auto& [name, higher_better] : metrics) {
    auto a = numeric_value(train, name);
    auto b = numeric_value(test, name);
    if (!a || !b) continue;
    bool degraded = higher_better ? *b < *a - margin * std::abs(*a)
                                  : *b > *a + margin * std::abs(*a);
    if (degraded)
      out.push_back({name, value_or_dash(train, name), value_or_dash(test, name)});
  }
  return out;
}

}  // namespace

std::string render_final_report(const RunManifest& manifest,
                                const std::string& run_dir, CrewId crew_id,
                                double degradation_margin) {
  fs::path dir(run_dir);
  const StageArtifact* baseline = manifest.find("baseline-metrics");
  const StageArtifact* optimized = manifest.find("optimized-metrics");
  if (baseline == nullptr || optimized == nullptr)
    throw std::invalid_argument("final report needs baseline and optimized metrics artifacts");

  auto baseline_sections = parse_metrics_pair(read_file(dir / baseline->payload_path));
  auto optimized_sections = parse_metrics_pair(read_file(dir / optimized->payload_path));
  const auto& base_train = baseline_sections.at("train");
  const auto& opt_train = optimized_sections.at("train");
  const auto& opt_test = optimized_sections.at("test");

  std::string crew = to_string(crew_id);
  std::string optimized_label =
      crew_id == CrewId::A ? "optimized" : "rolling-optimized";

  std::string out;
  out += "CREW " + crew + " FINAL REPORT\n";
  out += "===================\n\n";

  out += "1. Comparison of equal-weight and " + optimized_label +
         " portfolios (train set)\n\n";
  out += "   " + pad("metric", 18) + pad("equal-weight", 15) + optimized_label +
         "\n";
  for (const auto& key : metrics_kv_keys()) {
    if (key == "regime_statistic") continue;
    out += "   " + pad(key, 18) + pad(value_or_dash(base_train, key), 15) +
           value_or_dash(opt_train, key) + "\n";
  }
  out += "\n";

  auto base_sharpe = numeric_value(base_train, "sharpe");
  auto opt_sharpe = numeric_value(opt_train, "sharpe");
  enum class Verdict { Superior, NotSuperior, Indeterminate };
  Verdict verdict = Verdict::Indeterminate;
  out += "2. Train-set verdict\n\n";
  if (base_sharpe && opt_sharpe) {
    if (*opt_sharpe > *base_sharpe) {
      verdict = Verdict::Superior;
      out += "   The " + optimized_label +
             " portfolio is superior on the train set: its Sharpe ratio (" +
             value_or_dash(opt_train, "sharpe") +
             ") strictly exceeds the equal-weight Sharpe ratio (" +
             value_or_dash(base_train, "sharpe") + ").\n";
    } else {
      verdict = Verdict::NotSuperior;
      out += "   The " + optimized_label +
             " portfolio is not superior on the train set: its Sharpe ratio (" +
             value_or_dash(opt_train, "sharpe") +
             ") does not strictly exceed the equal-weight Sharpe ratio (" +
             value_or_dash(base_train, "sharpe") + ").\n";
    }
  } else {
    out += "   No verdict: the Sharpe ratio is undefined for at least one "
           "train-set portfolio.\n";
  }
  out += "\n";

  out += "3. Test-set metrics (" + optimized_label + " portfolio)\n\n";
  for (const auto& key : metrics_kv_keys())
    out += "   " + pad(key, 18) + value_or_dash(opt_test, key) + "\n";
  out += "\n";

  auto degradations = degraded_metrics(opt_train, opt_test, degradation_margin);
  out += "4. Generalization from train set to test set\n\n";
  if (degradations.empty()) {
    out += "   No metric degraded beyond the accepted relative margin.\n";
  } else {
    out += "   Metrics that degraded beyond the accepted relative margin:\n";
    for (const auto& d : degradations)
      out += "   - " + d.metric + ": train " + d.train_value + ", test " +
             d.test_value + "\n";
  }
  out += "\n";

  out += "5. Recommendation\n\n";
  switch (verdict) {
    case Verdict::Superior:
      if (degradations.empty()) {
        out += "   Adopt the " + optimized_label +
               " allocation. It beat the equal-weight baseline on the train "
               "set and held up on the test set within the accepted "
               "degradation margin. Re-estimate the weights as new data "
               "arrives.\n";
      } else {
        out += "   Adopt the " + optimized_label +
               " allocation with caution. It beat the equal-weight baseline "
               "on the train set, but the metrics flagged above weakened out "
               "of sample; monitor them and re-estimate the weights "
               "regularly.\n";
      }
      break;
    case Verdict::NotSuperior:
      out += "   Retain the equal-weight baseline. The " + optimized_label +
             " allocation did not achieve a strictly higher train-set Sharpe "
             "ratio.\n";
      break;
    case Verdict::Indeterminate:
      out += "   No recommendation. The train-set Sharpe ratio is undefined "
             "for at least one portfolio, so the strategies cannot be "
             "ranked.\n";
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// crew execution
// ---------------------------------------------------------------------------

namespace {

struct StageOutput {
  std::string payload;
  std::optional<std::string> halt_message;  // set when the run must stop here
};

struct StageSpec {
  std::string name;
  std::string schema;
  std::string filename;
  std::vector<std::string> inputs;
};

struct StageContext {
  const CrewPlan& plan;
  fs::path run_dir;
  std::string dataset_bytes;
  std::map<std::string, std::string> payloads;
  std::vector<std::string>* warnings = nullptr;
};

ReturnPanel full_panel_returns(const SplitPayload& split_payload) {
  return log_returns(concat_rows(split_payload.train, split_payload.test));
}

const WeightVector& weights_covering(const WeightSchedule& schedule,
                                     const std::string& date) {
  for (const auto& e : schedule.entries)
    if (e.start_date <= date && date <= e.end_date) return e.weights;
  return schedule.entries.back().weights;
}

StageOutput stage_loader(StageContext& ctx) {
  PricePanel panel = parse_prices_csv(ctx.dataset_bytes, {ctx.plan.delimiter});
  return {to_csv(panel, {ctx.plan.delimiter}), std::nullopt};
}

StageOutput stage_cleaner(StageContext& ctx) {
  PricePanel panel =
      parse_prices_csv(ctx.payloads.at("loader"), {ctx.plan.delimiter});
  CleanResult cleaned = clean_prices(panel);
  write_file(ctx.run_dir / kCleaningLogFile, cleaned.log.to_text());
  return {to_csv(cleaned.panel, {ctx.plan.delimiter}), std::nullopt};
}

StageOutput stage_splitter(StageContext& ctx) {
  PricePanel panel =
      parse_prices_csv(ctx.payloads.at("cleaner"), {ctx.plan.delimiter});
  PriceSplitPair pair = split(panel, ctx.plan.split_ratio);
  return {split_payload_text(pair, ctx.plan.delimiter), std::nullopt};
}

StageOutput stage_baseline_metrics(StageContext& ctx) {
  SplitPayload sp =
      parse_split_payload(ctx.payloads.at("splitter"), ctx.plan.delimiter);
  ReturnPanel full = full_panel_returns(sp);
  ReturnPanel train_returns = log_returns(sp.train);
  ReturnPanel test_returns = log_returns(sp.test);

  WeightVector equal = equal_weights(full.assets);
  BacktestResult bt = run_static(full, equal);
  PortfolioReturns train_series =
      slice_between(bt.portfolio_returns, train_returns.dates.front(),
                    train_returns.dates.back());
  PortfolioReturns test_series =
      slice_between(bt.portfolio_returns, test_returns.dates.front(),
                    test_returns.dates.back());

  MetricsReport train_report =
      full_report(train_series, &equal, nullptr, ctx.plan.metrics);
  MetricsReport test_report =
      full_report(test_series, &equal, &train_series, ctx.plan.metrics);
  return {metrics_pair_text(train_report, test_report), std::nullopt};
}

StageOutput stage_optimizer(StageContext& ctx) {
  SplitPayload sp =
      parse_split_payload(ctx.payloads.at("splitter"), ctx.plan.delimiter);
  ReturnPanel full = full_panel_returns(sp);

  WeightSchedule schedule;
  std::string header;
  if (ctx.plan.crew_id == CrewId::A) {
    ReturnPanel train_returns = log_returns(sp.train);
    OptimizationResult res =
        optimize_static(train_returns, ctx.plan.metrics, ctx.plan.optimizer);
    if (ctx.warnings)
      ctx.warnings->insert(ctx.warnings->end(), res.warnings.begin(),
                           res.warnings.end());
    schedule.entries.push_back({full.dates.front(), full.dates.back(),
                                res.weights,
                                res.fallback_used
                                    ? ScheduleEntry::Source::Fallback
                                    : ScheduleEntry::Source::Optimized});
    if (res.objective)
      header = "# objective " + text::format_full(*res.objective) + "\n";
  } else {
    schedule = optimize_rolling(full, ctx.plan.metrics, ctx.plan.optimizer,
                                ctx.plan.window, ctx.plan.holding);
  }
  return {header + to_delimited(schedule, ctx.plan.delimiter), std::nullopt};
}

StageOutput stage_optimized_metrics(StageContext& ctx) {
  SplitPayload sp =
      parse_split_payload(ctx.payloads.at("splitter"), ctx.plan.delimiter);
  ReturnPanel full = full_panel_returns(sp);
  ReturnPanel train_returns = log_returns(sp.train);
  ReturnPanel test_returns = log_returns(sp.test);

  WeightSchedule schedule =
      parse_schedule(ctx.payloads.at("optimizer"), ctx.plan.delimiter);
  BacktestResult bt = run_schedule(full, schedule);

  PortfolioReturns train_series =
      slice_between(bt.portfolio_returns, train_returns.dates.front(),
                    train_returns.dates.back());
  PortfolioReturns test_series =
      slice_between(bt.portfolio_returns, test_returns.dates.front(),
                    test_returns.dates.back());

  const WeightVector& train_final =
      weights_covering(schedule, train_returns.dates.back());
  const WeightVector& test_final =
      weights_covering(schedule, test_returns.dates.back());

  MetricsReport train_report =
      full_report(train_series, &train_final, nullptr, ctx.plan.metrics);
  MetricsReport test_report =
      full_report(test_series, &test_final, &train_series, ctx.plan.metrics);
  return {metrics_pair_text(train_report, test_report), std::nullopt};
}

StageOutput stage_checker(StageContext& ctx) {
  CheckReport report = check_artifacts(ctx.run_dir.string());
  StageOutput out{report.to_text(), std::nullopt};
  if (!report.pass) {
    std::string first;
    for (const auto& f : report.findings)
      if (f.severity == FindingSeverity::Error) {
        first = f.stage + ": " + f.message;
        break;
      }
    out.halt_message = "coherence check failed (" + first + ")";
  }
  return out;
}

}  // namespace

RunResult run_crew(const CrewPlan& plan, const std::string& dataset_path,
                   const std::string& run_dir) {
  plan.validate();
  fs::path dir(run_dir);
  fs::create_directories(dir);

  std::string dataset_bytes;
  {
    std::ifstream in(dataset_path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset: " + dataset_path);
    std::ostringstream buf;
    buf << in.rdbuf();
    dataset_bytes = buf.str();
  }

  std::string plan_text = serialize_plan(plan, sha256_hex(dataset_bytes));
  if (fs::exists(dir / kPlanFile)) {
    if (read_file(dir / kPlanFile) != plan_text)
      throw std::invalid_argument(
          "run directory holds a different run configuration; use a fresh "
          "directory");
  } else {
    write_file(dir / kPlanFile, plan_text);
  }
  fs::remove(dir / kFailureFile);

  // Artifacts from a previous attempt that still verify get reused.
  RunManifest prior;
  try {
    prior = load_manifest(run_dir);
  } catch (const IoError&) {
  }

  const std::vector<StageSpec> specs = {
      {"loader", "price-panel/v1", "loader.csv", {}},
      {"cleaner", "price-panel/v1", "cleaner.csv", {"loader"}},
      {"splitter", "price-split/v1", "splitter.txt", {"cleaner"}},
      {"baseline-metrics", "metrics-pair/v1", "baseline-metrics.txt", {"splitter"}},
      {"optimizer", "weight-schedule/v1", "optimizer.csv", {"splitter"}},
      {"optimized-metrics", "metrics-pair/v1", "optimized-metrics.txt",
       {"splitter", "optimizer"}},
      {"checker", "check-findings/v1", "checker.txt",
       {"loader", "cleaner", "splitter", "baseline-metrics", "optimizer",
        "optimized-metrics"}},
      {"final-report", "final-report/v1", "final-report.txt",
       {"baseline-metrics", "optimized-metrics", "checker"}},
  };

  RunResult result;
  StageContext ctx{plan, dir, std::move(dataset_bytes), {}, &result.warnings};
  bool chain_intact = true;

  for (std::size_t index = 0; index < specs.size(); ++index) {
    const StageSpec& spec = specs[index];
    std::vector<std::string> input_digests;
    for (const auto& input : spec.inputs)
      input_digests.push_back(result.manifest.find(input)->content_digest);

    bool reused = false;
    if (chain_intact && index < prior.artifacts.size()) {
      const StageArtifact& candidate = prior.artifacts[index];
      if (candidate.stage_name == spec.name &&
          candidate.schema_tag == spec.schema &&
          candidate.input_digests == input_digests &&
          fs::exists(dir / candidate.payload_path)) {
        std::string content = read_file(dir / candidate.payload_path);
        if (sha256_hex(content) == candidate.content_digest) {
          ctx.payloads[spec.name] = std::move(content);
          result.manifest.artifacts.push_back(candidate);
          reused = true;
        }
      }
    }

    if (!reused) {
      chain_intact = false;
      StageOutput output;
      auto fail = [&](const std::string& message) {
        write_file(dir / kFailureFile, "stage " + spec.name + "\n" + message + "\n");
        write_manifest(dir, result.manifest);
        throw StageError(spec.name, message);
      };
      try {
        if (spec.name == "loader") output = stage_loader(ctx);
        else if (spec.name == "cleaner") output = stage_cleaner(ctx);
        else if (spec.name == "splitter") output = stage_splitter(ctx);
        else if (spec.name == "baseline-metrics") output = stage_baseline_metrics(ctx);
        else if (spec.name == "optimizer") output = stage_optimizer(ctx);
        else if (spec.name == "optimized-metrics") output = stage_optimized_metrics(ctx);
        else if (spec.name == "checker") output = stage_checker(ctx);
        else {
          output.payload = render_final_report(result.manifest, run_dir,
                                               plan.crew_id,
                                               plan.degradation_margin);
        }
      } catch (const StageError&) {
        throw;
      } catch (const std::exception& e) {
        fail(e.what());
      }

      write_file(dir / spec.filename, output.payload);
      StageArtifact artifact;
      artifact.stage_name = spec.name;
      artifact.produced_at = now_utc_iso();
      artifact.input_digests = input_digests;
      artifact.content_digest = sha256_hex(output.payload);
      artifact.payload_path = spec.filename;
      artifact.schema_tag = spec.schema;
      ctx.payloads[spec.name] = output.payload;
      result.manifest.artifacts.push_back(std::move(artifact));
      write_manifest(dir, result.manifest);
      if (output.halt_message) fail(*output.halt_message);
    } else {
      write_manifest(dir, result.manifest);
    }
    result.stages.push_back({spec.name, reused});
  }

  result.final_report_text = ctx.payloads.at("final-report");
  // machine-readable sidecar mirrors the artifact values
  {
    auto baseline_sections =
        parse_metrics_pair(ctx.payloads.at("baseline-metrics"));
    auto optimized_sections =
        parse_metrics_pair(ctx.payloads.at("optimized-metrics"));
    std::string kv = "crew " + to_string(plan.crew_id) + "\n";
    auto emit = [&](const std::string& prefix,
                    const std::map<std::string, std::string>& section) {
      for (const auto& key : metrics_kv_keys())
        kv += prefix + "." + key + " " +
              (section.count(key) ? section.at(key) : "--") + "\n";
    };
    emit("baseline_train", baseline_sections.at("train"));
    emit("baseline_test", baseline_sections.at("test"));
    emit("optimized_train", optimized_sections.at("train"));
    emit("optimized_test", optimized_sections.at("test"));
    write_file(dir / kReportSidecarFile, kv);
  }
  return result;
}

RunMetrics load_run_metrics(const std::string& run_dir) {
  fs::path dir(run_dir);
  RunManifest manifest = load_manifest(run_dir);
  const StageArtifact* baseline = manifest.find("baseline-metrics");
  const StageArtifact* optimized = manifest.find("optimized-metrics");
  if (baseline == nullptr || optimized == nullptr)
    throw std::invalid_argument("run lacks metrics artifacts: " + run_dir);

  RunMetrics out;
  if (fs::exists(dir / kPlanFile)) {
    auto plan_kv = parse_kv_block(read_file(dir / kPlanFile));
    if (auto it = plan_kv.find("crew"); it != plan_kv.end() && it->second == "B")
      out.crew_id = CrewId::B;
  }
  auto baseline_sections = parse_metrics_pair(read_file(dir / baseline->payload_path));
  auto optimized_sections = parse_metrics_pair(read_file(dir / optimized->payload_path));
  out.baseline_train = baseline_sections.at("train");
  out.baseline_test = baseline_sections.at("test");
  out.optimized_train = optimized_sections.at("train");
  out.optimized_test = optimized_sections.at("test");
  return out;
}

PortfolioReturns recompute_test_series(const std::string& run_dir) {
  fs::path dir(run_dir);
  RunManifest manifest = load_manifest(run_dir);
  const StageArtifact* splitter = manifest.find("splitter");
  const StageArtifact* optimizer = manifest.find("optimizer");
  if (splitter == nullptr || optimizer == nullptr)
    throw std::invalid_argument("run lacks splitter/optimizer artifacts");

  char delimiter = ',';
  if (fs::exists(dir / kPlanFile)) {
    auto plan_kv = parse_kv_block(read_file(dir / kPlanFile));
    if (auto it = plan_kv.find("delimiter");
        it != plan_kv.end() && it->second.size() == 1)
      delimiter = it->second[0];
  }

  SplitPayload sp =
      parse_split_payload(read_file(dir / splitter->payload_path), delimiter);
  WeightSchedule schedule =
      parse_schedule(read_file(dir / optimizer->payload_path), delimiter);
  ReturnPanel full = full_panel_returns(sp);
  ReturnPanel test_returns = log_returns(sp.test);
  BacktestResult bt = run_schedule(full, schedule);
  return slice_between(bt.portfolio_returns, test_returns.dates.front(),
                       test_returns.dates.back());
}

}  // namespace crewfolio
