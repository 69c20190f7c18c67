#include "crewfolio/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "crewfolio/digest.hpp"
#include "crewfolio/errors.hpp"
#include "crewfolio/market_data.hpp"
#include "doctest.h"
#include "support/fixtures.hpp"

using namespace crewfolio;
namespace fs = std::filesystem;

namespace {

CrewPlan small_plan(CrewId crew, std::uint64_t seed = 0) {
  CrewPlan plan;
  plan.crew_id = crew;
  plan.optimizer.seed = seed;
  plan.optimizer.restarts = 6;
  return plan;
}

std::string write_dataset(const fixtures::TempDir& dir, std::uint64_t seed,
                          std::size_t rows, std::size_t assets,
                          const std::string& name = "data.csv") {
  auto panel = fixtures::random_prices(seed, rows, assets);
  std::string path = dir.sub(name);
  fixtures::write_file(path, to_csv(panel));
  return path;
}

// Re-point a manifest record at edited payload bytes so schema/coherence
// rules (not the digest rule) get exercised.
void rewrite_payload(const std::string& run_dir, const std::string& stage,
                     const std::string& filename,
                     const std::string& new_content) {
  fixtures::write_file((fs::path(run_dir) / filename).string(), new_content);
  std::string digest = sha256_hex(new_content);
  std::string manifest_path = (fs::path(run_dir) / "manifest").string();
  std::string body = fixtures::read_file(manifest_path);
  std::string rebuilt;
  std::istringstream lines(body);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.rfind(stage + "\t", 0) == 0) {
      std::size_t first = line.find('\t');
      std::size_t second = line.find('\t', first + 1);
      std::size_t third = line.find('\t', second + 1);
      line = line.substr(0, second + 1) + digest + line.substr(third);
    }
    rebuilt += line + "\n";
  }
  fixtures::write_file(manifest_path, rebuilt);
}

std::string metrics_pair_payload(
    const std::map<std::string, std::string>& train_overrides,
    const std::map<std::string, std::string>& test_overrides) {
  auto block = [](const std::map<std::string, std::string>& overrides) {
    std::map<std::string, std::string> kv = {
        {"expected_return", "0.1000"}, {"volatility", "0.1200"},
        {"sharpe", "0.8300"},          {"sortino", "1.1000"},
        {"max_drawdown", "-0.1500"},   {"liquidity_risk", "Low"},
        {"regime_change", "--"},       {"regime_statistic", "--"}};
    for (const auto& [k, v] : overrides) kv[k] = v;
    std::string out;
    for (const auto& key : metrics_kv_keys()) out += key + " " + kv[key] + "\n";
    return out;
  };
  return "# metrics-pair v1\n[train]\n" + block(train_overrides) + "[test]\n" +
         block(test_overrides);
}

}  // namespace

TEST_CASE("crew A produces eight artifacts and a final report") {
  fixtures::TempDir tmp("crewa");
  std::string dataset = write_dataset(tmp, 101, 60, 10);
  RunResult result = run_crew(small_plan(CrewId::A), dataset, tmp.sub("run"));

  REQUIRE(result.manifest.artifacts.size() == 8);
  const char* expected[] = {"loader",           "cleaner",
                            "splitter",         "baseline-metrics",
                            "optimizer",        "optimized-metrics",
                            "checker",          "final-report"};
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(result.manifest.artifacts[i].stage_name == expected[i]);
    CHECK_FALSE(result.manifest.artifacts[i].content_digest.empty());
    CHECK_FALSE(result.manifest.artifacts[i].produced_at.empty());
    CHECK(fs::exists(fs::path(tmp.sub("run")) /
                     result.manifest.artifacts[i].payload_path));
  }
  CHECK(result.final_report_text.find("CREW A FINAL REPORT") !=
        std::string::npos);
  CHECK(fs::exists(fs::path(tmp.sub("run")) / "final-report.kv"));
  CHECK(fs::exists(fs::path(tmp.sub("run")) / "cleaning.log"));

  // input digests reference earlier artifacts
  for (std::size_t i = 0; i < 8; ++i) {
    for (const auto& d : result.manifest.artifacts[i].input_digests) {
      bool seen = false;
      for (std::size_t j = 0; j < i; ++j)
        if (result.manifest.artifacts[j].content_digest == d) seen = true;
      CHECK(seen);
    }
  }
}

TEST_CASE("crew B halts at the optimizer stage on a short panel") {
  fixtures::TempDir tmp("short");
  std::string dataset = write_dataset(tmp, 102, 20, 3);
  CrewPlan plan = small_plan(CrewId::B);
  CHECK_THROWS_AS(run_crew(plan, dataset, tmp.sub("run")), StageError);
  try {
    run_crew(plan, dataset, tmp.sub("run2"));
  } catch (const StageError& e) {
    CHECK(e.stage() == "optimizer");
  }
  // prior artifacts and the failure record stay behind
  CHECK(fs::exists(fs::path(tmp.sub("run")) / "splitter.txt"));
  std::string failure =
      fixtures::read_file((fs::path(tmp.sub("run")) / "failure.txt").string());
  CHECK(failure.find("optimizer") != std::string::npos);
  RunManifest manifest = load_manifest(tmp.sub("run"));
  CHECK(manifest.artifacts.size() == 4);  // loader..baseline-metrics
}

TEST_CASE("reruns reproduce identical digests and payload bytes") {
  fixtures::TempDir tmp("replay");
  std::string dataset = write_dataset(tmp, 103, 130, 3);
  CrewPlan plan = small_plan(CrewId::B, 5);
  RunResult first = run_crew(plan, dataset, tmp.sub("run1"));
  RunResult second = run_crew(plan, dataset, tmp.sub("run2"));

  REQUIRE(first.manifest.artifacts.size() == second.manifest.artifacts.size());
  for (std::size_t i = 0; i < first.manifest.artifacts.size(); ++i) {
    const auto& a = first.manifest.artifacts[i];
    const auto& b = second.manifest.artifacts[i];
    CHECK(a.content_digest == b.content_digest);
    CHECK(fixtures::read_file(tmp.sub("run1") + "/" + a.payload_path) ==
          fixtures::read_file(tmp.sub("run2") + "/" + b.payload_path));
  }
}

TEST_CASE("resume reuses intact upstream stages") {
  fixtures::TempDir tmp("resume");
  std::string dataset = write_dataset(tmp, 104, 130, 3);
  CrewPlan plan = small_plan(CrewId::B, 9);
  RunResult first = run_crew(plan, dataset, tmp.sub("run"));

  fs::remove(fs::path(tmp.sub("run")) / "optimizer.csv");
  RunResult resumed = run_crew(plan, dataset, tmp.sub("run"));

  for (const auto& s : resumed.stages) {
    bool upstream = s.stage == "loader" || s.stage == "cleaner" ||
                    s.stage == "splitter" || s.stage == "baseline-metrics";
    CHECK(s.reused == upstream);
  }
  for (std::size_t i = 0; i < first.manifest.artifacts.size(); ++i)
    CHECK(resumed.manifest.artifacts[i].content_digest ==
          first.manifest.artifacts[i].content_digest);
}

TEST_CASE("a run dir cannot be reused with a different configuration") {
  fixtures::TempDir tmp("planmix");
  std::string dataset = write_dataset(tmp, 105, 60, 3);
  run_crew(small_plan(CrewId::A, 1), dataset, tmp.sub("run"));
  CHECK_THROWS_AS(run_crew(small_plan(CrewId::A, 2), dataset, tmp.sub("run")),
                  std::invalid_argument);
}

TEST_CASE("checks pass on an untampered run and stay idempotent") {
  fixtures::TempDir tmp("clean");
  std::string dataset = write_dataset(tmp, 106, 60, 4);
  run_crew(small_plan(CrewId::A), dataset, tmp.sub("run"));

  CheckReport report = check_artifacts(tmp.sub("run"));
  CHECK(report.pass);
  CHECK(report.findings.empty());

  CheckReport again = check_artifacts(tmp.sub("run"));
  CHECK(again.pass);
  CHECK(again.findings.empty());
}

TEST_CASE("a flipped payload byte fails the digest check naming the stage") {
  fixtures::TempDir tmp("tamper");
  std::string dataset = write_dataset(tmp, 107, 60, 3);
  run_crew(small_plan(CrewId::A), dataset, tmp.sub("run"));

  std::string path = (fs::path(tmp.sub("run")) / "optimizer.csv").string();
  std::string content = fixtures::read_file(path);
  content[content.size() / 2] ^= 1;
  fixtures::write_file(path, content);

  CheckReport report = check_artifacts(tmp.sub("run"));
  CHECK_FALSE(report.pass);
  bool named = false;
  for (const auto& f : report.findings)
    if (f.stage == "optimizer" && f.message.find("digest") != std::string::npos)
      named = true;
  CHECK(named);
}

TEST_CASE("weight payload breaking the simplex is a coherence finding") {
  fixtures::TempDir tmp("simplex");
  std::string dataset = write_dataset(tmp, 108, 60, 2);
  RunResult result = run_crew(small_plan(CrewId::A), dataset, tmp.sub("run"));

  // scale one weight so the entry sums to 1.2
  std::string content =
      fixtures::read_file((fs::path(tmp.sub("run")) / "optimizer.csv").string());
  WeightSchedule schedule = parse_schedule(content);
  schedule.entries[0].weights.weights[0] += 0.2;
  std::string tampered = to_delimited(schedule);
  rewrite_payload(tmp.sub("run"), "optimizer", "optimizer.csv", tampered);

  CheckReport report = check_artifacts(tmp.sub("run"));
  CHECK_FALSE(report.pass);
  bool found = false;
  for (const auto& f : report.findings)
    if (f.stage == "optimizer" &&
        f.message.find("simplex") != std::string::npos)
      found = true;
  CHECK(found);
  (void)result;
}

TEST_CASE("split sizes must sum to the cleaned input size") {
  fixtures::TempDir tmp("sumrule");
  std::string dataset = write_dataset(tmp, 109, 60, 2);
  run_crew(small_plan(CrewId::A), dataset, tmp.sub("run"));

  // drop the last row of the cleaned panel
  std::string content =
      fixtures::read_file((fs::path(tmp.sub("run")) / "cleaner.csv").string());
  PricePanel panel = parse_prices_csv(content);
  PricePanel shorter = slice_rows(panel, 0, panel.rows() - 1);
  rewrite_payload(tmp.sub("run"), "cleaner", "cleaner.csv", to_csv(shorter));

  CheckReport report = check_artifacts(tmp.sub("run"));
  CHECK_FALSE(report.pass);
  bool found = false;
  for (const auto& f : report.findings)
    if (f.stage == "splitter" && f.message.find("sum") != std::string::npos)
      found = true;
  CHECK(found);
}

TEST_CASE("metrics artifacts must carry every required key") {
  fixtures::TempDir tmp("keys");
  std::string dataset = write_dataset(tmp, 110, 60, 2);
  run_crew(small_plan(CrewId::A), dataset, tmp.sub("run"));

  std::string path =
      (fs::path(tmp.sub("run")) / "baseline-metrics.txt").string();
  std::string content = fixtures::read_file(path);
  std::string needle = "sharpe ";
  std::size_t pos = content.find(needle);
  REQUIRE(pos != std::string::npos);
  std::size_t eol = content.find('\n', pos);
  content.erase(pos, eol - pos + 1);
  rewrite_payload(tmp.sub("run"), "baseline-metrics", "baseline-metrics.txt",
                  content);

  CheckReport report = check_artifacts(tmp.sub("run"));
  CHECK_FALSE(report.pass);
  bool found = false;
  for (const auto& f : report.findings)
    if (f.stage == "baseline-metrics" &&
        f.message.find("sharpe") != std::string::npos)
      found = true;
  CHECK(found);
}

TEST_CASE("report numerals must match a metrics artifact value") {
  fixtures::TempDir tmp("numerals");
  std::string dataset = write_dataset(tmp, 111, 60, 2);
  run_crew(small_plan(CrewId::A), dataset, tmp.sub("run"));

  std::string path = (fs::path(tmp.sub("run")) / "final-report.txt").string();
  std::string content = fixtures::read_file(path);
  // append a sentence with a numeral no metrics artifact contains
  content += "\nFabricated figure: 9.9999 should be rejected.\n";
  rewrite_payload(tmp.sub("run"), "final-report", "final-report.txt", content);

  CheckReport report = check_artifacts(tmp.sub("run"));
  CHECK_FALSE(report.pass);
  bool found = false;
  for (const auto& f : report.findings)
    if (f.stage == "final-report" &&
        f.message.find("9.9999") != std::string::npos)
      found = true;
  CHECK(found);
}

TEST_CASE("input digests must reference earlier artifacts") {
  fixtures::TempDir tmp("meta");
  std::string dataset = write_dataset(tmp, 112, 60, 2);
  run_crew(small_plan(CrewId::A), dataset, tmp.sub("run"));

  std::string meta_path = (fs::path(tmp.sub("run")) / "manifest.meta").string();
  std::string meta = fixtures::read_file(meta_path);
  std::size_t pos = meta.find("cleaner\t");
  REQUIRE(pos != std::string::npos);
  std::size_t tab = meta.find('\t', meta.find('\t', pos) + 1);
  std::size_t eol = meta.find('\n', tab);
  meta = meta.substr(0, tab + 1) + std::string(64, 'f') + meta.substr(eol);
  fixtures::write_file(meta_path, meta);

  CheckReport report = check_artifacts(tmp.sub("run"));
  CHECK_FALSE(report.pass);
  bool found = false;
  for (const auto& f : report.findings)
    if (f.stage == "cleaner" &&
        f.message.find("input digest") != std::string::npos)
      found = true;
  CHECK(found);
}

TEST_CASE("checking a directory without a manifest raises IoError") {
  fixtures::TempDir tmp("nomanifest");
  CHECK_THROWS_AS(check_artifacts(tmp.str()), IoError);
}

TEST_CASE("final report verdict and degradation rules") {
  fixtures::TempDir tmp("render");
  RunManifest manifest;
  manifest.artifacts.push_back({"baseline-metrics", "t", {}, "d",
                                "baseline-metrics.txt", "metrics-pair/v1"});
  manifest.artifacts.push_back({"optimized-metrics", "t", {}, "d",
                                "optimized-metrics.txt", "metrics-pair/v1"});

  SUBCASE("strictly higher train Sharpe wins the verdict") {
    fixtures::write_file(tmp.sub("baseline-metrics.txt"),
                         metrics_pair_payload({{"sharpe", "0.5300"}}, {}));
    fixtures::write_file(
        tmp.sub("optimized-metrics.txt"),
        metrics_pair_payload({{"sharpe", "0.8300"}}, {{"sharpe", "0.8300"}}));
    std::string report = render_final_report(manifest, tmp.str(), CrewId::A, 0.10);
    CHECK(report.find("is superior on the train set") != std::string::npos);
    CHECK(report.find("(0.8300)") != std::string::npos);
    CHECK(report.find("(0.5300)") != std::string::npos);
    CHECK(report.find("No metric degraded") != std::string::npos);
    CHECK(report.find("Adopt the optimized allocation.") != std::string::npos);
  }

  SUBCASE("equal Sharpe is not superior") {
    fixtures::write_file(tmp.sub("baseline-metrics.txt"),
                         metrics_pair_payload({{"sharpe", "0.8300"}}, {}));
    fixtures::write_file(tmp.sub("optimized-metrics.txt"),
                         metrics_pair_payload({{"sharpe", "0.8300"}}, {}));
    std::string report = render_final_report(manifest, tmp.str(), CrewId::A, 0.10);
    CHECK(report.find("not superior") != std::string::npos);
    CHECK(report.find("Retain the equal-weight baseline") != std::string::npos);
  }

  SUBCASE("drawdown beyond the relative margin is flagged") {
    fixtures::write_file(tmp.sub("baseline-metrics.txt"),
                         metrics_pair_payload({{"sharpe", "0.5300"}}, {}));
    fixtures::write_file(tmp.sub("optimized-metrics.txt"),
                         metrics_pair_payload({{"max_drawdown", "-0.1500"}},
                                              {{"max_drawdown", "-0.1800"}}));
    std::string report = render_final_report(manifest, tmp.str(), CrewId::A, 0.10);
    CHECK(report.find("- max_drawdown: train -0.1500, test -0.1800") !=
          std::string::npos);
    CHECK(report.find("with caution") != std::string::npos);
  }

  SUBCASE("undefined Sharpe leaves the verdict open") {
    fixtures::write_file(tmp.sub("baseline-metrics.txt"),
                         metrics_pair_payload({{"sharpe", "--"}}, {}));
    fixtures::write_file(tmp.sub("optimized-metrics.txt"),
                         metrics_pair_payload({}, {}));
    std::string report = render_final_report(manifest, tmp.str(), CrewId::A, 0.10);
    CHECK(report.find("No verdict") != std::string::npos);
    CHECK(report.find("No recommendation") != std::string::npos);
  }
}

TEST_CASE("run metrics and the recomputed test series line up") {
  fixtures::TempDir tmp("load");
  auto panel = fixtures::random_prices(113, 130, 3);
  std::string dataset = tmp.sub("data.csv");
  fixtures::write_file(dataset, to_csv(panel));
  CrewPlan plan = small_plan(CrewId::B, 3);
  run_crew(plan, dataset, tmp.sub("run"));

  RunMetrics metrics = load_run_metrics(tmp.sub("run"));
  CHECK(metrics.crew_id == CrewId::B);
  for (const auto& key : metrics_kv_keys()) {
    CHECK(metrics.baseline_train.count(key) == 1);
    CHECK(metrics.optimized_test.count(key) == 1);
  }

  PortfolioReturns series = recompute_test_series(tmp.sub("run"));
  auto prices_split = split(panel, plan.split_ratio);
  ReturnPanel test_returns = log_returns(prices_split.test);
  CHECK(series.size() == test_returns.rows());
  CHECK(series.dates.front() == test_returns.dates.front());
  CHECK(series.dates.back() == test_returns.dates.back());
}

TEST_CASE("crews differ only in the optimizer stage") {
  fixtures::TempDir tmp("abdiff");
  std::string dataset = write_dataset(tmp, 114, 130, 3);
  RunResult a = run_crew(small_plan(CrewId::A, 4), dataset, tmp.sub("runa"));
  RunResult b = run_crew(small_plan(CrewId::B, 4), dataset, tmp.sub("runb"));

  // everything upstream of the optimizer is byte-identical across crews
  for (const char* stage : {"loader", "cleaner", "splitter"}) {
    CHECK(a.manifest.find(stage)->content_digest ==
          b.manifest.find(stage)->content_digest);
  }
  CHECK(a.manifest.find("baseline-metrics")->content_digest ==
        b.manifest.find("baseline-metrics")->content_digest);
  CHECK(a.manifest.find("optimizer")->content_digest !=
        b.manifest.find("optimizer")->content_digest);
}
