// End-to-end tests against the installed command-line binary.
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "crewfolio/market_data.hpp"
#include "doctest.h"
#include "support/fixtures.hpp"

namespace fs = std::filesystem;

namespace {

#ifndef CREWFOLIO_CLI_PATH
#error "CREWFOLIO_CLI_PATH must point at the built binary"
#endif

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::string& args,
                  const std::string& env_prefix = "") {
  static int counter = 0;
  fs::path base = fs::temp_directory_path() /
                  ("crewfolio-cli-io-" + std::to_string(::getpid()) + "-" +
                   std::to_string(counter++));
  std::string out_path = base.string() + ".out";
  std::string err_path = base.string() + ".err";
  std::string command = env_prefix + std::string(CREWFOLIO_CLI_PATH) + " " +
                        args + " >" + out_path + " 2>" + err_path;
  int status = std::system(command.c_str());
  CliResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = fixtures::read_file(out_path);
  result.err = fixtures::read_file(err_path);
  fs::remove(out_path);
  fs::remove(err_path);
  return result;
}

std::string make_dataset(const fixtures::TempDir& tmp, std::uint64_t seed,
                         std::size_t rows, std::size_t assets,
                         const std::string& name = "data.csv") {
  auto panel = fixtures::random_prices(seed, rows, assets);
  std::string path = tmp.sub(name);
  fixtures::write_file(path, crewfolio::to_csv(panel));
  return path;
}

}  // namespace

TEST_CASE("run a: report on stdout, eight artifacts, exit 0") {
  fixtures::TempDir tmp("clirun");
  std::string dataset = make_dataset(tmp, 201, 60, 3);
  CliResult result = run_cli("run a --data " + dataset + " --out " +
                             tmp.sub("run") + " --restarts 6");
  CHECK(result.exit_code == 0);
  CHECK(result.out.find("CREW A FINAL REPORT") != std::string::npos);
  int artifacts = 0;
  for (const char* name :
       {"loader.csv", "cleaner.csv", "splitter.txt", "baseline-metrics.txt",
        "optimizer.csv", "optimized-metrics.txt", "checker.txt",
        "final-report.txt"})
    if (fs::exists(fs::path(tmp.sub("run")) / name)) ++artifacts;
  CHECK(artifacts == 8);
}

TEST_CASE("usage errors exit 2") {
  fixtures::TempDir tmp("cliusage");
  CliResult missing_flag = run_cli("run a --out " + tmp.sub("x"));
  CHECK(missing_flag.exit_code == 2);

  CliResult missing_file = run_cli("run a --data " + tmp.sub("absent.csv") +
                                   " --out " + tmp.sub("y"));
  CHECK(missing_file.exit_code == 2);

  CliResult bad_crew = run_cli("run c --data x --out y");
  CHECK(bad_crew.exit_code == 2);

  CliResult no_args = run_cli("");
  CHECK(no_args.exit_code == 2);

  fixtures::TempDir data_tmp("cliratio");
  std::string dataset = make_dataset(data_tmp, 214, 30, 2);
  CliResult bad_ratio = run_cli("run a --data " + dataset + " --out " +
                                data_tmp.sub("r") + " --ratio 1.5");
  CHECK(bad_ratio.exit_code == 2);

  CliResult help = run_cli("--help");
  CHECK(help.exit_code == 0);
}

TEST_CASE("run b on a short panel fails at the optimizer stage with exit 1") {
  fixtures::TempDir tmp("clishort");
  std::string dataset = make_dataset(tmp, 202, 20, 3);
  CliResult result =
      run_cli("run b --data " + dataset + " --out " + tmp.sub("run"));
  CHECK(result.exit_code == 1);
  CHECK(result.err.find("optimizer") != std::string::npos);
}

TEST_CASE("check: clean run passes, tampering fails, no manifest is usage") {
  fixtures::TempDir tmp("clicheck");
  std::string dataset = make_dataset(tmp, 203, 60, 3);
  REQUIRE(run_cli("run a --data " + dataset + " --out " + tmp.sub("run") +
                  " --restarts 4")
              .exit_code == 0);

  CHECK(run_cli("check " + tmp.sub("run")).exit_code == 0);

  std::string payload = (fs::path(tmp.sub("run")) / "cleaner.csv").string();
  std::string content = fixtures::read_file(payload);
  content[content.size() / 2] ^= 1;
  fixtures::write_file(payload, content);
  CliResult tampered = run_cli("check " + tmp.sub("run"));
  CHECK(tampered.exit_code == 1);
  CHECK(tampered.out.find("cleaner") != std::string::npos);

  CHECK(run_cli("check " + tmp.sub("empty")).exit_code == 2);
}

TEST_CASE("compare: identical runs tie; tampered runs are refused") {
  fixtures::TempDir tmp("clicmp");
  std::string dataset = make_dataset(tmp, 204, 60, 3);
  REQUIRE(run_cli("run a --data " + dataset + " --out " + tmp.sub("run1") +
                  " --restarts 4 --seed 11")
              .exit_code == 0);
  REQUIRE(run_cli("run a --data " + dataset + " --out " + tmp.sub("run2") +
                  " --restarts 4 --seed 11")
              .exit_code == 0);

  CliResult cmp = run_cli("compare " + tmp.sub("run1") + " " + tmp.sub("run2"));
  CHECK(cmp.exit_code == 0);
  CHECK(cmp.out.find("dominance (train): tie") != std::string::npos);
  CHECK(cmp.out.find("dominance (test): tie") != std::string::npos);
  // Table-3 shape: seven metric rows per side
  int rows = 0;
  for (const char* key :
       {"expected_return", "volatility", "sharpe", "sortino", "max_drawdown",
        "liquidity_risk", "regime_change"})
    if (cmp.out.find(key) != std::string::npos) ++rows;
  CHECK(rows == 7);

  std::string payload = (fs::path(tmp.sub("run2")) / "optimizer.csv").string();
  std::string content = fixtures::read_file(payload);
  content += "#x\n";
  fixtures::write_file(payload, content);
  CliResult refused =
      run_cli("compare " + tmp.sub("run1") + " " + tmp.sub("run2"));
  CHECK(refused.exit_code == 1);
  CHECK(refused.err.find("refusing") != std::string::npos);
}

TEST_CASE("benchmark: identical series yield zero excess and tracking error") {
  fixtures::TempDir tmp("clibench");
  std::string dataset = make_dataset(tmp, 205, 60, 1);
  REQUIRE(run_cli("run a --data " + dataset + " --out " + tmp.sub("run"))
              .exit_code == 0);

  CliResult result = run_cli("benchmark " + tmp.sub("run") + " " + dataset);
  CHECK(result.exit_code == 0);
  CHECK(result.out.find("excess_return 0.0000") != std::string::npos);
  CHECK(result.out.find("tracking_error 0.0000") != std::string::npos);

  // disjoint dates: shift the benchmark far into the future
  auto panel = fixtures::random_prices(206, 30, 1);
  panel.dates = fixtures::date_range(30, 4000);
  std::string far = tmp.sub("far.csv");
  fixtures::write_file(far, crewfolio::to_csv(panel));
  CliResult disjoint = run_cli("benchmark " + tmp.sub("run") + " " + far);
  CHECK(disjoint.exit_code == 1);

  // multi-asset benchmark files are rejected
  std::string multi = make_dataset(tmp, 207, 30, 2, "multi.csv");
  CHECK(run_cli("benchmark " + tmp.sub("run") + " " + multi).exit_code == 1);
}

TEST_CASE("tools split writes both sides") {
  fixtures::TempDir tmp("clisplit");
  std::string dataset = make_dataset(tmp, 208, 20, 2);
  CliResult result =
      run_cli("tools split --data " + dataset + " --ratio 0.85 --train-out " +
              tmp.sub("train.csv") + " --test-out " + tmp.sub("test.csv"));
  CHECK(result.exit_code == 0);
  CHECK(result.out.find("train rows 17") != std::string::npos);
  CHECK(result.out.find("test rows 3") != std::string::npos);
  auto train = crewfolio::load_prices(tmp.sub("train.csv"));
  CHECK(train.rows() == 17);
}

TEST_CASE("tools metrics prints a kv block; weights file is honored") {
  fixtures::TempDir tmp("climetrics");
  std::string dataset = make_dataset(tmp, 209, 40, 2);
  CliResult equal = run_cli("tools metrics --data " + dataset);
  CHECK(equal.exit_code == 0);
  CHECK(equal.out.find("expected_return ") != std::string::npos);
  CHECK(equal.out.find("sharpe ") != std::string::npos);

  fixtures::write_file(tmp.sub("w.csv"), "A0,1.0\nA1,0.0\n");
  CliResult weighted =
      run_cli("tools metrics --data " + dataset + " --weights " + tmp.sub("w.csv"));
  CHECK(weighted.exit_code == 0);
  CHECK(weighted.out.find("liquidity_risk High") != std::string::npos);
}

TEST_CASE("tools optimize emits a parseable schedule") {
  fixtures::TempDir tmp("cliopt");
  std::string dataset = make_dataset(tmp, 210, 40, 3);
  CliResult result =
      run_cli("tools optimize --data " + dataset + " --restarts 4 --seed 2");
  CHECK(result.exit_code == 0);
  CHECK(result.out.find("start_date,end_date,ticker,weight") !=
        std::string::npos);

  CliResult rolling = run_cli("tools optimize --data " + dataset +
                              " --rolling --window 15 --holding 10 "
                              "--restarts 4 --seed 2");
  CHECK(rolling.exit_code == 0);
}

TEST_CASE("fixed seed reproduces identical stdout") {
  fixtures::TempDir tmp("clidet");
  std::string dataset = make_dataset(tmp, 211, 60, 3);
  CliResult a = run_cli("run a --data " + dataset + " --out " +
                        tmp.sub("run1") + " --seed 5 --restarts 4");
  CliResult b = run_cli("run a --data " + dataset + " --out " +
                        tmp.sub("run2") + " --seed 5 --restarts 4");
  REQUIRE(a.exit_code == 0);
  REQUIRE(b.exit_code == 0);
  CHECK(a.out == b.out);

  CliResult t1 = run_cli("tools optimize --data " + dataset + " --seed 7");
  CliResult t2 = run_cli("tools optimize --data " + dataset + " --seed 7");
  CHECK(t1.out == t2.out);
}

TEST_CASE("config file supplies flags and flags override it") {
  fixtures::TempDir tmp("clicfg");
  std::string dataset = make_dataset(tmp, 212, 60, 3);
  fixtures::write_file(tmp.sub("cfg.ini"), "[run]\ndata=\"" + dataset +
                                               "\"\nout=\"" + tmp.sub("run") +
                                               "\"\nseed=3\nrestarts=4\n");
  CliResult from_cfg = run_cli("--config " + tmp.sub("cfg.ini") + " run a");
  CHECK(from_cfg.exit_code == 0);
  std::string plan =
      fixtures::read_file((fs::path(tmp.sub("run")) / "plan.txt").string());
  CHECK(plan.find("seed 3") != std::string::npos);

  CliResult overridden = run_cli("--config " + tmp.sub("cfg.ini") +
                                 " run a --seed 9 --out " + tmp.sub("run9"));
  CHECK(overridden.exit_code == 0);
  std::string plan9 =
      fixtures::read_file((fs::path(tmp.sub("run9")) / "plan.txt").string());
  CHECK(plan9.find("seed 9") != std::string::npos);
}

TEST_CASE("environment variables feed options through the reserved prefix") {
  fixtures::TempDir tmp("clienv");
  std::string dataset = make_dataset(tmp, 213, 60, 3);
  CliResult result =
      run_cli("run a --data " + dataset + " --out " + tmp.sub("run"),
              "CREWFOLIO_SEED=6 ");
  CHECK(result.exit_code == 0);
  std::string plan =
      fixtures::read_file((fs::path(tmp.sub("run")) / "plan.txt").string());
  CHECK(plan.find("seed 6") != std::string::npos);
}
