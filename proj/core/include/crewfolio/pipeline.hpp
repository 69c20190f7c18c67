#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crewfolio/metrics.hpp"
#include "crewfolio/optimizer.hpp"

namespace crewfolio {

enum class CrewId { A, B };

std::string to_string(CrewId id);

/// Stage chain shared by both crews: loader -> cleaner -> splitter ->
/// baseline-metrics -> optimizer -> optimized-metrics -> checker ->
/// final-report. The crews differ only in the optimizer stage: crew A fits
/// one static allocation on the train set, crew B re-fits on a rolling
/// window over the whole panel.
struct CrewPlan {
  CrewId crew_id = CrewId::A;
  MetricsConfig metrics;
  OptimizerConfig optimizer;
  double split_ratio = 0.8;
  int window = 30;
  int holding = 30;
  char delimiter = ',';
  double degradation_margin = 0.10;  // relative, for report generalization flags

  void validate() const;
};

/// Persisted, checksummed output of one stage; the audit-trail unit.
/// produced_at is excluded from all digests.
struct StageArtifact {
  std::string stage_name;
  std::string produced_at;  // ISO-8601 UTC
  std::vector<std::string> input_digests;
  std::string content_digest;
  std::string payload_path;  // relative to the run directory
  std::string schema_tag;
};

struct RunManifest {
  std::string algorithm = "sha256";
  std::vector<StageArtifact> artifacts;

  const StageArtifact* find(const std::string& stage_name) const;
};

struct StageStatus {
  std::string stage;
  bool reused = false;  // intact artifact from a previous run was kept
};

struct RunResult {
  RunManifest manifest;
  std::string final_report_text;
  std::vector<StageStatus> stages;
  std::vector<std::string> warnings;
};

/// Execute the plan against a dataset, persisting one artifact per stage
/// under run_dir. Reruns with identical dataset bytes, config and seed
/// reproduce identical digests; a rerun over a partially intact run_dir
/// reuses every stage whose artifact still verifies. A stage failure leaves
/// prior artifacts in place, records the stage in run_dir/failure.txt and
/// throws StageError.
RunResult run_crew(const CrewPlan& plan, const std::string& dataset_path,
                   const std::string& run_dir);

enum class FindingSeverity { Error, Warning };

struct Finding {
  FindingSeverity severity = FindingSeverity::Error;
  std::string stage;
  std::string message;
};

struct CheckReport {
  bool pass = true;
  std::vector<Finding> findings;

  std::string to_text() const;
};

/// Validate a run directory: digests match payload bytes, payloads parse
/// under their schema tags, split sizes sum to the input size, weight
/// artifacts satisfy the simplex invariants, metrics artifacts carry all
/// required keys, every numeral in the final report string-matches a
/// metrics-artifact value, and input digests reference earlier artifacts.
/// Findings are the result; nothing throws except a missing/unreadable
/// manifest (IoError).
CheckReport check_artifacts(const std::string& run_dir);

RunManifest load_manifest(const std::string& run_dir);

/// Render the five-section final report (comparison, train verdict, test
/// metrics, generalization, recommendation) from the baseline and optimized
/// metrics artifacts. Every numeral in the text is copied verbatim from an
/// artifact value.
std::string render_final_report(const RunManifest& manifest,
                                const std::string& run_dir, CrewId crew_id,
                                double degradation_margin);

/// Displayed metric blocks of a finished run, keyed by section.
struct RunMetrics {
  CrewId crew_id = CrewId::A;
  std::map<std::string, std::string> baseline_train;
  std::map<std::string, std::string> baseline_test;
  std::map<std::string, std::string> optimized_train;
  std::map<std::string, std::string> optimized_test;
};

RunMetrics load_run_metrics(const std::string& run_dir);

/// Rebuild the out-of-sample portfolio series of a finished run from its
/// cleaner, splitter and optimizer artifacts (all computation is
/// deterministic, so the series is exact).
PortfolioReturns recompute_test_series(const std::string& run_dir);

}  // namespace crewfolio
