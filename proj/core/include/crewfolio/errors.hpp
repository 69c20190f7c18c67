#pragma once

#include <stdexcept>
#include <string>

namespace crewfolio {

/// File-system problems: missing datasets, unreadable run directories.
/// The CLI maps these to exit code 2 (usage/IO), everything else to 1.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A metric that has no defined value for the given series, e.g. the Sharpe
/// ratio of a zero-variance portfolio. Reports render these as "--".
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised by run_crew when a stage fails; carries the stage name so callers
/// can report which step of the pipeline broke.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& message)
      : std::runtime_error("stage '" + stage + "': " + message),
        stage_(std::move(stage)) {}

  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace crewfolio
