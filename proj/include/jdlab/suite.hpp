#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "jdlab/report.hpp"
#include "jdlab/scenario.hpp"

namespace jdlab {

/// PASS / FAIL for checked criteria, INFO for reported-only values, REFUSED
/// for a constructed refusal such as NotGaugeable.
struct Verdict {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  std::string relation;  // "<=", ">=", "==", "" for INFO
  std::string status;
};

struct ExperimentResult {
  std::string name;
  std::string level;            // "" for run, "coarse" / "fine" for verify
  std::string status = "ok";    // ok, refused, error
  std::string error;
  std::uint64_t seed = 0;
  std::vector<Table> tables;
  std::map<std::string, double> constants;
  std::vector<Verdict> verdicts;

  bool failed() const;
};

/// Mesh spacing, path budget and the fixed physical separation used for
/// pair-restricted Green bounds.
struct Budget {
  std::string level;
  double h = 0.0;
  std::uint64_t n_paths = 0;
  double min_separation = 0.0;
};

struct StabilityRow {
  std::string experiment;
  std::string constant;
  double coarse = 0.0;
  double fine = 0.0;
  double relative_change = 0.0;
  std::string status;
};

/// Runs named experiments for one scenario. Grid factorizations are cached
/// per spacing; paths use per-experiment seeds derived from the master seed.
class Lab {
 public:
  Lab(Scenario scenario, int workers);
  ~Lab();

  const Scenario& scenario() const { return scenario_; }
  Budget run_budget() const;
  std::pair<Budget, Budget> verify_budgets() const;

  /// Never throws for estimator or oracle failures: they land in the result.
  ExperimentResult run(const std::string& experiment, const Budget& budget);

  /// Seed used for an experiment's paths.
  std::uint64_t experiment_seed(const std::string& experiment) const;

 private:
  struct Impl;
  Scenario scenario_;
  int workers_;
  std::unique_ptr<Impl> impl_;
};

/// Constants compared between the two verify levels (relative change < 20%).
const std::vector<std::pair<std::string, std::string>>& stability_constants();

std::vector<StabilityRow> stability_rows(const std::vector<ExperimentResult>& coarse,
                                         const std::vector<ExperimentResult>& fine, double tolerance = 0.2);

}  // namespace jdlab
