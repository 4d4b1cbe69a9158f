#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "jdlab/scenario.hpp"

namespace jdlab {

inline constexpr const char* kVersion = "0.1.0";

/// Exit statuses of the batch commands.
enum ExitStatus : int {
  kExitOk = 0,
  kExitExperimentError = 1,
  kExitVerdictFailed = 2,
  kExitRefusal = 3,  // a refusal that the scenario did not expect, or an expected one that did not occur
  kExitUsage = 64,
};

struct RunOptions {
  std::optional<std::uint64_t> seed;
  int workers = 1;
  std::string out;                  // overrides the scenario and the environment
  std::optional<bool> paper_mode;   // --paper-mode (true) / --diagnostic-ok (false)
  bool text = false;                // green: also write text triplets
};

/// Output directory: --out, else the scenario's "output", else
/// $JDLAB_OUT/<scenario stem>, else ./jdlab-out/<scenario stem>.
std::string resolve_output(const Scenario& s, const RunOptions& opt, const std::string& scenario_path);

/// Scenario file with command-line overrides applied and re-validated.
Scenario prepare_scenario(const std::string& path, const RunOptions& opt);

int run_command(const std::string& path, const RunOptions& opt, std::ostream& log);
int verify_command(const std::string& path, const RunOptions& opt, std::ostream& log);
int green_command(const std::string& path, const RunOptions& opt, std::ostream& log);
int report_command(const std::string& dir, std::ostream& out);

}  // namespace jdlab
