#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "jdlab/estimate.hpp"
#include "jdlab/grid.hpp"
#include "jdlab/model.hpp"
#include "jdlab/sim.hpp"

namespace jdlab {

/// Experiment names in execution order when a scenario lists none.
const std::vector<std::string>& experiment_names();

/// A flat JSON object; every key is optional and unknown keys are rejected.
/// Zero for dt, epsilon, t_max, mesh_spacing or verify_spacing selects the
/// derived default (1e-3 R^2, R/5, 1e4 R^2, R/8, R/6).
struct Scenario {
  std::string model = "identity";
  int dim = 3;
  double c = 1.0;
  double alpha = 1.0;
  std::string potential = "zero";
  std::string boundary_data = "halfspace:0";
  double radius = 0.5;
  std::vector<double> center{0.0, 0.0, 0.0};

  double dt = 0.0;
  double epsilon = 0.0;
  std::string small_jumps = "diffusion-correction";
  bool bridge = true;
  bool truncated = false;
  double t_max = 0.0;

  std::uint64_t n_paths = 100000;
  double mesh_spacing = 0.0;
  double verify_spacing = 0.0;
  double exterior_factor = 3.0;

  int probes = 10;          // interior probes for MC/grid comparisons
  int harnack_probes = 30;  // probes in B(x_0, R/2)
  int boundary_probes = 20; // probes near Q for Carleson and BHP
  int poles = 20;           // conditional-gauge poles

  std::vector<std::string> experiments;  // empty: all, in the order of experiment_names()
  std::uint64_t seed = 1;
  std::string output;
  bool paper_mode = true;
  bool expect_refusal = false;

  bool operator==(const Scenario&) const = default;

  // Derived objects. These validate presets and throw ConfigError.
  OperatorModel make_operator() const;
  BallDomain domain() const;
  PathConfig path_config() const;
  McConfig mc_config(int workers) const;
  MeshConfig mesh_config() const;
  double mesh_h() const { return mesh_spacing > 0.0 ? mesh_spacing : radius / 8.0; }
  double verify_h() const { return verify_spacing > 0.0 ? verify_spacing : radius / 6.0; }
  std::vector<std::string> experiment_list() const;
};

/// Parses and range-checks; ConfigError messages name the offending key.
/// With validate = false only keys and types are checked, so that
/// command-line overrides can be applied before validate_scenario.
Scenario parse_scenario(const std::string& text, bool validate = true);
Scenario load_scenario(const std::string& path, bool validate = true);
/// Canonical form: every key, fixed order, two-space indentation.
std::string serialize_scenario(const Scenario& s);
/// Range and preset checks; paper mode requires both channels on and R <= 1/2.
void validate_scenario(const Scenario& s);

}  // namespace jdlab
