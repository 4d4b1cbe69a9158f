// Acceptance run: one PASS/FAIL line per criterion, details indented above it.
// Exit status 0 only when every criterion passes.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "jdlab/error.hpp"
#include "jdlab/grid.hpp"
#include "jdlab/report.hpp"
#include "jdlab/scenario.hpp"
#include "jdlab/suite.hpp"

using namespace jdlab;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int workers() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

class Criterion {
 public:
  Criterion(int id, std::string title) : id_(id), title_(std::move(title)), start_(Clock::now()) {}

  void need(bool ok, const std::string& what) {
    pass_ = pass_ && ok;
    std::cout << "  " << (ok ? "ok  " : "FAIL") << "  " << what << "\n" << std::flush;
  }
  void note(const std::string& what) { std::cout << "        " << what << "\n" << std::flush; }

  // A verdict produced by the suite; missing verdicts fail.
  void verdict(const ExperimentResult& r, const std::string& name) {
    for (const auto& v : r.verdicts) {
      if (v.name != name) continue;
      std::ostringstream s;
      s << r.name;
      if (!r.level.empty()) s << " [" << r.level << "]";
      s << ' ' << name << " = " << format_double(v.value) << ' ' << v.relation << ' ' << format_double(v.threshold);
      need(v.status == "PASS", s.str());
      return;
    }
    need(false, r.name + " " + name + ": verdict missing (status " + r.status + (r.error.empty() ? "" : ", " + r.error) + ")");
  }

  void ok_status(const ExperimentResult& r) {
    need(r.status == "ok", r.name + (r.level.empty() ? "" : " [" + r.level + "]") + " status " + r.status +
                               (r.error.empty() ? "" : " (" + r.error + ")"));
  }

  bool finish() {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f s", seconds_since(start_));
    std::cout << (pass_ ? "PASS" : "FAIL") << " [" << id_ << "] " << title_ << " (" << buf << ")\n\n" << std::flush;
    return pass_;
  }

 private:
  int id_;
  std::string title_;
  Clock::time_point start_;
  bool pass_ = true;
};

Scenario scenario(const std::string& name) { return load_scenario(std::string(JDLAB_SCENARIOS) + "/" + name); }

std::string num(double v) { return format_double(v); }

double constant(const ExperimentResult& r, const std::string& key) {
  const auto it = r.constants.find(key);
  return it == r.constants.end() ? std::numeric_limits<double>::quiet_NaN() : it->second;
}

bool brownian_diagnostics() {
  Criterion c(1, "Brownian diagnostics on B(0,1): exit time, cap uniformity, Green row vs image charge");
  Lab lab(scenario("brownian.json"), workers());
  const Budget b = lab.run_budget();
  const auto t0 = Clock::now();
  const ExperimentResult exit = lab.run("exit-time", b);
  const double elapsed = seconds_since(t0);
  c.ok_status(exit);
  c.note("E tau = " + num(constant(exit, "tau_mc")) + " (exact 1/3), " + std::to_string(b.n_paths) + " paths");
  c.verdict(exit, "brownian_exit_time_z");
  c.need(elapsed <= 60.0, "exit-time runtime " + num(elapsed) + " s <= 60 s");
  const ExperimentResult hm = lab.run("harmonic-measure", b);
  c.ok_status(hm);
  c.verdict(hm, "cap_uniformity_p");
  const ExperimentResult gb = lab.run("green-bounds", b);
  c.ok_status(gb);
  c.verdict(gb, "green_row_vs_image_charge");
  c.note("cells at distance >= 4h from the pole are compared");
  return c.finish();
}

bool structural_identities() {
  Criterion c(2, "Structural identities on the default non-local grid");
  Scenario s = scenario("default.json");
  s.experiments = {"identities"};
  const auto t0 = Clock::now();
  Lab lab(s, workers());
  const ExperimentResult r = lab.run("identities", lab.run_budget());
  const double elapsed = seconds_since(t0);
  c.ok_status(r);
  c.note("interior cells: " + num(constant(r, "cells")));
  for (const char* v : {"green_symmetry", "conservation", "levy_all_exterior", "levy_far_field", "levy_matches_jump_exit",
                        "density_chain_gap", "density_relative_gap"})
    c.verdict(r, v);
  c.need(elapsed <= 120.0, "runtime " + num(elapsed) + " s <= 120 s");
  return c.finish();
}

bool oracle_equivalence() {
  Criterion c(3, "Monte Carlo vs grid oracle: Dirichlet, gauge (q = -0.5), Schrodinger (bump q)");
  {
    Lab lab(scenario("oracle.json"), workers());
    for (const char* e : {"dirichlet", "gauge"}) {
      const ExperimentResult r = lab.run(e, lab.run_budget());
      c.ok_status(r);
      c.verdict(r, "mc_grid_agreement_fraction");
    }
  }
  Scenario s = scenario("schrodinger.json");
  s.experiments = {"schrodinger"};
  s.probes = 10;
  Lab lab(s, workers());
  const ExperimentResult r = lab.run("schrodinger", lab.run_budget());
  c.ok_status(r);
  c.verdict(r, "mc_grid_agreement_fraction");
  c.note("10 probes, 1e5 paths per probe, tolerance 3 se + 10% of the grid value");
  return c.finish();
}

bool gauge_theory() {
  Criterion c(4, "Gauge: q = 0 exactness, Khasminskii sweep, refusal at the spectral threshold");
  Scenario zero = scenario("default.json");
  zero.n_paths = 20000;
  {
    Lab lab(zero, workers());
    const ExperimentResult r = lab.run("gauge", lab.run_budget());
    c.ok_status(r);
    c.verdict(r, "zero_potential_gauge_is_one");
  }

  // Constant q = v: E^x int |q| = v E^x tau, so eta = v max E tau on the grid.
  const BallDomain ball = zero.domain();
  const DiscreteGenerator gen = assemble_generator(zero.make_operator(), ball, build_mesh(ball, zero.mesh_config()));
  const GreenMatrix green = green_matrix(gen);
  const double max_tau = green.solve(Eigen::VectorXd::Ones(static_cast<int>(gen.mesh().size()))).maxCoeff();
  c.note("max E tau on the grid = " + num(max_tau));
  for (double eta : {0.25, 0.5, 0.75}) {
    Scenario s = zero;
    s.potential = "const:" + num(eta / max_tau);
    Lab lab(s, workers());
    const ExperimentResult r = lab.run("gauge", lab.run_budget());
    c.ok_status(r);
    c.note("eta target " + num(eta) + ": MC eta " + num(constant(r, "eta")) + ", bound " +
           num(constant(r, "khasminskii_bound")) + ", max gauge MC " + num(constant(r, "max_gauge_mc")) + "; grid eta " +
           num(constant(r, "eta_grid")) + ", bound " + num(constant(r, "khasminskii_bound_grid")) + ", max gauge grid " +
           num(constant(r, "max_gauge_grid")));
    c.verdict(r, "mc_gauge_within_bound");
    c.verdict(r, "grid_gauge_within_bound");
  }

  // The Neumann radius is linear in v for constant q, so rho(1) places the threshold.
  const double rho1 = neumann_radius(green, Eigen::VectorXd::Ones(static_cast<int>(gen.mesh().size())));
  const GaugeResult below = gauge_grid(gen, green, constant_potential(0.98 / rho1));
  const GaugeResult above = gauge_grid(gen, green, constant_potential(1.02 / rho1));
  c.need(below.gaugeable && below.spectral_radius < 1.0,
         "q = 0.98 / rho(1): gaugeable, radius " + num(below.spectral_radius));
  c.need(!above.gaugeable && above.spectral_radius >= 1.0,
         "q = 1.02 / rho(1): refused, radius " + num(above.spectral_radius));
  Scenario big = scenario("not-gaugeable.json");
  big.experiments = {"gauge"};
  Lab lab(big, workers());
  const ExperimentResult r = lab.run("gauge", lab.run_budget());
  c.need(r.status == "refused" && r.error == "NotGaugeable",
         "scenario " + big.potential + ": status " + r.status + " " + r.error + ", radius " +
             num(constant(r, "spectral_radius")));
  return c.finish();
}

bool inequality_stability() {
  Criterion c(5, "Inequality constants stable under h -> h/2 and 1e5 -> 4e5 paths; Harnack MC vs grid");
  const Scenario s = scenario("schrodinger.json");
  Lab lab(s, workers());
  const auto [coarse_b, fine_b] = lab.verify_budgets();
  c.note("grid h " + num(coarse_b.h) + " -> " + num(fine_b.h) + ", paths " + std::to_string(coarse_b.n_paths) + " -> " +
         std::to_string(fine_b.n_paths));
  std::vector<ExperimentResult> coarse, fine;
  for (const auto& e : s.experiment_list()) coarse.push_back(lab.run(e, coarse_b));
  for (const auto& e : s.experiment_list()) fine.push_back(lab.run(e, fine_b));
  for (const auto& r : coarse) c.ok_status(r);
  for (const auto& r : fine) c.ok_status(r);
  const auto rows = stability_rows(coarse, fine);
  std::map<std::string, int> seen;
  for (const auto& row : rows) {
    ++seen[row.experiment];
    c.need(row.status == "PASS", row.experiment + "." + row.constant + ": " + num(row.coarse) + " -> " +
                                     num(row.fine) + ", change " + num(row.relative_change) + " < 0.2");
  }
  for (const char* e : {"harnack", "carleson", "bhp", "3g", "green-bounds", "boundary-decay", "exit-linearity"})
    c.need(seen[e] > 0, std::string(e) + " has stability rows");
  const ExperimentResult h = lab.run("harnack", lab.run_budget());
  c.ok_status(h);
  c.note("default budget: ratio MC " + num(constant(h, "ratio_mc")) + ", grid " + num(constant(h, "ratio_grid")));
  c.verdict(h, "mc_grid_ratio_gap");
  return c.finish();
}

bool conditional_gauge() {
  Criterion c(6, "Conditional gauge: F = 1 for q = 0, two-sided bounds for small eta");
  Scenario zero = scenario("default.json");
  zero.experiments = {"conditional-gauge"};
  {
    Lab lab(zero, workers());
    const ExperimentResult r = lab.run("conditional-gauge", lab.run_budget());
    c.ok_status(r);
    c.verdict(r, "zero_potential_min_is_one");
    c.verdict(r, "zero_potential_max_is_one");
  }
  Lab lab(scenario("conditional-gauge.json"), workers());
  const ExperimentResult r = lab.run("conditional-gauge", lab.run_budget());
  c.ok_status(r);
  c.need(constant(r, "poles") == 20.0, "poles: " + num(constant(r, "poles")));
  c.need(constant(r, "eta_grid") < 0.1, "eta on the grid " + num(constant(r, "eta_grid")) + " < 0.1");
  c.note("F in [" + num(constant(r, "min_f")) + ", " + num(constant(r, "max_f")) + "]");
  c.verdict(r, "min_f_positive");
  c.verdict(r, "max_f_finite");
  c.verdict(r, "two_sided_spread");
  return c.finish();
}

std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char ch : s) h = (h ^ ch) * 1099511628211ull;
  return h;
}

std::map<std::string, std::string> csv_bodies(const fs::path& dir) {
  std::map<std::string, std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.path().extension() != ".csv") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    out[fs::relative(e.path(), dir).string()] = buf.str();
  }
  return out;
}

std::uint64_t digest(const std::map<std::string, std::string>& bodies) {
  std::uint64_t h = fnv1a("");
  for (const auto& [name, body] : bodies) h = fnv1a(body, fnv1a(name, h));
  return h;
}

bool determinism() {
  Criterion c(7, "verify is byte-deterministic across repeats and 1, 4, 8 workers");
  const fs::path root = fs::temp_directory_path() / ("jdlab-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(root);
  const std::string file = std::string(JDLAB_SCENARIOS) + "/determinism.json";
  std::vector<std::pair<std::string, std::map<std::string, std::string>>> runs;
  for (const auto& [label, w] : std::vector<std::pair<std::string, int>>{{"1a", 1}, {"1b", 1}, {"4", 4}, {"8", 8}}) {
    const fs::path out = root / label;
    const std::string cmd = std::string(JDLAB_CLI) + " verify " + file + " --workers " + std::to_string(w) + " --out " +
                            out.string() + " > " + (root / (label + ".log")).string() + " 2>&1";
    fs::create_directories(root);
    const int raw = std::system(cmd.c_str());
    const int status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    auto bodies = csv_bodies(out);
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(digest(bodies)));
    c.note("workers " + std::to_string(w) + ": exit " + std::to_string(status) + ", " + std::to_string(bodies.size()) +
           " csv files, digest " + hex);
    c.need(status == 0 || status == 2, "verify run " + label + " completed");
    runs.emplace_back(label, std::move(bodies));
  }
  c.need(runs[0].second.size() > 20, "verify wrote " + std::to_string(runs[0].second.size()) + " csv files");
  for (std::size_t k = 1; k < runs.size(); ++k)
    c.need(runs[k].second == runs[0].second, "run " + runs[k].first + " identical to run " + runs[0].first);
  fs::remove_all(root);
  return c.finish();
}

}  // namespace

int main(int argc, char** argv) {
  // Optional criterion numbers on the command line select a subset.
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  const std::vector<std::function<bool()>> all{brownian_diagnostics, structural_identities, oracle_equivalence,
                                               gauge_theory,         inequality_stability,  conditional_gauge,
                                               determinism};
  int failed = 0;
  for (std::size_t k = 0; k < all.size(); ++k) {
    if (!only.empty() && std::find(only.begin(), only.end(), static_cast<int>(k + 1)) == only.end()) continue;
    try {
      failed += !all[k]();
    } catch (const std::exception& e) {
      std::cout << "FAIL [" << k + 1 << "] aborted: " << e.what() << "\n\n";
      ++failed;
    }
  }
  std::cout << (failed ? "FAILED " : "ALL PASSED ") << failed << " criterion failures\n";
  return failed ? 1 : 0;
}
