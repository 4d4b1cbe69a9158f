#include <iostream>

#include "CLI11.hpp"
#include "jdlab/error.hpp"
#include "jdlab/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Jump-diffusion lab: Feynman-Kac Monte Carlo, grid oracle and inequality checks"};
  app.require_subcommand(1);
  jdlab::RunOptions opt;
  std::uint64_t seed = 0;
  bool paper = false;
  bool diagnostic = false;
  std::string file;
  std::string dir;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("scenario", file, "Scenario file (JSON)")->required();
    cmd->add_option("--seed", seed, "Master seed (overrides the scenario)");
    cmd->add_option("--workers", opt.workers, "Worker threads for path simulation")->check(CLI::PositiveNumber);
    cmd->add_option("--out", opt.out, "Output directory (default: $JDLAB_OUT/<scenario>)");
    auto* p = cmd->add_flag("--paper-mode", paper, "Require both diffusion and jumps and R <= 1/2");
    auto* d = cmd->add_flag("--diagnostic-ok", diagnostic, "Allow diagnostic models (jumps or diffusion off)");
    p->excludes(d);
  };
  auto* run = app.add_subcommand("run", "Run the scenario's experiments");
  add_common(run);
  auto* verify = app.add_subcommand("verify", "Run the inequality suite at two budgets with stability verdicts");
  add_common(verify);
  auto* green = app.add_subcommand("green", "Export the grid Green matrix");
  add_common(green);
  green->add_flag("--text", opt.text, "Also write text triplets");
  auto* report = app.add_subcommand("report", "Re-render summary.json of an output directory");
  report->add_option("dir", dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version exit 0; every other parse failure is a usage error.
    return app.exit(e) == 0 ? jdlab::kExitOk : jdlab::kExitUsage;
  }
  try {
    if (report->parsed()) return jdlab::report_command(dir, std::cout);
    if (app.get_subcommand(app.get_subcommands().front()->get_name())->count("--seed")) opt.seed = seed;
    if (paper) opt.paper_mode = true;
    if (diagnostic) opt.paper_mode = false;
    if (run->parsed()) return jdlab::run_command(file, opt, std::cout);
    if (verify->parsed()) return jdlab::verify_command(file, opt, std::cout);
    if (green->parsed()) return jdlab::green_command(file, opt, std::cout);
  } catch (const jdlab::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == jdlab::ErrorCode::ConfigError ? jdlab::kExitUsage : jdlab::kExitExperimentError;
  }
  return jdlab::kExitUsage;
}
