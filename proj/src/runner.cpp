#include "jdlab/runner.hpp"

#include <chrono>
#include <cstring>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "jdlab/error.hpp"
#include "jdlab/export.hpp"
#include "jdlab/suite.hpp"

namespace jdlab {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

void write_file(const fs::path& path, const std::string& body) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::ConfigError, "cannot write '" + path.string() + "'");
  out << body;
}

std::string file_name(const ExperimentResult& r, const Table& t) {
  return (t.name == r.name ? r.name : r.name + "-" + t.name) + ".csv";
}

ordered_json to_json(const ExperimentResult& r, const std::vector<std::string>& files) {
  ordered_json j;
  j["experiment"] = r.name;
  if (!r.level.empty()) j["level"] = r.level;
  j["status"] = r.status;
  j["error"] = r.error;
  j["seed"] = r.seed;
  j["constants"] = ordered_json::object();
  for (const auto& [k, v] : r.constants) j["constants"][k] = v;
  j["tolerances"] = ordered_json::object();
  j["verdicts"] = ordered_json::array();
  for (const auto& v : r.verdicts) {
    if (!v.relation.empty()) j["tolerances"][v.name] = v.threshold;
    j["verdicts"].push_back({{"name", v.name},
                             {"value", v.value},
                             {"threshold", v.threshold},
                             {"relation", v.relation},
                             {"status", v.status}});
  }
  j["files"] = files;
  return j;
}

std::vector<std::string> write_tables(const fs::path& dir, const ExperimentResult& r, const std::string& prefix) {
  std::vector<std::string> files;
  for (const auto& t : r.tables) {
    const std::string name = prefix + file_name(r, t);
    write_file(dir / name, t.to_csv());
    files.push_back(name);
  }
  return files;
}

int exit_status(const std::vector<ExperimentResult>& results, bool expect_refusal, bool stability_failed) {
  bool error = false;
  bool failed = stability_failed;
  bool refused = false;
  for (const auto& r : results) {
    error = error || r.status == "error";
    failed = failed || r.failed();
    refused = refused || r.status == "refused";
  }
  if (error) return kExitExperimentError;
  if (failed) return kExitVerdictFailed;
  if (refused != expect_refusal) return kExitRefusal;
  return kExitOk;
}

void log_result(std::ostream& log, const ExperimentResult& r) {
  log << r.name;
  if (!r.level.empty()) log << " [" << r.level << "]";
  log << ": " << r.status;
  if (!r.error.empty()) log << " (" << r.error << ")";
  std::size_t pass = 0, fail = 0;
  for (const auto& v : r.verdicts) {
    pass += v.status == "PASS";
    fail += v.status == "FAIL";
  }
  log << ", " << pass << " pass, " << fail << " fail\n";
  for (const auto& v : r.verdicts)
    if (v.status == "FAIL") log << "    FAIL " << v.name << " = " << v.value << " (" << v.relation << ' ' << v.threshold << ")\n";
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

void write_metadata(const fs::path& dir, const std::string& command, const RunOptions& opt, double seconds) {
  ordered_json m;
  m["command"] = command;
  m["timestamp"] = timestamp();
  m["workers"] = opt.workers;
  m["wall_seconds"] = seconds;
  m["version"] = kVersion;
  write_file(dir / "metadata.json", m.dump(2) + "\n");
}

ordered_json summary_head(const std::string& command, const Scenario& s) {
  ordered_json j;
  j["command"] = command;
  j["version"] = kVersion;
  j["seed"] = s.seed;
  j["scenario"] = ordered_json::parse(serialize_scenario(s));
  return j;
}

}  // namespace

std::string resolve_output(const Scenario& s, const RunOptions& opt, const std::string& scenario_path) {
  if (!opt.out.empty()) return opt.out;
  if (!s.output.empty()) return s.output;
  const std::string stem = fs::path(scenario_path).stem().string();
  if (const char* env = std::getenv("JDLAB_OUT"); env && *env) return (fs::path(env) / stem).string();
  return (fs::path("jdlab-out") / stem).string();
}

Scenario prepare_scenario(const std::string& path, const RunOptions& opt) {
  Scenario s = load_scenario(path, false);
  if (opt.seed) s.seed = *opt.seed;
  if (opt.paper_mode) s.paper_mode = *opt.paper_mode;
  validate_scenario(s);
  return s;
}

int run_command(const std::string& path, const RunOptions& opt, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  const Scenario s = prepare_scenario(path, opt);
  const fs::path dir = resolve_output(s, opt, path);
  Lab lab(s, opt.workers);
  const Budget budget = lab.run_budget();
  ordered_json summary = summary_head("run", s);
  summary["experiments"] = ordered_json::array();
  std::vector<ExperimentResult> results;
  for (const auto& name : s.experiment_list()) {
    ExperimentResult r = lab.run(name, budget);
    log_result(log, r);
    summary["experiments"].push_back(to_json(r, write_tables(dir, r, "")));
    results.push_back(std::move(r));
  }
  const int status = exit_status(results, s.expect_refusal, false);
  summary["exit_status"] = status;
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  write_metadata(dir, "run", opt, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  log << "output: " << dir.string() << "\n";
  return status;
}

int verify_command(const std::string& path, const RunOptions& opt, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  const Scenario s = prepare_scenario(path, opt);
  const fs::path dir = resolve_output(s, opt, path);
  Lab lab(s, opt.workers);
  const auto [coarse_b, fine_b] = lab.verify_budgets();
  ordered_json summary = summary_head("verify", s);
  summary["experiments"] = ordered_json::array();
  std::vector<ExperimentResult> coarse, fine;
  for (const Budget* b : {&coarse_b, &fine_b}) {
    auto& results = b == &coarse_b ? coarse : fine;
    for (const auto& name : s.experiment_list()) {
      ExperimentResult r = lab.run(name, *b);
      log_result(log, r);
      summary["experiments"].push_back(to_json(r, write_tables(dir, r, b->level + "/")));
      results.push_back(std::move(r));
    }
  }
  const std::vector<StabilityRow> rows = stability_rows(coarse, fine);
  Table t("stability", {"experiment", "constant", "coarse", "fine", "relative_change", "status"});
  summary["stability"] = ordered_json::array();
  bool stability_failed = false;
  for (const auto& row : rows) {
    t.add({row.experiment, row.constant, row.coarse, row.fine, row.relative_change, row.status});
    summary["stability"].push_back({{"experiment", row.experiment},
                                    {"constant", row.constant},
                                    {"coarse", row.coarse},
                                    {"fine", row.fine},
                                    {"relative_change", row.relative_change},
                                    {"tolerance", 0.2},
                                    {"status", row.status}});
    stability_failed = stability_failed || row.status == "FAIL";
    log << "stability " << row.experiment << "." << row.constant << ": " << row.coarse << " -> " << row.fine << " "
        << row.status << "\n";
  }
  write_file(dir / "stability.csv", t.to_csv());
  std::vector<ExperimentResult> all = coarse;
  all.insert(all.end(), fine.begin(), fine.end());
  const int status = exit_status(all, s.expect_refusal, stability_failed);
  summary["exit_status"] = status;
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  write_metadata(dir, "verify", opt, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  log << "output: " << dir.string() << "\n";
  return status;
}

int green_command(const std::string& path, const RunOptions& opt, std::ostream& log) {
  const Scenario s = prepare_scenario(path, opt);
  if (s.dim != 3) throw Error(ErrorCode::NotSupported, "the grid oracle is implemented for d = 3");
  const fs::path dir = resolve_output(s, opt, path);
  fs::create_directories(dir);
  const BallDomain ball = s.domain();
  const DiscreteGenerator gen = assemble_generator(s.make_operator(), ball, build_mesh(ball, s.mesh_config()));
  const GreenMatrix green = green_matrix(gen);
  const MatrixExport m = make_export(gen.mesh(), green.matrix());
  const fs::path bin = dir / "green.bin";
  save_binary(bin.string(), m);
  const MatrixExport back = load_binary(bin.string());
  const bool exact = back.matrix.rows() == m.matrix.rows() &&
                     std::memcmp(back.matrix.data(), m.matrix.data(), sizeof(double) * m.matrix.size()) == 0;
  log << "cells: " << gen.mesh().size() << ", spacing " << gen.mesh().h << "\n";
  log << "symmetry error: " << green.symmetry_error() << "\n";
  log << "wrote " << bin.string() << (exact ? " (round-trip exact)" : " (ROUND-TRIP MISMATCH)") << "\n";
  if (opt.text) {
    std::ofstream out(dir / "green.txt");
    write_triplets(out, m);
    log << "wrote " << (dir / "green.txt").string() << "\n";
  }
  return exact ? kExitOk : kExitExperimentError;
}

int report_command(const std::string& dir, std::ostream& out) {
  const fs::path file = fs::path(dir) / "summary.json";
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::ConfigError, "no summary.json in '" + dir + "'");
  const ordered_json j = ordered_json::parse(in);
  std::ostringstream text;
  text << j.value("command", "") << " (version " << j.value("version", "") << ", seed " << j["seed"] << ")\n";
  for (const auto& e : j["experiments"]) {
    text << "\n" << e["experiment"].get<std::string>();
    if (e.contains("level")) text << " [" << e["level"].get<std::string>() << "]";
    text << ": " << e["status"].get<std::string>();
    if (!e["error"].get<std::string>().empty()) text << " (" << e["error"].get<std::string>() << ")";
    text << "\n";
    for (const auto& [k, v] : e["constants"].items()) text << "  " << std::left << std::setw(32) << k << v << "\n";
    for (const auto& v : e["verdicts"])
      text << "  " << std::setw(6) << v["status"].get<std::string>() << ' ' << v["name"].get<std::string>() << " = "
           << v["value"] << (v["relation"].get<std::string>().empty() ? "" : " " + v["relation"].get<std::string>() + " ")
           << (v["relation"].get<std::string>().empty() ? "" : v["threshold"].dump()) << "\n";
  }
  if (j.contains("stability")) {
    text << "\nstability (relative change < 0.2)\n";
    for (const auto& r : j["stability"])
      text << "  " << std::setw(6) << r["status"].get<std::string>() << ' ' << r["experiment"].get<std::string>() << '.'
           << r["constant"].get<std::string>() << ": " << r["coarse"] << " -> " << r["fine"] << "\n";
  }
  text << "\nexit status " << j.value("exit_status", -1) << "\n";
  out << text.str();
  write_file(fs::path(dir) / "report.txt", text.str());
  return kExitOk;
}

}  // namespace jdlab
