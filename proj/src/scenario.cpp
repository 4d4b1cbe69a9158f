#include "jdlab/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include "json.hpp"
#include <sstream>

#include "jdlab/error.hpp"

namespace jdlab {

using nlohmann::json;
using nlohmann::ordered_json;

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{
      "exit-time", "harmonic-measure", "dirichlet",     "gauge",          "schrodinger",     "harnack",
      "carleson",  "bhp",              "exit-linearity", "identities",     "3g",              "green-bounds",
      "boundary-decay", "martin",      "conditional-gauge", "beta",        "kato"};
  return names;
}

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw Error(ErrorCode::ConfigError, "scenario key '" + key + "': " + why);
}

double get_number(const json& v, const std::string& key) {
  if (!v.is_number()) bad(key, "expected a number");
  return v.get<double>();
}

std::int64_t get_integer(const json& v, const std::string& key) {
  if (!v.is_number_integer()) bad(key, "expected an integer");
  return v.get<std::int64_t>();
}

int get_int(const json& v, const std::string& key) {
  const auto i = get_integer(v, key);
  if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max()) bad(key, "integer out of range");
  return static_cast<int>(i);
}

std::uint64_t get_unsigned(const json& v, const std::string& key) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  bad(key, "expected a non-negative integer");
}

std::string get_string(const json& v, const std::string& key) {
  if (!v.is_string()) bad(key, "expected a string");
  return v.get<std::string>();
}

bool get_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) bad(key, "expected true or false");
  return v.get<bool>();
}

}  // namespace

Scenario parse_scenario(const std::string& text, bool validate) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, std::string("scenario is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::ConfigError, "scenario must be a JSON object");
  Scenario s;
  bool center_given = false;
  for (const auto& [key, v] : doc.items()) {
    if (key == "model") s.model = get_string(v, key);
    else if (key == "dim") s.dim = get_int(v, key);
    else if (key == "c") s.c = get_number(v, key);
    else if (key == "alpha") s.alpha = get_number(v, key);
    else if (key == "potential") s.potential = get_string(v, key);
    else if (key == "boundary_data") s.boundary_data = get_string(v, key);
    else if (key == "radius") s.radius = get_number(v, key);
    else if (key == "center") {
      if (!v.is_array()) bad(key, "expected an array of numbers");
      s.center.clear();
      for (const auto& x : v) s.center.push_back(get_number(x, key));
      center_given = true;
    }
    else if (key == "dt") s.dt = get_number(v, key);
    else if (key == "epsilon") s.epsilon = get_number(v, key);
    else if (key == "small_jumps") s.small_jumps = get_string(v, key);
    else if (key == "bridge") s.bridge = get_bool(v, key);
    else if (key == "truncated") s.truncated = get_bool(v, key);
    else if (key == "t_max") s.t_max = get_number(v, key);
    else if (key == "n_paths") s.n_paths = get_unsigned(v, key);
    else if (key == "mesh_spacing") s.mesh_spacing = get_number(v, key);
    else if (key == "verify_spacing") s.verify_spacing = get_number(v, key);
    else if (key == "exterior_factor") s.exterior_factor = get_number(v, key);
    else if (key == "probes") s.probes = get_int(v, key);
    else if (key == "harnack_probes") s.harnack_probes = get_int(v, key);
    else if (key == "boundary_probes") s.boundary_probes = get_int(v, key);
    else if (key == "poles") s.poles = get_int(v, key);
    else if (key == "experiments") {
      if (!v.is_array()) bad(key, "expected an array of experiment names");
      s.experiments.clear();
      for (const auto& x : v) s.experiments.push_back(get_string(x, key));
    }
    else if (key == "seed") s.seed = get_unsigned(v, key);
    else if (key == "output") s.output = get_string(v, key);
    else if (key == "paper_mode") s.paper_mode = get_bool(v, key);
    else if (key == "expect_refusal") s.expect_refusal = get_bool(v, key);
    else bad(key, "unknown key");
  }
  if (!center_given) s.center.assign(std::max(s.dim, 0), 0.0);
  if (validate) validate_scenario(s);
  return s;
}

void validate_scenario(const Scenario& s) {
  if (s.dim < 3) bad("dim", "must be at least 3");
  if (static_cast<int>(s.center.size()) != s.dim) bad("center", "must have dim coordinates");
  if (!(s.c > 0.0)) bad("c", "must be positive");
  if (!(s.alpha > 0.0 && s.alpha < 2.0)) bad("alpha", "must lie in (0,2)");
  if (!(s.radius > 0.0)) bad("radius", "must be positive");
  if (s.paper_mode && s.radius > 0.5) bad("radius", "must not exceed 1/2 in paper mode");
  if (s.dt < 0.0) bad("dt", "must be non-negative");
  if (s.epsilon < 0.0) bad("epsilon", "must be non-negative");
  if (s.small_jumps != "drop" && s.small_jumps != "diffusion-correction")
    bad("small_jumps", "must be 'drop' or 'diffusion-correction'");
  if (s.t_max < 0.0 || (s.t_max > 0.0 && s.t_max < 100.0 * s.radius * s.radius)) bad("t_max", "must be 0 or >= 100 R^2");
  if (s.n_paths < 1) bad("n_paths", "must be positive");
  if (s.mesh_spacing < 0.0 || s.mesh_spacing > s.radius / 5.0) bad("mesh_spacing", "must be 0 or at most R/5");
  if (s.verify_spacing < 0.0 || s.verify_spacing > s.radius / 5.0) bad("verify_spacing", "must be 0 or at most R/5");
  if (!(s.exterior_factor > 1.0)) bad("exterior_factor", "must exceed 1");
  if (s.probes < 1) bad("probes", "must be positive");
  if (s.harnack_probes < 2) bad("harnack_probes", "must be at least 2");
  if (s.boundary_probes < 2) bad("boundary_probes", "must be at least 2");
  if (s.poles < 1) bad("poles", "must be positive");
  for (const auto& e : s.experiments)
    if (std::find(experiment_names().begin(), experiment_names().end(), e) == experiment_names().end())
      bad("experiments", "unknown experiment '" + e + "'");
  try {
    make_potential(s.potential, s.dim);
  } catch (const Error& e) {
    bad("potential", e.detail());
  }
  OperatorModel m;
  try {
    m = s.make_operator();
  } catch (const Error& e) {
    bad("model", e.detail());
  }
  try {
    make_boundary_data(s.boundary_data, s.domain());
  } catch (const Error& e) {
    bad("boundary_data", e.detail());
  }
  if (s.paper_mode && !m.paper_mode())
    bad("paper_mode", "model '" + s.model + "' is a diagnostic mode; set paper_mode false or pass --diagnostic-ok");
  if (s.paper_mode) {
    try {
      m.require_paper_mode();
    } catch (const Error& e) {
      bad("paper_mode", e.detail());
    }
  }
}

OperatorModel Scenario::make_operator() const {
  Potential q;
  try {
    q = make_potential(potential, dim);
  } catch (const Error& e) {
    bad("potential", e.detail());
  }
  return make_model(model, dim, c, alpha, q);
}

BallDomain Scenario::domain() const {
  Vec x(dim);
  for (int i = 0; i < dim; ++i) x(i) = center[i];
  return BallDomain(x, radius);
}

PathConfig Scenario::path_config() const {
  PathConfig cfg;
  cfg.dt = dt > 0.0 ? dt : 1e-3 * radius * radius;
  cfg.eps = epsilon > 0.0 ? epsilon : radius / 5.0;
  cfg.small_jumps = small_jumps == "drop" ? SmallJumps::Drop : SmallJumps::DiffusionCorrection;
  cfg.bridge = bridge;
  cfg.truncated = truncated;
  cfg.t_max = t_max;
  cfg.seed = seed;
  return cfg;
}

McConfig Scenario::mc_config(int workers) const {
  McConfig mc;
  mc.n_paths = n_paths;
  mc.workers = workers;
  mc.seed = seed;
  return mc;
}

MeshConfig Scenario::mesh_config() const {
  MeshConfig cfg;
  cfg.spacing = mesh_h();
  cfg.exterior_factor = exterior_factor;
  return cfg;
}

std::vector<std::string> Scenario::experiment_list() const {
  return experiments.empty() ? experiment_names() : experiments;
}

std::string serialize_scenario(const Scenario& s) {
  ordered_json j;
  j["model"] = s.model;
  j["dim"] = s.dim;
  j["c"] = s.c;
  j["alpha"] = s.alpha;
  j["potential"] = s.potential;
  j["boundary_data"] = s.boundary_data;
  j["radius"] = s.radius;
  j["center"] = s.center;
  j["dt"] = s.dt;
  j["epsilon"] = s.epsilon;
  j["small_jumps"] = s.small_jumps;
  j["bridge"] = s.bridge;
  j["truncated"] = s.truncated;
  j["t_max"] = s.t_max;
  j["n_paths"] = s.n_paths;
  j["mesh_spacing"] = s.mesh_spacing;
  j["verify_spacing"] = s.verify_spacing;
  j["exterior_factor"] = s.exterior_factor;
  j["probes"] = s.probes;
  j["harnack_probes"] = s.harnack_probes;
  j["boundary_probes"] = s.boundary_probes;
  j["poles"] = s.poles;
  j["experiments"] = s.experiments;
  j["seed"] = s.seed;
  j["output"] = s.output;
  j["paper_mode"] = s.paper_mode;
  j["expect_refusal"] = s.expect_refusal;
  return j.dump(2) + "\n";
}

Scenario load_scenario(const std::string& path, bool validate) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot read scenario '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), validate);
}

}  // namespace jdlab
