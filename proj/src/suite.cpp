#include "jdlab/suite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "jdlab/error.hpp"
#include "jdlab/grid.hpp"

namespace jdlab {

bool ExperimentResult::failed() const {
  if (status == "error") return true;
  return std::any_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.status == "FAIL"; });
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Verdict check(const std::string& name, double value, const std::string& relation, double threshold) {
  bool ok = false;
  if (relation == "<=") ok = value <= threshold;
  else if (relation == "<") ok = value < threshold;
  else if (relation == ">=") ok = value >= threshold;
  else if (relation == ">") ok = value > threshold;
  else if (relation == "==") ok = value == threshold;
  return {name, value, threshold, relation, ok ? "PASS" : "FAIL"};
}

Verdict info(const std::string& name, double value) { return {name, value, 0.0, "", "INFO"}; }

double rel_change(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

Vec unit(int dim, int axis) {
  Vec e = Vec::Zero(dim);
  e(axis) = 1.0;
  return e;
}

struct GridPair {
  DiscreteGenerator gen;
  GreenMatrix green;
};

}  // namespace

struct Lab::Impl {
  const Scenario& s;
  int workers;
  OperatorModel model;
  BallDomain ball;
  Vec x0;
  BoundaryData f;
  PathConfig pc;
  BoundaryChart chart;
  double r_local;  // Carleson / BHP radius R_1 / 4
  LensRegion lens;
  Vec x_r;         // reference point on the inward normal, rho_Q = r/2
  TargetBall s1;
  TargetBall s2;

  double ball_h = -1.0;
  std::shared_ptr<GridPair> ball_grid;
  double lens_h = -1.0;
  std::shared_ptr<GridPair> lens_grid;

  std::uint64_t bundle_paths = 0;
  std::vector<Vec> bundle_points;
  std::vector<FeynmanKacBundle> bundles;

  explicit Impl(const Scenario& sc, int w)
      : s(sc),
        workers(w),
        model(sc.make_operator()),
        ball(sc.domain()),
        x0(ball.center()),
        f(make_boundary_data(sc.boundary_data, ball)),
        pc(sc.path_config()),
        chart(ball, ball.center() - sc.radius * unit(sc.dim, sc.dim - 1)),
        r_local(chart.localization_radius() / 4.0),
        lens({ball, BallDomain(chart.base_point(), r_local)}),
        x_r(chart.normal_point(r_local / 2.0)),
        s1{ball.center(), sc.radius / 4.0},
        s2{ball.center() + 0.5 * sc.radius * unit(sc.dim, 0), sc.radius / 4.0} {}

  bool q_zero() const { return s.potential == "zero"; }

  McConfig mc(const Budget& b, std::uint64_t seed) const {
    McConfig m = s.mc_config(workers);
    m.n_paths = b.n_paths;
    m.seed = seed;
    return m;
  }

  void require_grid_dim() const {
    if (s.dim != 3) throw Error(ErrorCode::NotSupported, "grid experiments need d = 3");
  }

  GridPair& grid(double h) {
    require_grid_dim();
    if (ball_grid && ball_h == h) return *ball_grid;
    ball_grid.reset();
    MeshConfig cfg = s.mesh_config();
    cfg.spacing = h;
    DiscreteGenerator gen = assemble_generator(model, ball, build_mesh(ball, cfg));
    GreenMatrix green = green_matrix(gen);
    ball_grid = std::make_shared<GridPair>(GridPair{std::move(gen), std::move(green)});
    ball_h = h;
    return *ball_grid;
  }

  // The lens mesh keeps the ball mesh's relative resolution: spacing r h / R.
  GridPair& local_grid(double h) {
    require_grid_dim();
    const double hl = r_local * h / s.radius;
    if (lens_grid && lens_h == hl) return *lens_grid;
    lens_grid.reset();
    MeshConfig cfg;
    cfg.spacing = hl;
    cfg.origin = x_r;
    cfg.exterior_factor = s.exterior_factor;
    DiscreteGenerator gen = assemble_generator(model, lens, build_mesh(lens, cfg));
    GreenMatrix green = green_matrix(gen);
    lens_grid = std::make_shared<GridPair>(GridPair{std::move(gen), std::move(green)});
    lens_h = hl;
    return *lens_grid;
  }

  std::vector<Vec> mc_probes() const { return lattice_probes(x0, s.radius / 4.0, s.radius / 2.0, s.probes); }
  std::vector<Vec> harnack_points() const {
    return lattice_probes(x0, s.radius / 8.0, s.radius / 2.0, s.harnack_probes);
  }
  std::vector<Vec> local_points() const {
    return boundary_probes(chart, r_local, s.boundary_probes, r_local / 20.0);
  }

  const std::vector<FeynmanKacBundle>& probe_bundles(const Budget& b, std::uint64_t seed) {
    if (bundle_paths == b.n_paths && !bundles.empty()) return bundles;
    bundles.clear();
    bundle_points = mc_probes();
    const McConfig m = mc(b, seed);
    const std::array<Potential, 1> q{model.q ? model.q : constant_potential(0.0)};
    for (const Vec& x : bundle_points) bundles.push_back(feynman_kac_bundle(x, f, q, ball, model, pc, m));
    bundle_paths = b.n_paths;
    return bundles;
  }

  double outside_data(const Vec& y) const { return f(y); }
};

Lab::Lab(Scenario scenario, int workers)
    : scenario_(std::move(scenario)), workers_(std::max(1, workers)) {
  validate_scenario(scenario_);
  impl_ = std::make_unique<Impl>(scenario_, workers_);
}

Lab::~Lab() = default;

Budget Lab::run_budget() const {
  const double h = scenario_.mesh_h();
  return {"", h, scenario_.n_paths, 2.0 * h};
}

std::pair<Budget, Budget> Lab::verify_budgets() const {
  const double h = scenario_.verify_h();
  return {{"coarse", h, scenario_.n_paths, 2.0 * h}, {"fine", h / 2.0, 4 * scenario_.n_paths, 2.0 * h}};
}

std::uint64_t Lab::experiment_seed(const std::string& experiment) const {
  // Dirichlet, gauge and Schrodinger share one set of paths.
  const std::string key =
      (experiment == "dirichlet" || experiment == "gauge" || experiment == "schrodinger") ? "feynman-kac" : experiment;
  return splitmix(scenario_.seed ^ fnv1a(key));
}

const std::vector<std::pair<std::string, std::string>>& stability_constants() {
  static const std::vector<std::pair<std::string, std::string>> keys{
      {"harnack", "ratio_mc"},          {"harnack", "ratio_grid"},         {"carleson", "ratio_mc"},
      {"carleson", "ratio_grid"},       {"bhp", "ratio_mc"},               {"bhp", "ratio_grid"},
      {"3g", "constant"},               {"green-bounds", "c_up"},          {"green-bounds", "c_low"},
      {"boundary-decay", "constant"},   {"exit-linearity", "slope_box"},   {"exit-linearity", "slope_ball"},
      {"exit-linearity", "slope_box_truncated"}, {"exit-linearity", "slope_ball_truncated"}};
  return keys;
}

std::vector<StabilityRow> stability_rows(const std::vector<ExperimentResult>& coarse,
                                         const std::vector<ExperimentResult>& fine, double tolerance) {
  std::vector<StabilityRow> rows;
  for (const auto& [exp, key] : stability_constants()) {
    const auto a = std::find_if(coarse.begin(), coarse.end(), [&](const auto& r) { return r.name == exp; });
    const auto b = std::find_if(fine.begin(), fine.end(), [&](const auto& r) { return r.name == exp; });
    if (a == coarse.end() || b == fine.end()) continue;
    const auto ca = a->constants.find(key);
    const auto cb = b->constants.find(key);
    if (ca == a->constants.end() || cb == b->constants.end()) continue;
    StabilityRow row{exp, key, ca->second, cb->second, rel_change(ca->second, cb->second), ""};
    row.status = row.relative_change < tolerance ? "PASS" : "FAIL";
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------

namespace {

void point_columns(std::vector<std::string>& cols) {
  for (const char* c : {"x", "y", "z"}) cols.emplace_back(c);
}

void push_point(std::vector<Field>& row, const Vec& x) {
  for (int i = 0; i < 3 && i < x.size(); ++i) row.emplace_back(x(i));
}

}  // namespace

ExperimentResult Lab::run(const std::string& experiment, const Budget& budget) {
  ExperimentResult res;
  res.name = experiment;
  res.level = budget.level;
  res.seed = experiment_seed(experiment);
  Impl& I = *impl_;
  const Scenario& s = scenario_;
  const double R = s.radius;
  try {
    const McConfig mc = I.mc(budget, res.seed);

    if (experiment == "exit-time") {
      const ExitTimeReport rep = expected_exit_time(I.x0, I.ball, I.model, I.pc, mc);
      Table t("exit-time", {"source", "value", "std_error", "ratio_r2", "jump_fraction", "censored"});
      t.add({std::string("mc"), rep.tau.value, rep.tau.std_error, rep.ratio_r2, rep.jump_fraction,
             static_cast<std::int64_t>(rep.tau.censored_count)});
      res.constants["tau_mc"] = rep.tau.value;
      res.constants["ratio_r2"] = rep.ratio_r2;
      if (s.dim == 3) {
        GridPair& g = I.grid(budget.h);
        const Eigen::VectorXd tau = g.green.solve(Eigen::VectorXd::Ones(static_cast<int>(g.gen.mesh().size())));
        const double tg = tau(g.gen.mesh().locate(I.x0));
        t.add({std::string("grid"), tg, 0.0, tg / (R * R), 0.0, std::int64_t{0}});
        res.constants["tau_grid"] = tg;
      }
      if (!I.model.jumps_enabled && I.model.preset == "brownian-diagnostic") {
        const double exact = R * R / s.dim;
        res.verdicts.push_back(check("brownian_exit_time_z", std::abs(rep.tau.value - exact) / rep.tau.std_error,
                                     "<=", 3.0));
      }
      res.tables.push_back(std::move(t));
    } else if (experiment == "harmonic-measure") {
      if (s.dim != 3) throw Error(ErrorCode::NotSupported, "the exit partition is defined for d = 3");
      const ExitPartition part(I.ball);
      const HarmonicMeasureEstimate mcw = harmonic_measure(I.x0, I.ball, I.model, I.pc, part, mc);
      GridPair& g = I.grid(budget.h);
      const HarmonicMeasureEstimate gw = grid_harmonic_measure(g.gen, g.green, g.gen.mesh().locate(I.x0), part);
      Table t("harmonic-measure", {"cell", "label", "mass_mc", "std_error_mc", "count_mc", "mass_grid"});
      for (int c = 0; c < part.size(); ++c)
        t.add({static_cast<std::int64_t>(c), part.label(c), mcw.mass[c], mcw.std_error[c],
               static_cast<std::int64_t>(mcw.counts[c]), gw.mass[c]});
      res.tables.push_back(std::move(t));
      res.constants["p_jump_mc"] = mcw.p_jump;
      res.constants["p_jump_grid"] = gw.p_jump;
      res.verdicts.push_back(check("split_sums_to_one", std::abs(mcw.p_jump + mcw.p_continuous +
                                                                 mcw.censored_fraction - 1.0), "<=", 1e-12));
      if (!I.model.jumps_enabled) {
        const std::vector<std::uint64_t> caps(mcw.counts.begin(), mcw.counts.begin() + ExitPartition::kSectors);
        res.verdicts.push_back(check("cap_uniformity_p", chi_square_uniform_p(caps), ">", 0.01));
      }
    } else if (experiment == "dirichlet" || experiment == "gauge" || experiment == "schrodinger") {
      GridPair& g = I.grid(budget.h);
      const Mesh& mesh = g.gen.mesh();
      const bool is_dir = experiment == "dirichlet";
      const bool is_gauge = experiment == "gauge";
      Eigen::VectorXd grid_values;
      double spectral = 0.0;
      if (is_dir) {
        grid_values = dirichlet_grid(g.gen, g.green, I.f);
      } else {
        const GaugeResult gr = is_gauge ? gauge_grid(g.gen, g.green, I.model.q)
                                        : schrodinger_grid(g.gen, g.green, I.model.q, I.f);
        spectral = gr.spectral_radius;
        res.constants["spectral_radius"] = spectral;
        if (!gr.gaugeable) {
          res.status = "refused";
          res.error = "NotGaugeable";
          res.verdicts.push_back({"not_gaugeable", spectral, 1.0, "<", "REFUSED"});
          return res;
        }
        grid_values = gr.values;
      }
      const auto& bundles = I.probe_bundles(budget, res.seed);
      Table t(experiment, {});
      point_columns(t.columns);
      for (const char* c : {"mc", "std_error", "grid", "tolerance", "agree", "heavy_tail"}) t.columns.emplace_back(c);
      std::size_t agree = 0;
      double max_gauge = 0.0;
      double max_gauge_se = 0.0;
      bool all_one = true;
      for (std::size_t p = 0; p < bundles.size(); ++p) {
        const Estimate& e = is_dir ? bundles[p].dirichlet : is_gauge ? bundles[p].gauge[0] : bundles[p].schrodinger[0];
        const double gv = interpolate_cells(mesh, grid_values, I.bundle_points[p], [&](const Vec& y) {
          return is_gauge ? 1.0 : I.f(y);
        });
        const double tol = 3.0 * e.std_error + 0.1 * std::abs(gv);
        const bool ok = std::abs(e.value - gv) <= tol;
        agree += ok;
        if (is_gauge) {
          if (e.value > max_gauge) {
            max_gauge = e.value;
            max_gauge_se = e.std_error;
          }
          all_one = all_one && e.value == 1.0 && gv == 1.0;
        }
        std::vector<Field> row;
        push_point(row, I.bundle_points[p]);
        row.insert(row.end(), {e.value, e.std_error, gv, tol, static_cast<std::int64_t>(ok),
                               static_cast<std::int64_t>(e.heavy_tail)});
        t.add(std::move(row));
      }
      res.tables.push_back(std::move(t));
      const double frac = static_cast<double>(agree) / static_cast<double>(bundles.size());
      res.constants["agreement_fraction"] = frac;
      res.verdicts.push_back(check("mc_grid_agreement_fraction", frac, ">=", 0.9));
      if (is_gauge) {
        if (I.q_zero()) res.verdicts.push_back(check("zero_potential_gauge_is_one", all_one ? 1.0 : 0.0, "==", 1.0));
        const auto probes = I.mc_probes();
        McConfig mk = mc;
        mk.seed = splitmix(res.seed + 1);
        const KhasminskiiCertificate cert = khasminskii_certificate(I.model.q, I.ball, I.model, I.pc, mk, probes);
        res.constants["eta"] = cert.eta;
        res.constants["max_gauge_mc"] = max_gauge;
        res.constants["max_gauge_grid"] = grid_values.maxCoeff();
        if (cert.certified()) {
          res.constants["khasminskii_bound"] = *cert.bound;
          res.verdicts.push_back(check("mc_gauge_within_bound", max_gauge - 3.0 * max_gauge_se, "<=", *cert.bound));
        } else {
          res.verdicts.push_back(info("no_certificate_eta", cert.eta));
        }
        // The grid chain has its own eta, max_x G_h|q|(x), exact up to rounding.
        const double eta_grid = g.green.solve(potential_on_cells(mesh, I.model.q).cwiseAbs()).maxCoeff();
        res.constants["eta_grid"] = eta_grid;
        if (eta_grid < 1.0) {
          res.constants["khasminskii_bound_grid"] = 1.0 / (1.0 - eta_grid);
          res.verdicts.push_back(
              check("grid_gauge_within_bound", grid_values.maxCoeff(), "<=", 1.0 / (1.0 - eta_grid) + 1e-12));
        } else {
          res.verdicts.push_back(info("no_grid_certificate_eta", eta_grid));
        }
        Table ct("khasminskii", {});
        point_columns(ct.columns);
        ct.columns.emplace_back("eta_probe");
        ct.columns.emplace_back("std_error");
        for (std::size_t p = 0; p < probes.size(); ++p) {
          std::vector<Field> row;
          push_point(row, probes[p]);
          row.insert(row.end(), {cert.per_probe[p].value, cert.per_probe[p].std_error});
          ct.add(std::move(row));
        }
        res.tables.push_back(std::move(ct));
      }
    } else if (experiment == "harnack") {
      GridPair& g = I.grid(budget.h);
      const GaugeResult gr = schrodinger_grid(g.gen, g.green, I.model.q, I.f);
      res.constants["spectral_radius"] = gr.spectral_radius;
      if (!gr.gaugeable) {
        res.status = "refused";
        res.error = "NotGaugeable";
        res.verdicts.push_back({"not_gaugeable", gr.spectral_radius, 1.0, "<", "REFUSED"});
        return res;
      }
      const auto points = I.harnack_points();
      const std::array<Potential, 1> q{I.model.q ? I.model.q : constant_potential(0.0)};
      std::vector<Estimate> u;
      std::vector<Estimate> v;
      std::vector<Estimate> ug;
      for (const Vec& x : points) {
        const FeynmanKacBundle b = feynman_kac_bundle(x, I.f, q, I.ball, I.model, I.pc, mc);
        u.push_back(b.schrodinger[0]);
        v.push_back(b.dirichlet);
        ug.push_back({interpolate_cells(g.gen.mesh(), gr.values, x, [&](const Vec& y) { return I.f(y); }), 0.0,
                      1, 0, false});
      }
      const RatioReport rm = harnack_report(u);
      const RatioReport rq = harnack_report(v);
      const RatioReport rg = harnack_report(ug);
      Table t("harnack", {});
      point_columns(t.columns);
      for (const char* c : {"u_mc", "std_error", "u_grid", "u_q_free_mc"}) t.columns.emplace_back(c);
      for (std::size_t p = 0; p < points.size(); ++p) {
        std::vector<Field> row;
        push_point(row, points[p]);
        row.insert(row.end(), {u[p].value, u[p].std_error, ug[p].value, v[p].value});
        t.add(std::move(row));
      }
      res.tables.push_back(std::move(t));
      res.constants["ratio_mc"] = rm.ratio;
      res.constants["ratio_mc_std_error"] = rm.std_error;
      res.constants["ratio_grid"] = rg.ratio;
      res.constants["ratio_q_free_mc"] = rq.ratio;
      res.verdicts.push_back(check("mc_grid_ratio_gap", rel_change(rm.ratio, rg.ratio), "<=", 0.05));
      res.verdicts.push_back(check("ratio_at_least_one", rm.ratio, ">=", 1.0));
      if (I.q_zero()) res.verdicts.push_back(check("zero_potential_matches_q_free", rm.ratio, "==", rq.ratio));
    } else if (experiment == "carleson" || experiment == "bhp") {
      const bool carleson = experiment == "carleson";
      const PathConfig lpc = local_path_config(I.pc, I.r_local);
      GridPair& g = I.local_grid(budget.h);
      const Mesh& mesh = g.gen.mesh();
      std::vector<Vec> points = I.local_points();
      auto zero = [](const Vec&) { return 0.0; };
      Table t(experiment, {});
      point_columns(t.columns);
      t.columns.emplace_back("delta");
      if (carleson) {
        points.push_back(I.x_r);
        const std::vector<Estimate> u = hitting_function(points, I.lens, I.model, lpc, mc, I.s1);
        const Eigen::VectorXd ugrid = hitting_grid(g.gen, g.green, I.s1);
        std::vector<Estimate> ug;
        for (const Vec& x : points) ug.push_back({interpolate_cells(mesh, ugrid, x, zero), 0.0, 1, 0, false});
        const std::vector<Estimate> probe_u(u.begin(), u.end() - 1);
        const std::vector<Estimate> probe_g(ug.begin(), ug.end() - 1);
        const RatioReport rm = carleson_report(probe_u, u.back());
        const RatioReport rg = carleson_report(probe_g, ug.back());
        for (const char* c : {"u_mc", "std_error", "u_grid"}) t.columns.emplace_back(c);
        for (std::size_t p = 0; p < points.size(); ++p) {
          std::vector<Field> row;
          push_point(row, points[p]);
          row.insert(row.end(), {I.ball.delta(points[p]), u[p].value, u[p].std_error, ug[p].value});
          t.add(std::move(row));
        }
        res.constants["ratio_mc"] = rm.ratio;
        res.constants["ratio_mc_std_error"] = rm.std_error;
        res.constants["ratio_grid"] = rg.ratio;
        res.constants["radius"] = I.r_local;
        res.verdicts.push_back(check("mc_grid_ratio_gap", rel_change(rm.ratio, rg.ratio), "<=", 0.2));
      } else {
        const std::vector<Estimate> u = hitting_function(points, I.lens, I.model, lpc, mc, I.s1);
        McConfig mv = mc;
        mv.seed = splitmix(res.seed + 7);
        const std::vector<Estimate> v = hitting_function(points, I.lens, I.model, lpc, mv, I.s2);
        const Eigen::VectorXd ugrid = hitting_grid(g.gen, g.green, I.s1);
        const Eigen::VectorXd vgrid = hitting_grid(g.gen, g.green, I.s2);
        std::vector<Estimate> ug, vg, dbl_mc, dbl_g;
        std::vector<double> delta;
        for (std::size_t p = 0; p < points.size(); ++p) {
          ug.push_back({interpolate_cells(mesh, ugrid, points[p], zero), 0.0, 1, 0, false});
          vg.push_back({interpolate_cells(mesh, vgrid, points[p], zero), 0.0, 1, 0, false});
          delta.push_back(I.ball.delta(points[p]));
          dbl_mc.push_back(ratio_estimate(u[p], v[p]));
          dbl_g.push_back(ratio_estimate(ug[p], vg[p]));
        }
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        for (std::size_t a = 0; a < points.size(); ++a)
          for (std::size_t b = 0; b < points.size(); ++b)
            if (a != b) pairs.emplace_back(a, b);
        const RatioReport rm = bhp_report(u, delta, pairs);
        const RatioReport rg = bhp_report(ug, delta, pairs);
        const RatioReport dm = harnack_report(dbl_mc);
        const RatioReport dg = harnack_report(dbl_g);
        for (const char* c : {"u_mc", "u_std_error", "v_mc", "v_std_error", "u_grid", "v_grid"})
          t.columns.emplace_back(c);
        for (std::size_t p = 0; p < points.size(); ++p) {
          std::vector<Field> row;
          push_point(row, points[p]);
          row.insert(row.end(),
                     {delta[p], u[p].value, u[p].std_error, v[p].value, v[p].std_error, ug[p].value, vg[p].value});
          t.add(std::move(row));
        }
        res.constants["ratio_mc"] = rm.ratio;
        res.constants["ratio_mc_std_error"] = rm.std_error;
        res.constants["ratio_grid"] = rg.ratio;
        res.constants["double_ratio_mc"] = dm.ratio;
        res.constants["double_ratio_grid"] = dg.ratio;
        res.verdicts.push_back(check("mc_grid_ratio_gap", rel_change(rm.ratio, rg.ratio), "<=", 0.2));
        res.verdicts.push_back(info("double_ratio_mc", dm.ratio));
      }
      res.tables.push_back(std::move(t));
    } else if (experiment == "exit-linearity") {
      std::vector<double> depths;
      for (double frac : {0.03, 0.06, 0.1, 0.15, 0.3}) depths.push_back(frac * I.chart.delta0());
      Table t("exit-linearity", {"variant", "depth", "p_box", "p_box_std_error", "p_ball", "p_ball_std_error"});
      for (bool truncated : {false, true}) {
        McConfig m2 = mc;
        m2.seed = splitmix(res.seed + (truncated ? 1 : 0));
        const ExitLinearityReport rep = boundary_exit_linearity(I.chart, I.model, I.pc, m2, depths, truncated);
        const std::string variant = truncated ? "truncated" : "full";
        const std::string suffix = truncated ? "_truncated" : "";
        for (const auto& row : rep.rows)
          t.add({variant, row.depth, row.p_box.value, row.p_box.std_error, row.p_ball.value, row.p_ball.std_error});
        res.constants["slope_box" + suffix] = rep.slope_box;
        res.constants["slope_ball" + suffix] = rep.slope_ball;
        res.constants["residual_box" + suffix] = rep.max_residual_box;
        res.constants["residual_ball" + suffix] = rep.max_residual_ball;
        res.verdicts.push_back(check("max_relative_residual_box" + suffix, rep.max_residual_box, "<", 0.25));
        res.verdicts.push_back(check("max_relative_residual_ball" + suffix, rep.max_residual_ball, "<", 0.25));
      }
      res.constants["delta0"] = I.chart.delta0();
      res.tables.push_back(std::move(t));
    } else if (experiment == "identities") {
      GridPair& g = I.grid(budget.h);
      const Mesh& mesh = g.gen.mesh();
      const ExitSplit split = exit_split(g.gen, g.green);
      const int center = mesh.locate(I.x0);
      const int x = mesh.locate(I.x0 + 0.25 * R * unit(s.dim, 0));
      const double r_ext = mesh.exterior_radius;
      const LevyIdentityReport all = levy_exit_identity_check(g.gen, g.green, x, [](const Vec&) { return true; });
      const LevyIdentityReport far = levy_exit_identity_check(
          g.gen, g.green, x, [&](const Vec& y) { return (y - mesh.center).norm() > r_ext; });
      Table t("identities", {"identity", "value", "threshold"});
      t.add({std::string("green_symmetry"), g.green.symmetry_error(), 1e-9});
      t.add({std::string("conservation"), split.conservation_error, 1e-9});
      t.add({std::string("levy_all_exterior"), all.gap, 1e-9});
      t.add({std::string("levy_far_field"), far.gap, 1e-9});
      res.verdicts.push_back(check("green_symmetry", g.green.symmetry_error(), "<=", 1e-9));
      res.verdicts.push_back(check("conservation", split.conservation_error, "<=", 1e-9));
      res.verdicts.push_back(check("levy_all_exterior", all.gap, "<=", 1e-9));
      res.verdicts.push_back(check("levy_far_field", far.gap, "<=", 1e-9));
      res.verdicts.push_back(check("levy_matches_jump_exit", std::abs(all.solve_route - split.p_jump(x)), "<=", 1e-9));
      Table dt("density", {"cap", "lhs", "rhs_chain", "rhs_extrapolated"});
      if (g.gen.boundary_edges().empty()) {
        res.verdicts.push_back(info("density_check_skipped_no_continuous_exit", 0.0));
      } else {
        const ExitPartition part(I.ball);
        const DensityCheckReport d = harmonic_measure_density_check(g.gen, g.green, x, center, part);
        const double rel = d.max_gap / d.max_cap_mass;
        t.add({std::string("density_chain_gap"), d.max_gap_chain, 1e-9});
        t.add({std::string("density_relative_gap"), rel, 0.05});
        res.verdicts.push_back(check("density_chain_gap", d.max_gap_chain, "<=", 1e-9));
        res.verdicts.push_back(check("density_relative_gap", rel, "<=", 0.05));
        res.constants["density_relative_gap"] = rel;
        // A shallower probe sees a sharper Martin kernel; its gap shrinks only with the mesh.
        const DensityCheckReport shallow =
            harmonic_measure_density_check(g.gen, g.green, mesh.locate(I.x0 + 0.5 * R * unit(s.dim, 0)), center, part);
        res.verdicts.push_back(info("density_relative_gap_half_radius", shallow.max_gap / shallow.max_cap_mass));
        for (int c = 0; c < ExitPartition::kSectors; ++c)
          dt.add({static_cast<std::int64_t>(c), d.lhs[c], d.rhs_chain[c], d.rhs_extrapolated[c]});
      }
      res.tables.push_back(std::move(t));
      if (!dt.rows.empty()) res.tables.push_back(std::move(dt));
      res.constants["cells"] = static_cast<double>(mesh.size());
      res.constants["non_monotone_cells"] = static_cast<double>(g.gen.non_monotone().size());
      res.constants["p_jump_center"] = split.p_jump(center);
    } else if (experiment == "3g") {
      GridPair& g = I.grid(budget.h);
      const Mesh& mesh = g.gen.mesh();
      std::set<int> unique;
      for (const Vec& p : lattice_probes(I.x0, R / 3.0, 0.85 * R, 10000)) {
        const int c = mesh.locate(p);
        if (c >= 0) unique.insert(c);
      }
      const std::vector<int> cells(unique.begin(), unique.end());
      const auto triples = make_triples(cells, 20000);
      const ThreeGReport rep = check_3g(g.green, mesh, triples);
      Table t("3g", {"decade_low", "count"});
      for (std::size_t b = 0; b < rep.histogram.size(); ++b)
        t.add({std::pow(10.0, static_cast<double>(b) - 4.0), static_cast<std::int64_t>(rep.histogram[b])});
      res.tables.push_back(std::move(t));
      res.constants["constant"] = rep.constant;
      res.constants["triples"] = static_cast<double>(triples.size());
      res.verdicts.push_back(info("constant", rep.constant));
    } else if (experiment == "green-bounds") {
      GridPair& g = I.grid(budget.h);
      const GreenBoundsReport rep = green_bounds_report(g.green, g.gen.mesh(), budget.min_separation);
      res.constants["c_up"] = rep.c_up;
      res.constants["c_low"] = rep.c_low;
      res.constants["interior_pairs"] = static_cast<double>(rep.interior_pairs);
      if (rep.interior_pairs > 0) {
        res.verdicts.push_back(check("c_up_at_least_c_low", rep.c_up - rep.c_low, ">=", 0.0));
        res.verdicts.push_back(check("c_low_positive", rep.c_low, ">", 0.0));
      } else {
        res.verdicts.push_back(info("c_low_pair_set_empty", 0.0));
      }
      Table t("green-bounds", {"constant", "value", "min_separation"});
      t.add({std::string("c_up"), rep.c_up, budget.min_separation});
      t.add({std::string("c_low"), rep.c_low, budget.min_separation});
      if (I.model.preset == "brownian-diagnostic") {
        const double free = 1.0 / (2.0 * std::numbers::pi);
        res.verdicts.push_back(check("c_up_vs_free_space", rel_change(rep.c_up, free), "<=", 0.3));
        // Row at the center against the image-charge Green function of (1/2) Laplacian.
        // Within 4h of the pole the seven-point lattice anisotropy dominates.
        const Mesh& mesh = g.gen.mesh();
        const int c = mesh.locate(I.x0);
        const Vec& xc = mesh.cells[c];
        Table gt("green-row", {});
        point_columns(gt.columns);
        gt.columns.insert(gt.columns.end(), {"grid", "image_charge"});
        double worst = 0.0;
        for (int j = 0; j < static_cast<int>(mesh.size()); ++j) {
          const Vec& y = mesh.cells[j];
          if ((y - xc).norm() < 4.0 * mesh.h - 1e-12) continue;
          const Vec yr = y - I.x0;
          const Vec image = I.x0 + (R * R / yr.squaredNorm()) * yr;
          const double exact = (1.0 / (xc - y).norm() - R / (yr.norm() * (xc - image).norm())) / (2.0 * std::numbers::pi);
          worst = std::max(worst, std::abs(g.green(c, j) / exact - 1.0));
          std::vector<Field> row;
          push_point(row, y);
          row.insert(row.end(), {g.green(c, j), exact});
          gt.add(std::move(row));
        }
        res.tables.push_back(std::move(gt));
        res.constants["green_row_worst_relative_error"] = worst;
        res.verdicts.push_back(check("green_row_vs_image_charge", worst, "<=", 0.05));
      }
      res.tables.push_back(std::move(t));
    } else if (experiment == "boundary-decay") {
      GridPair& g = I.grid(budget.h);
      const Mesh& mesh = g.gen.mesh();
      const double radius = std::max(I.r_local * I.chart.r0() / 8.0, R / 4.0);
      const BoundaryDecayReport rep =
          boundary_decay_report(g.green, mesh, mesh.locate(I.x0), I.chart.base_point(), radius);
      Table t("boundary-decay", {});
      point_columns(t.columns);
      t.columns.emplace_back("delta");
      t.columns.emplace_back("ratio");
      for (std::size_t p = 0; p < rep.probes.size(); ++p) {
        std::vector<Field> row;
        push_point(row, mesh.cells[rep.probes[p]]);
        row.insert(row.end(), {mesh.depth[rep.probes[p]], rep.ratios[p]});
        t.add(std::move(row));
      }
      res.tables.push_back(std::move(t));
      res.constants["constant"] = rep.constant;
      res.constants["probe_radius"] = radius;
      res.verdicts.push_back(check("all_ratios_positive", rep.constant, ">", 0.0));
    } else if (experiment == "martin") {
      GridPair& g = I.grid(budget.h);
      const Mesh& mesh = g.gen.mesh();
      const int center = mesh.locate(I.x0);
      const int x = mesh.locate(I.x0 + 0.5 * R * unit(s.dim, 0));
      const MartinKernel mk(g.gen, g.green, center);
      const Vec z0 = I.x0 + R * unit(s.dim, 0);
      // Boundary points on caps around z0 (angles up to 0.6 rad).
      std::vector<Vec> points;
      for (int a = 0; a <= 6; ++a) {
        const double theta = 0.1 * a;
        const int n_phi = a == 0 ? 1 : 8;
        for (int b = 0; b < n_phi; ++b) {
          const double phi = 2.0 * std::numbers::pi * b / n_phi;
          Vec nrm(3);
          nrm << std::cos(theta), std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi);
          points.push_back(I.x0 + R * nrm);
        }
      }
      const std::vector<double> radii{0.6 * R, 0.3 * R, 0.15 * R};
      const std::vector<double> osc = mk.oscillation(x, z0, points, radii);
      Table t("martin-oscillation", {"radius", "oscillation"});
      for (std::size_t k = 0; k < radii.size(); ++k) t.add({radii[k], osc[k]});
      res.tables.push_back(std::move(t));
      res.verdicts.push_back(check("oscillation_decreases", (osc[0] >= osc[1] && osc[1] >= osc[2]) ? 1.0 : 0.0,
                                   "==", 1.0));
      double ones = 0.0;
      for (int j = 0; j < static_cast<int>(mesh.size()); ++j)
        if (j != center) ones = std::max(ones, std::abs(mk(center, j) - 1.0));
      res.verdicts.push_back(check("reference_row_is_one", ones, "==", 0.0));
      Table bt("martin-boundary", {});
      point_columns(bt.columns);
      bt.columns.emplace_back("value");
      const bool brownian = I.model.preset == "brownian-diagnostic";
      if (brownian) bt.columns.emplace_back("poisson_ratio");
      double worst = 0.0;
      const Vec& xp = mesh.cells[x];
      for (std::size_t p = 0; p < points.size(); ++p) {
        const double m = mk.boundary_value(x, points[p]);
        std::vector<Field> row;
        push_point(row, points[p]);
        row.emplace_back(m);
        if (brownian) {
          const double exact = (R * R - (xp - I.x0).squaredNorm()) * R / std::pow((xp - points[p]).norm(), 3);
          row.emplace_back(exact);
          worst = std::max(worst, std::abs(m - exact) / exact);
        }
        bt.add(std::move(row));
      }
      res.tables.push_back(std::move(bt));
      res.constants["oscillation_largest_cap"] = osc[0];
      if (brownian) res.verdicts.push_back(check("poisson_ratio_relative_error", worst, "<=", 0.1));
    } else if (experiment == "conditional-gauge") {
      GridPair& g = I.grid(budget.h);
      const Mesh& mesh = g.gen.mesh();
      std::set<int> unique;
      for (const Vec& p : lattice_probes(I.x0, R / 4.0, R / 2.0 + 1e-12, s.poles)) {
        const int c = mesh.locate(p);
        if (c >= 0) unique.insert(c);
      }
      const std::vector<int> poles(unique.begin(), unique.end());
      const ConditionalGaugeReport rep = conditional_gauge_grid(g.gen, g.green, I.model.q, poles);
      res.constants["spectral_radius"] = rep.spectral_radius;
      if (!rep.gaugeable) {
        res.status = "refused";
        res.error = "NotGaugeable";
        res.verdicts.push_back({"not_gaugeable", rep.spectral_radius, 1.0, "<", "REFUSED"});
        return res;
      }
      Table t("conditional-gauge", {});
      point_columns(t.columns);
      t.columns.emplace_back("min_f");
      t.columns.emplace_back("max_f");
      for (std::size_t k = 0; k < rep.poles.size(); ++k) {
        std::vector<Field> row;
        push_point(row, mesh.cells[rep.poles[k]]);
        row.insert(row.end(), {rep.min_f[k], rep.max_f[k]});
        t.add(std::move(row));
      }
      res.tables.push_back(std::move(t));
      const Eigen::VectorXd qabs = potential_on_cells(mesh, I.model.q).cwiseAbs();
      const double eta = g.green.solve(qabs).maxCoeff();
      res.constants["poles"] = static_cast<double>(rep.poles.size());
      res.constants["min_f"] = rep.overall_min;
      res.constants["max_f"] = rep.overall_max;
      res.constants["eta_grid"] = eta;
      res.verdicts.push_back(check("min_f_positive", rep.overall_min, ">", 0.0));
      res.verdicts.push_back(check("max_f_finite", std::isfinite(rep.overall_max) ? 1.0 : 0.0, "==", 1.0));
      if (I.q_zero()) {
        res.verdicts.push_back(check("zero_potential_min_is_one", rep.overall_min, "==", 1.0));
        res.verdicts.push_back(check("zero_potential_max_is_one", rep.overall_max, "==", 1.0));
      } else if (eta < 0.1) {
        res.verdicts.push_back(check("two_sided_spread", rep.overall_max / rep.overall_min, "<", 1.0 + 10.0 * eta));
      } else {
        res.verdicts.push_back(info("two_sided_spread", rep.overall_max / rep.overall_min));
      }
    } else if (experiment == "beta") {
      GridPair& g = I.grid(budget.h);
      const Mesh& mesh = g.gen.mesh();
      const double volume = std::pow(R / 4.0, 3);
      Table t("beta-sweep", {"scale", "beta", "beta_without_top", "spectral_radius", "gaugeable"});
      const Potential q = I.model.q ? I.model.q : constant_potential(0.0);
      double b1 = 0.0;
      double b2 = 0.0;
      for (double lambda : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0}) {
        const Potential ql = [q, lambda](const Vec& y) { return lambda * q(y); };
        const BetaReport b = beta_q_grid(g.green, mesh, ql, volume);
        const double rho = neumann_radius(g.green, potential_on_cells(mesh, ql));
        t.add({lambda, b.beta, b.beta_without_top, rho, static_cast<std::int64_t>(rho < 1.0)});
        if (lambda == 1.0) {
          b1 = b.beta;
          res.constants["beta"] = b.beta;
          res.constants["beta_without_top"] = b.beta_without_top;
        }
        if (lambda == 2.0) b2 = b.beta;
      }
      res.tables.push_back(std::move(t));
      res.verdicts.push_back(check("homogeneity_gap", std::abs(b2 - 2.0 * b1), "==", 0.0));
      res.verdicts.push_back(info("beta_simplified_F_empty_K_B", b1));
    } else if (experiment == "kato") {
      const Potential q = I.model.q ? I.model.q : constant_potential(0.0);
      KatoSettings ks;
      ks.tolerance = 1e-4;
      ks.max_level = 5;
      Table t("kato", {"r", "norm", "probes"});
      double previous = std::numeric_limits<double>::infinity();
      bool monotone = true;
      for (double r : {R, R / 2.0}) {
        const auto probes = kato_probe_lattice(I.ball, r);
        const double k = kato_norm(q, s.dim, r, probes, ks);
        t.add({r, k, static_cast<std::int64_t>(probes.size())});
        monotone = monotone && k <= previous;
        previous = k;
        res.constants["norm_r" + format_double(r)] = k;
      }
      res.tables.push_back(std::move(t));
      res.verdicts.push_back(check("non_increasing_in_r", monotone ? 1.0 : 0.0, "==", 1.0));
    } else {
      throw Error(ErrorCode::ConfigError, "unknown experiment '" + experiment + "'");
    }
  } catch (const Error& e) {
    res.status = "error";
    res.error = e.what();
  } catch (const std::exception& e) {
    res.status = "error";
    res.error = std::string("internal: ") + e.what();
  }
  return res;
}

}  // namespace jdlab
