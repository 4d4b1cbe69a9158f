#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <tuple>

#include "doctest.h"
#include "jdlab/error.hpp"
#include "jdlab/grid.hpp"

using namespace jdlab;
using std::numbers::pi;

namespace {

Vec v3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

struct Fixture {
  OperatorModel model;
  BallDomain ball;
  DiscreteGenerator gen;
  GreenMatrix green;
  int center = -1;
};

// Assembly and factorization take seconds; share them across test cases.
// divisions > 0 sets the spacing to radius / divisions; 0 keeps the default mesh.
const Fixture& fixture(const std::string& preset, double radius, int divisions = 0) {
  static std::map<std::tuple<std::string, double, int>, std::unique_ptr<Fixture>> cache;
  auto& slot = cache[{preset, radius, divisions}];
  if (!slot) {
    const OperatorModel m = make_model(preset, 3, 1.0, 1.0);
    const BallDomain ball(Vec::Zero(3), radius);
    MeshConfig mc;
    if (divisions > 0) mc.spacing = radius / divisions;
    DiscreteGenerator gen = assemble_generator(m, ball, build_mesh(ball, mc));
    GreenMatrix green = green_matrix(gen);
    slot = std::make_unique<Fixture>(Fixture{m, ball, std::move(gen), std::move(green), -1});
    slot->center = slot->gen.mesh().locate(Vec::Zero(3));
  }
  return *slot;
}

// Ball Green function of (1/2) Laplacian in d = 3 by the image charge.
double ball_green(const Vec& x, const Vec& y, double R) {
  const double free = 1.0 / (2.0 * pi * (x - y).norm());
  if (y.norm() == 0.0) return free - 1.0 / (2.0 * pi * R);
  const Vec image = (R * R / y.squaredNorm()) * y;
  return free - R / (2.0 * pi * y.norm() * (x - image).norm());
}

}  // namespace

TEST_CASE("mesh layout") {
  const BallDomain ball(Vec::Zero(3), 0.5);
  const Mesh mesh = build_mesh(ball);
  CHECK(mesh.h == doctest::Approx(0.5 / 8.0));
  CHECK(mesh.size() > 1500);
  CHECK(mesh.size() < 2500);
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    CHECK(ball.contains(mesh.cells[i]));
    CHECK(mesh.find(mesh.keys[i]) == static_cast<int>(i));
  }
  for (const Vec& e : mesh.exterior) CHECK(!ball.contains(e));
  CHECK(mesh.locate(Vec::Zero(3)) >= 0);
  CHECK(mesh.locate(v3(0.49, 0.49, 0.0)) == -1);
  MeshConfig bad;
  bad.spacing = 0.2;
  CHECK_THROWS_AS(build_mesh(ball, bad), Error);
}

TEST_CASE("pure diffusion rows are the seven-point stencil") {
  const Fixture& f = fixture("brownian-diagnostic", 1.0);
  const Mesh& mesh = f.gen.mesh();
  const double h2 = mesh.h * mesh.h;
  int checked = 0;
  for (int i = 0; i < static_cast<int>(mesh.size()); ++i) {
    if (mesh.depth[i] < 2.0 * mesh.h) continue;
    ++checked;
    CHECK(f.gen.neg_l()(i, i) == doctest::Approx(3.0 / h2).epsilon(1e-12));
    int neighbors = 0;
    for (int j = 0; j < static_cast<int>(mesh.size()); ++j) {
      if (j == i || f.gen.neg_l()(i, j) == 0.0) continue;
      ++neighbors;
      CHECK(f.gen.neg_l()(i, j) == doctest::Approx(-0.5 / h2).epsilon(1e-12));
      CHECK((mesh.cells[i] - mesh.cells[j]).norm() == doctest::Approx(mesh.h));
    }
    CHECK(neighbors == 6);
    if (checked > 40) break;
  }
  CHECK(f.gen.jump_exit_rate().norm() == 0.0);
}

TEST_CASE("jump weights follow the kernel at non-adjacent offsets") {
  const Fixture& f = fixture("identity", 0.5);
  const Mesh& mesh = f.gen.mesh();
  const int i = f.center;
  for (const Key& k : {Key{2, 0, 0}, Key{1, 2, 0}, Key{3, -1, 2}, Key{0, 0, -5}}) {
    Key target{mesh.keys[i][0] + k[0], mesh.keys[i][1] + k[1], mesh.keys[i][2] + k[2]};
    const double dist = mesh.h * std::sqrt(static_cast<double>(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]));
    CHECK(f.gen.lattice_weight(i, target) * std::pow(dist, 4.0) / mesh.volume() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("jump absorption from the center against the exterior integral") {
  // int_{|y|>R} c |y|^{-3-alpha} dy = 4 pi c R^{-alpha} / alpha
  for (const char* preset : {"identity", "stable-diagnostic"}) {
    const Fixture& f = fixture(preset, 0.5);
    CHECK(f.gen.jump_exit_rate()(f.center) == doctest::Approx(4.0 * pi / 0.5).epsilon(0.05));
  }
}

TEST_CASE("green matrix identities") {
  const Fixture& f = fixture("identity", 0.5);
  CHECK(f.green.symmetry_error() < 1e-9);
  CHECK(f.green.min_entry() > 0.0);
  const ExitSplit split = exit_split(f.gen, f.green);
  CHECK(split.conservation_error < 1e-9);
  for (int i = 0; i < static_cast<int>(f.green.size()); i += 97) {
    CHECK(split.p_continuous(i) > 0.0);
    CHECK(split.p_jump(i) > 0.0);
  }
}

TEST_CASE("brownian green function against the image-charge formula") {
  const Fixture& f = fixture("brownian-diagnostic", 1.0);
  const Mesh& mesh = f.gen.mesh();
  const Vec x0 = mesh.cells[f.center];
  double worst = 0.0;
  int used = 0;
  for (int j = 0; j < static_cast<int>(mesh.size()); ++j) {
    // Closer to the pole the seven-point lattice anisotropy exceeds 5% (10% at 2h on axis).
    if ((mesh.cells[j] - x0).norm() < 4.0 * mesh.h - 1e-12) continue;
    worst = std::max(worst, std::abs(f.green(f.center, j) / ball_green(x0, mesh.cells[j], 1.0) - 1.0));
    ++used;
  }
  CHECK(used > 500);
  CHECK(worst < 0.05);
}

TEST_CASE("occupation time of simulated paths against a green row") {
  // Spacing R/12 so that cells with depth >= 4h exist at distance >= 4h from
  // the pole, where the lattice Green function is within a few percent.
  const Fixture& f = fixture("identity", 0.5, 12);
  const Mesh& mesh = f.gen.mesh();
  const Vec x0 = mesh.cells[f.center];
  PathConfig cfg = local_path_config(PathConfig{}, 0.5);
  const PathSimulator sim(f.model, f.ball, cfg);
  const std::size_t n = mesh.size();
  struct Occupation {
    std::vector<double> time;
    void merge(const Occupation& o) {
      for (std::size_t k = 0; k < time.size(); ++k) time[k] += o.time[k];
    }
  };
  McConfig mc;
  mc.n_paths = 800000;
  mc.seed = 21;
  const Occupation occ = parallel_paths(mc, Occupation{std::vector<double>(n, 0.0)},
                                        [&](PhiloxStream& rng, std::uint64_t, Occupation& acc) {
                                          const StepObserver obs = [&](const Vec& a, const Vec& b, double dt) {
                                            const int c = mesh.locate(0.5 * (a + b));
                                            if (c >= 0) acc.time[c] += dt;
                                          };
                                          sim.run(x0, rng, {}, {}, &obs);
                                        });
  int used = 0, within = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (mesh.depth[j] < 4.0 * mesh.h || (mesh.cells[j] - x0).norm() < 4.0 * mesh.h - 1e-12) continue;
    const double density = occ.time[j] / mc.n_paths / mesh.volume();
    ++used;
    within += std::abs(density / f.green(f.center, static_cast<int>(j)) - 1.0) < 0.1;
  }
  CHECK(used > 100);
  CHECK(within == used);
}

TEST_CASE("levy exit identity") {
  const Fixture& f = fixture("identity", 0.5);
  const ExitSplit split = exit_split(f.gen, f.green);
  const int x = f.gen.mesh().locate(v3(0.1, -0.05, 0.2));
  const auto all = levy_exit_identity_check(f.gen, f.green, x, [](const Vec&) { return true; });
  CHECK(all.gap < 1e-9);
  CHECK(all.solve_route == doctest::Approx(split.p_jump(x)).epsilon(1e-9));
  const auto far = levy_exit_identity_check(f.gen, f.green, x, [&](const Vec& y) {
    return y.norm() > f.gen.mesh().exterior_radius;
  });
  CHECK(far.gap < 1e-9);
  CHECK(far.solve_route > 0.0);

  const Fixture& s = fixture("stable-diagnostic", 0.5);
  const ExitSplit pure = exit_split(s.gen, s.green);
  CHECK(pure.p_continuous.norm() == 0.0);
  CHECK((pure.p_jump.array() - 1.0).abs().maxCoeff() < 1e-9);
}

TEST_CASE("grid harmonic measure sums to one") {
  const Fixture& f = fixture("identity", 0.5);
  const ExitPartition part(f.ball);
  const auto h = grid_harmonic_measure(f.gen, f.green, f.center, part);
  double total = 0.0;
  for (double m : h.mass) total += m;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(h.p_continuous + h.p_jump == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("3G, green bounds and boundary decay") {
  const Fixture& f = fixture("identity", 0.5);
  const Mesh& mesh = f.gen.mesh();
  const auto cells = cells_in_ball(mesh, Vec::Zero(3), 0.45);
  std::vector<int> sub;
  for (std::size_t i = 0; i < cells.size(); i += cells.size() / 25) sub.push_back(cells[i]);
  const auto triples = make_triples(sub, 5000);
  CHECK(triples.size() == 5000);
  const auto g3 = check_3g(f.green, mesh, triples);
  CHECK(std::isfinite(g3.constant));
  CHECK(g3.constant > 0.0);
  for (double r : g3.ratios) CHECK(r <= g3.constant);

  const auto gb = green_bounds_report(f.green, mesh, 2.0 * mesh.h);
  CHECK(gb.interior_pairs > 0);
  CHECK(gb.c_up >= gb.c_low);
  CHECK(gb.c_low > 0.0);

  Vec q = Vec::Zero(3);
  q(2) = -0.5;
  const auto bd = boundary_decay_report(f.green, mesh, f.center, q, 0.25);
  CHECK(!bd.probes.empty());
  for (double r : bd.ratios) CHECK(r > 0.0);
}

TEST_CASE("brownian green upper constant against free space") {
  const Fixture& f = fixture("brownian-diagnostic", 1.0);
  const auto gb = green_bounds_report(f.green, f.gen.mesh(), 2.0 * f.gen.mesh().h);
  CHECK(gb.c_up == doctest::Approx(1.0 / (2.0 * pi)).epsilon(0.3));
}

TEST_CASE("martin kernel") {
  SUBCASE("reference row") {
    const Fixture& f = fixture("identity", 0.5);
    const MartinKernel m(f.gen, f.green, f.center);
    for (int j = 0; j < static_cast<int>(f.green.size()); ++j) CHECK(m(f.center, j) == 1.0);
  }
  SUBCASE("brownian boundary values against the poisson kernel ratio") {
    const Fixture& f = fixture("brownian-diagnostic", 1.0);
    const Mesh& mesh = f.gen.mesh();
    const MartinKernel m(f.gen, f.green, f.center);
    const Vec x0 = mesh.cells[f.center];
    for (const Vec& xp : {v3(0.25, 0.0, 0.125), v3(-0.375, 0.25, 0.0), v3(0.0, 0.0, -0.5)}) {
      const int x = mesh.locate(xp);
      const Vec xc = mesh.cells[x];
      REQUIRE(mesh.depth[x] >= 0.25);
      for (double ang : {0.0, 0.8, 1.6, 2.4, 3.1}) {
        for (double phi : {0.3, 2.0, 4.4}) {
          const Vec z = v3(std::sin(ang) * std::cos(phi), std::sin(ang) * std::sin(phi), std::cos(ang));
          const double poisson = (1.0 - xc.squaredNorm()) / std::pow((xc - z).norm(), 3);
          const double poisson0 = (1.0 - x0.squaredNorm()) / std::pow((x0 - z).norm(), 3);
          CHECK(m.boundary_value(x, z) == doctest::Approx(poisson / poisson0).epsilon(0.1));
        }
      }
    }
  }
  SUBCASE("brownian boundary values from depth R/4 at spacing R/10") {
    // The 10% target holds from depth R/2 (subcase above). At depth R/4 the
    // caps nearest x sit on a peak only 2-3 cells wide; the flux average
    // under-reads it by about 13% here and the gap closes slowly with h.
    const Fixture& f = fixture("brownian-diagnostic", 1.0, 10);
    const Mesh& mesh = f.gen.mesh();
    const MartinKernel m(f.gen, f.green, f.center);
    const Vec x0 = mesh.cells[f.center];
    for (const Vec& xp : {v3(0.0, 0.0, 0.7), v3(0.5, 0.5, 0.2), v3(-0.6, 0.3, -0.3)}) {
      const int x = mesh.locate(xp);
      const Vec xc = mesh.cells[x];
      REQUIRE(mesh.depth[x] >= 0.25);
      for (double ang : {0.0, 0.8, 1.6, 2.4, 3.1}) {
        for (double phi : {0.3, 2.0, 4.4}) {
          // Rotate so that ang = 0 is the direction of x.
          const Vec e = xc.normalized();
          Vec t = std::abs(e(0)) < 0.9 ? v3(1, 0, 0) : v3(0, 1, 0);
          t = (t - t.dot(e) * e).normalized();
          const Vec u = v3(e(1) * t(2) - e(2) * t(1), e(2) * t(0) - e(0) * t(2), e(0) * t(1) - e(1) * t(0));
          const Vec z = std::cos(ang) * e + std::sin(ang) * (std::cos(phi) * t + std::sin(phi) * u);
          const double poisson = (1.0 - xc.squaredNorm()) / std::pow((xc - z).norm(), 3);
          const double poisson0 = (1.0 - x0.squaredNorm()) / std::pow((x0 - z).norm(), 3);
          CHECK(m.boundary_value(x, z) == doctest::Approx(poisson / poisson0).epsilon(0.15));
        }
      }
    }
  }
  SUBCASE("oscillation shrinks with the cap") {
    const Fixture& f = fixture("identity", 0.5);
    const Mesh& mesh = f.gen.mesh();
    const MartinKernel m(f.gen, f.green, f.center);
    const int x = mesh.locate(v3(0.125, 0.0, 0.0));
    Vec z = Vec::Zero(3);
    z(0) = 0.5;
    std::vector<Vec> pts;
    for (double a : {0.05, 0.1, 0.2, 0.3, 0.45, 0.6})
      for (double phi : {0.0, 1.5, 3.0, 4.5})
        pts.push_back(0.5 * v3(std::cos(a), std::sin(a) * std::cos(phi), std::sin(a) * std::sin(phi)));
    const std::vector<double> radii{0.35, 0.2, 0.1};
    const auto osc = m.oscillation(x, z, pts, radii);
    REQUIRE(osc.size() == 3);
    CHECK(osc[0] >= osc[1]);
    CHECK(osc[1] >= osc[2]);
  }
}

TEST_CASE("harmonic measure density") {
  const Fixture& f = fixture("identity", 0.5);
  const ExitPartition part(f.ball);
  const ExitSplit split = exit_split(f.gen, f.green);
  SUBCASE("reference point") {
    const auto d = harmonic_measure_density_check(f.gen, f.green, f.center, f.center, part);
    for (int c = 0; c < ExitPartition::kSectors; ++c) CHECK(d.rhs_chain[c] == doctest::Approx(d.lhs[c]).epsilon(1e-14));
    CHECK(d.total_lhs == doctest::Approx(split.p_continuous(f.center)).epsilon(1e-9));
  }
  SUBCASE("generic point") {
    const int x = f.gen.mesh().locate(v3(0.125, 0.0, 0.0));
    const auto d = harmonic_measure_density_check(f.gen, f.green, x, f.center, part);
    double chain_total = 0.0;
    for (double v : d.rhs_chain) chain_total += v;
    CHECK(d.total_lhs == doctest::Approx(split.p_continuous(x)).epsilon(1e-9));
    CHECK(std::abs(chain_total - d.total_lhs) < 1e-9);
    CHECK(d.max_gap_chain < 1e-9);
    CHECK(d.max_gap < 0.05 * d.max_cap_mass);
  }
}

TEST_CASE("grid gauge") {
  const Fixture& f = fixture("identity", 0.5);
  const Eigen::VectorXd row_sums = f.green.matrix().rowwise().sum() * f.green.volume();
  SUBCASE("zero potential") {
    const auto g = gauge_grid(f.gen, f.green, constant_potential(0.0));
    REQUIRE(g.gaugeable);
    CHECK((g.values.array() == 1.0).all());
  }
  SUBCASE("negative potential") {
    const auto g = gauge_grid(f.gen, f.green, constant_potential(-1.0));
    REQUIRE(g.gaugeable);
    CHECK(g.values.minCoeff() > 0.0);
    CHECK(g.values.maxCoeff() < 1.0);
  }
  SUBCASE("khasminskii bound") {
    for (double eta : {0.25, 0.5, 0.75}) {
      const double v = eta / row_sums.maxCoeff();
      const auto g = gauge_grid(f.gen, f.green, constant_potential(v));
      REQUIRE(g.gaugeable);
      CHECK(g.values.maxCoeff() <= 1.0 / (1.0 - eta) + 1e-9);
      CHECK(g.values.minCoeff() > 1.0);
    }
  }
  SUBCASE("refusal past the spectral threshold") {
    // A positive operator has spectral radius at least its smallest row sum.
    const auto g = gauge_grid(f.gen, f.green, constant_potential(2.0 / row_sums.minCoeff()));
    CHECK(!g.gaugeable);
    CHECK(g.spectral_radius >= 1.0);
    CHECK(g.values.size() == 0);
  }
  SUBCASE("schrodinger with unit data equals the gauge") {
    const Potential q = make_potential("bump:0,0,0:0.25:20", 3);
    const auto g = gauge_grid(f.gen, f.green, q);
    const auto s = schrodinger_grid(f.gen, f.green, q, [](const Vec&) { return 1.0; });
    REQUIRE(g.gaugeable);
    CHECK((g.values - s.values).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("conditional gauge") {
  const Fixture& f = fixture("identity", 0.5);
  const std::vector<int> poles{f.center, f.gen.mesh().locate(v3(0.25, 0.0, 0.0)), f.gen.mesh().locate(v3(0.0, -0.3, 0.1))};
  SUBCASE("zero potential") {
    const auto r = conditional_gauge_grid(f.gen, f.green, constant_potential(0.0), poles);
    REQUIRE(r.gaugeable);
    CHECK(r.overall_min == 1.0);
    CHECK(r.overall_max == 1.0);
  }
  SUBCASE("negative potential, pole at the center") {
    const std::vector<int> one{f.center};
    const auto r = conditional_gauge_grid(f.gen, f.green, constant_potential(-0.5), one);
    REQUIRE(r.gaugeable);
    CHECK(r.overall_min > 0.0);
    CHECK(r.overall_min <= r.overall_max);
    CHECK(r.overall_max < 1.0);
  }
  SUBCASE("small potential keeps F in a narrow band") {
    const Eigen::VectorXd row_sums = f.green.matrix().rowwise().sum() * f.green.volume();
    const double eta = 0.05;
    const auto r = conditional_gauge_grid(f.gen, f.green, constant_potential(eta / row_sums.maxCoeff()), poles);
    REQUIRE(r.gaugeable);
    CHECK(r.overall_min > 0.0);
    CHECK(r.overall_max / r.overall_min < 1.0 + 10.0 * eta);
  }
}

TEST_CASE("beta functional") {
  const Fixture& f = fixture("identity", 0.5);
  const Mesh& mesh = f.gen.mesh();
  CHECK(beta_q_grid(f.green, mesh, constant_potential(0.0), 0.0).beta == 0.0);
  const Potential q = make_potential("bump:0,0,0:0.25:5", 3);
  const Potential q2 = [&](const Vec& x) { return 2.0 * q(x); };
  const auto b1 = beta_q_grid(f.green, mesh, q, 0.125 * 0.125 * 0.125);
  const auto b2 = beta_q_grid(f.green, mesh, q2, 0.125 * 0.125 * 0.125);
  CHECK(b2.beta == 2.0 * b1.beta);
  CHECK(b1.beta_without_top <= b1.beta);
  CHECK(b1.removed_volume >= 0.125 * 0.125 * 0.125);
}

TEST_CASE("grid harnack") {
  const Fixture& f = fixture("identity", 0.5);
  const auto cells = cells_in_ball(f.gen.mesh(), Vec::Zero(3), 0.25);
  const auto one = harnack_grid(f.gen, f.green, constant_potential(0.0), [](const Vec&) { return 1.0; }, cells);
  CHECK((one.u.array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(one.ratio == doctest::Approx(1.0).epsilon(1e-12));

  const Potential q = make_potential("bump:0,0,0:0.25:20", 3);
  const auto cap = [](const Vec& y) { return y(2) > 0.3 ? 1.0 : 0.0; };
  const auto a = harnack_grid(f.gen, f.green, q, cap, cells);
  const auto b = harnack_grid(f.gen, f.green, q, [&](const Vec& y) { return 3.7 * cap(y); }, cells);
  CHECK(a.ratio > 1.0);
  CHECK(b.ratio == doctest::Approx(a.ratio).epsilon(1e-12));
  CHECK(a.arg_hi == b.arg_hi);
  CHECK(a.arg_lo == b.arg_lo);
}

TEST_CASE("grid dirichlet and hitting solves") {
  const Fixture& f = fixture("identity", 0.5);
  const auto u = dirichlet_grid(f.gen, f.green, [](const Vec&) { return 1.0; });
  CHECK((u.array() - 1.0).abs().maxCoeff() < 1e-9);
  const auto half = dirichlet_grid(f.gen, f.green, [](const Vec& y) { return y(0) > 0.0 ? 1.0 : (y(0) == 0.0 ? 0.5 : 0.0); });
  CHECK(half(f.center) == doctest::Approx(0.5).epsilon(1e-9));

  const TargetBall s{v3(1.0, 0.0, 0.0), 0.2};
  const auto h = hitting_grid(f.gen, f.green, s);
  CHECK(h.minCoeff() > 0.0);
  CHECK(h.maxCoeff() < 1.0);
  CHECK(h(f.gen.mesh().locate(v3(0.375, 0.0, 0.0))) > h(f.gen.mesh().locate(v3(-0.375, 0.0, 0.0))));
}

TEST_CASE("trilinear interpolation reproduces cell values and linear data") {
  const Fixture& f = fixture("identity", 0.5);
  const Mesh& mesh = f.gen.mesh();
  Eigen::VectorXd lin(mesh.size());
  auto affine = [](const Vec& y) { return 0.3 + y(0) - 2.0 * y(1) + 0.5 * y(2); };
  for (std::size_t i = 0; i < mesh.size(); ++i) lin(i) = affine(mesh.cells[i]);
  CHECK(interpolate_cells(mesh, lin, mesh.cells[f.center], affine) == doctest::Approx(lin(f.center)));
  const Vec p = v3(0.013, -0.071, 0.102);
  CHECK(interpolate_cells(mesh, lin, p, affine) == doctest::Approx(affine(p)).epsilon(1e-12));
}
