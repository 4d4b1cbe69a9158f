#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "jdlab/error.hpp"
#include "jdlab/geometry.hpp"
#include "jdlab/model.hpp"
#include "jdlab/quadrature.hpp"
#include "jdlab/sim.hpp"

using namespace jdlab;
using std::numbers::pi;

namespace {

Vec v3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

OperatorModel constant_a(const Mat& a) {
  OperatorModel m = make_model("identity", static_cast<int>(a.rows()), 1.0, 1.0);
  m.constant_diffusion = a;
  m.diffusion = [a](const Vec&) { return a; };
  return m;
}

std::vector<Vec> random_points(int n, double radius, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  std::vector<Vec> pts;
  while (static_cast<int>(pts.size()) < n) {
    Vec v = v3(normal(gen), normal(gen), normal(gen));
    pts.push_back(v.normalized() * radius * std::cbrt(unif(gen)));
  }
  return pts;
}

}  // namespace

TEST_CASE("gauss-legendre integrates polynomials of degree 2n-1") {
  const auto rule = gauss_legendre(5, 0.0, 2.0);
  double s = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) s += rule.weights[i] * std::pow(rule.nodes[i], 9);
  CHECK(s == doctest::Approx(std::pow(2.0, 10) / 10.0).epsilon(1e-13));
}

TEST_CASE("sphere rule averages quadratics exactly") {
  const auto rule = sphere_rule(3, 6);
  double w = 0.0, xx = 0.0, xy = 0.0;
  for (std::size_t i = 0; i < rule.directions.size(); ++i) {
    w += rule.weights[i];
    xx += rule.weights[i] * rule.directions[i](0) * rule.directions[i](0);
    xy += rule.weights[i] * rule.directions[i](0) * rule.directions[i](1);
  }
  CHECK(w == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(xx == doctest::Approx(1.0 / 3.0).epsilon(1e-13));
  CHECK(std::abs(xy) < 1e-14);
}

TEST_CASE("ellipticity bounds") {
  const auto pts = random_points(100, 1.0, 3);
  SUBCASE("identity") {
    const auto b = ellipticity_bounds(make_model("identity", 3, 1.0, 1.0), pts);
    CHECK(b.lambda_min == 1.0);
    CHECK(b.lambda_max == 1.0);
  }
  SUBCASE("diagonal") {
    Mat a = Mat::Zero(3, 3);
    a.diagonal() << 0.5, 1.0, 2.0;
    const auto b = ellipticity_bounds(constant_a(a), pts);
    CHECK(b.lambda_min == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(b.lambda_max == doctest::Approx(2.0).epsilon(1e-14));
  }
  SUBCASE("variable field against a dense eigensolver") {
    const OperatorModel m = make_model("variable-spd", 3, 1.0, 1.0);
    double lo = 1e300, hi = -1e300;
    for (const Vec& x : pts) {
      Eigen::Matrix3d a = Eigen::Matrix3d::Identity() + 0.1 * (x * x.transpose()) / (1.0 + x.squaredNorm());
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(a);
      lo = std::min(lo, es.eigenvalues()(0));
      hi = std::max(hi, es.eigenvalues()(2));
      const auto one = ellipticity_bounds(m, std::span<const Vec>(&x, 1));
      CHECK(one.lambda_min == doctest::Approx(es.eigenvalues()(0)).epsilon(1e-12));
      CHECK(one.lambda_max == doctest::Approx(es.eigenvalues()(2)).epsilon(1e-12));
    }
    const auto b = ellipticity_bounds(m, pts);
    CHECK(b.lambda_min == doctest::Approx(lo).epsilon(1e-12));
    CHECK(b.lambda_max == doctest::Approx(hi).epsilon(1e-12));
  }
  SUBCASE("errors") {
    Mat ns = Mat::Identity(3, 3);
    ns(0, 1) = 0.2;
    CHECK_THROWS_AS(ellipticity_bounds(constant_a(ns), pts), Error);
    try {
      ellipticity_bounds(constant_a(ns), pts);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NonSymmetricMatrix);
    }
    Mat np = Mat::Identity(3, 3);
    np(2, 2) = -0.1;
    try {
      ellipticity_bounds(constant_a(np), pts);
      FAIL("expected NonPositiveDefinite");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NonPositiveDefinite);
    }
  }
}

TEST_CASE("kato norm closed forms") {
  const std::vector<Vec> origin{Vec::Zero(3)};
  CHECK(kato_norm(constant_potential(0.0), 3, 0.3, origin) == 0.0);
  CHECK(kato_norm(constant_potential(1.0), 3, 0.25, origin) == doctest::Approx(0.3926990817).epsilon(1e-9));
  const Potential indicator = [](const Vec& y) { return y.norm() < 0.1 ? 1.0 : 0.0; };
  CHECK(kato_norm(indicator, 3, 0.2, origin) == doctest::Approx(2.0 * pi * 0.01).epsilon(1e-9));
}

TEST_CASE("kato norm is monotone in r and homogeneous in q") {
  const BallDomain ball(Vec::Zero(3), 0.5);
  const Potential q = make_potential("bump:0.1,0,0:0.2:3", 3);
  const Potential q2 = [&](const Vec& x) { return -2.0 * q(x); };
  const auto probes = kato_probe_lattice(ball, 1.0);  // coarse probe set keeps the test short
  const double k1 = kato_norm(q, 3, 0.5, probes);
  CHECK(kato_norm(q2, 3, 0.5, probes) == 2.0 * k1);
  const double k_small = kato_norm(q, 3, 0.25, probes);
  CHECK(k_small <= k1);
  CHECK(k_small > 0.0);
}

TEST_CASE("kato probe lattice covers the closed ball with spacing r/4") {
  const BallDomain ball(v3(0.1, 0.0, 0.0), 0.5);
  const auto probes = kato_probe_lattice(ball, 0.5);
  CHECK(probes.front() == ball.center());
  for (const Vec& x : random_points(200, 0.5, 9)) {
    double best = 1e300;
    for (const Vec& p : probes) best = std::min(best, (p - (x + ball.center())).norm());
    CHECK(best <= 0.125 * std::sqrt(3.0) / 2.0 + 1e-12);
  }
}

TEST_CASE("kernel sandwich check") {
  std::vector<std::pair<Vec, Vec>> pairs;
  const auto a = random_points(1000, 1.0, 11);
  const auto b = random_points(1000, 1.0, 12);
  for (std::size_t i = 0; i < a.size(); ++i) pairs.emplace_back(a[i], b[i]);
  SUBCASE("default kernel") {
    const auto r = kernel_sandwich_check(make_model("identity", 3, 1.0, 1.0), pairs);
    CHECK(r.violations == 0);
    CHECK(r.pairs == 1000);
  }
  SUBCASE("constant multiple above the upper bound") {
    OperatorModel m = make_model("identity", 3, 1.0, 1.0);
    m.jump.custom = [](const Vec& x, const Vec& y) { return 1.5 * std::pow((x - y).norm(), -4.0); };
    const auto r = kernel_sandwich_check(m, pairs);
    CHECK(r.violations == 1000);
    CHECK(r.worst_ratio == doctest::Approx(1.5).epsilon(1e-12));
  }
  SUBCASE("modulated kernel inside the band") {
    OperatorModel m = make_model("identity", 3, 0.9, 1.0);
    m.jump.custom = [](const Vec& x, const Vec& y) {
      return (1.0 + 0.1 * std::sin(x(0) + y(0))) * std::pow((x - y).norm(), -4.0);
    };
    const auto r = kernel_sandwich_check(m, pairs);
    CHECK(r.violations == 0);
    CHECK(r.symmetry_violations == 0);
  }
}

TEST_CASE("boundary chart of the unit ball") {
  const BallDomain ball(Vec::Zero(3), 1.0);
  const Vec q = v3(0.0, 0.0, -1.0);
  const BoundaryChart chart(ball, q);
  CHECK(chart.rho(chart.to_chart(q)) == doctest::Approx(0.0));
  CHECK(chart.rho(chart.to_chart(v3(0.0, 0.0, -0.9))) == doctest::Approx(0.1).epsilon(1e-14));

  // tangential offset 0.1 at Euclidean depth 0.05
  Vec e1 = Vec::Zero(3);
  e1(0) = 1.0;
  const Vec t = chart.from_chart(e1) - q;
  const double along = 1.0 - std::sqrt(0.95 * 0.95 - 0.01);
  const Vec y = q + 0.1 * t + along * chart.inward_normal();
  CHECK(ball.delta(y) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(chart.rho(chart.to_chart(y)) == doctest::Approx(std::sqrt(0.99) - std::sqrt(0.8925)).epsilon(1e-12));

  CHECK(chart.localization_radius() == doctest::Approx(0.125));
  CHECK(chart.r0() == doctest::Approx(chart.localization_radius() / (4.0 * (1.0 + chart.lipschitz() * chart.lipschitz()))));
  Vec far = Vec::Zero(3);
  far(0) = 0.2;
  try {
    chart.rho(far);
    FAIL("expected OutOfChart");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OutOfChart);
  }
}

TEST_CASE("drift from the divergence form") {
  CHECK(drift_from_divergence(make_model("identity", 3, 1.0, 1.0), v3(0.3, 0.1, 0.2)).norm() == 0.0);

  OperatorModel m = make_model("identity", 3, 1.0, 1.0);
  m.constant_diffusion.reset();
  m.diffusion = [](const Vec& x) {
    Mat a = Mat::Identity(3, 3);
    a(0, 0) += x(0) * x(0);
    return a;
  };
  m.diffusion_derivative = [](const Vec& x, std::span<Mat> out) {
    for (auto& d : out) d = Mat::Zero(3, 3);
    out[0](0, 0) = 2.0 * x(0);
  };
  const Vec b = drift_from_divergence(m, v3(1.0, 0.0, 0.0));
  CHECK(b(0) == doctest::Approx(1.0));
  CHECK(b(1) == 0.0);
  CHECK(b(2) == 0.0);

  // a = I + 0.1 sin(x_1) (E_12 + E_21) against central differences
  OperatorModel s = make_model("identity", 3, 1.0, 1.0);
  s.constant_diffusion.reset();
  s.diffusion = [](const Vec& x) {
    Mat a = Mat::Identity(3, 3);
    a(0, 1) = a(1, 0) = 0.1 * std::sin(x(0));
    return a;
  };
  s.diffusion_derivative = [](const Vec& x, std::span<Mat> out) {
    for (auto& d : out) d = Mat::Zero(3, 3);
    out[0](0, 1) = out[0](1, 0) = 0.1 * std::cos(x(0));
  };
  for (const Vec& x : random_points(20, 1.0, 5)) {
    const double h = 1e-4;
    Vec fd = Vec::Zero(3);
    for (int i = 0; i < 3; ++i) {
      Vec xp = x, xm = x;
      xp(i) += h;
      xm(i) -= h;
      const Mat da = (s.diffusion(xp) - s.diffusion(xm)) / (2.0 * h);
      for (int j = 0; j < 3; ++j) fd(j) += 0.5 * da(i, j);
    }
    CHECK((drift_from_divergence(s, x) - fd).norm() < 1e-8);
  }

  OperatorModel missing = s;
  missing.diffusion_derivative = nullptr;
  try {
    drift_from_divergence(missing, v3(0.0, 0.0, 0.0));
    FAIL("expected MissingDerivatives");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingDerivatives);
  }
}

TEST_CASE("kernel mass to a ball: closed form against a numeric rule") {
  const Vec z = v3(0.7, 0.2, -0.1);
  const Vec c = v3(-0.3, 0.1, 0.2);
  const double radius = 0.4;
  for (double alpha : {0.5, 1.0, 1.5}) {
    const OperatorModel m = make_model("identity", 3, 0.8, alpha);
    const double closed = kernel_mass_to_ball(m, z, c, radius);
    // Gauss rule in spherical coordinates around the target center
    const auto radial = gauss_legendre(40, 0.0, radius);
    const auto sphere = sphere_rule(3, 40);
    double numeric = 0.0;
    for (std::size_t i = 0; i < radial.nodes.size(); ++i)
      for (std::size_t k = 0; k < sphere.directions.size(); ++k) {
        const Vec y = c + radial.nodes[i] * sphere.directions[k];
        numeric += radial.weights[i] * 4.0 * pi * radial.nodes[i] * radial.nodes[i] * sphere.weights[k] *
                   m.kernel(z, y);
      }
    CHECK(closed == doctest::Approx(numeric).epsilon(1e-8));
  }
  try {
    kernel_mass_to_ball(make_model("identity", 3, 1.0, 1.0), c, c, radius);
    FAIL("expected InvalidArgument");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidArgument);
  }
}

TEST_CASE("potential presets") {
  CHECK(make_potential("zero", 3)(v3(0.1, 0.2, 0.3)) == 0.0);
  CHECK(make_potential("const:-0.5", 3)(v3(0.1, 0.2, 0.3)) == -0.5);
  const Potential bump = make_potential("bump:0,0,0:0.25:100", 3);
  CHECK(bump(Vec::Zero(3)) == doctest::Approx(100.0));
  CHECK(bump(v3(0.25, 0.0, 0.0)) == 0.0);
  CHECK_THROWS_AS(make_potential("bump:0,0:0.25:100", 3), Error);
  CHECK_THROWS_AS(make_potential("wobble", 3), Error);
}

TEST_CASE("paper mode requirements") {
  CHECK_NOTHROW(make_model("identity", 3, 1.0, 1.0).require_paper_mode());
  CHECK_THROWS_AS(make_model("identity", 3, 1.5, 1.0).require_paper_mode(), Error);
  CHECK_THROWS_AS(make_model("brownian-diagnostic", 3, 1.0, 1.0).require_paper_mode(), Error);
  CHECK_THROWS_AS(make_model("stable-diagnostic", 3, 1.0, 1.0).require_paper_mode(), Error);
  CHECK_THROWS_AS(make_model("identity", 3, 1.0, 2.0), Error);
}
