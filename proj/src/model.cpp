#include "jdlab/model.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

#include "jdlab/error.hpp"
#include "jdlab/quadrature.hpp"

namespace jdlab {

Mat OperatorModel::a(const Vec& x) const {
  if (constant_diffusion) return *constant_diffusion;
  return diffusion(x);
}

double OperatorModel::kernel(const Vec& x, const Vec& y) const {
  if (!jumps_enabled) return 0.0;
  if (jump.has_custom()) return jump.custom(x, y);
  const double r = (x - y).norm();
  return jump.c * std::pow(r, -(dim + jump.alpha));
}

void OperatorModel::require_paper_mode() const {
  if (!paper_mode())
    throw Error(ErrorCode::InvalidArgument,
                "model '" + preset + "' is a diagnostic mode (diffusion or jumps disabled)");
  if (dim < 3) throw Error(ErrorCode::InvalidArgument, "paper mode requires d >= 3");
  if (!(jump.alpha > 0.0 && jump.alpha < 2.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0,2)");
  if (!(jump.c > 0.0 && jump.c <= 1.0)) throw Error(ErrorCode::InvalidArgument, "c must lie in (0,1]");
}

OperatorModel make_model(const std::string& preset, int dim, double c, double alpha, Potential q) {
  if (dim < 1 || dim > kMaxDim) throw Error(ErrorCode::InvalidArgument, "unsupported dimension");
  if (!(alpha > 0.0 && alpha < 2.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0,2)");
  if (!(c > 0.0)) throw Error(ErrorCode::InvalidArgument, "c must be positive");
  OperatorModel m;
  m.dim = dim;
  m.preset = preset;
  m.jump.c = c;
  m.jump.alpha = alpha;
  m.q = std::move(q);

  const Mat identity = Mat::Identity(dim, dim);
  auto zero_derivative = [dim](const Vec&, std::span<Mat> out) {
    for (auto& m : out) m = Mat::Zero(dim, dim);
  };

  if (preset == "identity" || preset == "brownian-diagnostic" || preset == "stable-diagnostic") {
    m.diffusion = [identity](const Vec&) { return identity; };
    m.diffusion_derivative = zero_derivative;
    m.constant_diffusion = identity;
    if (preset == "brownian-diagnostic") m.jumps_enabled = false;
    if (preset == "stable-diagnostic") m.diffusion_enabled = false;
  } else if (preset == "variable-spd") {
    // a(x) = I + 0.1 x x^T / (1 + |x|^2)
    m.diffusion = [dim](const Vec& x) {
      Mat a = Mat::Identity(dim, dim);
      a += 0.1 * (x * x.transpose()) / (1.0 + x.squaredNorm());
      return a;
    };
    m.diffusion_derivative = [dim](const Vec& x, std::span<Mat> out) {
      const double s = 1.0 + x.squaredNorm();
      for (int k = 0; k < dim; ++k) {
        Mat dk = Mat::Zero(dim, dim);
        for (int i = 0; i < dim; ++i) {
          for (int j = 0; j < dim; ++j) {
            double v = -2.0 * x(k) * x(i) * x(j) / (s * s);
            if (i == k) v += x(j) / s;
            if (j == k) v += x(i) / s;
            dk(i, j) = 0.1 * v;
          }
        }
        out[k] = dk;
      }
    };
  } else {
    throw Error(ErrorCode::ConfigError, "unknown model preset '" + preset + "'");
  }
  return m;
}

Potential constant_potential(double value) {
  return [value](const Vec&) { return value; };
}

Potential bump_potential(const Vec& center, double radius, double height) {
  if (!(radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "bump radius must be positive");
  return [center, radius, height](const Vec& x) {
    const double s2 = (x - center).squaredNorm() / (radius * radius);
    if (s2 >= 1.0) return 0.0;
    return height * std::exp(1.0 - 1.0 / (1.0 - s2));
  };
}

namespace {

double parse_double(const std::string& text, const std::string& context) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    throw Error(ErrorCode::ConfigError, "cannot parse number '" + text + "' in " + context);
  return value;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) parts.push_back(item);
  if (!text.empty() && text.back() == sep) parts.emplace_back();
  return parts;
}

}  // namespace

Potential make_potential(const std::string& spec, int dim) {
  if (spec == "zero") return constant_potential(0.0);
  const auto parts = split(spec, ':');
  if (parts.size() == 2 && parts[0] == "const") return constant_potential(parse_double(parts[1], spec));
  if (parts.size() == 4 && parts[0] == "bump") {
    const auto coords = split(parts[1], ',');
    if (static_cast<int>(coords.size()) != dim)
      throw Error(ErrorCode::ConfigError, "bump center must have " + std::to_string(dim) + " coordinates");
    Vec center(dim);
    for (int i = 0; i < dim; ++i) center(i) = parse_double(coords[i], spec);
    return bump_potential(center, parse_double(parts[2], spec), parse_double(parts[3], spec));
  }
  throw Error(ErrorCode::ConfigError, "unknown potential preset '" + spec + "'");
}

// ---------------------------------------------------------------------------

EllipticityBounds ellipticity_bounds(const OperatorModel& model, std::span<const Vec> samples) {
  if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "ellipticity_bounds needs samples");
  EllipticityBounds out{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const Vec& x : samples) {
    const Mat a = model.a(x);
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
      throw Error(ErrorCode::NonSymmetricMatrix, "diffusion matrix is not symmetric at a sample point");
    Eigen::SelfAdjointEigenSolver<Mat> eig(a, Eigen::EigenvaluesOnly);
    out.lambda_min = std::min(out.lambda_min, eig.eigenvalues().minCoeff());
    out.lambda_max = std::max(out.lambda_max, eig.eigenvalues().maxCoeff());
  }
  if (!(out.lambda_min > 0.0))
    throw Error(ErrorCode::NonPositiveDefinite, "diffusion matrix has a non-positive eigenvalue");
  return out;
}

// ---------------------------------------------------------------------------

double unit_sphere_area(int dim) {
  return 2.0 * std::pow(std::numbers::pi, 0.5 * dim) / std::tgamma(0.5 * dim);
}

namespace {

struct KatoRule {
  int shells = 0;
  std::vector<double> radii;    // fractions of r
  std::vector<double> weights;  // shell width times Gauss weight, as fractions of r
  SphereRule sphere;
};

KatoRule kato_rule(int dim, int level) {
  // Uniform shells with a two-point Gauss rule inside each shell; shell edges
  // at r j / n make radially piecewise-constant potentials exact.
  KatoRule rule;
  rule.shells = 4 << level;
  const auto inner = gauss_legendre(2, 0.0, 1.0);
  const double width = 1.0 / rule.shells;
  for (int s = 0; s < rule.shells; ++s)
    for (std::size_t i = 0; i < inner.nodes.size(); ++i) {
      rule.radii.push_back(width * (s + inner.nodes[i]));
      rule.weights.push_back(width * inner.weights[i]);
    }
  rule.sphere = sphere_rule(dim, std::min(8 << level, 64));
  return rule;
}

double kato_at_level(const Potential& q, int dim, double r, const Vec& x, const KatoRule& rule) {
  const double area = unit_sphere_area(dim);
  Vec y(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < rule.radii.size(); ++i) {
    const double rho = r * rule.radii[i];
    double mean = 0.0;
    for (std::size_t k = 0; k < rule.sphere.directions.size(); ++k) {
      y.noalias() = x + rho * rule.sphere.directions[k];
      mean += rule.sphere.weights[k] * std::abs(q(y));
    }
    // |x-y|^{2-d} dy = rho^{2-d} rho^{d-1} drho dS = rho drho dS
    total += r * rule.weights[i] * rho * area * mean;
  }
  return total;
}

}  // namespace

double kato_norm(const Potential& q, int dim, double r, std::span<const Vec> probes, const KatoSettings& settings) {
  if (!(r > 0.0)) throw Error(ErrorCode::InvalidArgument, "kato_norm needs r > 0");
  if (dim < 3) throw Error(ErrorCode::InvalidArgument, "kato_norm needs d >= 3");
  if (probes.empty()) throw Error(ErrorCode::InvalidArgument, "kato_norm needs probes");
  std::vector<KatoRule> rules;
  for (int level = settings.base_level; level <= settings.max_level; ++level) rules.push_back(kato_rule(dim, level));
  double sup = 0.0;
  for (const Vec& x : probes) {
    double previous = kato_at_level(q, dim, r, x, rules[0]);
    bool converged = false;
    for (std::size_t level = 1; level < rules.size(); ++level) {
      const double current = kato_at_level(q, dim, r, x, rules[level]);
      // Only the supremum is reported, so a change that is small against the
      // running supremum settles a probe as well.
      const double scale = std::max({std::abs(current), std::abs(previous), sup});
      if (std::abs(current - previous) <= settings.tolerance * scale) {
        previous = current;
        converged = true;
        break;
      }
      previous = current;
    }
    if (!converged)
      throw Error(ErrorCode::QuadratureNonConvergent, "Kato quadrature did not settle within the level budget");
    sup = std::max(sup, previous);
  }
  return sup;
}

std::vector<Vec> kato_probe_lattice(const BallDomain& ball, double r) {
  const int d = ball.dim();
  const double R = ball.radius();
  const int per_side = static_cast<int>(std::ceil(R / (r / 4.0)));
  const double spacing = R / per_side;
  std::vector<Vec> probes{ball.center()};
  std::vector<int> idx(d, -per_side);
  while (true) {
    Vec x = ball.center();
    for (int k = 0; k < d; ++k) x(k) += spacing * idx[k];
    // keep lattice points within one cell diagonal of the closed ball
    if (ball.delta(x) > -spacing * std::sqrt(static_cast<double>(d)) && (x - ball.center()).norm() > 0.0)
      probes.push_back(x);
    int k = 0;
    while (k < d && ++idx[k] > per_side) idx[k++] = -per_side;
    if (k == d) break;
  }
  return probes;
}

// ---------------------------------------------------------------------------

SandwichReport kernel_sandwich_check(const OperatorModel& model, std::span<const std::pair<Vec, Vec>> pairs) {
  SandwichReport report;
  report.pairs = pairs.size();
  const double c = model.jump.c;
  const double p = model.dim + model.jump.alpha;
  report.min_normalized = std::numeric_limits<double>::infinity();
  report.max_normalized = -std::numeric_limits<double>::infinity();
  for (const auto& [x, y] : pairs) {
    const double r = (x - y).norm();
    if (r == 0.0) throw Error(ErrorCode::InvalidArgument, "sandwich pairs must not coincide");
    const double jxy = model.kernel(x, y);
    const double value = jxy * std::pow(r, p);
    report.min_normalized = std::min(report.min_normalized, value);
    report.max_normalized = std::max(report.max_normalized, value);
    const double lower = c;
    const double upper = 1.0 / c;
    const double slack = 1e-12;
    if (value < lower * (1.0 - slack) || value > upper * (1.0 + slack)) ++report.violations;
    report.worst_ratio = std::max({report.worst_ratio, value / upper, lower / value});
    if (model.jump.has_custom()) {
      const double jyx = model.kernel(y, x);
      if (std::abs(jxy - jyx) > 1e-12 * std::max(std::abs(jxy), std::abs(jyx))) ++report.symmetry_violations;
    }
  }
  return report;
}

double chart_rho(const BoundaryChart& chart, const Vec& chart_point) { return chart.rho(chart_point); }

double kernel_mass_to_ball(const OperatorModel& model, const Vec& z, const Vec& center, double radius) {
  const double dist = (z - center).norm();
  if (!(dist > radius)) throw Error(ErrorCode::InvalidArgument, "kernel mass needs z outside the target ball");
  if (!model.jumps_enabled) return 0.0;
  const int d = model.dim;
  if (d == 3 && !model.jump.has_custom()) {
    // Spherical means of |z - y|^{-3-alpha} integrated over radii in closed form:
    // 2 pi / (m D) int_0^a s [(D - s)^{-m} - (D + s)^{-m}] ds, m = 1 + alpha.
    const double m = 1.0 + model.jump.alpha;
    auto power_integral = [](double k, double lo, double hi) {
      if (std::abs(k - 1.0) < 1e-14) return std::log(hi / lo);
      return (std::pow(hi, 1.0 - k) - std::pow(lo, 1.0 - k)) / (1.0 - k);
    };
    const double D = dist;
    const double a = radius;
    const double inner = D * power_integral(m, D - a, D) - power_integral(m - 1.0, D - a, D) -
                         power_integral(m - 1.0, D, D + a) + D * power_integral(m, D, D + a);
    return model.jump.c * 2.0 * std::numbers::pi / (m * D) * inner;
  }
  const auto radial = gauss_legendre(48, 0.0, radius);
  const auto sphere = sphere_rule(d, 24);
  const double area = unit_sphere_area(d);
  double total = 0.0;
  for (std::size_t i = 0; i < radial.nodes.size(); ++i) {
    const double s = radial.nodes[i];
    double mean = 0.0;
    for (std::size_t k = 0; k < sphere.directions.size(); ++k)
      mean += sphere.weights[k] * model.kernel(z, center + s * sphere.directions[k]);
    total += radial.weights[i] * area * std::pow(s, d - 1) * mean;
  }
  return total;
}

}  // namespace jdlab
