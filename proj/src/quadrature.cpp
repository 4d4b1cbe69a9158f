#include "jdlab/quadrature.hpp"

#include <cmath>
#include <numbers>

#include "jdlab/error.hpp"

namespace jdlab {

QuadratureRule gauss_legendre(int n, double a, double b) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "quadrature needs at least one node");
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (b + a);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      // p1 = P_n(x), p0 = P_{n-1}(x)
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = mid - half * x;
    rule.nodes[n - 1 - i] = mid + half * x;
    rule.weights[i] = half * w;
    rule.weights[n - 1 - i] = half * w;
  }
  return rule;
}

namespace {

// Appends directions of S^{m-1} embedded in the leading m coordinates.
void build_sphere(int m, int n, std::vector<Vec>& dirs, std::vector<double>& weights) {
  if (m == 2) {
    const int count = 2 * n;
    for (int k = 0; k < count; ++k) {
      const double phi = 2.0 * std::numbers::pi * (k + 0.5) / count;
      Vec v(2);
      v << std::cos(phi), std::sin(phi);
      dirs.push_back(v);
      weights.push_back(1.0 / count);
    }
    return;
  }
  std::vector<Vec> sub_dirs;
  std::vector<double> sub_weights;
  build_sphere(m - 1, n, sub_dirs, sub_weights);
  // Polar angle theta of the last coordinate has density sin^{m-2}(theta).
  std::vector<double> polar_nodes;
  std::vector<double> polar_weights;
  if (m == 3) {
    const auto rule = gauss_legendre(n);
    for (int i = 0; i < n; ++i) {
      polar_nodes.push_back(std::acos(rule.nodes[i]));
      polar_weights.push_back(rule.weights[i]);
    }
  } else {
    const auto rule = gauss_legendre(n, 0.0, std::numbers::pi);
    for (int i = 0; i < n; ++i) {
      polar_nodes.push_back(rule.nodes[i]);
      polar_weights.push_back(rule.weights[i] * std::pow(std::sin(rule.nodes[i]), m - 2));
    }
  }
  double total = 0.0;
  for (double w : polar_weights) total += w;
  for (std::size_t i = 0; i < polar_nodes.size(); ++i) {
    const double s = std::sin(polar_nodes[i]);
    const double c = std::cos(polar_nodes[i]);
    for (std::size_t j = 0; j < sub_dirs.size(); ++j) {
      Vec v(m);
      v.head(m - 1) = s * sub_dirs[j];
      v(m - 1) = c;
      dirs.push_back(v);
      weights.push_back(polar_weights[i] / total * sub_weights[j]);
    }
  }
}

}  // namespace

SphereRule sphere_rule(int dim, int n) {
  if (dim < 2 || dim > kMaxDim) throw Error(ErrorCode::InvalidArgument, "unsupported sphere dimension");
  SphereRule rule;
  build_sphere(dim, n, rule.directions, rule.weights);
  return rule;
}

}  // namespace jdlab
