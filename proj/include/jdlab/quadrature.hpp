#pragma once

#include <vector>

#include "jdlab/types.hpp"

namespace jdlab {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [a, b].
QuadratureRule gauss_legendre(int n, double a = -1.0, double b = 1.0);

struct SphereRule {
  std::vector<Vec> directions;
  std::vector<double> weights;  // sum to one: the rule averages over S^{d-1}
};

/// Product rule on the unit sphere S^{d-1}: Gauss-Legendre in each polar
/// angle (in cos for d = 3) and a uniform azimuth with 2n points.
SphereRule sphere_rule(int dim, int n);

}  // namespace jdlab
