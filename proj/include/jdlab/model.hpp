#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "jdlab/geometry.hpp"
#include "jdlab/types.hpp"

namespace jdlab {

using Potential = std::function<double(const Vec&)>;
using DiffusionField = std::function<Mat(const Vec&)>;
/// Writes d_k a_ij(x) into out[k](i, j), k = 0..d-1.
using DiffusionDerivative = std::function<void(const Vec&, std::span<Mat>)>;
using JumpKernel = std::function<double(const Vec&, const Vec&)>;

/// Jump part of the generator. With no custom kernel the process uses the
/// symmetric power law J(x,y) = c |x-y|^{-d-alpha}.
struct JumpSpec {
  double c = 1.0;
  double alpha = 1.0;
  JumpKernel custom;
  /// Thinning envelope for a custom kernel: J(x,y) <= envelope |x-y|^{-d-alpha}.
  std::optional<double> envelope;

  bool has_custom() const { return static_cast<bool>(custom); }
};

/// Coefficients of L f = 1/2 div(a grad f) + int [f(y) - f(x)] J(x,y) dy
/// together with the potential q of the Schrodinger problem L u + q u = 0.
struct OperatorModel {
  int dim = 3;
  std::string preset = "identity";
  DiffusionField diffusion;
  DiffusionDerivative diffusion_derivative;
  /// Set when a(x) does not depend on x; the simulator then skips per-step
  /// factorizations.
  std::optional<Mat> constant_diffusion;
  JumpSpec jump;
  Potential q;
  bool diffusion_enabled = true;
  bool jumps_enabled = true;

  bool paper_mode() const { return diffusion_enabled && jumps_enabled; }

  Mat a(const Vec& x) const;
  double kernel(const Vec& x, const Vec& y) const;
  double potential(const Vec& x) const { return q ? q(x) : 0.0; }

  /// Throws unless both parts of the generator are active and the jump
  /// constants satisfy 0 < c <= 1, 0 < alpha < 2, d >= 3.
  void require_paper_mode() const;
};

/// Named presets: identity, variable-spd, brownian-diagnostic, stable-diagnostic.
OperatorModel make_model(const std::string& preset, int dim, double c, double alpha, Potential q = {});

/// Potential presets: "zero", "const:<v>", "bump:<x1,...,xd>:<radius>:<height>".
/// The bump is the smooth profile height * exp(1 - 1/(1 - s^2)), s = |x - c| / radius.
Potential make_potential(const std::string& spec, int dim);
Potential constant_potential(double value);
Potential bump_potential(const Vec& center, double radius, double height);

// ---------------------------------------------------------------------------

struct EllipticityBounds {
  double lambda_min = 0.0;
  double lambda_max = 0.0;
};

/// Extreme eigenvalues of a(x) over the samples. Throws NonSymmetricMatrix when
/// |a - a^T| exceeds 1e-10 relative, NonPositiveDefinite when lambda_min <= 0.
EllipticityBounds ellipticity_bounds(const OperatorModel& model, std::span<const Vec> samples);

struct KatoSettings {
  double tolerance = 1e-6;  // change between levels, relative to max(value, running sup)
  int base_level = 1;
  int max_level = 6;
};

/// sup over probes x of int_{|y-x|<r} |q(y)| |x-y|^{2-d} dy. The radial weight
/// rho^{2-d} rho^{d-1} = rho is integrated analytically against Gauss-Legendre
/// shells, so the integrand carries no singularity.
double kato_norm(const Potential& q, int dim, double r, std::span<const Vec> probes,
                 const KatoSettings& settings = {});

/// Probe lattice with spacing <= r/4 covering the closed ball, plus the center.
std::vector<Vec> kato_probe_lattice(const BallDomain& ball, double r);

struct SandwichReport {
  std::size_t pairs = 0;
  std::size_t violations = 0;           // J |x-y|^{d+alpha} outside [c, 1/c]
  std::size_t symmetry_violations = 0;  // |J(x,y) - J(y,x)| > 1e-12 relative
  double worst_ratio = 1.0;             // largest factor by which a bound is exceeded (1 = none)
  double min_normalized = 0.0;
  double max_normalized = 0.0;
};

SandwichReport kernel_sandwich_check(const OperatorModel& model, std::span<const std::pair<Vec, Vec>> pairs);

/// y_d - phi(y~) for a point in chart coordinates.
double chart_rho(const BoundaryChart& chart, const Vec& chart_point);

/// Surface area of the unit sphere S^{d-1}.
double unit_sphere_area(int dim);

/// int_{|y - center| < radius} J(z, y) dy for z outside the ball. Closed form
/// for the default kernel in d = 3, radial Gauss rule times a sphere rule otherwise.
double kernel_mass_to_ball(const OperatorModel& model, const Vec& z, const Vec& center, double radius);

}  // namespace jdlab
