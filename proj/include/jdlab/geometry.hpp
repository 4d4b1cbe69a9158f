#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "jdlab/types.hpp"

namespace jdlab {

/// An open set that paths are killed on leaving. `distance` is positive
/// inside and is the Euclidean distance to the boundary for balls and
/// intersections of balls; for chart boxes it is a lower bound that is
/// exact on the inward normal.
class Region {
 public:
  virtual ~Region() = default;

  virtual int dim() const = 0;
  virtual double distance(const Vec& x) const = 0;
  virtual bool contains(const Vec& x) const { return distance(x) > 0.0; }

  /// Nearest boundary point for a point close to the boundary.
  virtual Vec project_to_boundary(const Vec& x) const = 0;

  /// Unit normal pointing out of the region at (or near) a boundary point.
  virtual Vec outward_normal(const Vec& x) const = 0;

  /// A ball containing the region: (center, radius).
  virtual std::pair<Vec, double> bounding_ball() const = 0;

  /// Boundary point on the segment [inside, outside] located by bisection.
  Vec crossing_point(const Vec& inside, const Vec& outside) const;

  /// Fraction t in [0,1] with inside + t (outside - inside) on the boundary.
  double crossing_fraction(const Vec& inside, const Vec& outside) const;
};

/// B(x_0, R) with delta_B(x) = R - |x - x_0|.
class BallDomain final : public Region {
 public:
  BallDomain(Vec center, double radius);

  const Vec& center() const { return center_; }
  double radius() const { return radius_; }

  double delta(const Vec& x) const { return radius_ - (x - center_).norm(); }

  int dim() const override { return static_cast<int>(center_.size()); }
  double distance(const Vec& x) const override { return delta(x); }
  Vec project_to_boundary(const Vec& x) const override;
  Vec outward_normal(const Vec& x) const override;
  std::pair<Vec, double> bounding_ball() const override { return {center_, radius_}; }

 private:
  Vec center_;
  double radius_;
};

/// Intersection of finitely many balls, e.g. B ∩ B(Q, r).
class LensRegion final : public Region {
 public:
  explicit LensRegion(std::vector<BallDomain> balls);

  const std::vector<BallDomain>& balls() const { return balls_; }

  int dim() const override { return balls_.front().dim(); }
  double distance(const Vec& x) const override;
  Vec project_to_boundary(const Vec& x) const override;
  Vec outward_normal(const Vec& x) const override;
  std::pair<Vec, double> bounding_ball() const override;

 private:
  std::size_t binding(const Vec& x) const;
  std::vector<BallDomain> balls_;
};

/// Local boundary coordinates of a ball at a boundary point Q: origin Q,
/// last axis along the inward normal, boundary given as the graph of phi.
class BoundaryChart {
 public:
  /// Localization radius defaults to R/8; the Lipschitz constant of grad phi
  /// on |u| <= R_1 is computed from the sphere graph.
  BoundaryChart(const BallDomain& ball, const Vec& base_point);
  BoundaryChart(const BallDomain& ball, const Vec& base_point, double localization_radius);

  int dim() const { return static_cast<int>(base_.size()); }
  const BallDomain& ball() const { return ball_; }
  const Vec& base_point() const { return base_; }
  const Vec& inward_normal() const { return normal_; }

  double localization_radius() const { return r1_; }
  double lipschitz() const { return m1_; }
  /// r_0 = R_1 / (4 (1 + M_1^2)).
  double r0() const { return r1_ / (4.0 * (1.0 + m1_ * m1_)); }
  /// Height of the boundary boxes used for exit estimates; fixed at r_0.
  double delta0() const { return r0(); }

  Vec to_chart(const Vec& world) const;
  Vec from_chart(const Vec& chart) const;

  /// phi(u) = R - sqrt(R^2 - |u|^2) for the sphere.
  double phi(const Vec& tangential) const;
  Vec grad_phi(const Vec& tangential) const;

  /// rho_Q(y) = y_d - phi(y~) for y in chart coordinates; throws OutOfChart
  /// when |y~| >= R_1.
  double rho(const Vec& chart_point) const;

  /// Membership in D_Q(r1, r2) = {y in B : 0 < rho < r1, |y~| < r2}, chart coords.
  bool in_box(const Vec& chart_point, double r1, double r2) const;

  /// World point on the inward normal at the given depth below Q.
  Vec normal_point(double depth) const { return base_ + depth * normal_; }

 private:
  BallDomain ball_;
  Vec base_;
  Vec normal_;
  Mat frame_;  // columns: d-1 tangential directions, then the inward normal
  double r1_;
  double m1_;
};

/// D_Q(height, half_width) as a path-killing region.
class ChartBox final : public Region {
 public:
  ChartBox(BoundaryChart chart, double height, double half_width);

  const BoundaryChart& chart() const { return chart_; }
  double height() const { return height_; }
  double half_width() const { return half_width_; }

  int dim() const override { return chart_.dim(); }
  double distance(const Vec& x) const override;
  Vec project_to_boundary(const Vec& x) const override;
  Vec outward_normal(const Vec& x) const override;
  std::pair<Vec, double> bounding_ball() const override;

 private:
  enum class Face { Bottom, Top, Side };
  Face binding_face(const Vec& chart_point, double* dist) const;

  BoundaryChart chart_;
  double height_;
  double half_width_;
};

}  // namespace jdlab
