#include "jdlab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "jdlab/error.hpp"

namespace jdlab {

double Region::crossing_fraction(const Vec& inside, const Vec& outside) const {
  double lo = 0.0;
  double hi = 1.0;
  const Vec step = outside - inside;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (contains(inside + mid * step)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

Vec Region::crossing_point(const Vec& inside, const Vec& outside) const {
  const double t = crossing_fraction(inside, outside);
  return project_to_boundary(inside + t * (outside - inside));
}

// ---------------------------------------------------------------------------

BallDomain::BallDomain(Vec center, double radius) : center_(std::move(center)), radius_(radius) {
  if (!(radius_ > 0.0)) throw Error(ErrorCode::InvalidArgument, "ball radius must be positive");
  if (center_.size() < 1 || center_.size() > kMaxDim)
    throw Error(ErrorCode::InvalidArgument, "unsupported dimension");
}

Vec BallDomain::outward_normal(const Vec& x) const {
  Vec v = x - center_;
  const double n = v.norm();
  if (n == 0.0) {
    Vec e = Vec::Zero(dim());
    e(0) = 1.0;
    return e;
  }
  return v / n;
}

Vec BallDomain::project_to_boundary(const Vec& x) const {
  return center_ + radius_ * outward_normal(x);
}

// ---------------------------------------------------------------------------

LensRegion::LensRegion(std::vector<BallDomain> balls) : balls_(std::move(balls)) {
  if (balls_.empty()) throw Error(ErrorCode::InvalidArgument, "lens needs at least one ball");
}

std::size_t LensRegion::binding(const Vec& x) const {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < balls_.size(); ++k) {
    const double d = balls_[k].delta(x);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

double LensRegion::distance(const Vec& x) const { return balls_[binding(x)].delta(x); }

Vec LensRegion::project_to_boundary(const Vec& x) const {
  return balls_[binding(x)].project_to_boundary(x);
}

Vec LensRegion::outward_normal(const Vec& x) const { return balls_[binding(x)].outward_normal(x); }

std::pair<Vec, double> LensRegion::bounding_ball() const {
  auto smallest = std::min_element(balls_.begin(), balls_.end(),
                                   [](const auto& a, const auto& b) { return a.radius() < b.radius(); });
  return {smallest->center(), smallest->radius()};
}

// ---------------------------------------------------------------------------

namespace {

Mat chart_frame(const Vec& inward) {
  const int d = static_cast<int>(inward.size());
  Mat frame(d, d);
  frame.col(d - 1) = inward;
  // Gram-Schmidt on the coordinate axes, skipping the one most aligned with n.
  int skip = 0;
  inward.cwiseAbs().maxCoeff(&skip);
  int col = 0;
  for (int k = 0; k < d && col < d - 1; ++k) {
    if (k == skip) continue;
    Vec v = Vec::Zero(d);
    v(k) = 1.0;
    v -= v.dot(inward) * inward;
    for (int j = 0; j < col; ++j) v -= v.dot(frame.col(j)) * frame.col(j);
    frame.col(col++) = v.normalized();
  }
  return frame;
}

}  // namespace

BoundaryChart::BoundaryChart(const BallDomain& ball, const Vec& base_point)
    : BoundaryChart(ball, base_point, ball.radius() / 8.0) {}

BoundaryChart::BoundaryChart(const BallDomain& ball, const Vec& base_point, double localization_radius)
    : ball_(ball), base_(base_point), r1_(localization_radius) {
  const double R = ball_.radius();
  if (std::abs(ball_.delta(base_)) > 1e-9 * R)
    throw Error(ErrorCode::InvalidArgument, "chart base point must lie on the sphere");
  if (!(r1_ > 0.0) || !(r1_ < R / 4.0))
    throw Error(ErrorCode::InvalidArgument, "localization radius must lie in (0, R/4)");
  normal_ = (ball_.center() - base_).normalized();
  frame_ = chart_frame(normal_);
  // Largest Hessian eigenvalue of the sphere graph on |u| <= R_1 (radial direction).
  m1_ = R * R / std::pow(R * R - r1_ * r1_, 1.5);
}

Vec BoundaryChart::to_chart(const Vec& world) const { return frame_.transpose() * (world - base_); }

Vec BoundaryChart::from_chart(const Vec& chart) const { return base_ + frame_ * chart; }

double BoundaryChart::phi(const Vec& tangential) const {
  const double R = ball_.radius();
  const double u2 = tangential.squaredNorm();
  if (u2 >= R * R) throw Error(ErrorCode::OutOfChart, "tangential coordinate outside the sphere graph");
  return R - std::sqrt(R * R - u2);
}

Vec BoundaryChart::grad_phi(const Vec& tangential) const {
  const double R = ball_.radius();
  return tangential / std::sqrt(R * R - tangential.squaredNorm());
}

double BoundaryChart::rho(const Vec& chart_point) const {
  const int d = dim();
  const Vec tangential = chart_point.head(d - 1);
  if (tangential.norm() >= r1_) throw Error(ErrorCode::OutOfChart, "point outside the chart radius R_1");
  return chart_point(d - 1) - phi(tangential);
}

bool BoundaryChart::in_box(const Vec& chart_point, double r1, double r2) const {
  const int d = dim();
  const Vec tangential = chart_point.head(d - 1);
  if (tangential.norm() >= std::min(r2, r1_)) return false;
  const double value = rho(chart_point);
  return value > 0.0 && value < r1;
}

// ---------------------------------------------------------------------------

ChartBox::ChartBox(BoundaryChart chart, double height, double half_width)
    : chart_(std::move(chart)), height_(height), half_width_(half_width) {
  if (!(height_ > 0.0) || !(half_width_ > 0.0) || half_width_ >= chart_.localization_radius())
    throw Error(ErrorCode::InvalidArgument, "chart box must fit inside the chart");
}

ChartBox::Face ChartBox::binding_face(const Vec& y, double* dist) const {
  const int d = dim();
  const Vec tangential = y.head(d - 1);
  const double side = half_width_ - tangential.norm();
  if (side <= 0.0) {
    *dist = side;
    return Face::Side;
  }
  const double rho = y(d - 1) - chart_.phi(tangential);
  const Vec world = chart_.from_chart(y);
  const double bottom = chart_.ball().delta(world);
  const double slope = std::sqrt(1.0 + chart_.grad_phi(tangential).squaredNorm());
  const double top = (height_ - rho) / slope;
  Face face = Face::Bottom;
  double best = bottom;
  if (top < best) {
    best = top;
    face = Face::Top;
  }
  if (side < best) {
    best = side;
    face = Face::Side;
  }
  *dist = best;
  return face;
}

double ChartBox::distance(const Vec& x) const {
  double dist = 0.0;
  binding_face(chart_.to_chart(x), &dist);
  return dist;
}

Vec ChartBox::project_to_boundary(const Vec& x) const {
  const int d = dim();
  Vec y = chart_.to_chart(x);
  double dist = 0.0;
  switch (binding_face(y, &dist)) {
    case Face::Bottom:
      return chart_.ball().project_to_boundary(x);
    case Face::Top: {
      const Vec tangential = y.head(d - 1);
      y(d - 1) = chart_.phi(tangential) + height_;
      return chart_.from_chart(y);
    }
    case Face::Side: {
      const double n = y.head(d - 1).norm();
      if (n > 0.0) y.head(d - 1) *= half_width_ / n;
      return chart_.from_chart(y);
    }
  }
  return x;
}

Vec ChartBox::outward_normal(const Vec& x) const {
  const int d = dim();
  const Vec y = chart_.to_chart(x);
  double dist = 0.0;
  switch (binding_face(y, &dist)) {
    case Face::Bottom:
      return chart_.ball().outward_normal(x);
    case Face::Top:
      return -chart_.inward_normal();
    case Face::Side: {
      Vec local = Vec::Zero(d);
      const double n = y.head(d - 1).norm();
      if (n > 0.0) local.head(d - 1) = y.head(d - 1) / n;
      return chart_.from_chart(local) - chart_.from_chart(Vec::Zero(d));
    }
  }
  return chart_.inward_normal();
}

std::pair<Vec, double> ChartBox::bounding_ball() const {
  const double reach = std::sqrt(half_width_ * half_width_ + (2.0 * height_ + half_width_) * (2.0 * height_ + half_width_));
  return {chart_.base_point(), reach};
}

}  // namespace jdlab
