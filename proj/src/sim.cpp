#include "jdlab/sim.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <array>
#include <cmath>
#include <limits>

#include "jdlab/error.hpp"

namespace jdlab {

double ExitRecord::e_q() const { return std::exp(q_integral); }

Vec drift_from_divergence(const OperatorModel& model, const Vec& x) {
  const int d = model.dim;
  if (model.constant_diffusion) return Vec::Zero(d);
  if (!model.diffusion_derivative)
    throw Error(ErrorCode::MissingDerivatives, "model supplies no derivatives of a(x)");
  std::array<Mat, kMaxDim> partial;
  model.diffusion_derivative(x, std::span<Mat>(partial.data(), d));
  Vec b = Vec::Zero(d);
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i) b(j) += 0.5 * partial[i](i, j);
  return b;
}

double jump_rate(const OperatorModel& model, double eps, bool truncated) {
  if (!(eps > 0.0 && eps <= 1.0)) throw Error(ErrorCode::InvalidArgument, "jump cutoff must lie in (0,1]");
  if (!model.jumps_enabled) return 0.0;
  double scale = model.jump.c;
  if (model.jump.has_custom()) {
    if (!model.jump.envelope)
      throw Error(ErrorCode::UnsupportedKernel, "custom kernel needs an envelope constant for thinning");
    scale = *model.jump.envelope;
  }
  const double alpha = model.jump.alpha;
  const double area = unit_sphere_area(model.dim);
  const double shell = truncated ? (std::pow(eps, -alpha) - 1.0) : std::pow(eps, -alpha);
  return scale * area * shell / alpha;
}

double small_jump_variance(const OperatorModel& model, double eps) {
  if (!model.jumps_enabled) return 0.0;
  const double alpha = model.jump.alpha;
  return model.jump.c * unit_sphere_area(model.dim) * std::pow(eps, 2.0 - alpha) / (model.dim * (2.0 - alpha));
}

namespace {

Vec unit_direction(int d, PhiloxStream& rng) {
  Vec v(d);
  double n2 = 0.0;
  do {
    for (int k = 0; k < d; ++k) v(k) = rng.normal();
    n2 = v.squaredNorm();
  } while (n2 == 0.0);
  return v / std::sqrt(n2);
}

double sample_radius(double alpha, double eps, bool truncated, PhiloxStream& rng) {
  const double u = rng.uniform();
  if (!truncated) return eps * std::pow(u, -1.0 / alpha);
  const double top = std::pow(eps, -alpha);
  return std::pow(top - u * (top - 1.0), -1.0 / alpha);
}

// Power-law proposal from the envelope; returns acceptance probability.
double proposal_acceptance(const OperatorModel& model, const Vec& x, const Vec& h) {
  const double r = h.norm();
  const double env = *model.jump.envelope * std::pow(r, -(model.dim + model.jump.alpha));
  return model.jump.custom(x, x + h) / env;
}

}  // namespace

Vec sample_jump(const OperatorModel& model, const Vec& x, double eps, bool truncated, PhiloxStream& rng) {
  if (!(jump_rate(model, eps, truncated) > 0.0)) throw Error(ErrorCode::InvalidArgument, "jump rate is zero");
  const int d = model.dim;
  if (!model.jump.has_custom()) return sample_radius(model.jump.alpha, eps, truncated, rng) * unit_direction(d, rng);
  constexpr int kMaxAttempts = 100000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const Vec h = sample_radius(model.jump.alpha, eps, truncated, rng) * unit_direction(d, rng);
    if (rng.uniform() < proposal_acceptance(model, x, h)) return h;
  }
  throw Error(ErrorCode::RejectionStall, "custom kernel acceptance rate below 1e-5");
}

// ---------------------------------------------------------------------------

PathSimulator::PathSimulator(const OperatorModel& model, const Region& region, const PathConfig& cfg)
    : model_(model), region_(region), cfg_(cfg) {
  if (!(cfg_.dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "time step must be positive");
  if (!(cfg_.eps > 0.0 && cfg_.eps < 1.0)) throw Error(ErrorCode::InvalidArgument, "jump cutoff must lie in (0,1)");
  if (region.dim() != model.dim) throw Error(ErrorCode::InvalidArgument, "region and model dimensions differ");
  const double reach = region.bounding_ball().second;
  t_max_ = cfg_.t_max > 0.0 ? cfg_.t_max : 1e4 * reach * reach;
  if (t_max_ < 100.0 * reach * reach)
    throw Error(ErrorCode::InvalidArgument, "t_max must be at least 100 R^2 of the region");
  diffusion_ = model.diffusion_enabled;
  if (diffusion_ && !model.constant_diffusion && !model.diffusion_derivative)
    throw Error(ErrorCode::MissingDerivatives, "variable diffusion needs derivatives for the drift");
  rate_ = jump_rate(model, cfg_.eps, cfg_.truncated);
  custom_kernel_ = model.jumps_enabled && model.jump.has_custom();
  if (custom_kernel_) envelope_ = *model.jump.envelope;
  // Pure-jump paths drop the small jumps: a Gaussian surrogate would create
  // continuous exits that the pure-jump process never makes.
  if (diffusion_ && cfg_.small_jumps == SmallJumps::DiffusionCorrection)
    correction_ = small_jump_variance(model, cfg_.eps);
  if (diffusion_) {
    if (model.constant_diffusion) {
      Eigen::SelfAdjointEigenSolver<Mat> eig(*model.constant_diffusion, Eigen::EigenvaluesOnly);
      lambda_max_ = eig.eigenvalues().maxCoeff() + correction_;
    } else {
      // Sample the bounding ball on a coarse lattice for the refinement threshold.
      const auto [center, radius] = region.bounding_ball();
      lambda_max_ = 0.0;
      const int d = model.dim;
      for (int k = 0; k < 64; ++k) {
        Vec x = center;
        for (int i = 0; i < d; ++i) x(i) += radius * std::sin(1.0 + k * (i + 1) * 0.7548776662);
        Eigen::SelfAdjointEigenSolver<Mat> eig(model.a(x), Eigen::EigenvaluesOnly);
        lambda_max_ = std::max(lambda_max_, eig.eigenvalues().maxCoeff());
      }
      lambda_max_ += correction_;
    }
  }
}

ExitRecord PathSimulator::run(const Vec& x0, PhiloxStream& rng, std::span<const Potential> extra,
                              std::span<double> extra_integrals, const StepObserver* observer) const {
  const int d = model_.dim;
  if (!region_.contains(x0)) throw Error(ErrorCode::InvalidArgument, "starting point must lie inside the region");
  if (extra.size() != extra_integrals.size() || extra.size() > kMaxFunctionals)
    throw Error(ErrorCode::InvalidArgument, "functional buffers mismatch");

  const std::size_t n_extra = extra.size();
  std::array<double, kMaxFunctionals> extra_now{};
  auto eval_extra = [&](const Vec& x, std::array<double, kMaxFunctionals>& out) {
    for (std::size_t k = 0; k < n_extra; ++k) out[k] = extra[k](x);
  };
  for (std::size_t k = 0; k < n_extra; ++k) extra_integrals[k] = 0.0;

  ExitRecord rec;
  Vec x = x0;
  double t = 0.0;
  double q_now = model_.potential(x);
  eval_extra(x, extra_now);
  double next_jump = rate_ > 0.0 ? rng.exponential(rate_) : std::numeric_limits<double>::infinity();

  auto accumulate = [&](double q_next, const std::array<double, kMaxFunctionals>& extra_next, double dt) {
    rec.q_integral += 0.5 * (q_now + q_next) * dt;
    for (std::size_t k = 0; k < n_extra; ++k) extra_integrals[k] += 0.5 * (extra_now[k] + extra_next[k]) * dt;
  };

  auto finish_continuous = [&](const Vec& from, const Vec& to, double theta, double dt) {
    const Vec hit = region_.project_to_boundary(from + theta * (to - from));
    std::array<double, kMaxFunctionals> extra_hit{};
    eval_extra(hit, extra_hit);
    accumulate(model_.potential(hit), extra_hit, theta * dt);
    if (observer) (*observer)(from, hit, theta * dt);
    rec.tau = t + theta * dt;
    rec.pre_exit = hit;
    rec.exit_point = hit;
    rec.via_jump = false;
  };

  const Mat constant_factor = [&] {
    if (!diffusion_ || !model_.constant_diffusion) return Mat();
    Mat a = *model_.constant_diffusion;
    a.diagonal().array() += correction_;
    return Mat(a.llt().matrixL());
  }();

  const bool has_q = static_cast<bool>(model_.q);
  const double near = 3.0 * std::sqrt(lambda_max_ * cfg_.dt);
  double dist = region_.distance(x);
  std::array<double, kMaxFunctionals> extra_next{};
  while (true) {
    if (t >= t_max_) {
      rec.censored = true;
      rec.tau = t;
      rec.pre_exit = x;
      rec.exit_point = x;
      return rec;
    }
    if (diffusion_) {
      double h = cfg_.dt;
      if (dist < near) h *= 0.5;
      const bool jump_now = next_jump - t <= h;
      h = jump_now ? std::max(0.0, next_jump - t) : h;

      Mat a_eff;
      Mat factor;
      Vec drift = Vec::Zero(d);
      if (model_.constant_diffusion) {
        factor = constant_factor;
      } else {
        a_eff = model_.a(x);
        a_eff.diagonal().array() += correction_;
        factor = a_eff.llt().matrixL();
        drift = drift_from_divergence(model_, x);
      }
      Vec z(d);
      for (int k = 0; k < d; ++k) z(k) = rng.normal();
      const double root_h = std::sqrt(h);
      Vec x_new = x + drift * h;
      for (int i = 0; i < d; ++i) {
        double acc = 0.0;
        for (int j = 0; j <= i; ++j) acc += factor(i, j) * z(j);
        x_new(i) += root_h * acc;
      }
      ++rec.steps;
      const double dist_new = region_.distance(x_new);
      if (dist_new <= 0.0) {
        const double theta = dist / (dist - dist_new);
        finish_continuous(x, x_new, theta, h);
        return rec;
      }
      // sigma_n^2 <= lambda_max, so a large exponent rules the crossing out.
      if (cfg_.bridge && h > 0.0 && 2.0 * dist * dist_new < 40.0 * lambda_max_ * h) {
        const Vec n = region_.outward_normal(x_new);
        const double sigma2 = model_.constant_diffusion ? (factor.transpose() * n).squaredNorm()
                                                        : n.dot(a_eff * n);
        const double p = std::exp(-2.0 * dist * dist_new / (sigma2 * h));
        if (rng.uniform() < p) {
          const double theta = dist / (dist + dist_new);
          finish_continuous(x, x_new, theta, h);
          return rec;
        }
      }
      eval_extra(x_new, extra_next);
      const double q_next = has_q ? model_.q(x_new) : 0.0;
      accumulate(q_next, extra_next, h);
      if (observer) (*observer)(x, x_new, h);
      x = x_new;
      dist = dist_new;
      q_now = q_next;
      extra_now = extra_next;
      t += h;
      if (!jump_now) continue;
      t = next_jump;
    } else {
      // Pure jump: the position is frozen until the next clock ring.
      const double wait = std::min(next_jump, t_max_) - t;
      accumulate(q_now, extra_now, wait);
      if (observer) (*observer)(x, x, wait);
      t += wait;
      ++rec.steps;
      if (t >= t_max_) continue;
    }

    // Jump event at time t.
    next_jump = t + rng.exponential(rate_);
    Vec h(d);
    if (custom_kernel_) {
      const double r = sample_radius(model_.jump.alpha, cfg_.eps, cfg_.truncated, rng);
      h = r * unit_direction(d, rng);
      if (!(rng.uniform() < proposal_acceptance(model_, x, h))) continue;
    } else {
      h = sample_radius(model_.jump.alpha, cfg_.eps, cfg_.truncated, rng) * unit_direction(d, rng);
    }
    const Vec y = x + h;
    if (!region_.contains(y)) {
      rec.tau = t;
      rec.pre_exit = x;
      rec.exit_point = y;
      rec.via_jump = true;
      return rec;
    }
    x = y;
    dist = region_.distance(x);
    q_now = model_.potential(x);
    eval_extra(x, extra_now);
  }
}

ExitRecord simulate_until_exit(const Vec& x0, const Region& region, const OperatorModel& model, const PathConfig& cfg,
                               PhiloxStream& rng) {
  PathSimulator sim(model, region, cfg);
  return sim.run(x0, rng);
}

}  // namespace jdlab
