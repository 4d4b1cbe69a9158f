#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "jdlab/geometry.hpp"
#include "jdlab/model.hpp"
#include "jdlab/rng.hpp"
#include "jdlab/types.hpp"

namespace jdlab {

enum class SmallJumps { Drop, DiffusionCorrection };

struct PathConfig {
  double dt = 1e-4;
  /// Jumps shorter than eps are not simulated individually.
  double eps = 0.02;
  SmallJumps small_jumps = SmallJumps::DiffusionCorrection;
  bool bridge = true;
  /// Restrict jumps to |h| < 1 (the truncated process).
  bool truncated = false;
  /// Censoring horizon; 0 selects 1e4 R^2 for the region's bounding radius R.
  double t_max = 0.0;
  std::uint64_t seed = 0;
};

struct ExitRecord {
  double tau = 0.0;
  Vec pre_exit;    // X_{tau-}
  Vec exit_point;  // X_tau
  bool via_jump = false;
  double q_integral = 0.0;  // trapezoid approximation of int_0^tau q(X_s) ds
  std::uint64_t steps = 0;
  bool censored = false;

  double e_q() const;
};

/// b_j = 1/2 sum_i d_i a_ij(x): the first-order term of the divergence form.
Vec drift_from_divergence(const OperatorModel& model, const Vec& x);

/// Total rate of jumps longer than eps (shorter than 1 when truncated). For a
/// custom kernel this is the rate of the thinning envelope.
double jump_rate(const OperatorModel& model, double eps, bool truncated);

/// Per-axis variance rate of the jumps shorter than eps:
/// int_{|h|<eps} h_1^2 J dh = c s_{d-1} eps^{2-alpha} / (d (2 - alpha)).
double small_jump_variance(const OperatorModel& model, double eps);

/// One displacement from the normalized jump law restricted to |h| > eps.
/// Custom kernels are sampled by rejection against their envelope.
Vec sample_jump(const OperatorModel& model, const Vec& x, double eps, bool truncated, PhiloxStream& rng);

/// Called once per accepted diffusion sub-step with (from, to, duration).
using StepObserver = std::function<void(const Vec&, const Vec&, double)>;

/// Euler scheme for the diffusion part plus an exponential clock for jumps,
/// killed on leaving `region`. Holds the per-model precomputations so that
/// many paths can share them; `run` is const and thread-safe.
class PathSimulator {
 public:
  static constexpr int kMaxFunctionals = 8;

  PathSimulator(const OperatorModel& model, const Region& region, const PathConfig& cfg);

  /// Extra potentials are integrated along the same path; their integrals are
  /// written to `extra_integrals` (same length as `extra`).
  ExitRecord run(const Vec& x0, PhiloxStream& rng, std::span<const Potential> extra = {},
                 std::span<double> extra_integrals = {}, const StepObserver* observer = nullptr) const;

  const PathConfig& config() const { return cfg_; }
  double t_max() const { return t_max_; }
  double rate() const { return rate_; }
  double correction_variance() const { return correction_; }

 private:
  const OperatorModel& model_;
  const Region& region_;
  PathConfig cfg_;
  double t_max_ = 0.0;
  double rate_ = 0.0;
  double correction_ = 0.0;
  double lambda_max_ = 1.0;
  bool diffusion_ = true;
  bool custom_kernel_ = false;
  double envelope_ = 0.0;
};

ExitRecord simulate_until_exit(const Vec& x0, const Region& region, const OperatorModel& model, const PathConfig& cfg,
                               PhiloxStream& rng);

}  // namespace jdlab
