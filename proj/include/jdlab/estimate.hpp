#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "jdlab/geometry.hpp"
#include "jdlab/model.hpp"
#include "jdlab/rng.hpp"
#include "jdlab/sim.hpp"
#include "jdlab/stats.hpp"

namespace jdlab {

struct McConfig {
  std::uint64_t n_paths = 100000;
  int workers = 1;
  std::uint64_t seed = 0;
  /// Censored fraction above which estimators throw ExcessiveCensoring.
  double censor_ceiling = 0.01;
  /// Sample kurtosis above which an exponential functional is flagged heavy-tailed.
  double kurtosis_ceiling = 1000.0;
  /// Paths per work unit. Results depend on this value, never on `workers`.
  std::uint64_t chunk = 4096;
};

/// Runs fn(rng, path_index, acc) for every path. Each chunk of paths fills
/// its own accumulator and the chunks are merged in index order, so the
/// result is identical for any number of workers. Path i always draws from
/// PhiloxStream(mc.seed, i).
template <class Acc, class Fn>
Acc parallel_paths(const McConfig& mc, const Acc& empty, Fn&& fn) {
  const std::uint64_t chunk = std::max<std::uint64_t>(1, mc.chunk);
  const std::uint64_t n_chunks = (mc.n_paths + chunk - 1) / chunk;
  std::vector<Acc> partial(n_chunks, empty);
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_lock;
  auto work = [&] {
    while (true) {
      const std::uint64_t c = next.fetch_add(1);
      if (c >= n_chunks) return;
      try {
        const std::uint64_t end = std::min(mc.n_paths, (c + 1) * chunk);
        for (std::uint64_t i = c * chunk; i < end; ++i) {
          PhiloxStream rng(mc.seed, i);
          fn(rng, i, partial[c]);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_lock);
        if (!failure) failure = std::current_exception();
        next.store(n_chunks);
        return;
      }
    }
  };
  const int workers = std::max(1, mc.workers);
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  Acc total = empty;
  for (const auto& p : partial) total.merge(p);
  return total;
}

/// A fixed number of running means plus a censoring counter.
struct MultiStats {
  std::vector<RunningStats> stats;
  std::uint64_t censored = 0;

  MultiStats() = default;
  explicit MultiStats(std::size_t k) : stats(k) {}

  void merge(const MultiStats& o) {
    for (std::size_t k = 0; k < stats.size(); ++k) stats[k].merge(o.stats[k]);
    censored += o.censored;
  }
};

/// Step size and jump cutoff adapted to a region of linear size `scale`:
/// dt <= 1e-3 scale^2, eps <= scale / 5. The censoring horizon is reset.
PathConfig local_path_config(const PathConfig& base, double scale);

// ---------------------------------------------------------------------------
// Exit moments and harmonic measure

struct ExitTimeReport {
  Estimate tau;
  double radius = 0.0;     // bounding radius R of the region
  double ratio_r2 = 0.0;   // E tau / R^2
  double jump_fraction = 0.0;
};

ExitTimeReport expected_exit_time(const Vec& x, const Region& region, const OperatorModel& model, const PathConfig& cfg,
                                  const McConfig& mc);

/// Cells of the complement of a ball in d = 3: 12 equal-area boundary caps
/// (3 bands in the last coordinate times 4 azimuth quadrants) for continuous
/// exits, the same 12 angular sectors times radial bands R * edges for jump
/// landings inside R_ext = R * edges.back(), and 12 far-field sectors beyond.
class ExitPartition {
 public:
  static constexpr int kSectors = 12;

  explicit ExitPartition(const BallDomain& ball, std::vector<double> radial_edges = {1.0, 1.25, 1.5, 2.0, 3.0});

  int size() const { return kSectors * (2 + bands()); }
  int bands() const { return static_cast<int>(edges_.size()) - 1; }
  double exterior_radius() const { return ball_.radius() * edges_.back(); }
  const BallDomain& ball() const { return ball_; }
  const std::vector<double>& radial_edges() const { return edges_; }

  /// Angular sector 0..11 of a direction from the center.
  static int sector(const Vec& direction);
  int cap(int sector) const { return sector; }
  int shell_cell(int band, int sector) const { return kSectors * (1 + band) + sector; }
  int far_cell(int sector) const { return kSectors * (1 + bands()) + sector; }
  bool is_cap(int cell) const { return cell < kSectors; }
  bool is_far(int cell) const { return cell >= kSectors * (1 + bands()); }

  /// Cell of an exit landing point; `on_boundary` selects the cap cells.
  int classify(const Vec& landing, bool on_boundary) const;
  std::string label(int cell) const;

 private:
  BallDomain ball_;
  std::vector<double> edges_;
};

struct HarmonicMeasureEstimate {
  std::vector<double> mass;  // fraction of all paths landing in each cell
  std::vector<double> std_error;
  std::vector<std::uint64_t> counts;
  double p_continuous = 0.0;
  double p_jump = 0.0;
  double censored_fraction = 0.0;
  std::uint64_t n_paths = 0;
};

HarmonicMeasureEstimate harmonic_measure(const Vec& x, const BallDomain& ball, const OperatorModel& model,
                                         const PathConfig& cfg, const ExitPartition& partition, const McConfig& mc);

/// Pearson chi-square p-value of the hypothesis that counts are uniform.
double chi_square_uniform_p(std::span<const std::uint64_t> counts);

// ---------------------------------------------------------------------------
// Dirichlet and Feynman-Kac solvers

using BoundaryData = std::function<double(const Vec&)>;

/// Presets: "one", "coord:<k>" (y_k - x0_k), "halfspace:<k>" (1 if y_k > x0_k, 1/2 on the plane),
/// "cap:<k>:<cos>" (1 if the direction of y - x0 makes angle with e_k whose
/// cosine exceeds cos).
BoundaryData make_boundary_data(const std::string& spec, const BallDomain& ball);

struct FeynmanKacBundle {
  Estimate dirichlet;                 // E f(X_tau)
  std::vector<Estimate> gauge;        // E e_q(tau), one per potential
  std::vector<Estimate> schrodinger;  // E e_q(tau) f(X_tau)
  std::uint64_t censored = 0;
};

/// All three functionals from one set of paths; the potentials are integrated
/// along the same paths (the model's own q is ignored). At most
/// PathSimulator::kMaxFunctionals potentials.
FeynmanKacBundle feynman_kac_bundle(const Vec& x, const BoundaryData& f, std::span<const Potential> potentials,
                                    const Region& region, const OperatorModel& model, const PathConfig& cfg,
                                    const McConfig& mc, double data_bound = 1e6);

Estimate solve_dirichlet(const Vec& x, const BoundaryData& f, const Region& region, const OperatorModel& model,
                         const PathConfig& cfg, const McConfig& mc);
/// E^x e_q(tau) with the model's potential.
Estimate gauge(const Vec& x, const Region& region, const OperatorModel& model, const PathConfig& cfg,
               const McConfig& mc);
/// E^x e_q(tau) f(X_tau) with the model's potential.
Estimate solve_schrodinger(const Vec& x, const BoundaryData& f, const Region& region, const OperatorModel& model,
                           const PathConfig& cfg, const McConfig& mc);

struct KhasminskiiCertificate {
  double eta = 0.0;
  std::optional<double> bound;  // 1 / (1 - eta) when eta < 1, otherwise no certificate
  std::size_t argmax = 0;
  std::vector<Estimate> per_probe;  // E^x int_0^tau |q(X_s)| ds

  bool certified() const { return bound.has_value(); }
};

KhasminskiiCertificate khasminskii_certificate(const Potential& q, const Region& region, const OperatorModel& model,
                                               const PathConfig& cfg, const McConfig& mc,
                                               std::span<const Vec> probes);

// ---------------------------------------------------------------------------
// Inequality reporters

struct RatioReport {
  double ratio = 1.0;
  double std_error = 0.0;  // first-order propagation
  std::size_t arg_hi = 0;
  std::size_t arg_lo = 0;
};

/// sup u / inf u over the probe values. Throws NonPositiveValue when a value
/// is within 3 standard errors of zero.
RatioReport harnack_report(std::span<const Estimate> values);

/// max_x u(x) / u(x_r). Throws ReferenceDegenerate when u(x_r) - 3 se <= 0.
RatioReport carleson_report(std::span<const Estimate> values, const Estimate& reference);

/// max over pairs of [u(x)/delta(x)] / [u(y)/delta(y)].
RatioReport bhp_report(std::span<const Estimate> values, std::span<const double> delta,
                       std::span<const std::pair<std::size_t, std::size_t>> pairs);

/// Ratio of two estimates with first-order error.
Estimate ratio_estimate(const Estimate& num, const Estimate& den);

/// Target set S = B(center, radius) of a vanishing test function.
struct TargetBall {
  Vec center;
  double radius = 0.0;
};

/// u(x) = P^x(X_{tau_D} in S) for S disjoint from the closure of D, estimated
/// through the Levy system as E^x int_0^{tau_D} J(X_s, S) ds. The result
/// vanishes continuously outside D; points outside D return 0 without simulation.
Estimate hitting_function(const Vec& x, const Region& domain, const OperatorModel& model, const PathConfig& cfg,
                          const McConfig& mc, const TargetBall& target);

/// Several points at once on common random numbers; one estimate per point.
std::vector<Estimate> hitting_function(std::span<const Vec> points, const Region& domain, const OperatorModel& model,
                                       const PathConfig& cfg, const McConfig& mc, const TargetBall& target);

struct ExitLinearityRow {
  double depth = 0.0;   // delta_B(x)
  Estimate p_box;       // P(X_tau in D(2 delta_0, r_0))
  Estimate p_ball;      // P(X_tau in B)
};

struct ExitLinearityReport {
  std::vector<ExitLinearityRow> rows;
  bool truncated = false;
  double slope_box = 0.0;   // least squares through the origin
  double slope_ball = 0.0;
  double max_residual_box = 0.0;  // max |p - slope * depth| / (slope * depth)
  double max_residual_ball = 0.0;
};

/// Exit from D_Q(delta_0, r_0) started on the inward normal at Q.
ExitLinearityReport boundary_exit_linearity(const BoundaryChart& chart, const OperatorModel& model,
                                            const PathConfig& cfg, const McConfig& mc, std::span<const double> depths,
                                            bool truncated);

// ---------------------------------------------------------------------------
// Probe sets

/// Points center + spacing * k (k integer) with |k| spacing <= radius, ordered
/// by distance to the center then lexicographically; at most max_count.
std::vector<Vec> lattice_probes(const Vec& center, double spacing, double radius, std::size_t max_count);

/// Halton points in B ∩ B(Q, r/2) at depth >= min_depth, in world coordinates.
std::vector<Vec> boundary_probes(const BoundaryChart& chart, double r, std::size_t count, double min_depth);

}  // namespace jdlab
