#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jdlab/estimate.hpp"
#include "jdlab/geometry.hpp"
#include "jdlab/model.hpp"
#include "jdlab/types.hpp"

namespace jdlab {

using Key = std::array<int, 3>;

struct MeshConfig {
  /// Lattice spacing; 0 selects R/8 for the bounding radius R of the region.
  double spacing = 0.0;
  /// Jump landings are resolved on lattice cells up to R_ext = factor * R.
  double exterior_factor = 3.0;
  /// Lattice origin (a cell center); defaults to the bounding-ball center.
  std::optional<Vec> origin;
  int far_radial = 8;
  int far_polar = 8;
  int far_azimuth = 16;
};

/// Uniform lattice x = origin + h k in d = 3. Interior cells have centers in
/// the region; exterior cells are the remaining lattice cells with centers in
/// B(c, R_ext); beyond R_ext the complement is represented by quadrature nodes
/// carrying volumes.
struct Mesh {
  double h = 0.0;
  Vec origin;
  Vec center;  // bounding-ball center of the region
  double bound_radius = 0.0;
  double exterior_radius = 0.0;
  int key_radius = 0;  // all keys satisfy |k_i| <= key_radius

  std::vector<Vec> cells;
  std::vector<Key> keys;
  std::vector<double> depth;  // region distance at each interior center

  std::vector<Vec> exterior;
  std::vector<Key> exterior_keys;

  std::vector<Vec> far_nodes;
  std::vector<double> far_volume;

  std::size_t size() const { return cells.size(); }
  double volume() const { return h * h * h; }

  /// Interior index of the lattice cell with this key, or -1.
  int find(const Key& k) const;
  Key key_of(const Vec& x) const;
  /// Interior cell whose lattice key is nearest to x, or -1 when that cell is exterior.
  int locate(const Vec& x) const;
  Vec position(const Key& k) const;

  std::vector<int> index;  // dense (2 key_radius + 1)^3 table of interior indices
};

Mesh build_mesh(const Region& region, const MeshConfig& cfg = {});

struct BoundaryEdge {
  int cell = 0;
  double rate = 0.0;  // kappa / theta
  Vec point;          // boundary crossing on the edge
};

struct StencilFlag {
  int cell = 0;
  double weight = 0.0;  // negative axial coefficient
};

/// -L_h on the interior cells together with the exit channels: boundary edges
/// (continuous exits) and jump weights to exterior cells and far nodes.
class DiscreteGenerator {
 public:
  const Mesh& mesh() const { return mesh_; }
  const OperatorModel& model() const { return model_; }
  const Eigen::MatrixXd& neg_l() const { return neg_l_; }
  const Eigen::VectorXd& continuous_exit_rate() const { return continuous_exit_; }
  const Eigen::VectorXd& jump_exit_rate() const { return jump_exit_; }
  Eigen::VectorXd total_exit_rate() const { return continuous_exit_ + jump_exit_; }
  const std::vector<BoundaryEdge>& boundary_edges() const { return boundary_edges_; }
  const std::vector<StencilFlag>& non_monotone() const { return non_monotone_; }
  double self_variance() const { return self_variance_; }

  /// Jump weight (rate) from interior cell i to the lattice cell with key k.
  double lattice_weight(int i, const Key& k) const;
  /// Jump weight from interior cell i to far node n.
  double far_weight(int i, std::size_t n) const;

  /// sum over exterior cells and far nodes of rate(i -> y) f(y); f is
  /// averaged over each exterior cell.
  Eigen::VectorXd exterior_inflow(const std::function<double(const Vec&)>& f) const;
  /// sum over boundary edges of cell i of rate * f(boundary point).
  Eigen::VectorXd boundary_inflow(const std::function<double(const Vec&)>& f) const;
  Eigen::VectorXd inflow(const std::function<double(const Vec&)>& f) const {
    return exterior_inflow(f) + boundary_inflow(f);
  }
  /// Exit rates into classes: column c holds the rate from each cell into the
  /// landing points y with classify(y, on_boundary) == c (-1 drops a landing).
  /// Exterior cells are classified by their centers.
  Eigen::MatrixXd exit_rates(const std::function<int(const Vec&, bool)>& classify, int n_classes) const;

 private:
  friend DiscreteGenerator assemble_generator(const OperatorModel&, const Region&, Mesh);
  Eigen::VectorXd inflow_from_values(const std::vector<double>& fe, const std::vector<double>& fn) const;

  Mesh mesh_;
  OperatorModel model_;
  Eigen::MatrixXd neg_l_;
  Eigen::VectorXd continuous_exit_;
  Eigen::VectorXd jump_exit_;
  std::vector<BoundaryEdge> boundary_edges_;
  std::vector<StencilFlag> non_monotone_;
  double self_variance_ = 0.0;
  bool use_table_ = true;
  int table_radius_ = 0;
  std::vector<double> table_;  // translation-invariant weights by offset
};

/// Diffusion: energy-form stencil with axial weights (a_kk - sum_j |a_kj|)/(2h^2)
/// and diagonal edges along e_k + sign(a_kj) e_j with weight |a_kj|/(2h^2),
/// coefficients taken at edge midpoints; an edge leaving the region at fraction
/// theta becomes an exit with rate kappa/theta. Jumps: c|x_i - x_j|^{-d-alpha} h^d
/// between non-adjacent cells, second-moment matched weights for adjacent
/// cells, and the self cell's second moment added to a as an isotropic
/// diffusion when diffusion is enabled. d = 3 only.
DiscreteGenerator assemble_generator(const OperatorModel& model, const Region& region, Mesh mesh);

/// G_h = (-L_h)^{-1} / h^d, so that G_h[i][j] approximates G_D(x_i, x_j).
class GreenMatrix {
 public:
  const Eigen::MatrixXd& matrix() const { return g_; }
  double operator()(int i, int j) const { return g_(i, j); }
  std::size_t size() const { return static_cast<std::size_t>(g_.rows()); }
  double volume() const { return volume_; }

  /// (-L_h)^{-1} rhs through the stored factorization.
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const { return llt_.solve(rhs); }

  double symmetry_error() const { return symmetry_error_; }
  double min_entry() const { return min_entry_; }

 private:
  friend GreenMatrix green_matrix(const DiscreteGenerator&);
  Eigen::MatrixXd g_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double volume_ = 0.0;
  double symmetry_error_ = 0.0;
  double min_entry_ = 0.0;
};

/// Throws SolverFailure when -L_h is not positive definite, NonPositiveValue
/// if an entry of G is not positive.
GreenMatrix green_matrix(const DiscreteGenerator& gen);

// ---------------------------------------------------------------------------
// Chain identities

struct ExitSplit {
  Eigen::VectorXd p_continuous;
  Eigen::VectorXd p_jump;
  double conservation_error = 0.0;  // max |p_cont + p_jump - 1|
};

ExitSplit exit_split(const DiscreteGenerator& gen, const GreenMatrix& green);

struct LevyIdentityReport {
  double solve_route = 0.0;    // chain jump-exit mass into A, from the factorization
  double product_route = 0.0;  // sum_z G(x,z) J(z,A) h^d
  double gap = 0.0;
};

/// A is given as a predicate on exterior landing points (cells and far nodes).
LevyIdentityReport levy_exit_identity_check(const DiscreteGenerator& gen, const GreenMatrix& green, int x,
                                            const std::function<bool(const Vec&)>& in_target);

/// Exit distribution of the chain from cell x over the partition cells.
HarmonicMeasureEstimate grid_harmonic_measure(const DiscreteGenerator& gen, const GreenMatrix& green, int x,
                                              const ExitPartition& partition);

// ---------------------------------------------------------------------------
// Green-function inequalities

struct ThreeGReport {
  double constant = 0.0;  // max of G(x,y)G(y,z)/G(x,z) / (|x-y|^{2-d} + |y-z|^{2-d})
  std::array<int, 3> witness{};
  std::vector<double> ratios;
  std::vector<std::size_t> histogram;  // decades of the ratio, from 1e-4 upward
};

ThreeGReport check_3g(const GreenMatrix& green, const Mesh& mesh, std::span<const std::array<int, 3>> triples);

/// Triples of distinct cells drawn from the given cell list (all ordered
/// combinations with pairwise-distinct entries, capped).
std::vector<std::array<int, 3>> make_triples(std::span<const int> cells, std::size_t max_count);

struct GreenBoundsReport {
  double c_up = 0.0;
  double c_low = 0.0;
  std::array<int, 2> witness_up{};
  std::array<int, 2> witness_low{};
  std::size_t interior_pairs = 0;
};

/// c_up = max G |x-y|^{d-2} over pairs with |x-y| >= min_separation;
/// c_low = min over those pairs that also satisfy 2|x-y| <= delta(x) ∧ delta(y).
GreenBoundsReport green_bounds_report(const GreenMatrix& green, const Mesh& mesh, double min_separation);

struct BoundaryDecayReport {
  double constant = 0.0;  // min over probes of G(x,y)/delta(y)
  int witness = -1;
  std::vector<int> probes;
  std::vector<double> ratios;
};

/// Probes: interior cells within `radius` of the boundary point Q.
BoundaryDecayReport boundary_decay_report(const GreenMatrix& green, const Mesh& mesh, int x, const Vec& boundary_point,
                                          double radius);

// ---------------------------------------------------------------------------
// Martin kernel and harmonic-measure density

class MartinKernel {
 public:
  /// The generator must outlive the kernel; its boundary edges carry the
  /// exit flux used by boundary_value.
  MartinKernel(const DiscreteGenerator& gen, const GreenMatrix& green, int reference);

  int reference() const { return ref_; }
  /// G(x,y) / G(x_0,y) on cells.
  double operator()(int x, int y) const;
  /// Boundary value at z as a ratio of exit fluxes: sum of G(x, cell) * rate
  /// over boundary edges within 1.5h of z, tent-weighted by distance, divided
  /// by the same sum for x_0. Throws DegenerateColumn when no edge is that close.
  double boundary_value(int x, const Vec& z) const;
  /// Independent limit from the interior: least-squares fit of the cell
  /// ratios within 5h of z along the inward normal and 2.5h across it
  /// (quadratic in depth, linear across), evaluated at z. Cells closer to x
  /// than 0.7 |x - z| are left out so the pole of G(x, .) does not bend the fit.
  double interior_limit(int x, const Vec& z, const Vec& outward_normal) const;

  /// Oscillation max - min of boundary values over boundary points within
  /// each radius of z (points supplied by the caller).
  std::vector<double> oscillation(int x, const Vec& z, std::span<const Vec> points,
                                  std::span<const double> radii) const;

 private:
  const DiscreteGenerator& gen_;
  const GreenMatrix& green_;
  const Mesh& mesh_;
  int ref_;
};

struct DensityCheckReport {
  std::vector<double> lhs;            // omega(x, A) on the chain
  std::vector<double> rhs_chain;      // sum over edges of M(x, cell) omega(x_0, edge)
  std::vector<double> rhs_extrapolated;  // interior_limit in place of the cell ratio
  double max_gap_chain = 0.0;
  double max_gap = 0.0;  // extrapolated version
  double max_cap_mass = 0.0;
  double total_lhs = 0.0;
};

DensityCheckReport harmonic_measure_density_check(const DiscreteGenerator& gen, const GreenMatrix& green, int x,
                                                  int reference, const ExitPartition& partition);

// ---------------------------------------------------------------------------
// Feynman-Kac on the grid

/// u solving (-L_h) u = inflow(f).
Eigen::VectorXd dirichlet_grid(const DiscreteGenerator& gen, const GreenMatrix& green,
                               const std::function<double(const Vec&)>& f);

struct GaugeResult {
  bool gaugeable = false;
  double spectral_radius = 0.0;  // of G diag(q^+) h^d
  Eigen::VectorXd values;        // empty when not gaugeable
};

/// Spectral radius of K = G diag(q^+) h^d by power iteration.
double neumann_radius(const GreenMatrix& green, const Eigen::VectorXd& q_cells);

Eigen::VectorXd potential_on_cells(const Mesh& mesh, const Potential& q);

/// H = (I - K)^{-1} 1, computed as 1 + (-L - Q)^{-1} q.
GaugeResult gauge_grid(const DiscreteGenerator& gen, const GreenMatrix& green, const Potential& q);

/// u = (-L - Q)^{-1} inflow(f), computed as u_0 + (-L - Q)^{-1}(q u_0) with u_0 the
/// Dirichlet solution.
GaugeResult schrodinger_grid(const DiscreteGenerator& gen, const GreenMatrix& green, const Potential& q,
                             const std::function<double(const Vec&)>& f);

struct ConditionalGaugeReport {
  bool gaugeable = false;
  double spectral_radius = 0.0;
  std::vector<int> poles;
  std::vector<double> min_f;  // over x != y
  std::vector<double> max_f;
  double overall_min = 0.0;
  double overall_max = 0.0;
};

/// F(x,y) = V(x,y)/G(x,y), V = G + (-L - Q)^{-1} Q G / ... column by column.
ConditionalGaugeReport conditional_gauge_grid(const DiscreteGenerator& gen, const GreenMatrix& green,
                                              const Potential& q, std::span<const int> poles);

struct BetaReport {
  double beta = 0.0;
  std::array<int, 2> witness{};
  double beta_without_top = 0.0;  // same pair with the top cells removed
  double removed_volume = 0.0;
};

/// max over x != z of sum_y G(x,y) G(y,z) |q(y)| h^d / G(x,z); the sensitivity
/// row drops the largest contributions at the witness pair until `volume` is removed.
BetaReport beta_q_grid(const GreenMatrix& green, const Mesh& mesh, const Potential& q, double volume);

struct HarnackGridReport {
  bool gaugeable = false;
  Eigen::VectorXd u;
  double ratio = 0.0;
  int arg_hi = -1;
  int arg_lo = -1;
};

/// Schrodinger exit problem with data f; ratio sup/inf over the given cells.
/// Throws ZeroSolution if u vanishes on the probes.
HarnackGridReport harnack_grid(const DiscreteGenerator& gen, const GreenMatrix& green, const Potential& q,
                               const std::function<double(const Vec&)>& f, std::span<const int> cells);

/// Trilinear interpolation of cell values at x. Lattice corners that are not
/// interior cells take outside(corner position), e.g. the exterior data of a
/// Dirichlet problem.
double interpolate_cells(const Mesh& mesh, const Eigen::VectorXd& values, const Vec& x,
                         const std::function<double(const Vec&)>& outside);

/// Interior cells within `radius` of `center`.
std::vector<int> cells_in_ball(const Mesh& mesh, const Vec& center, double radius);

/// u = G b h^d with b(x_i) = J(x_i, S): the chain's probability of landing in
/// the target ball S through the Levy system.
Eigen::VectorXd hitting_grid(const DiscreteGenerator& gen, const GreenMatrix& green, const TargetBall& target);

}  // namespace jdlab
