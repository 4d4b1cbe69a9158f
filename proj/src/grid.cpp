#include "jdlab/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "jdlab/error.hpp"
#include "jdlab/quadrature.hpp"

namespace jdlab {

namespace {

constexpr int kDim = 3;

Vec vec3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Mesh

int Mesh::find(const Key& k) const {
  const int span = 2 * key_radius + 1;
  for (int i = 0; i < kDim; ++i)
    if (k[i] < -key_radius || k[i] > key_radius) return -1;
  return index[(static_cast<std::size_t>(k[0] + key_radius) * span + (k[1] + key_radius)) * span + (k[2] + key_radius)];
}

Key Mesh::key_of(const Vec& x) const {
  Key k;
  for (int i = 0; i < kDim; ++i) k[i] = static_cast<int>(std::lround((x(i) - origin(i)) / h));
  return k;
}

int Mesh::locate(const Vec& x) const { return find(key_of(x)); }

Vec Mesh::position(const Key& k) const { return origin + h * vec3(k[0], k[1], k[2]); }

Mesh build_mesh(const Region& region, const MeshConfig& cfg) {
  if (region.dim() != kDim) throw Error(ErrorCode::NotSupported, "the grid oracle is implemented for d = 3");
  const auto [center, radius] = region.bounding_ball();
  Mesh mesh;
  mesh.center = center;
  mesh.bound_radius = radius;
  mesh.h = cfg.spacing > 0.0 ? cfg.spacing : radius / 8.0;
  if (radius / mesh.h < 5.0 - 1e-12)
    throw Error(ErrorCode::InvalidArgument, "mesh spacing must leave at least 5 cells across the radius");
  if (!(cfg.exterior_factor > 1.0)) throw Error(ErrorCode::InvalidArgument, "exterior factor must exceed 1");
  mesh.origin = cfg.origin ? *cfg.origin : center;
  if (mesh.origin.size() != kDim) throw Error(ErrorCode::InvalidArgument, "lattice origin dimension mismatch");
  mesh.exterior_radius = cfg.exterior_factor * radius;
  const double offset = (mesh.origin - center).norm();
  mesh.key_radius = static_cast<int>(std::ceil((mesh.exterior_radius + offset) / mesh.h)) + 1;
  const int K = mesh.key_radius;
  const int span = 2 * K + 1;
  mesh.index.assign(static_cast<std::size_t>(span) * span * span, -1);
  for (int a = -K; a <= K; ++a) {
    for (int b = -K; b <= K; ++b) {
      for (int c = -K; c <= K; ++c) {
        const Key k{a, b, c};
        const Vec p = mesh.position(k);
        if ((p - center).norm() > mesh.exterior_radius) continue;
        const double dist = region.distance(p);
        if (dist > 0.0) {
          mesh.index[(static_cast<std::size_t>(a + K) * span + (b + K)) * span + (c + K)] =
              static_cast<int>(mesh.cells.size());
          mesh.cells.push_back(p);
          mesh.keys.push_back(k);
          mesh.depth.push_back(dist);
        } else {
          mesh.exterior.push_back(p);
          mesh.exterior_keys.push_back(k);
        }
      }
    }
  }
  if (mesh.cells.empty()) throw Error(ErrorCode::InvalidArgument, "no lattice cell lies inside the region");
  return mesh;
}

// ---------------------------------------------------------------------------
// Generator

namespace {

/// (1/3) c int_{cube} |y|^{-1-alpha} dy over the cube of side h centered at 0:
/// six pyramids over the faces, radial integral in closed form.
double self_cell_variance(double c, double alpha, double h) {
  const auto rule = gauss_legendre(16, -0.5 * h, 0.5 * h);
  double face = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
      const double r2 = 0.25 * h * h + rule.nodes[i] * rule.nodes[i] + rule.nodes[j] * rule.nodes[j];
      face += rule.weights[i] * rule.weights[j] * std::pow(r2, -0.5 * (1.0 + alpha));
    }
  }
  const double integral = 6.0 * (0.5 * h) / (2.0 - alpha) * face;
  return c * integral / 3.0;
}

/// int_{cell at offset o} c |y|^{-1-alpha} dy / |o h|^2 for an adjacent cell.
double adjacent_weight(double c, double alpha, double h, const Key& o) {
  const auto rule = gauss_legendre(5, -0.5, 0.5);
  double total = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      for (std::size_t k = 0; k < 5; ++k) {
        const double y0 = (o[0] + rule.nodes[i]) * h;
        const double y1 = (o[1] + rule.nodes[j]) * h;
        const double y2 = (o[2] + rule.nodes[k]) * h;
        const double r2 = y0 * y0 + y1 * y1 + y2 * y2;
        total += rule.weights[i] * rule.weights[j] * rule.weights[k] * std::pow(r2, -0.5 * (1.0 + alpha));
      }
    }
  }
  const double o2 = static_cast<double>(o[0] * o[0] + o[1] * o[1] + o[2] * o[2]) * h * h;
  return c * total * h * h * h / o2;
}

double default_weight(double c, double alpha, double h, const Key& o) {
  if (o[0] == 0 && o[1] == 0 && o[2] == 0) return 0.0;
  if (std::abs(o[0]) <= 1 && std::abs(o[1]) <= 1 && std::abs(o[2]) <= 1) return adjacent_weight(c, alpha, h, o);
  const double r = h * std::sqrt(static_cast<double>(o[0] * o[0] + o[1] * o[1] + o[2] * o[2]));
  return c * std::pow(r, -(kDim + alpha)) * h * h * h;
}

}  // namespace

double DiscreteGenerator::lattice_weight(int i, const Key& k) const {
  const Key& ki = mesh_.keys[i];
  const Key o{k[0] - ki[0], k[1] - ki[1], k[2] - ki[2]};
  const int T = table_radius_;
  const int S = 2 * T + 1;
  double base = 0.0;
  if (std::abs(o[0]) <= T && std::abs(o[1]) <= T && std::abs(o[2]) <= T) {
    base = table_[(static_cast<std::size_t>(o[0] + T) * S + (o[1] + T)) * S + (o[2] + T)];
  } else {
    base = default_weight(model_.jump.c, model_.jump.alpha, mesh_.h, o);
  }
  if (use_table_ || base == 0.0) return base;
  const Vec& x = mesh_.cells[i];
  const Vec y = mesh_.position(k);
  const double sym = 0.5 * (model_.jump.custom(x, y) + model_.jump.custom(y, x));
  const double reference = model_.jump.c * std::pow((x - y).norm(), -(kDim + model_.jump.alpha));
  return base * sym / reference;
}

double DiscreteGenerator::far_weight(int i, std::size_t n) const {
  const Vec& x = mesh_.cells[i];
  const Vec& y = mesh_.far_nodes[n];
  double j = 0.0;
  if (use_table_) {
    j = model_.jump.c * std::pow((x - y).norm(), -(kDim + model_.jump.alpha));
  } else {
    j = 0.5 * (model_.jump.custom(x, y) + model_.jump.custom(y, x));
  }
  return j * mesh_.far_volume[n];
}

Eigen::VectorXd DiscreteGenerator::exterior_inflow(const std::function<double(const Vec&)>& f) const {
  if (!model_.jumps_enabled) return Eigen::VectorXd::Zero(static_cast<int>(mesh_.size()));
  // Cell averages by the 2-point Gauss rule per axis, so that data with a jump
  // across a lattice plane is split evenly.
  const double g = mesh_.h / (2.0 * std::sqrt(3.0));
  std::vector<double> fe(mesh_.exterior.size());
  for (std::size_t e = 0; e < fe.size(); ++e) {
    double acc = 0.0;
    for (int corner = 0; corner < 8; ++corner) {
      const Vec p = mesh_.exterior[e] + vec3(corner & 1 ? g : -g, corner & 2 ? g : -g, corner & 4 ? g : -g);
      acc += f(p);
    }
    fe[e] = acc / 8.0;
  }
  std::vector<double> fn(mesh_.far_nodes.size());
  for (std::size_t k = 0; k < fn.size(); ++k) fn[k] = f(mesh_.far_nodes[k]);
  return inflow_from_values(fe, fn);
}

Eigen::VectorXd DiscreteGenerator::inflow_from_values(const std::vector<double>& fe,
                                                      const std::vector<double>& fn) const {
  const int n = static_cast<int>(mesh_.size());
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  if (!model_.jumps_enabled) return out;
  if (use_table_) {
    const int T = table_radius_;
    const long S = 2 * T + 1;
    const long shift = static_cast<long>(T) * (S * S + S + 1);
    std::vector<long> le(mesh_.exterior_keys.size());
    for (std::size_t e = 0; e < le.size(); ++e) {
      const Key& k = mesh_.exterior_keys[e];
      le[e] = k[0] * S * S + k[1] * S + k[2];
    }
    for (int i = 0; i < n; ++i) {
      const Key& k = mesh_.keys[i];
      const long base = shift - (k[0] * S * S + k[1] * S + k[2]);
      double acc = 0.0;
      for (std::size_t e = 0; e < le.size(); ++e) acc += table_[base + le[e]] * fe[e];
      out(i) = acc;
    }
  } else {
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t e = 0; e < fe.size(); ++e)
        if (fe[e] != 0.0) acc += lattice_weight(i, mesh_.exterior_keys[e]) * fe[e];
      out(i) = acc;
    }
  }
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < fn.size(); ++k)
      if (fn[k] != 0.0) acc += far_weight(i, k) * fn[k];
    out(i) += acc;
  }
  return out;
}

Eigen::VectorXd DiscreteGenerator::boundary_inflow(const std::function<double(const Vec&)>& f) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<int>(mesh_.size()));
  for (const auto& edge : boundary_edges_) out(edge.cell) += edge.rate * f(edge.point);
  return out;
}

Eigen::MatrixXd DiscreteGenerator::exit_rates(const std::function<int(const Vec&, bool)>& classify,
                                              int n_classes) const {
  const int n = static_cast<int>(mesh_.size());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n_classes);
  for (const auto& edge : boundary_edges_) {
    const int c = classify(edge.point, true);
    if (c >= 0) out(edge.cell, c) += edge.rate;
  }
  if (!model_.jumps_enabled) return out;
  std::vector<int> class_e(mesh_.exterior.size());
  std::vector<int> class_n(mesh_.far_nodes.size());
  for (std::size_t e = 0; e < class_e.size(); ++e) class_e[e] = classify(mesh_.exterior[e], false);
  for (std::size_t k = 0; k < class_n.size(); ++k) class_n[k] = classify(mesh_.far_nodes[k], false);
  for (int c = 0; c < n_classes; ++c) {
    std::vector<double> fe(class_e.size());
    std::vector<double> fn(class_n.size());
    bool any = false;
    for (std::size_t e = 0; e < fe.size(); ++e) any |= (fe[e] = class_e[e] == c ? 1.0 : 0.0) != 0.0;
    for (std::size_t k = 0; k < fn.size(); ++k) any |= (fn[k] = class_n[k] == c ? 1.0 : 0.0) != 0.0;
    if (any) out.col(c) += inflow_from_values(fe, fn);
  }
  return out;
}

DiscreteGenerator assemble_generator(const OperatorModel& model, const Region& region, Mesh mesh) {
  if (model.dim != kDim || region.dim() != kDim)
    throw Error(ErrorCode::NotSupported, "the grid oracle is implemented for d = 3");
  DiscreteGenerator gen;
  gen.model_ = model;
  const double h = mesh.h;
  const double c = model.jump.c;
  const double alpha = model.jump.alpha;
  const int n = static_cast<int>(mesh.size());

  // Far-field quadrature beyond R_ext: t = (R_ext / rho)^alpha in (0, 1).
  if (model.jumps_enabled) {
    const auto radial = gauss_legendre(8, 0.0, 1.0);
    const auto sphere = sphere_rule(kDim, 8);
    (void)sphere;
    const auto polar = gauss_legendre(8, -1.0, 1.0);
    const int n_az = 16;
    const double r_ext = mesh.exterior_radius;
    for (std::size_t a = 0; a < radial.nodes.size(); ++a) {
      const double t = radial.nodes[a];
      const double rho = r_ext * std::pow(t, -1.0 / alpha);
      const double jac = radial.weights[a] * (r_ext / alpha) * std::pow(t, -1.0 / alpha - 1.0) * rho * rho;
      for (std::size_t b = 0; b < polar.nodes.size(); ++b) {
        const double z = polar.nodes[b];
        const double s = std::sqrt(1.0 - z * z);
        for (int k = 0; k < n_az; ++k) {
          const double phi = 2.0 * std::numbers::pi * (k + 0.5) / n_az;
          mesh.far_nodes.push_back(mesh.center + rho * vec3(s * std::cos(phi), s * std::sin(phi), z));
          mesh.far_volume.push_back(jac * polar.weights[b] * 2.0 * std::numbers::pi / n_az);
        }
      }
    }
  }
  gen.mesh_ = std::move(mesh);
  const Mesh& m = gen.mesh_;
  gen.neg_l_ = Eigen::MatrixXd::Zero(n, n);
  gen.continuous_exit_ = Eigen::VectorXd::Zero(n);
  gen.jump_exit_ = Eigen::VectorXd::Zero(n);

  if (model.jumps_enabled) {
    gen.use_table_ = !model.jump.has_custom();
    gen.table_radius_ = 2 * m.key_radius;
    const int T = gen.table_radius_;
    const int S = 2 * T + 1;
    gen.table_.assign(static_cast<std::size_t>(S) * S * S, 0.0);
    for (int a = -T; a <= T; ++a)
      for (int b = -T; b <= T; ++b)
        for (int d = -T; d <= T; ++d)
          gen.table_[(static_cast<std::size_t>(a + T) * S + (b + T)) * S + (d + T)] = default_weight(c, alpha, h, {a, b, d});
    if (model.diffusion_enabled) gen.self_variance_ = self_cell_variance(c, alpha, h);

    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const double w = gen.lattice_weight(i, m.keys[j]);
        gen.neg_l_(i, j) = -w;
        gen.neg_l_(j, i) = -w;
        gen.neg_l_(i, i) += w;
        gen.neg_l_(j, j) += w;
      }
    }
    gen.jump_exit_ = gen.exterior_inflow([](const Vec&) { return 1.0; });
    for (int i = 0; i < n; ++i) gen.neg_l_(i, i) += gen.jump_exit_(i);
  }

  if (model.diffusion_enabled) {
    const double h2 = h * h;
    const double sigma2 = gen.self_variance_;
    auto a_at = [&](const Vec& p) {
      Mat a = model.a(p);
      a.diagonal().array() += sigma2;
      return a;
    };
    auto add_edge = [&](int i, const Key& target, const Vec& step, double kappa) {
      const int j = m.find(target);
      if (j >= 0) {
        gen.neg_l_(i, j) -= kappa;
        gen.neg_l_(i, i) += kappa;
        return;
      }
      const Vec& x = m.cells[i];
      const Vec y = x + step;
      const double theta = std::max(region.crossing_fraction(x, y), 1e-3);
      const double rate = kappa / theta;
      gen.neg_l_(i, i) += rate;
      gen.continuous_exit_(i) += rate;
      gen.boundary_edges_.push_back({i, rate, region.project_to_boundary(x + theta * step)});
    };
    for (int i = 0; i < n; ++i) {
      const Vec& x = m.cells[i];
      const Key& k = m.keys[i];
      for (int axis = 0; axis < kDim; ++axis) {
        for (int sign : {-1, 1}) {
          Vec step = Vec::Zero(kDim);
          step(axis) = sign * h;
          const Mat a = a_at(x + 0.5 * step);
          double off = 0.0;
          for (int j = 0; j < kDim; ++j)
            if (j != axis) off += std::abs(a(axis, j));
          const double kappa = 0.5 * (a(axis, axis) - off) / h2;
          if (kappa < -1e-12 * a(axis, axis) / h2) gen.non_monotone_.push_back({i, kappa});
          Key t = k;
          t[axis] += sign;
          add_edge(i, t, step, kappa);
        }
      }
      for (int p = 0; p < kDim; ++p) {
        for (int q = p + 1; q < kDim; ++q) {
          for (int sp : {-1, 1}) {
            for (int sq : {-1, 1}) {
              Vec step = Vec::Zero(kDim);
              step(p) = sp * h;
              step(q) = sq * h;
              const Mat a = a_at(x + 0.5 * step);
              const double apq = a(p, q);
              if (apq == 0.0 || (apq > 0.0) != (sp * sq > 0)) continue;
              Key t = k;
              t[p] += sp;
              t[q] += sq;
              add_edge(i, t, step, 0.5 * std::abs(apq) / h2);
            }
          }
        }
      }
    }
  }
  return gen;
}

// ---------------------------------------------------------------------------

GreenMatrix green_matrix(const DiscreteGenerator& gen) {
  GreenMatrix out;
  const int n = static_cast<int>(gen.mesh().size());
  out.volume_ = gen.mesh().volume();
  out.llt_.compute(gen.neg_l());
  if (out.llt_.info() != Eigen::Success)
    throw Error(ErrorCode::SolverFailure, "generator is not positive definite (no absorption or non-monotone stencil)");
  out.g_ = Eigen::MatrixXd::Identity(n, n);
  out.llt_.solveInPlace(out.g_);
  out.g_ /= out.volume_;
  double asym = 0.0;
  double scale = 0.0;
  double min_entry = std::numeric_limits<double>::infinity();
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      asym = std::max(asym, std::abs(out.g_(i, j) - out.g_(j, i)));
      scale = std::max(scale, std::abs(out.g_(i, j)));
      min_entry = std::min(min_entry, out.g_(i, j));
    }
  }
  out.symmetry_error_ = asym / scale;
  out.min_entry_ = min_entry;
  if (!(min_entry > 0.0)) throw Error(ErrorCode::NonPositiveValue, "Green matrix has a non-positive entry");
  return out;
}

// ---------------------------------------------------------------------------

ExitSplit exit_split(const DiscreteGenerator& gen, const GreenMatrix& green) {
  ExitSplit s;
  s.p_continuous = green.solve(gen.continuous_exit_rate());
  s.p_jump = green.solve(gen.jump_exit_rate());
  s.conservation_error = (s.p_continuous + s.p_jump - Eigen::VectorXd::Ones(s.p_jump.size())).cwiseAbs().maxCoeff();
  return s;
}

LevyIdentityReport levy_exit_identity_check(const DiscreteGenerator& gen, const GreenMatrix& green, int x,
                                            const std::function<bool(const Vec&)>& in_target) {
  const Eigen::VectorXd rate = gen.exterior_inflow([&](const Vec& y) { return in_target(y) ? 1.0 : 0.0; });
  LevyIdentityReport r;
  r.solve_route = green.solve(rate)(x);
  r.product_route = green.matrix().col(x).dot(rate) * green.volume();
  r.gap = std::abs(r.solve_route - r.product_route);
  return r;
}

HarmonicMeasureEstimate grid_harmonic_measure(const DiscreteGenerator& gen, const GreenMatrix& green, int x,
                                              const ExitPartition& partition) {
  const Eigen::MatrixXd rates =
      gen.exit_rates([&](const Vec& y, bool on_boundary) { return partition.classify(y, on_boundary); },
                     partition.size());
  const Eigen::VectorXd omega = rates.transpose() * green.matrix().col(x) * green.volume();
  HarmonicMeasureEstimate est;
  est.mass.assign(omega.data(), omega.data() + omega.size());
  est.std_error.assign(omega.size(), 0.0);
  for (int c = 0; c < partition.size(); ++c) {
    if (partition.is_cap(c)) {
      est.p_continuous += omega(c);
    } else {
      est.p_jump += omega(c);
    }
  }
  return est;
}

// ---------------------------------------------------------------------------

std::vector<std::array<int, 3>> make_triples(std::span<const int> cells, std::size_t max_count) {
  std::vector<std::array<int, 3>> all;
  for (int x : cells)
    for (int y : cells)
      for (int z : cells)
        if (x != y && y != z && x != z) all.push_back({x, y, z});
  if (all.size() <= max_count) return all;
  std::vector<std::array<int, 3>> out;
  const double stride = static_cast<double>(all.size()) / static_cast<double>(max_count);
  for (std::size_t k = 0; k < max_count; ++k) out.push_back(all[static_cast<std::size_t>(k * stride)]);
  return out;
}

ThreeGReport check_3g(const GreenMatrix& green, const Mesh& mesh, std::span<const std::array<int, 3>> triples) {
  ThreeGReport r;
  r.histogram.assign(10, 0);
  for (const auto& t : triples) {
    const auto [x, y, z] = t;
    if (x == y || y == z || x == z) throw Error(ErrorCode::InvalidArgument, "3G triples need distinct cells");
    const double lhs = green(x, y) * green(y, z) / green(x, z);
    const double bound = 1.0 / (mesh.cells[x] - mesh.cells[y]).norm() + 1.0 / (mesh.cells[y] - mesh.cells[z]).norm();
    const double ratio = lhs / bound;
    r.ratios.push_back(ratio);
    if (ratio > r.constant) {
      r.constant = ratio;
      r.witness = t;
    }
    const int bin = std::clamp(static_cast<int>(std::floor(std::log10(ratio) + 4.0)), 0, 9);
    ++r.histogram[bin];
  }
  return r;
}

GreenBoundsReport green_bounds_report(const GreenMatrix& green, const Mesh& mesh, double min_separation) {
  GreenBoundsReport r;
  r.c_low = std::numeric_limits<double>::infinity();
  const int n = static_cast<int>(mesh.size());
  for (int j = 0; j < n; ++j) {
    for (int i = j + 1; i < n; ++i) {
      const double dist = (mesh.cells[i] - mesh.cells[j]).norm();
      if (dist < min_separation) continue;
      const double v = green(i, j) * dist;
      if (v > r.c_up) {
        r.c_up = v;
        r.witness_up = {i, j};
      }
      if (2.0 * dist <= std::min(mesh.depth[i], mesh.depth[j])) {
        ++r.interior_pairs;
        if (v < r.c_low) {
          r.c_low = v;
          r.witness_low = {i, j};
        }
      }
    }
  }
  if (r.interior_pairs == 0) r.c_low = 0.0;
  return r;
}

BoundaryDecayReport boundary_decay_report(const GreenMatrix& green, const Mesh& mesh, int x, const Vec& boundary_point,
                                          double radius) {
  BoundaryDecayReport r;
  r.constant = std::numeric_limits<double>::infinity();
  for (int y = 0; y < static_cast<int>(mesh.size()); ++y) {
    if (y == x || (mesh.cells[y] - boundary_point).norm() >= radius) continue;
    const double ratio = green(x, y) / mesh.depth[y];
    r.probes.push_back(y);
    r.ratios.push_back(ratio);
    if (ratio < r.constant) {
      r.constant = ratio;
      r.witness = y;
    }
  }
  if (r.probes.empty()) throw Error(ErrorCode::InvalidArgument, "no cell within the probe radius of the boundary point");
  return r;
}

// ---------------------------------------------------------------------------

MartinKernel::MartinKernel(const DiscreteGenerator& gen, const GreenMatrix& green, int reference)
    : gen_(gen), green_(green), mesh_(gen.mesh()), ref_(reference) {
  if (reference < 0 || reference >= static_cast<int>(mesh_.size()))
    throw Error(ErrorCode::InvalidArgument, "reference cell out of range");
}

double MartinKernel::operator()(int x, int y) const {
  const double den = green_(ref_, y);
  if (!(den > std::numeric_limits<double>::min())) throw Error(ErrorCode::DegenerateColumn, "G(x_0, y) underflows");
  if (x == ref_) return 1.0;
  return green_(x, y) / den;
}

double MartinKernel::boundary_value(int x, const Vec& z) const {
  const double window = 1.5 * mesh_.h;
  double num = 0.0;
  double den = 0.0;
  for (const auto& edge : gen_.boundary_edges()) {
    const double d = (edge.point - z).norm();
    if (d >= window) continue;
    const double w = (1.0 - d / window) * edge.rate;
    num += w * green_(x, edge.cell);
    den += w * green_(ref_, edge.cell);
  }
  if (!(den > std::numeric_limits<double>::min()))
    throw Error(ErrorCode::DegenerateColumn, "no boundary flux near the boundary point");
  return num / den;
}

double MartinKernel::interior_limit(int x, const Vec& z, const Vec& outward_normal) const {
  const double h = mesh_.h;
  const Vec n = outward_normal.normalized();
  // Orthonormal tangent pair.
  Vec t1 = std::abs(n(0)) < 0.9 ? vec3(1, 0, 0) : vec3(0, 1, 0);
  t1 = (t1 - t1.dot(n) * n).normalized();
  Vec t2(3);
  t2 << n(1) * t1(2) - n(2) * t1(1), n(2) * t1(0) - n(0) * t1(2), n(0) * t1(1) - n(1) * t1(0);
  const double keep_out = 0.7 * (mesh_.cells[x] - z).norm();
  std::vector<std::array<double, 7>> rows;
  std::vector<double> values;
  for (int y = 0; y < static_cast<int>(mesh_.size()); ++y) {
    const Vec d = mesh_.cells[y] - z;
    const double s = -d.dot(n) / h;
    if (s <= 0.0 || s > 5.0) continue;
    const double u = d.dot(t1) / h;
    const double v = d.dot(t2) / h;
    if (u * u + v * v > 2.5 * 2.5) continue;
    if ((mesh_.cells[y] - mesh_.cells[x]).norm() < keep_out) continue;
    rows.push_back({1.0, s, s * s, u, v, s * u, s * v});
    values.push_back((*this)(x, y));
  }
  if (rows.size() < 12) throw Error(ErrorCode::DegenerateColumn, "too few cells near the boundary point");
  Eigen::MatrixXd a(static_cast<int>(rows.size()), 7);
  Eigen::VectorXd b(static_cast<int>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (int k = 0; k < 7; ++k) a(static_cast<int>(r), k) = rows[r][k];
    b(static_cast<int>(r)) = values[r];
  }
  return a.colPivHouseholderQr().solve(b)(0);
}

std::vector<double> MartinKernel::oscillation(int x, const Vec& z, std::span<const Vec> points,
                                              std::span<const double> radii) const {
  std::vector<double> values(points.size());
  for (std::size_t p = 0; p < points.size(); ++p) values[p] = boundary_value(x, points[p]);
  std::vector<double> out;
  for (double r : radii) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t p = 0; p < points.size(); ++p) {
      if ((points[p] - z).norm() > r) continue;
      lo = std::min(lo, values[p]);
      hi = std::max(hi, values[p]);
    }
    out.push_back(hi >= lo ? hi - lo : 0.0);
  }
  return out;
}

DensityCheckReport harmonic_measure_density_check(const DiscreteGenerator& gen, const GreenMatrix& green, int x,
                                                  int reference, const ExitPartition& partition) {
  const MartinKernel martin(gen, green, reference);
  const int caps = ExitPartition::kSectors;
  DensityCheckReport r;
  r.lhs.assign(caps, 0.0);
  r.rhs_chain.assign(caps, 0.0);
  r.rhs_extrapolated.assign(caps, 0.0);
  const double vol = green.volume();
  const BallDomain& ball = partition.ball();
  for (const auto& edge : gen.boundary_edges()) {
    const int cap = partition.classify(edge.point, true);
    const double omega_x = green(x, edge.cell) * vol * edge.rate;
    const double omega_0 = green(reference, edge.cell) * vol * edge.rate;
    r.lhs[cap] += omega_x;
    r.rhs_chain[cap] += martin(x, edge.cell) * omega_0;
    r.rhs_extrapolated[cap] += martin.interior_limit(x, edge.point, ball.outward_normal(edge.point)) * omega_0;
  }
  for (int c = 0; c < caps; ++c) {
    r.max_cap_mass = std::max(r.max_cap_mass, r.lhs[c]);
    r.max_gap_chain = std::max(r.max_gap_chain, std::abs(r.lhs[c] - r.rhs_chain[c]));
    r.max_gap = std::max(r.max_gap, std::abs(r.lhs[c] - r.rhs_extrapolated[c]));
    r.total_lhs += r.lhs[c];
  }
  return r;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd potential_on_cells(const Mesh& mesh, const Potential& q) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<int>(mesh.size()));
  if (!q) return v;
  for (std::size_t i = 0; i < mesh.size(); ++i) v(static_cast<int>(i)) = q(mesh.cells[i]);
  return v;
}

Eigen::VectorXd dirichlet_grid(const DiscreteGenerator& gen, const GreenMatrix& green,
                               const std::function<double(const Vec&)>& f) {
  return green.solve(gen.inflow(f));
}

double neumann_radius(const GreenMatrix& green, const Eigen::VectorXd& q_cells) {
  const Eigen::VectorXd root = q_cells.cwiseMax(0.0).cwiseSqrt();
  if (root.maxCoeff() == 0.0) return 0.0;
  // Symmetric form D^{1/2} (-L)^{-1} D^{1/2} has the same spectrum as K.
  Eigen::VectorXd v = root.normalized();
  double lambda = 0.0;
  for (int it = 0; it < 5000; ++it) {
    const Eigen::VectorXd w = root.cwiseProduct(green.solve(root.cwiseProduct(v)));
    const double next = v.dot(w);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    if (std::abs(next - lambda) <= 1e-13 * std::abs(next)) return next;
    lambda = next;
  }
  return lambda;
}

namespace {

// Factorization of -L - Q; empty optional when not positive definite.
std::optional<Eigen::LLT<Eigen::MatrixXd>> perturbed_factor(const DiscreteGenerator& gen, const Eigen::VectorXd& q) {
  Eigen::MatrixXd m = gen.neg_l();
  m.diagonal() -= q;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) return std::nullopt;
  return llt;
}

}  // namespace

GaugeResult gauge_grid(const DiscreteGenerator& gen, const GreenMatrix& green, const Potential& q) {
  const Eigen::VectorXd qc = potential_on_cells(gen.mesh(), q);
  GaugeResult r;
  r.spectral_radius = neumann_radius(green, qc);
  if (r.spectral_radius >= 1.0) return r;
  const int n = static_cast<int>(qc.size());
  if (qc.cwiseAbs().maxCoeff() == 0.0) {
    r.gaugeable = true;
    r.values = Eigen::VectorXd::Ones(n);
    return r;
  }
  const auto llt = perturbed_factor(gen, qc);
  if (!llt) return r;
  r.gaugeable = true;
  r.values = Eigen::VectorXd::Ones(n) + llt->solve(qc);
  return r;
}

GaugeResult schrodinger_grid(const DiscreteGenerator& gen, const GreenMatrix& green, const Potential& q,
                             const std::function<double(const Vec&)>& f) {
  const Eigen::VectorXd qc = potential_on_cells(gen.mesh(), q);
  GaugeResult r;
  r.spectral_radius = neumann_radius(green, qc);
  if (r.spectral_radius >= 1.0) return r;
  const Eigen::VectorXd u0 = dirichlet_grid(gen, green, f);
  r.gaugeable = true;
  if (qc.cwiseAbs().maxCoeff() == 0.0) {
    r.values = u0;
    return r;
  }
  const auto llt = perturbed_factor(gen, qc);
  if (!llt) {
    r.gaugeable = false;
    return r;
  }
  r.values = u0 + llt->solve(qc.cwiseProduct(u0));
  return r;
}

ConditionalGaugeReport conditional_gauge_grid(const DiscreteGenerator& gen, const GreenMatrix& green,
                                              const Potential& q, std::span<const int> poles) {
  const Eigen::VectorXd qc = potential_on_cells(gen.mesh(), q);
  ConditionalGaugeReport r;
  r.spectral_radius = neumann_radius(green, qc);
  if (r.spectral_radius >= 1.0) return r;
  const bool zero = qc.cwiseAbs().maxCoeff() == 0.0;
  std::optional<Eigen::LLT<Eigen::MatrixXd>> llt;
  if (!zero) {
    llt = perturbed_factor(gen, qc);
    if (!llt) return r;
  }
  r.gaugeable = true;
  r.overall_min = std::numeric_limits<double>::infinity();
  r.overall_max = -r.overall_min;
  const int n = static_cast<int>(qc.size());
  for (int y : poles) {
    const Eigen::VectorXd g = green.matrix().col(y);
    Eigen::VectorXd v = g;
    if (!zero) v += llt->solve(qc.cwiseProduct(g));
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (int x = 0; x < n; ++x) {
      if (x == y) continue;
      const double f = v(x) / g(x);
      lo = std::min(lo, f);
      hi = std::max(hi, f);
    }
    r.poles.push_back(y);
    r.min_f.push_back(lo);
    r.max_f.push_back(hi);
    r.overall_min = std::min(r.overall_min, lo);
    r.overall_max = std::max(r.overall_max, hi);
  }
  return r;
}

BetaReport beta_q_grid(const GreenMatrix& green, const Mesh& mesh, const Potential& q, double volume) {
  const Eigen::VectorXd w = potential_on_cells(mesh, q).cwiseAbs() * green.volume();
  BetaReport r;
  if (w.maxCoeff() == 0.0) return r;
  const Eigen::MatrixXd& g = green.matrix();
  const Eigen::MatrixXd gdg = g * w.asDiagonal() * g;
  const int n = static_cast<int>(g.rows());
  for (int z = 0; z < n; ++z) {
    for (int x = 0; x < n; ++x) {
      if (x == z) continue;
      const double v = gdg(x, z) / g(x, z);
      if (v > r.beta) {
        r.beta = v;
        r.witness = {x, z};
      }
    }
  }
  const auto [x, z] = r.witness;
  std::vector<double> parts(n);
  for (int y = 0; y < n; ++y) parts[y] = g(x, y) * g(y, z) * w(y);
  std::sort(parts.begin(), parts.end(), std::greater<>());
  const int drop = std::min(n, static_cast<int>(std::ceil(volume / green.volume() - 1e-12)));
  double removed = 0.0;
  for (int k = 0; k < drop; ++k) removed += parts[k];
  r.removed_volume = drop * green.volume();
  r.beta_without_top = (gdg(x, z) - removed) / g(x, z);
  return r;
}

double interpolate_cells(const Mesh& mesh, const Eigen::VectorXd& values, const Vec& x,
                         const std::function<double(const Vec&)>& outside) {
  const Vec u = (x - mesh.origin) / mesh.h;
  Key base;
  std::array<double, 3> frac{};
  for (int i = 0; i < kDim; ++i) {
    const double f = std::floor(u(i));
    base[i] = static_cast<int>(f);
    frac[i] = u(i) - f;
  }
  double value = 0.0;
  for (int corner = 0; corner < 8; ++corner) {
    Key k = base;
    double w = 1.0;
    for (int i = 0; i < kDim; ++i) {
      const int bit = (corner >> i) & 1;
      k[i] += bit;
      w *= bit ? frac[i] : 1.0 - frac[i];
    }
    if (w == 0.0) continue;
    const int cell = mesh.find(k);
    value += w * (cell >= 0 ? values(cell) : outside(mesh.position(k)));
  }
  return value;
}

std::vector<int> cells_in_ball(const Mesh& mesh, const Vec& center, double radius) {
  std::vector<int> out;
  for (std::size_t i = 0; i < mesh.size(); ++i)
    if ((mesh.cells[i] - center).norm() <= radius * (1.0 + 1e-12)) out.push_back(static_cast<int>(i));
  return out;
}

HarnackGridReport harnack_grid(const DiscreteGenerator& gen, const GreenMatrix& green, const Potential& q,
                               const std::function<double(const Vec&)>& f, std::span<const int> cells) {
  if (cells.empty()) throw Error(ErrorCode::InvalidArgument, "no probe cells");
  const GaugeResult s = schrodinger_grid(gen, green, q, f);
  HarnackGridReport r;
  r.gaugeable = s.gaugeable;
  if (!s.gaugeable) return r;
  r.u = s.values;
  r.arg_hi = cells[0];
  r.arg_lo = cells[0];
  for (int c : cells) {
    if (r.u(c) > r.u(r.arg_hi)) r.arg_hi = c;
    if (r.u(c) < r.u(r.arg_lo)) r.arg_lo = c;
  }
  if (!(r.u(r.arg_lo) > 0.0)) throw Error(ErrorCode::ZeroSolution, "solution vanishes at a probe cell");
  r.ratio = r.u(r.arg_hi) / r.u(r.arg_lo);
  return r;
}

Eigen::VectorXd hitting_grid(const DiscreteGenerator& gen, const GreenMatrix& green, const TargetBall& target) {
  const Mesh& m = gen.mesh();
  Eigen::VectorXd b(static_cast<int>(m.size()));
  for (std::size_t i = 0; i < m.size(); ++i)
    b(static_cast<int>(i)) = kernel_mass_to_ball(gen.model(), m.cells[i], target.center, target.radius);
  return green.solve(b);
}

}  // namespace jdlab
