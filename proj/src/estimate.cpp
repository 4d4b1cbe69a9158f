#include "jdlab/estimate.hpp"

#include <array>
#include <boost/math/distributions/chi_squared.hpp>
#include <charconv>
#include <cmath>
#include <numbers>

#include "jdlab/error.hpp"

namespace jdlab {

PathConfig local_path_config(const PathConfig& base, double scale) {
  if (!(scale > 0.0)) throw Error(ErrorCode::InvalidArgument, "scale must be positive");
  PathConfig cfg = base;
  cfg.dt = std::min(base.dt, 1e-3 * scale * scale);
  cfg.eps = std::min(base.eps, scale / 5.0);
  cfg.t_max = 0.0;
  return cfg;
}

namespace {

void check_censoring(std::uint64_t censored, std::uint64_t total, const McConfig& mc) {
  if (total == 0) throw Error(ErrorCode::InvalidArgument, "n_paths must be positive");
  const double frac = static_cast<double>(censored) / static_cast<double>(total);
  if (frac > mc.censor_ceiling)
    throw Error(ErrorCode::ExcessiveCensoring, "censored fraction " + std::to_string(frac) + " exceeds ceiling");
}

Estimate finish(const RunningStats& s, std::uint64_t censored) { return Estimate::from(s, censored); }

Potential zero_potential() {
  return [](const Vec&) { return 0.0; };
}

int parse_int(std::string_view text, const std::string& spec) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw Error(ErrorCode::ConfigError, "bad integer in boundary data '" + spec + "'");
  return v;
}

double parse_double(std::string_view text, const std::string& spec) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw Error(ErrorCode::ConfigError, "bad number in boundary data '" + spec + "'");
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------

ExitTimeReport expected_exit_time(const Vec& x, const Region& region, const OperatorModel& model, const PathConfig& cfg,
                                  const McConfig& mc) {
  const PathSimulator sim(model, region, cfg);
  const MultiStats acc = parallel_paths(mc, MultiStats(2), [&](PhiloxStream& rng, std::uint64_t, MultiStats& a) {
    const ExitRecord rec = sim.run(x, rng);
    if (rec.censored) {
      ++a.censored;
      return;
    }
    a.stats[0].push(rec.tau);
    a.stats[1].push(rec.via_jump ? 1.0 : 0.0);
  });
  check_censoring(acc.censored, mc.n_paths, mc);
  ExitTimeReport report;
  report.tau = finish(acc.stats[0], acc.censored);
  report.radius = region.bounding_ball().second;
  report.ratio_r2 = report.tau.value / (report.radius * report.radius);
  report.jump_fraction = acc.stats[1].mean();
  return report;
}

// ---------------------------------------------------------------------------

ExitPartition::ExitPartition(const BallDomain& ball, std::vector<double> radial_edges)
    : ball_(ball), edges_(std::move(radial_edges)) {
  if (ball.dim() != 3) throw Error(ErrorCode::NotSupported, "exit partition is defined for d = 3");
  if (edges_.size() < 2 || edges_.front() != 1.0)
    throw Error(ErrorCode::InvalidArgument, "radial edges must start at 1 and have at least two entries");
  for (std::size_t i = 1; i < edges_.size(); ++i)
    if (!(edges_[i] > edges_[i - 1])) throw Error(ErrorCode::InvalidArgument, "radial edges must increase");
}

int ExitPartition::sector(const Vec& direction) {
  const double n = direction.norm();
  const double z = n > 0.0 ? direction(2) / n : 0.0;
  const int band = z < -1.0 / 3.0 ? 0 : (z < 1.0 / 3.0 ? 1 : 2);
  const double phi = std::atan2(direction(1), direction(0)) + std::numbers::pi;
  const int quadrant = std::clamp(static_cast<int>(phi / (0.5 * std::numbers::pi)), 0, 3);
  return 4 * band + quadrant;
}

int ExitPartition::classify(const Vec& landing, bool on_boundary) const {
  const Vec v = landing - ball_.center();
  const int s = sector(v);
  if (on_boundary) return cap(s);
  const double r = v.norm() / ball_.radius();
  for (int b = 0; b < bands(); ++b)
    if (r < edges_[b + 1]) return shell_cell(b, s);
  return far_cell(s);
}

std::string ExitPartition::label(int cell) const {
  const int s = cell % kSectors;
  const std::string tag = "s" + std::to_string(s);
  if (is_cap(cell)) return "cap:" + tag;
  if (is_far(cell)) return "far:" + tag;
  return "shell" + std::to_string(cell / kSectors - 1) + ":" + tag;
}

namespace {

struct CellCounts {
  std::vector<std::uint64_t> counts;
  std::uint64_t censored = 0;
  std::uint64_t continuous = 0;
  std::uint64_t jump = 0;

  void merge(const CellCounts& o) {
    for (std::size_t k = 0; k < counts.size(); ++k) counts[k] += o.counts[k];
    censored += o.censored;
    continuous += o.continuous;
    jump += o.jump;
  }
};

}  // namespace

HarmonicMeasureEstimate harmonic_measure(const Vec& x, const BallDomain& ball, const OperatorModel& model,
                                         const PathConfig& cfg, const ExitPartition& partition, const McConfig& mc) {
  const PathSimulator sim(model, ball, cfg);
  CellCounts empty;
  empty.counts.assign(partition.size(), 0);
  const CellCounts acc = parallel_paths(mc, empty, [&](PhiloxStream& rng, std::uint64_t, CellCounts& a) {
    const ExitRecord rec = sim.run(x, rng);
    if (rec.censored) {
      ++a.censored;
      return;
    }
    ++a.counts[partition.classify(rec.exit_point, !rec.via_jump)];
    if (rec.via_jump) {
      ++a.jump;
    } else {
      ++a.continuous;
    }
  });
  check_censoring(acc.censored, mc.n_paths, mc);
  HarmonicMeasureEstimate est;
  const double n = static_cast<double>(mc.n_paths);
  est.n_paths = mc.n_paths;
  est.counts = acc.counts;
  for (std::uint64_t c : acc.counts) {
    const double p = static_cast<double>(c) / n;
    est.mass.push_back(p);
    est.std_error.push_back(std::sqrt(p * (1.0 - p) / n));
  }
  est.p_continuous = static_cast<double>(acc.continuous) / n;
  est.p_jump = static_cast<double>(acc.jump) / n;
  est.censored_fraction = static_cast<double>(acc.censored) / n;
  return est;
}

double chi_square_uniform_p(std::span<const std::uint64_t> counts) {
  if (counts.size() < 2) throw Error(ErrorCode::InvalidArgument, "chi-square needs at least two cells");
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  if (total <= 0.0) throw Error(ErrorCode::InvalidArgument, "chi-square needs positive counts");
  const double expected = total / static_cast<double>(counts.size());
  double stat = 0.0;
  for (auto c : counts) {
    const double diff = static_cast<double>(c) - expected;
    stat += diff * diff / expected;
  }
  const boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

// ---------------------------------------------------------------------------

BoundaryData make_boundary_data(const std::string& spec, const BallDomain& ball) {
  const Vec center = ball.center();
  const int d = ball.dim();
  if (spec == "one") return [](const Vec&) { return 1.0; };
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw Error(ErrorCode::ConfigError, "unknown boundary data '" + spec + "'");
  const std::string kind = spec.substr(0, colon);
  const std::string rest = spec.substr(colon + 1);
  if (kind == "coord" || kind == "halfspace") {
    const int k = parse_int(rest, spec);
    if (k < 0 || k >= d) throw Error(ErrorCode::ConfigError, "axis out of range in '" + spec + "'");
    if (kind == "coord") return [center, k](const Vec& y) { return y(k) - center(k); };
    return [center, k](const Vec& y) { return y(k) > center(k) ? 1.0 : (y(k) == center(k) ? 0.5 : 0.0); };
  }
  if (kind == "cap") {
    const auto sep = rest.find(':');
    if (sep == std::string::npos) throw Error(ErrorCode::ConfigError, "cap data needs '<axis>:<cos>'");
    const int k = parse_int(std::string_view(rest).substr(0, sep), spec);
    const double cosine = parse_double(std::string_view(rest).substr(sep + 1), spec);
    if (k < 0 || k >= d) throw Error(ErrorCode::ConfigError, "axis out of range in '" + spec + "'");
    if (!(cosine > -1.0 && cosine < 1.0)) throw Error(ErrorCode::ConfigError, "cap cosine must lie in (-1,1)");
    return [center, k, cosine](const Vec& y) {
      const Vec v = y - center;
      const double n = v.norm();
      return n > 0.0 && v(k) > cosine * n ? 1.0 : 0.0;
    };
  }
  throw Error(ErrorCode::ConfigError, "unknown boundary data '" + spec + "'");
}

FeynmanKacBundle feynman_kac_bundle(const Vec& x, const BoundaryData& f, std::span<const Potential> potentials,
                                    const Region& region, const OperatorModel& model, const PathConfig& cfg,
                                    const McConfig& mc, double data_bound) {
  if (potentials.size() > static_cast<std::size_t>(PathSimulator::kMaxFunctionals))
    throw Error(ErrorCode::InvalidArgument, "too many potentials for one sweep");
  OperatorModel free = model;
  free.q = {};
  const PathSimulator sim(free, region, cfg);
  const std::size_t k = potentials.size();
  const MultiStats acc = parallel_paths(mc, MultiStats(1 + 2 * k), [&](PhiloxStream& rng, std::uint64_t,
                                                                        MultiStats& a) {
    std::array<double, PathSimulator::kMaxFunctionals> integrals{};
    const ExitRecord rec = sim.run(x, rng, potentials, std::span<double>(integrals.data(), k));
    if (rec.censored) {
      ++a.censored;
      return;
    }
    const double value = f(rec.exit_point);
    if (!(std::abs(value) <= data_bound))
      throw Error(ErrorCode::UnboundedBoundaryData, "boundary data exceeds bound at a sampled exit");
    a.stats[0].push(value);
    for (std::size_t j = 0; j < k; ++j) {
      const double weight = std::exp(integrals[j]);
      a.stats[1 + 2 * j].push(weight);
      a.stats[2 + 2 * j].push(weight * value);
    }
  });
  check_censoring(acc.censored, mc.n_paths, mc);
  FeynmanKacBundle out;
  out.censored = acc.censored;
  out.dirichlet = finish(acc.stats[0], acc.censored);
  for (std::size_t j = 0; j < k; ++j) {
    Estimate g = finish(acc.stats[1 + 2 * j], acc.censored);
    Estimate s = finish(acc.stats[2 + 2 * j], acc.censored);
    g.heavy_tail = acc.stats[1 + 2 * j].kurtosis() > mc.kurtosis_ceiling;
    s.heavy_tail = acc.stats[2 + 2 * j].kurtosis() > mc.kurtosis_ceiling;
    out.gauge.push_back(g);
    out.schrodinger.push_back(s);
  }
  return out;
}

Estimate solve_dirichlet(const Vec& x, const BoundaryData& f, const Region& region, const OperatorModel& model,
                         const PathConfig& cfg, const McConfig& mc) {
  return feynman_kac_bundle(x, f, {}, region, model, cfg, mc).dirichlet;
}

Estimate gauge(const Vec& x, const Region& region, const OperatorModel& model, const PathConfig& cfg,
               const McConfig& mc) {
  const std::array<Potential, 1> q{model.q ? model.q : zero_potential()};
  return feynman_kac_bundle(x, [](const Vec&) { return 1.0; }, q, region, model, cfg, mc).gauge[0];
}

Estimate solve_schrodinger(const Vec& x, const BoundaryData& f, const Region& region, const OperatorModel& model,
                           const PathConfig& cfg, const McConfig& mc) {
  const std::array<Potential, 1> q{model.q ? model.q : zero_potential()};
  return feynman_kac_bundle(x, f, q, region, model, cfg, mc).schrodinger[0];
}

KhasminskiiCertificate khasminskii_certificate(const Potential& q, const Region& region, const OperatorModel& model,
                                               const PathConfig& cfg, const McConfig& mc,
                                               std::span<const Vec> probes) {
  if (probes.empty()) throw Error(ErrorCode::InvalidArgument, "certificate needs at least one probe");
  OperatorModel free = model;
  free.q = {};
  const PathSimulator sim(free, region, cfg);
  const std::array<Potential, 1> absolute{[q](const Vec& y) { return q ? std::abs(q(y)) : 0.0; }};
  KhasminskiiCertificate cert;
  for (std::size_t p = 0; p < probes.size(); ++p) {
    if (!region.contains(probes[p])) throw Error(ErrorCode::InvalidArgument, "probe outside the region");
    const MultiStats acc = parallel_paths(mc, MultiStats(1), [&](PhiloxStream& rng, std::uint64_t, MultiStats& a) {
      double integral = 0.0;
      const ExitRecord rec = sim.run(probes[p], rng, absolute, std::span<double>(&integral, 1));
      if (rec.censored) {
        ++a.censored;
        return;
      }
      a.stats[0].push(integral);
    });
    check_censoring(acc.censored, mc.n_paths, mc);
    cert.per_probe.push_back(finish(acc.stats[0], acc.censored));
    if (cert.per_probe.back().value > cert.eta) {
      cert.eta = cert.per_probe.back().value;
      cert.argmax = p;
    }
  }
  if (cert.eta < 1.0) cert.bound = 1.0 / (1.0 - cert.eta);
  return cert;
}

// ---------------------------------------------------------------------------

Estimate ratio_estimate(const Estimate& num, const Estimate& den) {
  Estimate r;
  r.value = num.value / den.value;
  const double a = num.value != 0.0 ? num.std_error / num.value : 0.0;
  const double b = den.std_error / den.value;
  r.std_error = std::abs(r.value) * std::sqrt(a * a + b * b);
  r.n = std::min(num.n, den.n);
  return r;
}

RatioReport harnack_report(std::span<const Estimate> values) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "no probe values");
  for (const auto& v : values)
    if (v.value - 3.0 * v.std_error <= 0.0)
      throw Error(ErrorCode::NonPositiveValue, "probe value within 3 standard errors of zero");
  RatioReport r;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i].value > values[r.arg_hi].value) r.arg_hi = i;
    if (values[i].value < values[r.arg_lo].value) r.arg_lo = i;
  }
  const Estimate q = ratio_estimate(values[r.arg_hi], values[r.arg_lo]);
  r.ratio = r.arg_hi == r.arg_lo ? 1.0 : q.value;
  r.std_error = r.arg_hi == r.arg_lo ? 0.0 : q.std_error;
  return r;
}

RatioReport carleson_report(std::span<const Estimate> values, const Estimate& reference) {
  if (reference.value - 3.0 * reference.std_error <= 0.0)
    throw Error(ErrorCode::ReferenceDegenerate, "reference value within 3 standard errors of zero");
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "no probe values");
  RatioReport r;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i].value > values[r.arg_hi].value) r.arg_hi = i;
  const Estimate q = ratio_estimate(values[r.arg_hi], reference);
  r.ratio = q.value;
  r.std_error = q.std_error;
  r.arg_lo = r.arg_hi;
  return r;
}

RatioReport bhp_report(std::span<const Estimate> values, std::span<const double> delta,
                       std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  if (values.size() != delta.size()) throw Error(ErrorCode::InvalidArgument, "values and depths differ in length");
  if (pairs.empty()) throw Error(ErrorCode::InvalidArgument, "no probe pairs");
  for (const auto& v : values)
    if (v.value - 3.0 * v.std_error <= 0.0)
      throw Error(ErrorCode::NonPositiveValue, "probe value within 3 standard errors of zero");
  RatioReport r;
  r.ratio = -1.0;
  for (const auto& [i, j] : pairs) {
    if (i >= values.size() || j >= values.size()) throw Error(ErrorCode::InvalidArgument, "pair index out of range");
    if (!(delta[i] > 0.0 && delta[j] > 0.0)) throw Error(ErrorCode::InvalidArgument, "probe depth must be positive");
    const Estimate q = ratio_estimate(values[i].scaled(1.0 / delta[i]), values[j].scaled(1.0 / delta[j]));
    const double value = i == j ? 1.0 : q.value;
    if (value > r.ratio) {
      r.ratio = value;
      r.std_error = i == j ? 0.0 : q.std_error;
      r.arg_hi = i;
      r.arg_lo = j;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------

std::vector<Estimate> hitting_function(std::span<const Vec> points, const Region& domain, const OperatorModel& model,
                                       const PathConfig& cfg, const McConfig& mc, const TargetBall& target) {
  const auto [center, reach] = domain.bounding_ball();
  if ((target.center - center).norm() <= reach + target.radius)
    throw Error(ErrorCode::InvalidArgument, "target ball must be separated from the domain");
  OperatorModel free = model;
  free.q = {};
  const PathSimulator sim(free, domain, cfg);
  const std::array<Potential, 1> rate{
      [&model, target](const Vec& z) { return kernel_mass_to_ball(model, z, target.center, target.radius); }};
  std::vector<Estimate> out;
  for (const Vec& x : points) {
    if (!domain.contains(x)) {
      out.push_back(Estimate{0.0, 0.0, mc.n_paths});
      continue;
    }
    const MultiStats acc = parallel_paths(mc, MultiStats(1), [&](PhiloxStream& rng, std::uint64_t, MultiStats& a) {
      double integral = 0.0;
      const ExitRecord rec = sim.run(x, rng, rate, std::span<double>(&integral, 1));
      if (rec.censored) {
        ++a.censored;
        return;
      }
      a.stats[0].push(integral);
    });
    check_censoring(acc.censored, mc.n_paths, mc);
    out.push_back(finish(acc.stats[0], acc.censored));
  }
  return out;
}

Estimate hitting_function(const Vec& x, const Region& domain, const OperatorModel& model, const PathConfig& cfg,
                          const McConfig& mc, const TargetBall& target) {
  return hitting_function(std::span<const Vec>(&x, 1), domain, model, cfg, mc, target).front();
}

ExitLinearityReport boundary_exit_linearity(const BoundaryChart& chart, const OperatorModel& model,
                                            const PathConfig& cfg, const McConfig& mc, std::span<const double> depths,
                                            bool truncated) {
  const double delta0 = chart.delta0();
  const double r0 = chart.r0();
  const ChartBox box(chart, delta0, r0);
  const ChartBox wide(chart, 2.0 * delta0, r0);
  const BallDomain& ball = chart.ball();
  PathConfig local = local_path_config(cfg, delta0);
  local.truncated = truncated;
  OperatorModel free = model;
  free.q = {};
  const PathSimulator sim(free, box, local);
  const double tol = 1e-9 * delta0;

  ExitLinearityReport report;
  report.truncated = truncated;
  for (double depth : depths) {
    if (!(depth > 0.0 && depth < delta0))
      throw Error(ErrorCode::InvalidArgument, "probe depths must lie in (0, delta_0)");
    const Vec x = chart.normal_point(depth);
    const MultiStats acc = parallel_paths(mc, MultiStats(2), [&](PhiloxStream& rng, std::uint64_t, MultiStats& a) {
      const ExitRecord rec = sim.run(x, rng);
      if (rec.censored) {
        ++a.censored;
        return;
      }
      const bool in_ball = ball.delta(rec.exit_point) > tol;
      const bool in_wide = in_ball && wide.distance(rec.exit_point) > tol;
      a.stats[0].push(in_wide ? 1.0 : 0.0);
      a.stats[1].push(in_ball ? 1.0 : 0.0);
    });
    check_censoring(acc.censored, mc.n_paths, mc);
    ExitLinearityRow row;
    row.depth = ball.delta(x);
    row.p_box = finish(acc.stats[0], acc.censored);
    row.p_ball = finish(acc.stats[1], acc.censored);
    report.rows.push_back(row);
  }
  auto fit = [&](auto pick, double& slope, double& residual) {
    double num = 0.0;
    double den = 0.0;
    for (const auto& row : report.rows) {
      num += pick(row) * row.depth;
      den += row.depth * row.depth;
    }
    slope = den > 0.0 ? num / den : 0.0;
    residual = 0.0;
    for (const auto& row : report.rows) {
      const double model_value = slope * row.depth;
      if (model_value > 0.0) residual = std::max(residual, std::abs(pick(row) - model_value) / model_value);
    }
  };
  fit([](const ExitLinearityRow& r) { return r.p_box.value; }, report.slope_box, report.max_residual_box);
  fit([](const ExitLinearityRow& r) { return r.p_ball.value; }, report.slope_ball, report.max_residual_ball);
  return report;
}

// ---------------------------------------------------------------------------

std::vector<Vec> lattice_probes(const Vec& center, double spacing, double radius, std::size_t max_count) {
  if (!(spacing > 0.0) || !(radius >= 0.0)) throw Error(ErrorCode::InvalidArgument, "bad lattice parameters");
  const int d = static_cast<int>(center.size());
  const int k_max = static_cast<int>(std::floor(radius / spacing + 1e-9));
  const double limit = (radius / spacing) * (radius / spacing) * (1.0 + 1e-12);
  std::vector<std::vector<int>> keys;
  std::vector<int> k(d, -k_max);
  while (true) {
    double n2 = 0.0;
    for (int v : k) n2 += static_cast<double>(v) * v;
    if (n2 <= limit) keys.push_back(k);
    int i = 0;
    while (i < d && k[i] == k_max) k[i++] = -k_max;
    if (i == d) break;
    ++k[i];
  }
  auto norm2 = [](const std::vector<int>& a) {
    long s = 0;
    for (int v : a) s += static_cast<long>(v) * v;
    return s;
  };
  std::stable_sort(keys.begin(), keys.end(), [&](const auto& a, const auto& b) {
    const long na = norm2(a);
    const long nb = norm2(b);
    if (na != nb) return na < nb;
    return a < b;
  });
  std::vector<Vec> out;
  for (const auto& key : keys) {
    if (out.size() >= max_count) break;
    Vec p = center;
    for (int i = 0; i < d; ++i) p(i) += spacing * key[i];
    out.push_back(p);
  }
  return out;
}

namespace {

double halton(std::uint64_t index, int base) {
  double f = 1.0;
  double r = 0.0;
  while (index > 0) {
    f /= base;
    r += f * static_cast<double>(index % base);
    index /= base;
  }
  return r;
}

}  // namespace

std::vector<Vec> boundary_probes(const BoundaryChart& chart, double r, std::size_t count, double min_depth) {
  const int d = chart.dim();
  if (!(min_depth < r / 4.0)) throw Error(ErrorCode::InvalidArgument, "min_depth must be below r/4");
  if (r / 4.0 >= chart.localization_radius()) throw Error(ErrorCode::OutOfChart, "probe radius exceeds the chart");
  static constexpr std::array<int, 8> kPrimes{2, 3, 5, 7, 11, 13, 17, 19};
  std::vector<Vec> out;
  for (std::uint64_t i = 1; out.size() < count; ++i) {
    Vec tangential(d - 1);
    for (int k = 0; k < d - 1; ++k) tangential(k) = 2.0 * halton(i, kPrimes[k]) - 1.0;
    if (tangential.squaredNorm() >= 1.0) continue;
    tangential *= r / 4.0;
    const double depth = min_depth + (r / 4.0 - min_depth) * halton(i, kPrimes[d - 1]);
    Vec local(d);
    local.head(d - 1) = tangential;
    local(d - 1) = chart.phi(tangential) + depth;
    out.push_back(chart.from_chart(local));
  }
  return out;
}

}  // namespace jdlab
