#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

namespace jdlab {

/// Mergeable streaming moments (Welford / Chan / Pebay updates up to the
/// fourth central moment).
class RunningStats {
 public:
  void push(double x) {
    const double n1 = static_cast<double>(n_);
    ++n_;
    const double n = static_cast<double>(n_);
    const double delta = x - mean_;
    const double delta_n = delta / n;
    const double delta_n2 = delta_n * delta_n;
    const double term1 = delta * delta_n * n1;
    mean_ += delta_n;
    m4_ += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * m2_ - 4.0 * delta_n * m3_;
    m3_ += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * m2_;
    m2_ += term1;
  }

  void merge(const RunningStats& o) {
    if (o.n_ == 0) return;
    if (n_ == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(n_);
    const double nb = static_cast<double>(o.n_);
    const double n = na + nb;
    const double delta = o.mean_ - mean_;
    const double d2 = delta * delta;
    const double d3 = d2 * delta;
    const double d4 = d2 * d2;
    const double m2 = m2_ + o.m2_ + d2 * na * nb / n;
    const double m3 = m3_ + o.m3_ + d3 * na * nb * (na - nb) / (n * n) + 3.0 * delta * (na * o.m2_ - nb * m2_) / n;
    const double m4 = m4_ + o.m4_ + d4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n) +
                      6.0 * d2 * (na * na * o.m2_ + nb * nb * m2_) / (n * n) + 4.0 * delta * (na * o.m3_ - nb * m3_) / n;
    mean_ = mean_ + delta * nb / n;
    m2_ = m2;
    m3_ = m3;
    m4_ = m4;
    n_ += o.n_;
  }

  std::uint64_t count() const { return n_; }
  double mean() const { return mean_; }
  double m2() const { return m2_; }
  double variance() const { return n_ > 1 ? std::max(0.0, m2_ / static_cast<double>(n_ - 1)) : 0.0; }
  double stderr_of_mean() const { return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }
  /// Non-excess kurtosis n M4 / M2^2; 3 for a normal sample.
  double kurtosis() const {
    if (n_ < 2 || m2_ <= 0.0) return 0.0;
    return static_cast<double>(n_) * m4_ / (m2_ * m2_);
  }

 private:
  std::uint64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
  double m3_ = 0.0;
  double m4_ = 0.0;
};

/// Monte-Carlo value with its standard error. `n` counts uncensored paths.
struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
  std::uint64_t n = 0;
  std::uint64_t censored_count = 0;
  bool heavy_tail = false;

  static Estimate from(const RunningStats& s, std::uint64_t censored = 0) {
    return {s.mean(), s.stderr_of_mean(), s.count(), censored, false};
  }

  Estimate scaled(double factor) const {
    Estimate e = *this;
    e.value *= factor;
    e.std_error *= std::abs(factor);
    return e;
  }
};

}  // namespace jdlab
