#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace jdlab {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). A stream is
/// identified by (seed, stream index); every path owns one stream, so results
/// do not depend on how paths are distributed over workers.
class PhiloxStream {
 public:
  PhiloxStream(std::uint64_t seed, std::uint64_t stream)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        counter_{0u, 0u, static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)} {}

  /// Next 128 random bits.
  std::array<std::uint32_t, 4> next_block() {
    auto out = philox(counter_, key_);
    if (++counter_[0] == 0) ++counter_[1];
    return out;
  }

  std::uint64_t next_u64() {
    if (cached_ == 0) {
      block_ = next_block();
      cached_ = 2;
    }
    const int k = 2 - cached_;
    --cached_;
    return (static_cast<std::uint64_t>(block_[2 * k]) << 32) | block_[2 * k + 1];
  }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  /// Standard normal via the Marsaglia polar method; deterministic across platforms.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double scale = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * scale;
    has_spare_ = true;
    return u * scale;
  }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  static std::array<std::uint32_t, 4> philox(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t kM0 = 0xD2511F53u;
    constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u;
    constexpr std::uint32_t kW1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
      key[0] += kW0;
      key[1] += kW1;
    }
    return ctr;
  }

 private:
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> block_{};
  int cached_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace jdlab
