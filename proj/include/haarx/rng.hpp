#pragma once

// Counter-based random streams.  Each (seed, stream index) pair is an
// independent stream addressed by a plain counter, so sample i of stream s is
// the same value no matter which thread computes it or in what order.
// Gaussians come from Box-Muller on top of the uniform stream.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace haarx {

namespace detail {
// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream) {
    key_ = detail::mix64(seed + 0x9e3779b97f4a7c15ULL * (stream + 1));
    key_ ^= detail::mix64(stream ^ 0xd1b54a32d192ed03ULL);
    ctr_ = 0;
    have_cached_ = false;
  }

  std::uint64_t next_u64() {
    std::uint64_t x = ctr_++;
    x = detail::mix64(x + key_);
    return detail::mix64(x ^ (key_ >> 1));
  }

  // Uniform in (0,1]; never returns 0 so log() below is safe.
  double next_uniform() {
    const std::uint64_t u = next_u64() >> 11;  // 53 bits
    return (static_cast<double>(u) + 1.0) * 0x1p-53;
  }

  // Standard normal, Box-Muller, second value cached.
  double next_normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t key_;
  std::uint64_t ctr_;
  double cached_;
  bool have_cached_;
};

}  // namespace haarx
