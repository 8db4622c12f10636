#pragma once

#include <charconv>
#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace haarx {

using cplx = std::complex<double>;

// Shortest round-trip decimal form of a double. Used everywhere numbers hit
// text (CSV, JSON, polynomial printing) so output is reproducible bit for bit.
inline std::string fmt_double(double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

// Pairwise (cascade) summation. Deterministic for a fixed element order and
// independent of how a sample loop was chunked, which keeps Monte Carlo
// output identical across thread counts.
template <class T>
T pairwise_sum(std::span<const T> v) {
  const std::size_t n = v.size();
  if (n == 0) return T{};
  if (n <= 8) {
    T s = v[0];
    for (std::size_t i = 1; i < n; ++i) s += v[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(v.subspan(0, half)) + pairwise_sum(v.subspan(half));
}

template <class T>
T pairwise_sum(const std::vector<T>& v) {
  return pairwise_sum(std::span<const T>(v.data(), v.size()));
}

struct McEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;  // standard error of the mean
  long long samples = 0;
};

struct McEstimateC {
  cplx mean{0.0, 0.0};
  double stderr_ = 0.0;
  long long samples = 0;
};

}  // namespace haarx
