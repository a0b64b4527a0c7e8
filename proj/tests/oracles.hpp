#pragma once

// Reference implementations used only by tests.  Everything here is written
// deliberately naively (tables, linear scans, triple loops) and independently
// of the library internals, so that agreement is evidence and not tautology.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "mpgemmfi/fp_codec.hpp"

namespace oracle {

struct Params {
  int eb, mb, bias, total;
};

inline Params params_for(mpgemmfi::FpFormat f) {
  switch (f) {
    case mpgemmfi::FpFormat::fp16: return {5, 10, 15, 16};
    case mpgemmfi::FpFormat::bf16: return {8, 7, 127, 16};
    case mpgemmfi::FpFormat::tf32: return {8, 10, 127, 19};
  }
  return {0, 0, 0, 0};
}

// Value of a bit pattern, written from the field definition with long double
// arithmetic.  Returns quiet NaN for NaN patterns.
inline double pattern_value(std::uint32_t bits, const Params& p) {
  const std::uint32_t man = bits & ((1u << p.mb) - 1u);
  const std::uint32_t exp = (bits >> p.mb) & ((1u << p.eb) - 1u);
  const bool neg = (bits >> (p.total - 1)) & 1u;
  const std::uint32_t exp_max = (1u << p.eb) - 1u;

  if (exp == exp_max) {
    if (man) return std::numeric_limits<double>::quiet_NaN();
    return neg ? -std::numeric_limits<double>::infinity()
               : std::numeric_limits<double>::infinity();
  }
  long double sig;
  int e2;
  if (exp == 0) {
    sig = (long double)man;
    e2 = 1 - p.bias - p.mb;
  } else {
    sig = (long double)(man + (1u << p.mb));
    e2 = int(exp) - p.bias - p.mb;
  }
  long double v = sig;
  for (int i = 0; i < e2; ++i) v *= 2.0L;
  for (int i = 0; i > e2; --i) v /= 2.0L;
  return double(neg ? -v : v);
}

// All finite patterns of a format sorted by value.  +0 and -0 both appear.
struct FiniteTable {
  Params p;
  std::vector<std::pair<double, std::uint32_t>> entries;  // (value, bits)

  explicit FiniteTable(mpgemmfi::FpFormat f) : p(params_for(f)) {
    const std::uint32_t exp_max = (1u << p.eb) - 1u;
    for (std::uint32_t b = 0; b < (1u << p.total); ++b) {
      const std::uint32_t exp = (b >> p.mb) & exp_max;
      if (exp == exp_max) continue;
      entries.emplace_back(pattern_value(b, p), b);
    }
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
  }

  // Round-to-nearest-even by explicit neighbor comparison.
  std::uint32_t nearest(double v) const {
    const std::uint32_t exp_max = (1u << p.eb) - 1u;
    const std::uint32_t sign_word = std::signbit(v) ? 1u << (p.total - 1) : 0u;
    const std::uint32_t inf_bits = sign_word | (exp_max << p.mb);
    if (std::isinf(v)) return inf_bits;
    if (v == 0.0) return sign_word;

    auto it = std::lower_bound(
        entries.begin(), entries.end(), v,
        [](const auto& e, double x) { return e.first < x; });
    // Beyond the finite range on either side: Inf iff at or past the midpoint
    // between the largest finite value and the next power of two.
    const double half_ulp = std::ldexp(1.0, (exp_max - 1 - p.bias) - p.mb - 1);
    if (it == entries.end())
      return (v - entries.back().first >= half_ulp) ? inf_bits
                                                    : entries.back().second;
    if (it == entries.begin() && it->first != v)
      return (entries.front().first - v >= half_ulp) ? inf_bits
                                                     : entries.front().second;
    if (it->first == v) return it->second;
    const auto lo = *(it - 1);
    const auto hi = *it;
    const double dlo = v - lo.first;
    const double dhi = hi.first - v;
    if (dlo < dhi) return lo.second;
    if (dhi < dlo) return hi.second;
    return (lo.second & 1u) == 0 ? lo.second : hi.second;  // tie: even mantissa
  }
};

// Plain triple-loop GEMM over already-quantized binary32 matrices, same
// product/accumulate arithmetic as scalar C++ gives.  D = A*B + C.
inline Eigen::MatrixXf reference_gemm(const Eigen::MatrixXf& a,
                                      const Eigen::MatrixXf& b,
                                      const Eigen::MatrixXf& c) {
  Eigen::MatrixXf d(a.rows(), b.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index col = 0; col < b.cols(); ++col) {
      float acc = c(r, col);
      for (Eigen::Index k = 0; k < a.cols(); ++k) acc += a(r, k) * b(k, col);
      d(r, col) = acc;
    }
  }
  return d;
}

// Exact integer GEMM for integer-valued inputs.
inline Eigen::MatrixXf reference_gemm_integer(const Eigen::MatrixXf& a,
                                              const Eigen::MatrixXf& b,
                                              const Eigen::MatrixXf& c) {
  Eigen::MatrixXf d(a.rows(), b.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index col = 0; col < b.cols(); ++col) {
      std::int64_t acc = std::int64_t(c(r, col));
      for (Eigen::Index k = 0; k < a.cols(); ++k)
        acc += std::int64_t(a(r, k)) * std::int64_t(b(k, col));
      d(r, col) = float(acc);
    }
  }
  return d;
}

// Chi-square statistic for observed counts against a uniform expectation.
inline double chi_square_uniform(const std::vector<std::uint64_t>& counts,
                                 std::uint64_t draws) {
  const double expect = double(draws) / double(counts.size());
  double stat = 0.0;
  for (std::uint64_t c : counts) {
    const double d = double(c) - expect;
    stat += d * d / expect;
  }
  return stat;
}

}  // namespace oracle
