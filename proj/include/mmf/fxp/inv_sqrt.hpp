#pragma once

// Fixed-point 1/sqrt(x). The input is normalized to a mantissa m in [1, 4)
// with an even exponent; the top bits of m pick one of 24 initial guesses
// (width 1/8 buckets), refined by five Newton steps y <- y (3 - m y^2) / 2
// in Q30.

#include <array>
#include <cstdint>

namespace mmf::fxp {

inline constexpr int kInvSqrtLutSize = 24;
inline constexpr int kInvSqrtIterations = 5;
inline constexpr int kInvSqrtFrac = 30;

struct FixedScalar {
  std::int64_t value = 0;
  int exponent = 0;
  [[nodiscard]] double real() const;
};

/// round(2^30 / sqrt(1 + (i + 0.5) / 8)).
std::array<std::int64_t, kInvSqrtLutSize> build_inv_sqrt_lut();
const std::array<std::int64_t, kInvSqrtLutSize>& inv_sqrt_lut();

/// 1 / sqrt(x * 2^exponent); value <= 2^30. Throws for x <= 0.
FixedScalar inv_sqrt_fxp(std::int64_t x, int exponent);

}  // namespace mmf::fxp
