#include "mmf/fxp/inv_sqrt.hpp"

#include <bit>

#include "mmf/error.hpp"
#include "mmf/fxp/fixed_point.hpp"

namespace mmf::fxp {

FixedScalar inv_sqrt_fxp(std::int64_t x, int exponent) {
  if (x <= 0) throw Error("inv_sqrt_fxp: input must be positive");
  const int p = static_cast<int>(std::bit_width(static_cast<std::uint64_t>(x))) - 1;
  // Mantissa in [1, 4) paired with an even exponent.
  const int q = ((p + exponent) & 1) ? p - 1 : p;
  constexpr std::int64_t kOne = std::int64_t{1} << kInvSqrtFrac;
  std::int64_t m = shift_round(x, q - kInvSqrtFrac);
  if (m >= 4 * kOne) m = 4 * kOne - 1;

  const auto bucket = static_cast<std::size_t>((m >> (kInvSqrtFrac - 3)) - 8);
  std::int64_t y = inv_sqrt_lut()[bucket];
  for (int i = 0; i < kInvSqrtIterations; ++i) {
    const std::int64_t y2 = shift_round(y * y, kInvSqrtFrac);
    const std::int64_t my2 = shift_round(m * y2, kInvSqrtFrac);
    y = shift_round(y * (3 * kOne - my2), kInvSqrtFrac + 1);
  }
  return {y, -kInvSqrtFrac - ((q + exponent) >> 1)};
}

}  // namespace mmf::fxp
