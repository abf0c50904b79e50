#pragma once

// Piecewise-linear sigmoid from an 8-entry table. Input has exponent -6,
// output exponent -15. Entries sit at x = 0, 1, ..., 7; the last segment
// runs to the saturation value 2^15 at x = 8. Negative inputs use
// sigma(-x) = 1 - sigma(x), so only the positive half is stored.

#include <array>
#include <cstdint>

namespace mmf::fxp {

inline constexpr int kSigmoidInputExp = 6;
inline constexpr int kSigmoidOutputExp = 15;
inline constexpr int kSigmoidEntries = 8;
inline constexpr std::int32_t kSigmoidOne = std::int32_t{1} << kSigmoidOutputExp;

struct SigmoidLut {
  std::array<std::int32_t, kSigmoidEntries> entries{};
};

/// round(sigma(i) * 2^15) for i = 0..7.
SigmoidLut build_sigmoid_lut();
const SigmoidLut& sigmoid_lut();

/// x is sigma's argument times 2^6; result is sigma times 2^15, in [0, 2^15].
std::int32_t sigmoid_fxp(std::int32_t x);

}  // namespace mmf::fxp
