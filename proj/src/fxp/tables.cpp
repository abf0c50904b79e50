// Lookup tables, built once from real arithmetic.

#include <cmath>

#include "mmf/fxp/inv_sqrt.hpp"
#include "mmf/fxp/sigmoid.hpp"

namespace mmf::fxp {

SigmoidLut build_sigmoid_lut() {
  SigmoidLut lut;
  for (int i = 0; i < kSigmoidEntries; ++i) {
    const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(i)));
    lut.entries[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(std::lround(s * kSigmoidOne));
  }
  return lut;
}

const SigmoidLut& sigmoid_lut() {
  static const SigmoidLut lut = build_sigmoid_lut();
  return lut;
}

std::array<std::int64_t, kInvSqrtLutSize> build_inv_sqrt_lut() {
  std::array<std::int64_t, kInvSqrtLutSize> lut{};
  for (int i = 0; i < kInvSqrtLutSize; ++i) {
    const double mid = 1.0 + (i + 0.5) / 8.0;
    lut[static_cast<std::size_t>(i)] = std::llround(std::ldexp(1.0 / std::sqrt(mid), kInvSqrtFrac));
  }
  return lut;
}

const std::array<std::int64_t, kInvSqrtLutSize>& inv_sqrt_lut() {
  static const auto lut = build_inv_sqrt_lut();
  return lut;
}

}  // namespace mmf::fxp
