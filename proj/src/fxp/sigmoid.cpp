#include "mmf/fxp/sigmoid.hpp"

#include "mmf/fxp/fixed_point.hpp"

namespace mmf::fxp {
namespace {

constexpr std::int64_t kStep = std::int64_t{1} << kSigmoidInputExp;
constexpr std::int64_t kLimit = kStep * kSigmoidEntries;

std::int32_t positive_half(std::int64_t x) {
  if (x >= kLimit) return kSigmoidOne;
  const auto& e = sigmoid_lut().entries;
  const auto idx = static_cast<std::size_t>(x >> kSigmoidInputExp);
  const std::int64_t frac = x & (kStep - 1);
  const std::int64_t y0 = e[idx];
  const std::int64_t y1 = idx + 1 < e.size() ? e[idx + 1] : kSigmoidOne;
  return static_cast<std::int32_t>(y0 + shift_round((y1 - y0) * frac, kSigmoidInputExp));
}

}  // namespace

std::int32_t sigmoid_fxp(std::int32_t x) {
  const auto wide = static_cast<std::int64_t>(x);
  if (wide < 0) return kSigmoidOne - positive_half(-wide);
  return positive_half(wide);
}

}  // namespace mmf::fxp
