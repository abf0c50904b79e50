#pragma once

// Power-of-two fixed point. A tensor is an integer array plus one shared
// exponent: real = value * 2^exponent. Every rescale is a shift.

#include <cstdint>
#include <span>
#include <vector>

namespace mmf::fxp {

inline constexpr int kMinExponent = -31;
inline constexpr int kMaxExponent = 31;

struct FixedPointTensor {
  std::vector<std::int32_t> values;
  int exponent = 0;
  int bits = 16;  // 8, 16 or 32

  [[nodiscard]] std::size_t size() const { return values.size(); }
  [[nodiscard]] double real(std::size_t i) const;
  [[nodiscard]] std::vector<float> to_real() const;
  /// Values inside the declared width, exponent inside [-31, 31].
  void validate() const;
};

std::int32_t max_value(int bits);

/// v * 2^-k, rounding half away from zero for k > 0; exact for k <= 0
/// (throws if the left shift would overflow).
std::int64_t shift_round(std::int64_t v, int k);

/// Narrows wide integers at `exponent` to `bits`, shifting right just enough
/// to fit (and enough to keep the exponent in range).
FixedPointTensor requantize(std::span<const std::int64_t> v, int exponent, int bits);

/// Widens a tensor's values to int64 at a target exponent.
void align_to(const FixedPointTensor& t, int exponent, std::span<std::int64_t> out);

/// Common exponent two tensors can be added at without losing the finer one
/// (bounded so 16-bit values stay well inside int64).
int common_exponent(int ea, int eb);

/// a + b, requantized to `bits`.
FixedPointTensor add(const FixedPointTensor& a, const FixedPointTensor& b, int bits);

// Conversions from real values. These run at quantization time or at the
// real-valued embedding boundary.

/// Smallest exponent at which max|x| fits in `bits`. Zero vector: exponent 0.
FixedPointTensor quantize_dynamic(std::span<const float> x, int bits);

/// Exponent = round(log2(max|w|)) - mantissa_bits, values = round(w / 2^e)
/// clamped to int8. Throws on a zero or non-finite vector.
FixedPointTensor quantize_norm_scales(std::span<const float> w, int mantissa_bits = 0);

}  // namespace mmf::fxp
