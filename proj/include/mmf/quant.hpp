#pragma once

// Ternary weights, absmax activation quantization and the accumulation-only
// product that stands in for a dense matmul.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mmf/kernels.hpp"
#include "mmf/tensor.hpp"

namespace mmf {

/// Round half away from zero; the rounding used by every quantizer here.
float round_half_away(float v);
double round_half_away(double v);

enum class TernaryCode : std::uint8_t { Zero = 0b00, Plus = 0b01, Minus = 0b10 };

/// Packed {-1, 0, +1} matrix with one positive dequantization scale.
/// Shape is (rows = input features) x (cols = outputs). Immutable once built.
class TernaryMatrix {
 public:
  TernaryMatrix() = default;

  /// From signed values in {-1, 0, 1}; anything else throws.
  static TernaryMatrix from_values(std::size_t rows, std::size_t cols, std::span<const std::int8_t> values,
                                   float scale);
  /// From an already packed code stream (checkpoint loading). Rejects the
  /// reserved code 11 and non-zero padding bits.
  static TernaryMatrix from_packed(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> packed,
                                   float scale);
  static TernaryMatrix identity(std::size_t n, float scale = 1.0f);

  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t cols() const { return cols_; }
  [[nodiscard]] float scale() const { return scale_; }
  [[nodiscard]] std::size_t stride() const { return stride_; }
  [[nodiscard]] const std::vector<std::uint8_t>& packed() const { return packed_; }

  [[nodiscard]] std::int8_t at(std::size_t r, std::size_t c) const;
  [[nodiscard]] std::vector<std::int8_t> unpack() const;
  /// codes * scale as a dense matrix.
  [[nodiscard]] Matrix dequantize() const;
  [[nodiscard]] kernels::TernaryView view() const { return {packed_.data(), rows_, cols_, stride_}; }

  static std::size_t row_stride(std::size_t cols) { return (cols + 3) / 4; }

 private:
  TernaryMatrix(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> packed, float scale);

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t stride_ = 0;
  std::vector<std::uint8_t> packed_;
  float scale_ = 1.0f;
};

/// int8 absmax quantization of one vector; real value = values[i] / scale.
struct QuantizedActivation {
  std::vector<std::int8_t> values;
  float scale = 1.0f;

  [[nodiscard]] std::vector<float> dequantize() const;
};

/// codes = clamp(round(W / mean|W|), -1, 1), scale = mean|W|.
/// Throws on an all-zero or non-finite matrix.
TernaryMatrix weight_quant(const Matrix& w);

/// s = 127 / max|x|, values = clamp(round(s x), -128, 127). An all-zero
/// vector yields zeros with scale 1.
QuantizedActivation activation_quant(std::span<const float> x);

/// out = scale * (sum_{code=+1} x - sum_{code=-1} x). Only additions in the
/// accumulation; the scale is applied once per output.
void ternary_matvec(std::span<const float> x, const TernaryMatrix& w, std::span<float> out);
std::vector<float> ternary_matvec(std::span<const float> x, const TernaryMatrix& w);

/// Fraction of zero codes.
double zero_fraction(const TernaryMatrix& w);

}  // namespace mmf
