#include "mmf/quant.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mmf/error.hpp"

namespace mmf {

float round_half_away(float v) { return std::round(v); }
double round_half_away(double v) { return std::round(v); }

TernaryMatrix::TernaryMatrix(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> packed, float scale)
    : rows_(rows), cols_(cols), stride_(row_stride(cols)), packed_(std::move(packed)), scale_(scale) {
  if (!(scale_ > 0.0f) || !std::isfinite(scale_)) {
    throw Error("ternary matrix scale must be positive and finite");
  }
}

TernaryMatrix TernaryMatrix::from_values(std::size_t rows, std::size_t cols, std::span<const std::int8_t> values,
                                         float scale) {
  if (values.size() != rows * cols) throw Error("ternary matrix: value count does not match shape");
  const std::size_t stride = row_stride(cols);
  std::vector<std::uint8_t> packed(rows * stride, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::int8_t v = values[r * cols + c];
      std::uint8_t code = 0;
      if (v == 1) {
        code = static_cast<std::uint8_t>(TernaryCode::Plus);
      } else if (v == -1) {
        code = static_cast<std::uint8_t>(TernaryCode::Minus);
      } else if (v != 0) {
        throw Error("ternary matrix: value " + std::to_string(v) + " is not in {-1,0,1}");
      }
      packed[r * stride + c / 4] |= static_cast<std::uint8_t>(code << ((c % 4) * 2));
    }
  }
  return TernaryMatrix(rows, cols, std::move(packed), scale);
}

TernaryMatrix TernaryMatrix::from_packed(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> packed,
                                         float scale) {
  const std::size_t stride = row_stride(cols);
  if (packed.size() != rows * stride) throw Error("ternary matrix: packed size does not match shape");
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t b = 0; b < stride; ++b) {
      const std::uint8_t byte = packed[r * stride + b];
      for (std::size_t k = 0; k < 4; ++k) {
        const unsigned code = (byte >> (k * 2)) & 3u;
        const std::size_t c = b * 4 + k;
        if (c >= cols ? code != 0 : code == 3u) {
          throw Error("ternary matrix: invalid code in packed stream");
        }
      }
    }
  }
  return TernaryMatrix(rows, cols, std::move(packed), scale);
}

TernaryMatrix TernaryMatrix::identity(std::size_t n, float scale) {
  std::vector<std::int8_t> v(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1;
  return from_values(n, n, v, scale);
}

std::int8_t TernaryMatrix::at(std::size_t r, std::size_t c) const {
  const unsigned code = (packed_[r * stride_ + c / 4] >> ((c % 4) * 2)) & 3u;
  return code == 1u ? 1 : (code == 2u ? -1 : 0);
}

std::vector<std::int8_t> TernaryMatrix::unpack() const {
  std::vector<std::int8_t> out(rows_ * cols_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) out[r * cols_ + c] = at(r, c);
  }
  return out;
}

Matrix TernaryMatrix::dequantize() const {
  Matrix m(rows_, cols_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) m(r, c) = static_cast<float>(at(r, c)) * scale_;
  }
  return m;
}

std::vector<float> QuantizedActivation::dequantize() const {
  std::vector<float> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = static_cast<float>(values[i]) / scale;
  return out;
}

TernaryMatrix weight_quant(const Matrix& w) {
  if (w.empty()) throw Error("weight_quant: empty matrix");
  double abs_sum = 0.0;
  for (float v : w.data) {
    if (!std::isfinite(v)) throw Error("weight_quant: non-finite weight");
    abs_sum += std::fabs(v);
  }
  const double mean_abs = abs_sum / static_cast<double>(w.size());
  if (!(mean_abs > 0.0)) throw Error("weight_quant: degenerate weight matrix");
  const double s = 1.0 / mean_abs;
  std::vector<std::int8_t> codes(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    codes[i] = static_cast<std::int8_t>(std::clamp(round_half_away(s * w.data[i]), -1.0, 1.0));
  }
  return TernaryMatrix::from_values(w.rows, w.cols, codes, static_cast<float>(mean_abs));
}

QuantizedActivation activation_quant(std::span<const float> x) {
  QuantizedActivation q;
  q.values.assign(x.size(), 0);
  float max_abs = 0.0f;
  for (float v : x) {
    if (!std::isfinite(v)) throw Error("activation_quant: non-finite input");
    max_abs = std::max(max_abs, std::fabs(v));
  }
  if (max_abs == 0.0f) {
    q.scale = 1.0f;
    return q;
  }
  q.scale = 127.0f / max_abs;
  for (std::size_t i = 0; i < x.size(); ++i) {
    q.values[i] = static_cast<std::int8_t>(std::clamp(round_half_away(q.scale * x[i]), -128.0f, 127.0f));
  }
  return q;
}

void ternary_matvec(std::span<const float> x, const TernaryMatrix& w, std::span<float> out) {
  if (x.size() != w.rows() || out.size() != w.cols()) {
    throw Error("ternary_matvec: dimension mismatch (x " + std::to_string(x.size()) + ", W " +
                std::to_string(w.rows()) + "x" + std::to_string(w.cols()) + ", out " +
                std::to_string(out.size()) + ")");
  }
  kernels::active().ternary_f32(x.data(), w.view(), out.data());
  const float scale = w.scale();
  for (float& v : out) v *= scale;
}

std::vector<float> ternary_matvec(std::span<const float> x, const TernaryMatrix& w) {
  std::vector<float> out(w.cols());
  ternary_matvec(x, w, out);
  return out;
}

double zero_fraction(const TernaryMatrix& w) {
  const std::size_t total = w.rows() * w.cols();
  if (total == 0) return 0.0;
  std::size_t zeros = 0;
  for (std::size_t r = 0; r < w.rows(); ++r) {
    for (std::size_t c = 0; c < w.cols(); ++c) zeros += w.at(r, c) == 0 ? 1 : 0;
  }
  return static_cast<double>(zeros) / static_cast<double>(total);
}

}  // namespace mmf
