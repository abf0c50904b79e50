#include "mmf/kernels.hpp"

namespace mmf::kernels {
namespace {

void ternary_f32(const float* x, const TernaryView& w, float* out) {
  for (std::size_t c = 0; c < w.cols; ++c) out[c] = 0.0f;
  for (std::size_t r = 0; r < w.rows; ++r) {
    const std::uint8_t* row = w.codes + r * w.stride;
    const float xv = x[r];
    for (std::size_t c = 0; c < w.cols; ++c) {
      const unsigned code = (row[c >> 2] >> ((c & 3u) * 2u)) & 3u;
      if (code == 1u) {
        out[c] += xv;
      } else if (code == 2u) {
        out[c] -= xv;
      }
    }
  }
}

void ternary_i16(const std::int16_t* x, const TernaryView& w, std::int32_t* out) {
  for (std::size_t c = 0; c < w.cols; ++c) out[c] = 0;
  for (std::size_t r = 0; r < w.rows; ++r) {
    const std::uint8_t* row = w.codes + r * w.stride;
    const std::int32_t xv = x[r];
    for (std::size_t c = 0; c < w.cols; ++c) {
      const unsigned code = (row[c >> 2] >> ((c & 3u) * 2u)) & 3u;
      if (code == 1u) {
        out[c] += xv;
      } else if (code == 2u) {
        out[c] -= xv;
      }
    }
  }
}

std::int64_t sum_squares_i16(const std::int16_t* x, std::size_t n) {
  std::int64_t acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += static_cast<std::int64_t>(x[i]) * x[i];
  }
  return acc;
}

void dense_f32(const float* x, const float* w, std::size_t rows, std::size_t cols, float* out) {
  for (std::size_t c = 0; c < cols; ++c) out[c] = 0.0f;
  for (std::size_t r = 0; r < rows; ++r) {
    const float xv = x[r];
    const float* wr = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      out[c] += xv * wr[c];
    }
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable t{Backend::Scalar, "scalar", ternary_f32, ternary_i16, sum_squares_i16,
                             dense_f32};
  return t;
}

}  // namespace mmf::kernels
