#include <immintrin.h>

#include "mmf/kernels.hpp"

namespace mmf::kernels {
namespace {

// Lane i of the result holds the 2-bit code for column (c + i), taken from
// the 16 bits that cover 8 consecutive columns.
inline __m256i decode8(const std::uint8_t* row, std::size_t c) {
  const unsigned bits = static_cast<unsigned>(row[c >> 2]) |
                        (static_cast<unsigned>(row[(c >> 2) + 1]) << 8);
  const __m256i shifts = _mm256_setr_epi32(0, 2, 4, 6, 8, 10, 12, 14);
  const __m256i v = _mm256_srlv_epi32(_mm256_set1_epi32(static_cast<int>(bits)), shifts);
  return _mm256_and_si256(v, _mm256_set1_epi32(3));
}

inline unsigned code_at(const std::uint8_t* row, std::size_t c) {
  return (row[c >> 2] >> ((c & 3u) * 2u)) & 3u;
}

void ternary_f32(const float* x, const TernaryView& w, float* out) {
  const __m256i one = _mm256_set1_epi32(1);
  const __m256i two = _mm256_set1_epi32(2);
  std::size_t c = 0;
  for (; c + 32 <= w.cols; c += 32) {
    __m256 acc[4] = {_mm256_setzero_ps(), _mm256_setzero_ps(), _mm256_setzero_ps(),
                     _mm256_setzero_ps()};
    for (std::size_t r = 0; r < w.rows; ++r) {
      const std::uint8_t* row = w.codes + r * w.stride;
      const __m256 xv = _mm256_set1_ps(x[r]);
      for (int k = 0; k < 4; ++k) {
        const __m256i code = decode8(row, c + 8 * k);
        const __m256 plus = _mm256_castsi256_ps(_mm256_cmpeq_epi32(code, one));
        const __m256 minus = _mm256_castsi256_ps(_mm256_cmpeq_epi32(code, two));
        acc[k] = _mm256_add_ps(acc[k], _mm256_and_ps(plus, xv));
        acc[k] = _mm256_sub_ps(acc[k], _mm256_and_ps(minus, xv));
      }
    }
    for (int k = 0; k < 4; ++k) _mm256_storeu_ps(out + c + 8 * k, acc[k]);
  }
  for (; c + 8 <= w.cols; c += 8) {
    __m256 acc = _mm256_setzero_ps();
    for (std::size_t r = 0; r < w.rows; ++r) {
      const __m256i code = decode8(w.codes + r * w.stride, c);
      const __m256 xv = _mm256_set1_ps(x[r]);
      acc = _mm256_add_ps(acc, _mm256_and_ps(_mm256_castsi256_ps(_mm256_cmpeq_epi32(code, one)), xv));
      acc = _mm256_sub_ps(acc, _mm256_and_ps(_mm256_castsi256_ps(_mm256_cmpeq_epi32(code, two)), xv));
    }
    _mm256_storeu_ps(out + c, acc);
  }
  for (; c < w.cols; ++c) {
    float acc = 0.0f;
    for (std::size_t r = 0; r < w.rows; ++r) {
      const unsigned code = code_at(w.codes + r * w.stride, c);
      if (code == 1u) {
        acc += x[r];
      } else if (code == 2u) {
        acc -= x[r];
      }
    }
    out[c] = acc;
  }
}

void ternary_i16(const std::int16_t* x, const TernaryView& w, std::int32_t* out) {
  const __m256i one = _mm256_set1_epi32(1);
  const __m256i two = _mm256_set1_epi32(2);
  std::size_t c = 0;
  for (; c + 32 <= w.cols; c += 32) {
    __m256i acc[4] = {_mm256_setzero_si256(), _mm256_setzero_si256(), _mm256_setzero_si256(),
                      _mm256_setzero_si256()};
    for (std::size_t r = 0; r < w.rows; ++r) {
      const std::uint8_t* row = w.codes + r * w.stride;
      const __m256i xv = _mm256_set1_epi32(x[r]);
      for (int k = 0; k < 4; ++k) {
        const __m256i code = decode8(row, c + 8 * k);
        acc[k] = _mm256_add_epi32(acc[k], _mm256_and_si256(_mm256_cmpeq_epi32(code, one), xv));
        acc[k] = _mm256_sub_epi32(acc[k], _mm256_and_si256(_mm256_cmpeq_epi32(code, two), xv));
      }
    }
    for (int k = 0; k < 4; ++k) {
      _mm256_storeu_si256(reinterpret_cast<__m256i*>(out + c + 8 * k), acc[k]);
    }
  }
  for (; c + 8 <= w.cols; c += 8) {
    __m256i acc = _mm256_setzero_si256();
    for (std::size_t r = 0; r < w.rows; ++r) {
      const __m256i code = decode8(w.codes + r * w.stride, c);
      const __m256i xv = _mm256_set1_epi32(x[r]);
      acc = _mm256_add_epi32(acc, _mm256_and_si256(_mm256_cmpeq_epi32(code, one), xv));
      acc = _mm256_sub_epi32(acc, _mm256_and_si256(_mm256_cmpeq_epi32(code, two), xv));
    }
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(out + c), acc);
  }
  for (; c < w.cols; ++c) {
    std::int32_t acc = 0;
    for (std::size_t r = 0; r < w.rows; ++r) {
      const unsigned code = code_at(w.codes + r * w.stride, c);
      if (code == 1u) {
        acc += x[r];
      } else if (code == 2u) {
        acc -= x[r];
      }
    }
    out[c] = acc;
  }
}

std::int64_t sum_squares_i16(const std::int16_t* x, std::size_t n) {
  __m256i acc = _mm256_setzero_si256();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m256i v = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(x + i));
    // Pairwise sums of squares are <= 2^31, so they fit when read as uint32.
    const __m256i sq = _mm256_madd_epi16(v, v);
    acc = _mm256_add_epi64(acc, _mm256_cvtepu32_epi64(_mm256_castsi256_si128(sq)));
    acc = _mm256_add_epi64(acc, _mm256_cvtepu32_epi64(_mm256_extracti128_si256(sq, 1)));
  }
  alignas(32) std::int64_t lanes[4];
  _mm256_store_si256(reinterpret_cast<__m256i*>(lanes), acc);
  std::int64_t total = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  for (; i < n; ++i) total += static_cast<std::int64_t>(x[i]) * x[i];
  return total;
}

void dense_f32(const float* x, const float* w, std::size_t rows, std::size_t cols, float* out) {
  std::size_t c = 0;
  for (; c + 32 <= cols; c += 32) {
    __m256 acc[4] = {_mm256_setzero_ps(), _mm256_setzero_ps(), _mm256_setzero_ps(),
                     _mm256_setzero_ps()};
    for (std::size_t r = 0; r < rows; ++r) {
      const __m256 xv = _mm256_set1_ps(x[r]);
      const float* wr = w + r * cols + c;
      for (int k = 0; k < 4; ++k) {
        acc[k] = _mm256_add_ps(acc[k], _mm256_mul_ps(xv, _mm256_loadu_ps(wr + 8 * k)));
      }
    }
    for (int k = 0; k < 4; ++k) _mm256_storeu_ps(out + c + 8 * k, acc[k]);
  }
  for (; c + 8 <= cols; c += 8) {
    __m256 acc = _mm256_setzero_ps();
    for (std::size_t r = 0; r < rows; ++r) {
      acc = _mm256_add_ps(acc, _mm256_mul_ps(_mm256_set1_ps(x[r]), _mm256_loadu_ps(w + r * cols + c)));
    }
    _mm256_storeu_ps(out + c, acc);
  }
  for (; c < cols; ++c) {
    float acc = 0.0f;
    for (std::size_t r = 0; r < rows; ++r) acc += x[r] * w[r * cols + c];
    out[c] = acc;
  }
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable t{Backend::Avx2, "avx2", ternary_f32, ternary_i16, sum_squares_i16,
                             dense_f32};
  return t;
}

}  // namespace mmf::kernels
