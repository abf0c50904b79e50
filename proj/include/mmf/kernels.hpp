#pragma once

// Inner-loop kernels. Each entry has a portable scalar reference and, where
// the CPU supports it, an AVX2 variant chosen once at startup. Variants must
// agree bit-for-bit with the reference (accumulation order is identical;
// no FMA contraction).
//
// Ternary code layout shared with TernaryMatrix: row-major, 2 bits per
// entry, 4 entries per byte with the first entry in the low bits, each row
// padded to a whole byte. 00 -> 0, 01 -> +1, 10 -> -1.

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace mmf::kernels {

struct TernaryView {
  const std::uint8_t* codes = nullptr;
  std::size_t rows = 0;    // input features
  std::size_t cols = 0;    // outputs
  std::size_t stride = 0;  // bytes per row
};

/// out[c] = sum_r sign(code[r][c]) * x[r]; out is overwritten.
using TernaryF32Fn = void (*)(const float* x, const TernaryView& w, float* out);
/// Integer variant; int32 accumulators.
using TernaryI16Fn = void (*)(const std::int16_t* x, const TernaryView& w, std::int32_t* out);
/// sum_i x[i]^2 in 64-bit.
using SumSquaresI16Fn = std::int64_t (*)(const std::int16_t* x, std::size_t n);
/// out[c] = sum_r x[r] * w[r * cols + c]; out is overwritten.
using DenseF32Fn = void (*)(const float* x, const float* w, std::size_t rows, std::size_t cols,
                            float* out);

enum class Backend { Auto, Scalar, Avx2 };

struct KernelTable {
  Backend backend;
  std::string_view name;
  TernaryF32Fn ternary_f32;
  TernaryI16Fn ternary_i16;
  SumSquaresI16Fn sum_squares_i16;
  DenseF32Fn dense_f32;
};

/// The active table. First use resolves Backend::Auto, honouring the
/// MMF_KERNELS environment variable ("scalar" or "avx2").
const KernelTable& active();

/// A specific table; throws mmf::Error if the backend is not built or the
/// CPU lacks the instructions.
const KernelTable& table(Backend backend);

/// Overrides the active table (tests, benchmarks).
void select(Backend backend);

std::vector<Backend> available();

// Per-backend tables, defined in their own translation units.
const KernelTable& scalar_table();
#if defined(MMF_HAVE_AVX2)
const KernelTable& avx2_table();
#endif

}  // namespace mmf::kernels
