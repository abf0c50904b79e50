#pragma once

// RMSNorm with a learned per-channel gain, used in front of each mixer and
// before the unembedding: y = x / sqrt(mean(x^2) + eps) * w.

#include <span>
#include <vector>

#include "mmf/tensor.hpp"

namespace mmf {

inline constexpr float kRmsNormEps = 1e-6f;

void rms_norm_row(std::span<const float> x, std::span<const float> gain, float eps, std::span<float> out);

struct GainNormOutput {
  Matrix y;
  std::vector<float> inv_rms;  // per row
};

GainNormOutput rms_norm_gain_fwd(const Matrix& x, std::span<const float> gain, float eps = kRmsNormEps);

struct GainNormBackward {
  Matrix dx;
  std::vector<float> dgain;
};

GainNormBackward rms_norm_gain_bwd(const Matrix& dy, const Matrix& x, std::span<const float> gain,
                                   std::span<const float> inv_rms);

}  // namespace mmf
