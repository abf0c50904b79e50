#pragma once

// Fixed-point RMSNorm in the sum form x / sqrt(eps + sum x^2) * w (no mean
// subtraction), plus the real-valued fusion of two stacked RMSNorms.

#include <span>
#include <vector>

#include "mmf/fxp/fixed_point.hpp"

namespace mmf::fxp {

inline constexpr double kFxpRmsEps = 1e-3;

/// An empty gain tensor means unit gain. Sum of squares is accumulated in
/// 64 bits; eps is brought to the exponent of sum x^2 by a shift.
FixedPointTensor rmsnorm_fxp(const FixedPointTensor& x, const FixedPointTensor& w, double eps = kFxpRmsEps,
                             int out_bits = 16);

struct DoubleNormParams {
  std::vector<double> gain;
  std::vector<double> eps;
};

/// g = g1 g2 / sqrt(g1^2 + eps), eps' = eps^2 / (g1^2 + eps), per channel.
/// Exact for scalar gains; an approximation when g1 varies by channel.
DoubleNormParams double_rmsnorm_params(std::span<const double> g1, std::span<const double> g2, double eps);

/// Mean-form reference: x * g / sqrt(mean(x^2) + eps).
std::vector<double> rmsnorm_mean(std::span<const double> x, std::span<const double> g, double eps);

/// x_i * gain_i / sqrt(mean(x^2) + eps_i).
std::vector<double> double_rmsnorm_apply(std::span<const double> x, const DoubleNormParams& p);

}  // namespace mmf::fxp
