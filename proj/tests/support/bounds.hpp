#pragma once

// Error bounds of the fixed-point approximations, measured once against a
// double-precision oracle over the sweeps in test_fxp and kept as
// regression limits (measured value rounded up).
//
//   sigmoid_fxp, every int16 input:           max |err| = 0.011644 at x = 95
//   inv_sqrt_fxp, 16-bit mantissas, 2^-16..2^16: max rel  = 2.008e-9

namespace bounds {

inline constexpr double kSigmoidAbs = 0.0117;
inline constexpr double kInvSqrtRel = 2.1e-9;

}  // namespace bounds
