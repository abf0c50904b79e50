#include <algorithm>
#include <cmath>

#include "mmf/error.hpp"
#include "mmf/fxp/fixed_point.hpp"
#include "mmf/fxp/inv_sqrt.hpp"

namespace mmf::fxp {

double FixedPointTensor::real(std::size_t i) const { return std::ldexp(static_cast<double>(values.at(i)), exponent); }

std::vector<float> FixedPointTensor::to_real() const {
  std::vector<float> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = static_cast<float>(real(i));
  return out;
}

double FixedScalar::real() const { return std::ldexp(static_cast<double>(value), exponent); }

FixedPointTensor quantize_dynamic(std::span<const float> x, int bits) {
  const std::int32_t hi = max_value(bits);
  double m = 0.0;
  for (float v : x) {
    if (!std::isfinite(v)) throw Error("fixed point: non-finite value");
    m = std::max(m, std::fabs(static_cast<double>(v)));
  }
  FixedPointTensor out;
  out.bits = bits;
  out.values.assign(x.size(), 0);
  if (m == 0.0) return out;
  int e = static_cast<int>(std::ceil(std::log2(m / hi)));
  while (std::round(std::ldexp(m, -e)) > hi) ++e;
  while (e > kMinExponent && std::round(std::ldexp(m, -(e - 1))) <= hi) --e;
  e = std::clamp(e, kMinExponent, kMaxExponent);
  out.exponent = e;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double q = std::round(std::ldexp(static_cast<double>(x[i]), -e));
    out.values[i] = static_cast<std::int32_t>(std::clamp<double>(q, -hi - 1.0, hi));
  }
  return out;
}

FixedPointTensor quantize_norm_scales(std::span<const float> w, int mantissa_bits) {
  if (w.empty()) throw Error("quantize_norm_scales: empty vector");
  double m = 0.0;
  for (float v : w) {
    if (!std::isfinite(v)) throw Error("quantize_norm_scales: non-finite value");
    m = std::max(m, std::fabs(static_cast<double>(v)));
  }
  if (m == 0.0) throw Error("quantize_norm_scales: zero vector");
  const int e = static_cast<int>(std::round(std::log2(m))) - mantissa_bits;
  if (e < kMinExponent || e > kMaxExponent) throw Error("quantize_norm_scales: scale out of range");
  FixedPointTensor out;
  out.bits = 8;
  out.exponent = e;
  out.values.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double q = std::round(std::ldexp(static_cast<double>(w[i]), -e));
    out.values[i] = static_cast<std::int32_t>(std::clamp(q, -128.0, 127.0));
  }
  return out;
}

}  // namespace mmf::fxp
