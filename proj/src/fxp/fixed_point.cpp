#include "mmf/fxp/fixed_point.hpp"

#include <algorithm>
#include <bit>
#include <string>

#include "mmf/error.hpp"

namespace mmf::fxp {
namespace {

std::uint64_t magnitude(std::int64_t v) {
  return v < 0 ? std::uint64_t{0} - static_cast<std::uint64_t>(v) : static_cast<std::uint64_t>(v);
}

}  // namespace

std::int32_t max_value(int bits) {
  if (bits < 2 || bits > 32) throw Error("fixed point: unsupported width " + std::to_string(bits));
  return static_cast<std::int32_t>((std::int64_t{1} << (bits - 1)) - 1);
}

void FixedPointTensor::validate() const {
  const std::int64_t hi = max_value(bits);
  if (exponent < kMinExponent || exponent > kMaxExponent) throw Error("fixed point: exponent out of range");
  for (std::int32_t v : values) {
    if (v > hi || v < -hi - 1) throw Error("fixed point: value exceeds declared width");
  }
}

std::int64_t shift_round(std::int64_t v, int k) {
  if (k <= 0) {
    if (v == 0 || k == 0) return v;
    if (k < -62 || std::bit_width(magnitude(v)) - k > 62) throw Error("fixed point: left shift overflow");
    return v * (std::int64_t{1} << -k);
  }
  if (k > 62) return 0;
  const std::int64_t half = std::int64_t{1} << (k - 1);
  return v >= 0 ? (v + half) >> k : -((-v + half) >> k);
}

FixedPointTensor requantize(std::span<const std::int64_t> v, int exponent, int bits) {
  const std::int64_t hi = max_value(bits);
  std::uint64_t m = 0;
  for (std::int64_t x : v) m = std::max(m, magnitude(x));
  int k = std::max(0, static_cast<int>(std::bit_width(m)) - (bits - 1));
  if (shift_round(static_cast<std::int64_t>(m), k) > hi) ++k;
  if (exponent + k < kMinExponent) k = kMinExponent - exponent;
  if (exponent + k > kMaxExponent) throw Error("fixed point: value overflow during requantization");
  FixedPointTensor out;
  out.bits = bits;
  out.exponent = exponent + k;
  out.values.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out.values[i] = static_cast<std::int32_t>(shift_round(v[i], k));
  return out;
}

void align_to(const FixedPointTensor& t, int exponent, std::span<std::int64_t> out) {
  if (out.size() != t.size()) throw Error("fixed point: size mismatch");
  const int k = exponent - t.exponent;
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = shift_round(t.values[i], k);
}

int common_exponent(int ea, int eb) {
  return std::max(std::min(ea, eb), std::max(ea, eb) - 30);
}

FixedPointTensor add(const FixedPointTensor& a, const FixedPointTensor& b, int bits) {
  if (a.size() != b.size()) throw Error("fixed point add: size mismatch");
  const int e = common_exponent(a.exponent, b.exponent);
  std::vector<std::int64_t> va(a.size()), vb(b.size());
  align_to(a, e, va);
  align_to(b, e, vb);
  for (std::size_t i = 0; i < va.size(); ++i) va[i] += vb[i];
  return requantize(va, e, bits);
}

}  // namespace mmf::fxp
