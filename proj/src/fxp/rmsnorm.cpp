#include "mmf/fxp/rmsnorm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "mmf/error.hpp"
#include "mmf/fxp/inv_sqrt.hpp"
#include "mmf/kernels.hpp"

namespace mmf::fxp {
namespace {

std::int64_t sum_squares(const FixedPointTensor& x) {
  if (x.bits <= 16) {
    std::vector<std::int16_t> narrow(x.values.begin(), x.values.end());
    return kernels::active().sum_squares_i16(narrow.data(), narrow.size());
  }
  std::int64_t acc = 0;
  for (std::int32_t v : x.values) {
    const std::int64_t sq = static_cast<std::int64_t>(v) * v;
    if (__builtin_add_overflow(acc, sq, &acc)) throw Error("rmsnorm_fxp: sum of squares overflows 64 bits");
  }
  return acc;
}

}  // namespace

FixedPointTensor rmsnorm_fxp(const FixedPointTensor& x, const FixedPointTensor& w, double eps, int out_bits) {
  if (x.values.empty()) throw Error("rmsnorm_fxp: empty input");
  if (!w.values.empty() && w.size() != x.size()) throw Error("rmsnorm_fxp: gain length mismatch");
  if (!(eps >= 0.0)) throw Error("rmsnorm_fxp: eps must be non-negative");

  // Sum of squares at exponent 2e, then widened toward 60 bits so eps keeps
  // its precision when x is small.
  int e2 = 2 * x.exponent;
  std::int64_t total = sum_squares(x);
  const double eps_q = std::ldexp(eps, -e2);
  if (eps_q >= 0x1p60) throw Error("rmsnorm_fxp: eps too large for the input exponent");
  const auto rough = static_cast<std::uint64_t>(total) + static_cast<std::uint64_t>(eps_q) + 1;
  const int s = std::max(0, 60 - static_cast<int>(std::bit_width(rough)));
  if (__builtin_add_overflow(shift_round(total, -s), std::llround(std::ldexp(eps, s - e2)), &total)) {
    throw Error("rmsnorm_fxp: sum of squares overflows 64 bits");
  }
  e2 -= s;
  FixedPointTensor out;
  out.bits = out_bits;
  out.values.assign(x.size(), 0);
  if (total == 0) return out;

  const FixedScalar inv = inv_sqrt_fxp(total, e2);
  std::vector<std::int64_t> acc(x.size());
  std::uint64_t peak = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc[i] = static_cast<std::int64_t>(x.values[i]) * inv.value;
    peak = std::max<std::uint64_t>(peak, static_cast<std::uint64_t>(acc[i] < 0 ? -acc[i] : acc[i]));
  }
  int exponent = x.exponent + inv.exponent;
  if (!w.values.empty()) {
    const int s = std::max(0, static_cast<int>(std::bit_width(peak)) - 54);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = shift_round(acc[i], s) * w.values[i];
    exponent += s + w.exponent;
  }
  return requantize(acc, exponent, out_bits);
}

}  // namespace mmf::fxp
