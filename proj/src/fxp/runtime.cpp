#include "mmf/fxp/runtime.hpp"

#include <algorithm>
#include <bit>

#include "mmf/error.hpp"
#include "mmf/fxp/rmsnorm.hpp"
#include "mmf/fxp/sigmoid.hpp"
#include "mmf/kernels.hpp"

// Everything in this file runs per token; it uses integer multiplies, adds
// and shifts only.

namespace mmf::fxp {
namespace {

struct LinearInput {
  std::vector<std::int16_t> values;
  int exponent = 0;
};

// Centre, normalize and narrow one activation vector for the ternary
// accumulate. Shared by all projections reading the same input.
LinearInput prepare(const FixedPointTensor& x, std::int64_t mean_recip, int bits) {
  std::int64_t sum = 0;
  for (std::int32_t v : x.values) sum += v;
  const std::int64_t mean = shift_round(sum * mean_recip, 32);
  std::vector<std::int64_t> centred(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) centred[i] = x.values[i] - mean;
  const FixedPointTensor c = requantize(centred, x.exponent, bits);
  const FixedPointTensor n = rmsnorm_fxp(c, FixedPointTensor{}, kFxpRmsEps, bits);
  LinearInput in;
  in.exponent = n.exponent;
  in.values.assign(n.values.begin(), n.values.end());
  return in;
}

FixedPointTensor apply(const FxpLinear& lin, const LinearInput& in, int bits) {
  const std::size_t m = lin.weight.cols();
  std::vector<std::int32_t> acc(m);
  kernels::active().ternary_i16(in.values.data(), lin.weight.view(), acc.data());

  const int e_out = in.exponent + lin.scale.exponent;
  const int e_bias = lin.bias.exponent;
  const int e = std::max(std::min(e_out, e_bias), std::max(e_out, e_bias) - 20);
  const std::int64_t s = lin.scale.values[0];
  std::vector<std::int64_t> out(m);
  for (std::size_t j = 0; j < m; ++j) {
    out[j] = shift_round(acc[j] * s, e - e_out) + shift_round(lin.bias.values[j], e - e_bias);
  }
  return requantize(out, e, bits);
}

// To the sigmoid's input grid (exponent -6), saturating far outside it.
std::int32_t to_sigmoid_input(std::int32_t v, int exponent) {
  const int k = -kSigmoidInputExp - exponent;
  constexpr std::int64_t kSat = std::int64_t{1} << 20;
  if (k < 0 && v != 0 && static_cast<int>(std::bit_width(static_cast<std::uint32_t>(v < 0 ? -v : v))) - k > 20) {
    return static_cast<std::int32_t>(v < 0 ? -kSat : kSat);
  }
  return static_cast<std::int32_t>(std::clamp(shift_round(v, k), -kSat, kSat));
}

std::int32_t sigmoid_of(const FixedPointTensor& t, std::size_t i) {
  return sigmoid_fxp(to_sigmoid_input(t.values[i], t.exponent));
}

FixedPointTensor silu(const FixedPointTensor& p, int bits) {
  std::vector<std::int64_t> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = static_cast<std::int64_t>(p.values[i]) * sigmoid_of(p, i);
  return requantize(out, p.exponent - kSigmoidOutputExp, bits);
}

FixedPointTensor multiply(const FixedPointTensor& a, const FixedPointTensor& b, int bits) {
  std::vector<std::int64_t> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = static_cast<std::int64_t>(a.values[i]) * b.values[i];
  return requantize(out, a.exponent + b.exponent, bits);
}

FixedPointTensor mixer_step(const FxpMixer& mx, const FixedPointTensor& a, FixedPointTensor& h, int bits) {
  const LinearInput in = prepare(a, mx.f.mean_recip, bits);
  const FixedPointTensor pf = apply(mx.f, in, bits);
  const FixedPointTensor pc = apply(mx.c, in, bits);
  const FixedPointTensor g = apply(mx.g, in, bits);
  const FixedPointTensor c = silu(pc, bits);

  const int e = common_exponent(h.exponent, c.exponent);
  std::vector<std::int64_t> hw(h.size()), cw(c.size());
  align_to(h, e, hw);
  align_to(c, e, cw);
  const std::int64_t one = kSigmoidOne;
  for (std::size_t i = 0; i < hw.size(); ++i) {
    const std::int64_t f = mx.floor_q15 + shift_round((one - mx.floor_q15) * sigmoid_of(pf, i), kSigmoidOutputExp);
    hw[i] = f * hw[i] + (one - f) * cw[i];
  }
  h = requantize(hw, e - kSigmoidOutputExp, bits);

  std::vector<std::int64_t> gated(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) gated[i] = static_cast<std::int64_t>(g.values[i]) * sigmoid_of(h, i);
  const FixedPointTensor o_prime = requantize(gated, g.exponent - kSigmoidOutputExp, bits);
  return apply(mx.o, prepare(o_prime, mx.o.mean_recip, bits), bits);
}

FixedPointTensor channel_step(const FxpChannel& ch, const FixedPointTensor& b, int bits) {
  const LinearInput in = prepare(b, ch.g.mean_recip, bits);
  const FixedPointTensor g = apply(ch.g, in, bits);
  const FixedPointTensor u = apply(ch.u, in, bits);
  const FixedPointTensor p = multiply(silu(g, bits), u, bits);
  return apply(ch.d, prepare(p, ch.d.mean_recip, bits), bits);
}

}  // namespace

FxpSession::FxpSession(const QuantizedModel& model) : model_(&model) {
  FixedPointTensor zero;
  zero.bits = model.act_bits();
  zero.values.assign(model.config.width, 0);
  h_.assign(model.blocks.size(), zero);
}

std::vector<float> FxpSession::step(std::int32_t token) {
  const QuantizedModel& m = *model_;
  if (token < 0 || static_cast<std::uint32_t>(token) >= m.config.vocab) throw Error("token id outside vocabulary");
  const int bits = m.act_bits();
  FixedPointTensor x = quantize_dynamic(m.embed.row(static_cast<std::size_t>(token)), bits);
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    const FxpBlock& b = m.blocks[i];
    x = add(x, mixer_step(b.mixer, rmsnorm_fxp(x, b.norm1, kFxpRmsEps, bits), h_[i], bits), bits);
    x = add(x, channel_step(b.channel, rmsnorm_fxp(x, b.norm2, kFxpRmsEps, bits), bits), bits);
  }
  const std::vector<float> z = rmsnorm_fxp(x, m.final_norm, kFxpRmsEps, bits).to_real();
  std::vector<float> logits(m.config.vocab);
  kernels::active().dense_f32(z.data(), m.unembed.data.data(), m.unembed.rows, m.unembed.cols, logits.data());
  return logits;
}

std::size_t FxpSession::state_bytes() const {
  std::size_t n = 0;
  for (const FixedPointTensor& h : h_) n += h.size() * sizeof(std::int32_t);
  return n;
}

Matrix run_fxp(const QuantizedModel& model, std::span<const std::int32_t> ids) {
  FxpSession session(model);
  Matrix logits(ids.size(), model.config.vocab);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const std::vector<float> row = session.step(ids[t]);
    std::copy(row.begin(), row.end(), logits.row(t).begin());
  }
  return logits;
}

std::vector<std::int32_t> generate_fxp(const QuantizedModel& model, std::span<const std::int32_t> prompt,
                                       std::size_t n) {
  FxpSession session(model);
  std::vector<std::int32_t> out;
  if (n == 0) return out;
  std::vector<float> logits;
  if (prompt.empty()) {
    logits = session.step(kBosToken < static_cast<std::int32_t>(model.config.vocab) ? kBosToken : 0);
  }
  for (std::int32_t id : prompt) logits = session.step(id);
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(argmax(logits));
    if (i + 1 < n) logits = session.step(out.back());
  }
  return out;
}

}  // namespace mmf::fxp
