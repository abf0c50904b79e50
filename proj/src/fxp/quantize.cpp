// Model -> fixed-point conversion, quantized checkpoints and the float vs
// fixed-point comparison. Runs once per model, so real arithmetic is fine.

#include <cmath>
#include <string>

#include "mmf/error.hpp"
#include "mmf/fxp/runtime.hpp"
#include "mmf/fxp/sigmoid.hpp"

namespace mmf::fxp {
namespace {

constexpr int kGainMantissaBits = 6;

std::int64_t mean_reciprocal(std::size_t n) {
  return std::llround(std::ldexp(1.0, 32) / static_cast<double>(n));
}

FixedPointTensor scaled_gain(std::span<const float> w, std::size_t d) {
  // The float model normalizes by the mean of squares, the integer path by
  // the sum, so the gain absorbs sqrt(d).
  std::vector<float> g(w.begin(), w.end());
  const float root = std::sqrt(static_cast<float>(d));
  for (float& v : g) v *= root;
  return quantize_norm_scales(g, kGainMantissaBits);
}

TensorKind kind_for(int bits) {
  switch (bits) {
    case 8:
      return TensorKind::Int8;
    case 16:
      return TensorKind::Int16;
    case 32:
      return TensorKind::Int32;
    default:
      throw Error("fixed point: no checkpoint kind for width " + std::to_string(bits));
  }
}

int bits_for(TensorKind kind) {
  switch (kind) {
    case TensorKind::Int8:
      return 8;
    case TensorKind::Int16:
      return 16;
    case TensorKind::Int32:
      return 32;
    default:
      throw Error("fixed point: tensor is not an integer kind");
  }
}

void put_fixed(Checkpoint& ck, const std::string& name, const FixedPointTensor& t) {
  t.validate();
  ck.add(TensorRecord::integers(name, kind_for(t.bits), {t.size()}, t.values));
  const std::int32_t e[1] = {t.exponent};
  ck.add(TensorRecord::integers(name + ".exponent", TensorKind::Int32, {1}, e));
}

FixedPointTensor get_fixed(const Checkpoint& ck, const std::string& name, std::size_t n) {
  const TensorRecord& r = ck.find(name);
  if (r.shape.size() != 1 || r.shape[0] != n) throw Error("checkpoint: tensor " + name + " has the wrong shape");
  FixedPointTensor t;
  t.bits = bits_for(r.kind);
  t.values = r.as_integers();
  const std::vector<std::int32_t> e = ck.find(name + ".exponent").as_integers();
  if (e.size() != 1) throw Error("checkpoint: bad exponent record for " + name);
  t.exponent = e[0];
  t.validate();
  return t;
}

void put_linear(Checkpoint& ck, const std::string& name, const FxpLinear& lin) {
  ck.add(TensorRecord::ternary(name + ".weight", lin.weight));
  put_fixed(ck, name + ".scale", lin.scale);
  put_fixed(ck, name + ".bias", lin.bias);
}

FxpLinear get_linear(const Checkpoint& ck, const std::string& name, std::size_t in, std::size_t out) {
  FxpLinear lin;
  lin.weight = ck.find(name + ".weight").as_ternary();
  if (lin.weight.rows() != in || lin.weight.cols() != out) throw Error("checkpoint: " + name + " has the wrong shape");
  lin.scale = get_fixed(ck, name + ".scale", 1);
  lin.bias = get_fixed(ck, name + ".bias", out);
  lin.mean_recip = mean_reciprocal(in);
  return lin;
}

Matrix get_matrix(const Checkpoint& ck, const std::string& name, std::size_t rows, std::size_t cols) {
  const TensorRecord& r = ck.find(name);
  if (r.kind != TensorKind::Real32 || r.shape != std::vector<std::uint64_t>{rows, cols}) {
    throw Error("checkpoint: tensor " + name + " has the wrong kind or shape");
  }
  Matrix m(rows, cols);
  m.data = r.as_real32();
  return m;
}

double cosine(std::span<const float> a, std::span<const float> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (aa == 0.0 && bb == 0.0) return 1.0;
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

}  // namespace

int activation_bits(Precision p) { return p == Precision::W8A16 ? 16 : 8; }

const char* precision_name(Precision p) { return p == Precision::W8A16 ? "w8a16" : "w8a8"; }

Precision parse_precision(std::string_view name) {
  if (name == "w8a16" || name == "W8A16") return Precision::W8A16;
  if (name == "w8a8" || name == "W8A8") return Precision::W8A8;
  throw Error("unknown quantization mode: " + std::string(name));
}

FxpLinear quantize_linear(const BitLinearLayer& layer, int act_bits) {
  FxpLinear lin;
  lin.weight = layer.ternary();
  const float s[1] = {layer.ternary().scale() * std::sqrt(static_cast<float>(layer.in_features()))};
  lin.scale = quantize_norm_scales(s, kGainMantissaBits);
  lin.bias = quantize_dynamic(layer.bias(), act_bits);
  lin.mean_recip = mean_reciprocal(layer.in_features());
  return lin;
}

QuantizedModel quantize_model(const Model& model, Precision precision) {
  QuantizedModel q;
  q.config = model.config;
  q.precision = precision;
  q.embed = model.embed;
  q.unembed = model.unembed;
  const int bits = q.act_bits();
  const std::size_t d = model.config.width;
  for (const Block& b : model.blocks) {
    FxpBlock fb;
    fb.norm1 = scaled_gain(b.norm1, d);
    fb.norm2 = scaled_gain(b.norm2, d);
    fb.mixer.f = quantize_linear(b.mixer.proj_f, bits);
    fb.mixer.c = quantize_linear(b.mixer.proj_c, bits);
    fb.mixer.g = quantize_linear(b.mixer.proj_g, bits);
    fb.mixer.o = quantize_linear(b.mixer.proj_o, bits);
    fb.mixer.floor_q15 = static_cast<std::int32_t>(std::lround(b.mixer.forget_floor * kSigmoidOne));
    fb.channel.g = quantize_linear(b.channel.proj_g, bits);
    fb.channel.u = quantize_linear(b.channel.proj_u, bits);
    fb.channel.d = quantize_linear(b.channel.proj_d, bits);
    q.blocks.push_back(std::move(fb));
  }
  q.final_norm = scaled_gain(model.final_norm, d);
  return q;
}

Matrix run_w8a16(const Model& model, std::span<const std::int32_t> ids) {
  return run_fxp(quantize_model(model, Precision::W8A16), ids);
}

MismatchReport compare_logits(std::span<const Matrix> reference, std::span<const Matrix> candidate) {
  if (reference.size() != candidate.size()) throw Error("mismatch: different number of sequences");
  MismatchReport rep;
  double cos_sum = 0.0;
  std::size_t agree = 0;
  for (std::size_t s = 0; s < reference.size(); ++s) {
    const Matrix& a = reference[s];
    const Matrix& b = candidate[s];
    if (a.rows != b.rows || a.cols != b.cols) throw Error("mismatch: logits shape differs");
    for (std::size_t t = 0; t < a.rows; ++t) {
      cos_sum += cosine(a.row(t), b.row(t));
      agree += argmax(a.row(t)) == argmax(b.row(t)) ? 1 : 0;
      ++rep.positions;
    }
  }
  if (rep.positions == 0) throw Error("mismatch: no positions to compare");
  rep.mean_cosine = cos_sum / static_cast<double>(rep.positions);
  rep.token_agreement = static_cast<double>(agree) / static_cast<double>(rep.positions);
  return rep;
}

MismatchReport measure_mismatch(const Model& model, const QuantizedModel& quantized,
                                std::span<const std::vector<std::int32_t>> prompts) {
  std::vector<Matrix> ref, cand;
  for (const auto& p : prompts) {
    ref.push_back(forward(model, p));
    cand.push_back(run_fxp(quantized, p));
  }
  return compare_logits(ref, cand);
}

Checkpoint to_checkpoint(const QuantizedModel& q) {
  Checkpoint ck;
  ck.config = q.config;
  ck.flags = (q.config.forget_floor ? checkpoint_flags::kForgetFloor : 0) |
             (static_cast<std::uint32_t>(q.act_bits()) << checkpoint_flags::kActBitsShift);
  ck.add(TensorRecord::real32("embed", {q.embed.rows, q.embed.cols}, q.embed.data));
  for (std::size_t i = 0; i < q.blocks.size(); ++i) {
    const FxpBlock& b = q.blocks[i];
    const std::string p = "blocks." + std::to_string(i) + ".";
    put_fixed(ck, p + "norm1", b.norm1);
    put_fixed(ck, p + "norm2", b.norm2);
    put_linear(ck, p + "mixer.f", b.mixer.f);
    put_linear(ck, p + "mixer.c", b.mixer.c);
    put_linear(ck, p + "mixer.g", b.mixer.g);
    put_linear(ck, p + "mixer.o", b.mixer.o);
    const std::int32_t floor[1] = {b.mixer.floor_q15};
    ck.add(TensorRecord::integers(p + "mixer.floor", TensorKind::Int32, {1}, floor));
    put_linear(ck, p + "glu.g", b.channel.g);
    put_linear(ck, p + "glu.u", b.channel.u);
    put_linear(ck, p + "glu.d", b.channel.d);
  }
  put_fixed(ck, "final_norm", q.final_norm);
  ck.add(TensorRecord::real32("unembed", {q.unembed.rows, q.unembed.cols}, q.unembed.data));
  return ck;
}

QuantizedModel quantized_from_checkpoint(const Checkpoint& ck) {
  const std::uint32_t bits = (ck.flags & checkpoint_flags::kActBitsMask) >> checkpoint_flags::kActBitsShift;
  if (bits != 8 && bits != 16) throw Error("checkpoint: not a fixed-point checkpoint");
  ck.config.validate();
  const std::size_t d = ck.config.width, l = ck.config.glu_width, v = ck.config.vocab;
  QuantizedModel q;
  q.config = ck.config;
  q.precision = bits == 16 ? Precision::W8A16 : Precision::W8A8;
  q.embed = get_matrix(ck, "embed", v, d);
  q.blocks.resize(ck.config.layers);
  for (std::size_t i = 0; i < q.blocks.size(); ++i) {
    FxpBlock& b = q.blocks[i];
    const std::string p = "blocks." + std::to_string(i) + ".";
    b.norm1 = get_fixed(ck, p + "norm1", d);
    b.norm2 = get_fixed(ck, p + "norm2", d);
    b.mixer.f = get_linear(ck, p + "mixer.f", d, d);
    b.mixer.c = get_linear(ck, p + "mixer.c", d, d);
    b.mixer.g = get_linear(ck, p + "mixer.g", d, d);
    b.mixer.o = get_linear(ck, p + "mixer.o", d, d);
    const auto floor = ck.find(p + "mixer.floor").as_integers();
    if (floor.size() != 1 || floor[0] < 0 || floor[0] > kSigmoidOne) throw Error("checkpoint: bad forget floor");
    b.mixer.floor_q15 = floor[0];
    b.channel.g = get_linear(ck, p + "glu.g", d, l);
    b.channel.u = get_linear(ck, p + "glu.u", d, l);
    b.channel.d = get_linear(ck, p + "glu.d", l, d);
  }
  q.final_norm = get_fixed(ck, "final_norm", d);
  q.unembed = get_matrix(ck, "unembed", d, v);
  return q;
}

}  // namespace mmf::fxp
