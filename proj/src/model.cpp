#include "mmf/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mmf/error.hpp"
#include "mmf/kernels.hpp"

namespace mmf {
namespace {

Matrix gaussian(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double stddev) {
  std::normal_distribution<float> dist(0.0f, static_cast<float>(stddev));
  Matrix m(rows, cols);
  for (float& v : m.data) v = dist(rng);
  return m;
}

BitLinearLayer make_linear(std::mt19937_64& rng, std::size_t in, std::size_t out, bool keep_master) {
  Matrix w = gaussian(rng, in, out, 1.0 / std::sqrt(static_cast<double>(in)));
  std::vector<float> bias(out, 0.0f);
  if (keep_master) return BitLinearLayer(std::move(w), std::move(bias));
  return BitLinearLayer::from_ternary(weight_quant(w), std::move(bias));
}

void dense_rows(const Matrix& x, const Matrix& w, Matrix& out) {
  const auto& k = kernels::active();
  out = Matrix(x.rows, w.cols);
  for (std::size_t t = 0; t < x.rows; ++t) k.dense_f32(x.row(t).data(), w.data.data(), w.rows, w.cols, out.row(t).data());
}

void add_into(Matrix& dst, const Matrix& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
}

Matrix embed_rows(const Model& model, std::span<const std::int32_t> ids) {
  check_tokens(model, ids);
  Matrix x(ids.size(), model.config.width);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const auto src = model.embed.row(static_cast<std::size_t>(ids[t]));
    std::copy(src.begin(), src.end(), x.row(t).begin());
  }
  return x;
}

Matrix head(const Model& model, const Matrix& x) {
  GainNormOutput z = rms_norm_gain_fwd(x, model.final_norm);
  Matrix logits;
  dense_rows(z.y, model.unembed, logits);
  return logits;
}

void push_linear(std::vector<NamedLinear>& out, const std::string& name, BitLinearLayer& layer) {
  out.push_back({name, &layer});
}

void push_vec(std::vector<ParamRef>& out, std::string name, std::vector<float>& v) {
  out.push_back({std::move(name), std::span<float>(v)});
}

void push_mat(std::vector<ParamRef>& out, std::string name, Matrix& m) {
  out.push_back({std::move(name), std::span<float>(m.data)});
}

void push_linear_grads(std::vector<ParamRef>& out, const std::string& name, LinearGrads& g) {
  push_mat(out, name + ".weight", g.dw);
  push_vec(out, name + ".bias", g.db);
}

void push_linear_params(std::vector<ParamRef>& out, const std::string& name, BitLinearLayer& layer) {
  if (layer.has_master()) push_mat(out, name + ".weight", layer.master());
  push_vec(out, name + ".bias", layer.bias());
}

std::string block_prefix(std::size_t i) { return "blocks." + std::to_string(i) + "."; }

}  // namespace

ModelConfig ModelConfig::toy(std::uint64_t seed) {
  ModelConfig c;
  c.layers = 2;
  c.width = 64;
  c.glu_width = static_cast<std::uint32_t>(mmf::glu_width(64));
  c.vocab = kByteVocab;
  c.seed = seed;
  return c;
}

ModelConfig ModelConfig::shape_370m(std::uint64_t seed) {
  ModelConfig c;
  c.layers = 24;
  c.width = 1024;
  c.glu_width = static_cast<std::uint32_t>(mmf::glu_width(1024));
  c.vocab = 32000;
  c.seed = seed;
  return c;
}

ModelConfig ModelConfig::preset(std::string_view name, std::uint64_t seed) {
  if (name == "toy") return toy(seed);
  if (name == "370M-shape" || name == "370m-shape") return shape_370m(seed);
  throw Error("unknown model preset: " + std::string(name));
}

void ModelConfig::validate() const {
  if (layers == 0) throw Error("model config: layers must be positive");
  if (width == 0) throw Error("model config: width must be positive");
  if (glu_width == 0) throw Error("model config: glu width must be positive");
  if (vocab == 0) throw Error("model config: vocab must be positive");
}

std::uint64_t ModelConfig::parameter_count() const {
  const std::uint64_t d = width, l = glu_width, v = vocab;
  const std::uint64_t mixer = 4 * (d * d + d);
  const std::uint64_t channel = 2 * (d * l + l) + (l * d + d);
  const std::uint64_t block = mixer + channel + 2 * d;
  return layers * block + d + 2 * v * d;
}

void Model::set_mode(QuantMode mode) {
  for (Block& b : blocks) {
    b.mixer.set_mode(mode);
    b.channel.set_mode(mode);
  }
}

void Model::refresh() {
  for (NamedLinear& nl : linear_layers(*this)) {
    if (nl.layer->has_master()) nl.layer->refresh();
  }
}

std::size_t Model::state_bytes() const { return static_cast<std::size_t>(config.layers) * config.width * sizeof(float); }

Model init_model(const ModelConfig& config, bool keep_masters) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  Model m;
  m.config = config;
  const std::size_t d = config.width, l = config.glu_width, v = config.vocab;
  m.embed = gaussian(rng, v, d, 1.0);
  m.blocks.resize(config.layers);
  for (std::size_t i = 0; i < config.layers; ++i) {
    Block& b = m.blocks[i];
    b.mixer.proj_f = make_linear(rng, d, d, keep_masters);
    b.mixer.proj_c = make_linear(rng, d, d, keep_masters);
    b.mixer.proj_g = make_linear(rng, d, d, keep_masters);
    b.mixer.proj_o = make_linear(rng, d, d, keep_masters);
    b.mixer.forget_floor = config.forget_floor ? static_cast<float>(i) / static_cast<float>(config.layers) : 0.0f;
    b.channel.proj_g = make_linear(rng, d, l, keep_masters);
    b.channel.proj_u = make_linear(rng, d, l, keep_masters);
    b.channel.proj_d = make_linear(rng, l, d, keep_masters);
    b.norm1.assign(d, 1.0f);
    b.norm2.assign(d, 1.0f);
  }
  m.final_norm.assign(d, 1.0f);
  m.unembed = gaussian(rng, d, v, 1.0 / std::sqrt(static_cast<double>(d)));
  return m;
}

std::vector<ParamRef> parameters(Model& model) {
  std::vector<ParamRef> out;
  push_mat(out, "embed", model.embed);
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    Block& b = model.blocks[i];
    const std::string p = block_prefix(i);
    push_vec(out, p + "norm1", b.norm1);
    push_linear_params(out, p + "mixer.f", b.mixer.proj_f);
    push_linear_params(out, p + "mixer.c", b.mixer.proj_c);
    push_linear_params(out, p + "mixer.g", b.mixer.proj_g);
    push_linear_params(out, p + "mixer.o", b.mixer.proj_o);
    push_vec(out, p + "norm2", b.norm2);
    push_linear_params(out, p + "glu.g", b.channel.proj_g);
    push_linear_params(out, p + "glu.u", b.channel.proj_u);
    push_linear_params(out, p + "glu.d", b.channel.proj_d);
  }
  push_vec(out, "final_norm", model.final_norm);
  push_mat(out, "unembed", model.unembed);
  return out;
}

std::vector<ParamRef> parameters(ModelGrads& grads) {
  std::vector<ParamRef> out;
  push_mat(out, "embed", grads.embed);
  for (std::size_t i = 0; i < grads.blocks.size(); ++i) {
    BlockGrads& b = grads.blocks[i];
    const std::string p = block_prefix(i);
    push_vec(out, p + "norm1", b.norm1);
    push_linear_grads(out, p + "mixer.f", b.mixer.f);
    push_linear_grads(out, p + "mixer.c", b.mixer.c);
    push_linear_grads(out, p + "mixer.g", b.mixer.g);
    push_linear_grads(out, p + "mixer.o", b.mixer.o);
    push_vec(out, p + "norm2", b.norm2);
    push_linear_grads(out, p + "glu.g", b.channel.g);
    push_linear_grads(out, p + "glu.u", b.channel.u);
    push_linear_grads(out, p + "glu.d", b.channel.d);
  }
  push_vec(out, "final_norm", grads.final_norm);
  push_mat(out, "unembed", grads.unembed);
  return out;
}

std::vector<NamedLinear> linear_layers(Model& model) {
  std::vector<NamedLinear> out;
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    Block& b = model.blocks[i];
    const std::string p = block_prefix(i);
    push_linear(out, p + "mixer.f", b.mixer.proj_f);
    push_linear(out, p + "mixer.c", b.mixer.proj_c);
    push_linear(out, p + "mixer.g", b.mixer.proj_g);
    push_linear(out, p + "mixer.o", b.mixer.proj_o);
    push_linear(out, p + "glu.g", b.channel.proj_g);
    push_linear(out, p + "glu.u", b.channel.proj_u);
    push_linear(out, p + "glu.d", b.channel.proj_d);
  }
  return out;
}

void check_tokens(const Model& model, std::span<const std::int32_t> ids) {
  for (std::int32_t id : ids) {
    if (id < 0 || static_cast<std::uint32_t>(id) >= model.config.vocab) {
      throw Error("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(model.config.vocab));
    }
  }
}

Matrix forward(const Model& model, std::span<const std::int32_t> ids) {
  Matrix x = embed_rows(model, ids);
  for (const Block& b : model.blocks) {
    add_into(x, forward_sequence(b.mixer, rms_norm_gain_fwd(x, b.norm1).y));
    add_into(x, forward(b.channel, rms_norm_gain_fwd(x, b.norm2).y));
  }
  return head(model, x);
}

PrefillResult prefill(const Model& model, std::span<const std::int32_t> ids, bool all_logits) {
  if (ids.empty()) throw Error("prefill: empty token sequence");
  PrefillResult res;
  Matrix x = embed_rows(model, ids);
  res.states.reserve(model.blocks.size());
  for (const Block& b : model.blocks) {
    RecurrentState st(model.config.width);
    add_into(x, forward_scan(b.mixer, rms_norm_gain_fwd(x, b.norm1).y, &st));
    add_into(x, forward(b.channel, rms_norm_gain_fwd(x, b.norm2).y));
    res.states.push_back(std::move(st));
  }
  if (!all_logits && x.rows > 1) {
    Matrix last(1, x.cols);
    std::copy(x.row(x.rows - 1).begin(), x.row(x.rows - 1).end(), last.row(0).begin());
    x = std::move(last);
  }
  res.logits = head(model, x);
  return res;
}

GenerationSession::GenerationSession(const Model& model)
    : GenerationSession(model, std::vector<RecurrentState>(model.blocks.size(), RecurrentState(model.config.width))) {}

GenerationSession::GenerationSession(const Model& model, std::vector<RecurrentState> states)
    : model_(&model), states_(std::move(states)) {
  const std::size_t d = model.config.width;
  if (states_.size() != model.blocks.size()) throw Error("generation: one state per layer required");
  for (const RecurrentState& s : states_) {
    if (s.h.size() != d) throw Error("generation: state width mismatch");
  }
  x_.resize(d);
  a_.resize(d);
  o_.resize(d);
  z_.resize(d);
}

std::vector<float> GenerationSession::step(std::int32_t token) {
  const Model& m = *model_;
  const std::int32_t one[1] = {token};
  check_tokens(m, one);
  const auto src = m.embed.row(static_cast<std::size_t>(token));
  std::copy(src.begin(), src.end(), x_.begin());
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    const Block& b = m.blocks[i];
    rms_norm_row(x_, b.norm1, kRmsNormEps, a_);
    mmf::step(b.mixer, a_, states_[i], o_);
    for (std::size_t j = 0; j < x_.size(); ++j) x_[j] += o_[j];
    rms_norm_row(x_, b.norm2, kRmsNormEps, a_);
    forward_row(b.channel, a_, o_);
    for (std::size_t j = 0; j < x_.size(); ++j) x_[j] += o_[j];
  }
  rms_norm_row(x_, m.final_norm, kRmsNormEps, z_);
  std::vector<float> logits(m.config.vocab);
  kernels::active().dense_f32(z_.data(), m.unembed.data.data(), m.unembed.rows, m.unembed.cols, logits.data());
  return logits;
}

std::size_t GenerationSession::state_bytes() const {
  std::size_t n = 0;
  for (const RecurrentState& s : states_) n += s.bytes();
  return n;
}

std::int32_t argmax(std::span<const float> logits) {
  if (logits.empty()) throw Error("argmax of empty logits");
  return static_cast<std::int32_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

std::vector<std::int32_t> generate(const Model& model, std::span<const std::int32_t> prompt, std::size_t n,
                                   const Sampler& sampler) {
  if (sampler.kind == Sampler::Kind::Temperature && !(sampler.temperature > 0.0f)) {
    throw Error("sampling temperature must be positive");
  }
  if (n == 0) return {};
  std::vector<std::int32_t> ctx(prompt.begin(), prompt.end());
  if (ctx.empty()) ctx.push_back(kBosToken < static_cast<std::int32_t>(model.config.vocab) ? kBosToken : 0);
  PrefillResult pre = prefill(model, ctx, false);
  GenerationSession session(model, std::move(pre.states));
  std::vector<float> logits(pre.logits.row(pre.logits.rows - 1).begin(), pre.logits.row(pre.logits.rows - 1).end());

  std::mt19937_64 rng(sampler.seed);
  std::vector<std::int32_t> out;
  out.reserve(n);
  std::vector<double> probs(logits.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::int32_t next;
    if (sampler.kind == Sampler::Kind::Greedy) {
      next = argmax(logits);
    } else {
      const float mx = *std::max_element(logits.begin(), logits.end());
      for (std::size_t j = 0; j < logits.size(); ++j) probs[j] = std::exp((logits[j] - mx) / sampler.temperature);
      std::discrete_distribution<std::int32_t> dist(probs.begin(), probs.end());
      next = dist(rng);
    }
    out.push_back(next);
    if (i + 1 < n) logits = session.step(next);
  }
  return out;
}

ModelCache forward_train(const Model& model, std::span<const std::int32_t> ids) {
  ModelCache cache;
  cache.ids.assign(ids.begin(), ids.end());
  Matrix x = embed_rows(model, ids);
  cache.blocks.reserve(model.blocks.size());
  for (const Block& b : model.blocks) {
    BlockCache bc;
    bc.x_in = x;
    bc.norm1 = rms_norm_gain_fwd(x, b.norm1);
    bc.mixer = forward_train(b.mixer, bc.norm1.y);
    add_into(x, bc.mixer.out);
    bc.x_mid = x;
    bc.norm2 = rms_norm_gain_fwd(x, b.norm2);
    bc.channel = forward_train(b.channel, bc.norm2.y);
    add_into(x, bc.channel.out);
    cache.blocks.push_back(std::move(bc));
  }
  cache.x_final = x;
  cache.norm_final = rms_norm_gain_fwd(x, model.final_norm);
  dense_rows(cache.norm_final.y, model.unembed, cache.logits);
  return cache;
}

void ModelGrads::accumulate(const ModelGrads& other) {
  auto mine = parameters(*this);
  auto theirs = parameters(const_cast<ModelGrads&>(other));
  if (mine.size() != theirs.size()) throw Error("gradient structure mismatch");
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].values.size() != theirs[i].values.size()) throw Error("gradient shape mismatch: " + mine[i].name);
    for (std::size_t j = 0; j < mine[i].values.size(); ++j) mine[i].values[j] += theirs[i].values[j];
  }
}

ModelGrads backward(const Model& model, const ModelCache& cache, const Matrix& d_logits) {
  const std::size_t T = cache.ids.size(), d = model.config.width, V = model.config.vocab;
  if (d_logits.rows != T || d_logits.cols != V) throw Error("model backward: logits gradient shape mismatch");
  if (cache.blocks.size() != model.blocks.size()) throw Error("model backward: cache does not match model");
  ModelGrads g;

  // logits = z U
  const Matrix& z = cache.norm_final.y;
  g.unembed = Matrix(d, V);
  Matrix dz(T, d);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < d; ++i) {
      const float zi = z(t, i);
      float acc = 0.0f;
      float* gu = &g.unembed.data[i * V];
      const float* u = &model.unembed.data[i * V];
      for (std::size_t v = 0; v < V; ++v) {
        const float dl = d_logits(t, v);
        gu[v] += zi * dl;
        acc += dl * u[v];
      }
      dz(t, i) = acc;
    }
  }
  GainNormBackward nf = rms_norm_gain_bwd(dz, cache.x_final, model.final_norm, cache.norm_final.inv_rms);
  g.final_norm = std::move(nf.dgain);
  Matrix dx = std::move(nf.dx);

  g.blocks.resize(model.blocks.size());
  for (std::size_t k = model.blocks.size(); k-- > 0;) {
    const Block& b = model.blocks[k];
    const BlockCache& bc = cache.blocks[k];
    BlockGrads& bg = g.blocks[k];

    GLUBackward gb = backward(b.channel, bc.channel, dx);
    GainNormBackward n2 = rms_norm_gain_bwd(gb.dx, bc.x_mid, b.norm2, bc.norm2.inv_rms);
    add_into(dx, n2.dx);
    bg.channel = std::move(gb.grads);
    bg.norm2 = std::move(n2.dgain);

    MLGRUBackward mb = backward_sequence(b.mixer, bc.mixer, dx);
    GainNormBackward n1 = rms_norm_gain_bwd(mb.dx, bc.x_in, b.norm1, bc.norm1.inv_rms);
    add_into(dx, n1.dx);
    bg.mixer = std::move(mb.grads);
    bg.norm1 = std::move(n1.dgain);
  }

  g.embed = Matrix(V, d);
  for (std::size_t t = 0; t < T; ++t) {
    auto row = g.embed.row(static_cast<std::size_t>(cache.ids[t]));
    for (std::size_t i = 0; i < d; ++i) row[i] += dx(t, i);
  }
  return g;
}

std::vector<std::int32_t> encode_bytes(std::string_view text, bool add_bos) {
  std::vector<std::int32_t> ids;
  ids.reserve(text.size() + 1);
  if (add_bos) ids.push_back(kBosToken);
  for (char ch : text) ids.push_back(static_cast<std::int32_t>(static_cast<unsigned char>(ch)));
  return ids;
}

std::string decode_bytes(std::span<const std::int32_t> ids) {
  std::string out;
  out.reserve(ids.size());
  for (std::int32_t id : ids) {
    if (id >= 0 && id < 256) out.push_back(static_cast<char>(id));
  }
  return out;
}

}  // namespace mmf
