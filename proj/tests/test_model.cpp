#include <doctest.h>

#include <random>

#include "mmf/error.hpp"
#include "mmf/model.hpp"
#include "oracle.hpp"

using namespace mmf;

namespace {

ModelConfig tiny(std::uint64_t seed, bool floor = false) {
  ModelConfig c;
  c.layers = 1;
  c.width = 4;
  c.glu_width = static_cast<std::uint32_t>(glu_width(4));
  c.vocab = 8;
  c.seed = seed;
  c.forget_floor = floor;
  return c;
}

// Gives norms and biases non-trivial values so their gradients are exercised.
void perturb(Model& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd(0.0f, 0.2f);
  for (const ParamRef& p : parameters(m)) {
    if (p.name.find("norm") != std::string::npos || p.name.find("bias") != std::string::npos) {
      for (float& v : p.values) v += nd(rng);
    }
  }
  m.refresh();
}

}  // namespace

TEST_CASE("presets") {
  const ModelConfig toy = ModelConfig::toy();
  CHECK(toy.layers == 2);
  CHECK(toy.width == 64);
  CHECK(toy.vocab == 258);
  CHECK(toy.glu_width == 168);
  const ModelConfig big = ModelConfig::preset("370M-shape");
  CHECK(big.layers == 24);
  CHECK(big.width == 1024);
  const double count = static_cast<double>(big.parameter_count());
  CHECK(std::fabs(count - 370e6) / 370e6 < 0.05);
  CHECK_THROWS_AS(ModelConfig::preset("huge"), Error);
  ModelConfig bad = toy;
  bad.layers = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("parameter count agrees with the tensors") {
  Model m = init_model(ModelConfig::toy(1));
  std::uint64_t n = 0;
  for (const ParamRef& p : parameters(m)) n += p.values.size();
  CHECK(n == m.config.parameter_count());
}

TEST_CASE("forward shape, determinism and order sensitivity") {
  const Model m = init_model(ModelConfig::toy(3));
  const std::vector<std::int32_t> one{65};
  const Matrix l1 = forward(m, one);
  CHECK(l1.rows == 1);
  CHECK(l1.cols == 258);
  for (float v : l1.data) CHECK(std::isfinite(v));

  const std::vector<std::int32_t> ids = encode_bytes("hello world", true);
  std::vector<std::int32_t> rev(ids.rbegin(), ids.rend());
  const Matrix a = forward(m, ids), b = forward(m, ids), c = forward(m, rev);
  CHECK(a.data == b.data);
  CHECK(!std::equal(a.row(a.rows - 1).begin(), a.row(a.rows - 1).end(), c.row(c.rows - 1).begin()));

  const std::vector<std::int32_t> bad{258};
  CHECK_THROWS_AS(forward(m, bad), Error);
  const std::vector<std::int32_t> neg{-1};
  CHECK_THROWS_AS(forward(m, neg), Error);
}

TEST_CASE("relaxed forward matches the double oracle") {
  ModelConfig cfg = ModelConfig::toy(4);
  cfg.layers = 1;
  cfg.forget_floor = true;
  Model m = init_model(cfg);
  perturb(m, 4);
  m.set_mode(QuantMode::Relaxed);
  const std::vector<std::int32_t> ids = encode_bytes("abcab", true);
  const oracle::Mat want = oracle::model_logits(oracle::snapshot(m), ids);
  CHECK(oracle::rel_err_inf(forward(m, ids).data, want.v) < 1e-4);
}

TEST_CASE("session, prefill and forward agree") {
  const Model m = init_model(ModelConfig::toy(5));
  const std::vector<std::int32_t> ids = encode_bytes("the quick brown", true);
  const Matrix full = forward(m, ids);
  GenerationSession s(m);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const std::vector<float> row = s.step(ids[t]);
    CHECK(std::equal(row.begin(), row.end(), full.row(t).begin()));
  }
  const PrefillResult pre = prefill(m, ids);
  CHECK(oracle::rel_err_inf(pre.logits.data, oracle::Vec(full.data.begin(), full.data.end()), 1e-6) < 1e-4);
  for (std::size_t k = 0; k < pre.states.size(); ++k) {
    const auto& want = s.states()[k].h;
    CHECK(oracle::rel_err_inf(pre.states[k].h, oracle::Vec(want.begin(), want.end()), 1e-6) < 1e-5);
  }
  const PrefillResult last = prefill(m, ids, false);
  CHECK(last.logits.rows == 1);
  CHECK_THROWS_AS(prefill(m, std::vector<std::int32_t>{}), Error);

  const std::vector<std::int32_t> one{ids[0]};
  const PrefillResult p1 = prefill(m, one);
  GenerationSession s1(m);
  s1.step(ids[0]);
  for (std::size_t k = 0; k < p1.states.size(); ++k) CHECK(p1.states[k].h == s1.states()[k].h);
}

TEST_CASE("generation state size is constant") {
  const Model m = init_model(ModelConfig::toy(6));
  GenerationSession s(m);
  const std::size_t bytes = s.state_bytes();
  CHECK(bytes == 2u * 64u * sizeof(float));
  CHECK(bytes == m.state_bytes());
  std::int32_t tok = kBosToken;
  for (int i = 0; i < 300; ++i) {
    tok = argmax(s.step(tok));
    CHECK(s.state_bytes() == bytes);
  }
  const PrefillResult a = prefill(m, std::vector<std::int32_t>(64, 7));
  const PrefillResult b = prefill(m, std::vector<std::int32_t>(256, 7));
  std::size_t sa = 0, sb = 0;
  for (const auto& st : a.states) sa += st.bytes();
  for (const auto& st : b.states) sb += st.bytes();
  CHECK(sa == sb);
}

TEST_CASE("generate") {
  const Model m = init_model(ModelConfig::toy(7));
  const std::vector<std::int32_t> prompt = encode_bytes("ab", true);
  const auto g1 = generate(m, prompt, 20, Sampler::greedy());
  const auto g2 = generate(m, prompt, 20, Sampler::greedy());
  CHECK(g1.size() == 20);
  CHECK(g1 == g2);
  CHECK(generate(m, prompt, 0, Sampler::greedy()).empty());
  CHECK(generate(m, prompt, 20, Sampler::with_temperature(1e-4f, 3)) == g1);
  const auto t1 = generate(m, prompt, 20, Sampler::with_temperature(1.0f, 9));
  CHECK(t1 == generate(m, prompt, 20, Sampler::with_temperature(1.0f, 9)));
  CHECK_THROWS_AS(generate(m, prompt, 5, Sampler::with_temperature(0.0f, 1)), Error);
  CHECK(generate(m, std::vector<std::int32_t>{}, 3, Sampler::greedy()).size() == 3);
}

TEST_CASE("whole-model gradients match finite differences") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Model m = init_model(tiny(seed, seed == 2));
    perturb(m, seed);
    m.set_mode(QuantMode::Relaxed);
    const std::vector<std::int32_t> ids{1, 5, 2};
    std::mt19937_64 rng(seed + 100);
    const Matrix r = oracle::random_matrix(rng, 3, 8);
    const ModelGrads g = backward(m, forward_train(m, ids), r);

    oracle::Params p = oracle::snapshot(m);
    auto loss = [&] {
      const oracle::Mat o = oracle::model_logits(p, ids);
      double s = 0;
      for (std::size_t i = 0; i < o.v.size(); ++i) s += o.v[i] * r.data[i];
      return s;
    };
    ModelGrads gc = g;
    for (const ParamRef& pr : parameters(gc)) {
      CAPTURE(pr.name);
      const oracle::Vec fd = oracle::finite_diff(p.t[pr.name], loss);
      CHECK(oracle::rel_err_inf(std::span<const float>(pr.values.data(), pr.values.size()), fd) < 1e-3);
    }
  }
}

TEST_CASE("training forward matches inference forward") {
  Model m = init_model(ModelConfig::toy(8));
  const std::vector<std::int32_t> ids = encode_bytes("training", true);
  CHECK(forward_train(m, ids).logits.data == forward(m, ids).data);
}

TEST_CASE("inference-only init reproduces the ternary weights") {
  ModelConfig cfg = ModelConfig::toy(9);
  Model a = init_model(cfg, true);
  Model b = init_model(cfg, false);
  const auto la = linear_layers(a), lb = linear_layers(b);
  REQUIRE(la.size() == lb.size());
  for (std::size_t i = 0; i < la.size(); ++i) {
    CHECK(!lb[i].layer->has_master());
    CHECK(la[i].layer->ternary().packed() == lb[i].layer->ternary().packed());
    CHECK(la[i].layer->ternary().scale() == lb[i].layer->ternary().scale());
  }
  const std::vector<std::int32_t> ids = encode_bytes("same", true);
  CHECK(forward(a, ids).data == forward(b, ids).data);
}

TEST_CASE("byte tokenizer") {
  const auto ids = encode_bytes("A\xff", true);
  CHECK(ids == std::vector<std::int32_t>{kBosToken, 65, 255});
  CHECK(decode_bytes(ids) == "A\xff");
  CHECK(decode_bytes(std::vector<std::int32_t>{kEosToken, 104, 105}) == "hi");
}
