// Runs the ten acceptance checks and prints one PASS/FAIL line for each.
// Exit status is non-zero if any check fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "bounds.hpp"
#include "corpus.hpp"
#include "mmf/bitlinear.hpp"
#include "mmf/checkpoint.hpp"
#include "mmf/costmodel.hpp"
#include "mmf/fxp/inv_sqrt.hpp"
#include "mmf/fxp/rmsnorm.hpp"
#include "mmf/fxp/runtime.hpp"
#include "mmf/fxp/sigmoid.hpp"
#include "mmf/mlgru.hpp"
#include "mmf/quant.hpp"
#include "mmf/trainer.hpp"
#include "oracle.hpp"

using namespace mmf;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1 -------------------------------------------------------------------------
Outcome kernels_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> dim(1, 64);
  std::uniform_int_distribution<int> code(-1, 1);
  std::normal_distribution<float> nd;
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = dim(rng), m = dim(rng);
    std::vector<std::int8_t> vals(d * m);
    for (auto& v : vals) v = static_cast<std::int8_t>(code(rng));
    const TernaryMatrix w = TernaryMatrix::from_values(d, m, vals, 0.05f + 0.9f * float(trial) / 200.0f);
    std::vector<float> x(d);
    for (auto& v : x) v = nd(rng);
    const auto got = ternary_matvec(x, w);
    const auto want = oracle::ternary_dense(oracle::Vec(x.begin(), x.end()), vals, m, w.scale());
    worst = std::max(worst, oracle::rel_err_inf(got, want));
  }
  const double dt = since(t0);
  return {worst < 1e-6 && dt < 10.0,
          fmt("200 instances, backend %s, max rel err %.3g (< 1e-6), %.2f s (< 10 s)", std::string(kernels::active().name).c_str(), worst,
              dt)};
}

// 2 -------------------------------------------------------------------------
Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2);
  double worst_norm = 0.0, worst_fused = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 3 + trial % 4, k = 2 + trial % 3, t = 1 + trial % 3;
    std::normal_distribution<float> nb(0.0f, 0.3f);
    std::vector<float> b(k);
    for (auto& v : b) v = nb(rng);
    BitLinearLayer layer(oracle::random_matrix(rng, n, k), b);
    layer.mode = QuantMode::Relaxed;
    const Matrix x = oracle::random_matrix(rng, t, n);
    const Matrix d_out = oracle::random_matrix(rng, t, k);

    // Normalization alone.
    const Matrix dy = oracle::random_matrix(rng, t, n);
    const FusedLinearState s = rms_norm_fwd(x, kBitLinearEps, QuantMode::Relaxed);
    const NormBackward nbw = rms_norm_bwd(dy, x, s.mu, s.sigma2, s.r, QuantMode::Relaxed);
    oracle::Mat xd = oracle::from_matrix(x);
    const oracle::Mat rdy = oracle::from_matrix(dy);
    const auto fd_norm = oracle::finite_diff(
        xd.v,
        [&] {
          const oracle::Mat y = oracle::centre_norm(xd, 1e-6);
          double acc = 0;
          for (std::size_t i = 0; i < y.v.size(); ++i) acc += y.v[i] * rdy.v[i];
          return acc;
        },
        1e-4);
    worst_norm = std::max(worst_norm, oracle::rel_err_inf(nbw.dx.data, fd_norm));

    // Whole fused layer.
    const LinearOutput fw = forward(layer, x);
    const LinearBackward bw = backward(layer, fw.state, x, d_out);
    oracle::Mat wd = oracle::from_matrix(layer.master());
    oracle::Vec bd(b.begin(), b.end());
    const oracle::Mat r = oracle::from_matrix(d_out);
    auto loss = [&] {
      const oracle::Mat o = oracle::bitlinear_relaxed(xd, wd, bd, kBitLinearEps);
      double acc = 0;
      for (std::size_t i = 0; i < o.v.size(); ++i) acc += o.v[i] * r.v[i];
      return acc;
    };
    worst_fused = std::max({worst_fused, oracle::rel_err_inf(bw.dx.data, oracle::finite_diff(xd.v, loss)),
                            oracle::rel_err_inf(bw.grads.dw.data, oracle::finite_diff(wd.v, loss)),
                            oracle::rel_err_inf(bw.grads.db, oracle::finite_diff(bd, loss))});
  }
  const double dt = since(t0);
  return {worst_norm < 1e-3 && worst_fused < 1e-3 && dt < 30.0,
          fmt("50 instances, norm bwd %.3g, fused bwd %.3g (< 1e-3), %.2f s (< 30 s)", worst_norm, worst_fused, dt)};
}

// 3 -------------------------------------------------------------------------
Outcome scan_equivalence() {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  for (std::size_t d : {1u, 8u, 64u}) {
    MLGRULayer l;
    for (BitLinearLayer* p : {&l.proj_f, &l.proj_c, &l.proj_g, &l.proj_o}) {
      std::vector<float> b(d);
      std::normal_distribution<float> nd(0.0f, 0.3f);
      for (auto& v : b) v = nd(rng);
      *p = BitLinearLayer(oracle::random_matrix(rng, d, d, 1.0 / std::sqrt(double(d))), b);
    }
    for (std::size_t T : {1u, 2u, 17u, 64u, 257u}) {
      const Matrix x = oracle::random_matrix(rng, T, d);
      const Matrix a = forward_sequence(l, x), b = forward_scan(l, x);
      worst = std::max(worst, oracle::rel_err_inf(b.data, oracle::Vec(a.data.begin(), a.data.end()), 1e-6));
    }
  }
  return {worst < 1e-5, fmt("T in {1,2,17,64,257} x d in {1,8,64}, max rel err %.3g (< 1e-5)", worst)};
}

// 4 -------------------------------------------------------------------------
// Sessions of `len` tokens are repeated until at least 4096 tokens have been
// generated, so short lengths are not dominated by timer resolution.
double generation_rate(const Model& m, std::size_t len, std::size_t& bytes, bool& constant) {
  const std::size_t sessions = std::max<std::size_t>(1, 4096 / len);
  const auto t0 = Clock::now();
  for (std::size_t k = 0; k < sessions; ++k) {
    GenerationSession s(m);
    const std::size_t b0 = s.state_bytes();
    std::int32_t tok = kBosToken;
    for (std::size_t t = 0; t < len; ++t) {
      tok = argmax(s.step(tok));
      constant = constant && s.state_bytes() == b0;
    }
    bytes = s.state_bytes();
  }
  return double(sessions * len) / since(t0);
}

Outcome constant_generation() {
  const Model m = init_model(ModelConfig::toy(4));
  const std::size_t lens[] = {64, 256, 1024};
  double rate[3] = {0, 0, 0};
  std::size_t bytes[3];
  bool constant = true;
  std::size_t warm = 0;
  generation_rate(m, 1024, warm, constant);
  // Interleaved repetitions; the best of each length is kept.
  for (int rep = 0; rep < 5; ++rep) {
    for (int i = 0; i < 3; ++i) rate[i] = std::max(rate[i], generation_rate(m, lens[i], bytes[i], constant));
  }
  const double lo = *std::min_element(rate, rate + 3), hi = *std::max_element(rate, rate + 3);
  const double mid = (lo + hi) / 2.0;
  const bool flat = (hi - mid) / mid <= 0.10;
  constant = constant && bytes[0] == bytes[1] && bytes[1] == bytes[2];
  return {flat && constant,
          fmt("tok/s %.0f / %.0f / %.0f at 64/256/1024 (spread +-%.1f%%, limit 10%%), state %zu bytes at every length",
              rate[0], rate[1], rate[2], 100.0 * (hi - mid) / mid, bytes[0])};
}

// 5 -------------------------------------------------------------------------
Outcome fixed_point_approx() {
  using namespace fxp;
  bool exact = sigmoid_fxp(0) == (1 << (kSigmoidOutputExp - 1));
  double sig = 0.0;
  for (std::int32_t x = -32768; x <= 32767; ++x) {
    exact = exact && sigmoid_fxp(x) + sigmoid_fxp(-x) == kSigmoidOne;
    sig = std::max(sig, std::fabs(sigmoid_fxp(x) / 32768.0 - oracle::sigmoid(x / 64.0)));
  }
  double inv = 0.0;
  for (int e = -32; e <= 0; ++e) {
    for (std::int64_t x = 1 << 15; x < (1 << 16); ++x) {
      const double v = std::ldexp(double(x), e);
      if (v < std::ldexp(1.0, -16) || v > std::ldexp(1.0, 16)) continue;
      inv = std::max(inv, std::fabs(inv_sqrt_fxp(x, e).real() * std::sqrt(v) - 1.0));
    }
  }
  return {exact && sig <= bounds::kSigmoidAbs && inv <= bounds::kInvSqrtRel,
          fmt("sigma(0) and symmetry %s; sigmoid max abs err %.4g (bound %.4g); inv_sqrt max rel err %.3g (bound %.3g)",
              exact ? "exact" : "NOT exact", sig, bounds::kSigmoidAbs, inv, bounds::kInvSqrtRel)};
}

// 6 -------------------------------------------------------------------------
Outcome double_norm() {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ug(0.2, 3.0);
  const double eps = 1e-3;
  const std::size_t d = 32;
  double scalar = 0.0, channel = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    oracle::Mat x(1, d);
    const double mag = std::pow(10.0, -3.0 + 3.0 * trial / 100.0);
    for (double& v : x.v) v = nd(rng) * mag;
    const oracle::Vec g1(d, ug(rng)), g2(d, ug(rng));
    const auto want = oracle::rmsnorm_gain(oracle::rmsnorm_gain(x, g1, eps), g2, eps);
    const auto got = fxp::double_rmsnorm_apply(x.v, fxp::double_rmsnorm_params(g1, g2, eps));
    scalar = std::max(scalar, oracle::rel_err_inf(got, want.v));

    oracle::Vec h1(d), h2(d);
    for (auto& v : h1) v = ug(rng);
    for (auto& v : h2) v = ug(rng);
    const auto want_c = oracle::rmsnorm_gain(oracle::rmsnorm_gain(x, h1, eps), h2, eps);
    const auto got_c = fxp::double_rmsnorm_apply(x.v, fxp::double_rmsnorm_params(h1, h2, eps));
    channel = std::max(channel, oracle::rel_err_inf(got_c, want_c.v));
  }
  return {scalar < 1e-4,
          fmt("100 vectors, scalar gains max rel err %.3g (< 1e-4); per-channel gains (reported only) %.3g", scalar,
              channel)};
}

// 7 -------------------------------------------------------------------------
Outcome w8a16_mismatch() {
  const std::string text = corpus::sentences(400, 1);
  Model m = init_model(ModelConfig::toy(1));
  TrainConfig cfg;
  cfg.lr0 = 0.1;
  cfg.batch = 8;
  cfg.seq_len = 32;
  cfg.steps = 1000;
  cfg.seed = 1;
  const auto res = train_toy(m, encode_bytes(text, false), cfg);
  const auto prompts = corpus::prompts(text, 64, 40, 7);
  const auto a = fxp::measure_mismatch(m, fxp::quantize_model(m, fxp::Precision::W8A16), prompts);
  const auto b = fxp::measure_mismatch(m, fxp::quantize_model(m, fxp::Precision::W8A8), prompts);
  const bool ok = a.token_agreement >= 0.9 && a.mean_cosine >= 0.99 && b.token_agreement < a.token_agreement &&
                  b.mean_cosine < a.mean_cosine;
  return {ok, fmt("toy model trained to loss %.3f; W8A16 cosine %.5f agreement %.4f; W8A8 cosine %.5f agreement "
                  "%.4f (%zu positions)",
                  res.curve.back().loss, a.mean_cosine, a.token_agreement, b.mean_cosine, b.token_agreement,
                  a.positions)};
}

// 8 -------------------------------------------------------------------------
Outcome cost_calibration() {
  const HardwareProfile sys = preset_profile("loihi-370m");
  const HardwareProfile one = sys.with_slowdown(1.0);
  struct Pair {
    const char* what;
    double single, published_single, system, published_system;
    int decimals;
  };
  const Pair pairs[] = {
      {"generate tok/s", generate_throughput(one), 71.3, generate_throughput(sys), 59.4, 1},
      {"prefill tok/s", prefill_throughput(one), 13965, prefill_throughput(sys), 11637, 0},
      {"generate mJ", 1e3 * energy_per_token(one, Phase::Generate), 59, 1e3 * energy_per_token(sys, Phase::Generate),
       70.8, 1},
      {"prefill mJ", 1e3 * energy_per_token(one, Phase::Prefill), 2.8, 1e3 * energy_per_token(sys, Phase::Prefill),
       3.4, 1},
  };
  bool ok = true;
  std::string detail;
  for (const Pair& p : pairs) {
    auto close = [&](double v, double pub) {
      const double k = std::pow(10.0, p.decimals);
      return std::fabs(v / pub - 1.0) <= 0.005 || std::round(v * k) == std::round(pub * k);
    };
    ok = ok && close(p.single, p.published_single) && close(p.system, p.published_system);
    detail += fmt("%s%s %.4g->%.4g (%+.2f%%)", detail.empty() ? "" : "; ", p.what, p.single, p.system,
                  100.0 * (p.system / p.published_system - 1.0));
  }
  return {ok, detail + " [within 0.5% or equal at published precision]"};
}

// 9 -------------------------------------------------------------------------
Outcome toy_convergence() {
  const auto t0 = Clock::now();
  Model m = init_model(ModelConfig::toy(0));
  TrainConfig cfg;  // lr 4e-3, 2000 steps, batch 4, seq 16
  cfg.target_loss = 0.1;
  const auto res = train_toy(m, encode_bytes(corpus::periodic("abc", 2000), false), cfg);
  const double dt = since(t0);
  return {res.reached_target && dt < 300.0,
          fmt("periodic corpus, lr %.0e: loss %.4f at step %zu of %zu (< 0.1), %.1f s (< 300 s)", cfg.lr0,
              res.curve.back().loss, res.next_step, cfg.steps, dt)};
}

// 10 ------------------------------------------------------------------------
Outcome checkpoint_roundtrip() {
  const auto dir = std::filesystem::temp_directory_path();
  bool ok = true;
  std::string detail;
  for (const char* name : {"toy", "370M-shape"}) {
    const ModelConfig cfg = ModelConfig::preset(name, 10);
    const Model m = init_model(cfg, cfg == ModelConfig::toy(10));
    const auto path = dir / (std::string("mmf_acceptance_") + name + ".ckpt");
    save_model(path, m);
    const Model back = load_model(path);
    const std::vector<std::int32_t> ids{1, 200, 77, 3};
    const bool same = forward(back, ids).data == forward(m, ids).data;
    ok = ok && same;
    detail += fmt("%s%s %s (%.1f MB)", detail.empty() ? "" : "; ", name, same ? "bit-identical" : "DIFFERS",
                  double(std::filesystem::file_size(path)) / 1e6);
    std::filesystem::remove(path);
  }
  return {ok, detail};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> checks[] = {
      {"ternary kernel oracle", kernels_oracle},
      {"fused layer gradients", gradient_fidelity},
      {"scan vs sequential", scan_equivalence},
      {"constant-cost generation", constant_generation},
      {"fixed-point approximations", fixed_point_approx},
      {"double rmsnorm", double_norm},
      {"W8A16 mismatch", w8a16_mismatch},
      {"cost model calibration", cost_calibration},
      {"toy convergence", toy_convergence},
      {"checkpoint round trip", checkpoint_roundtrip},
  };
  int failed = 0;
  int i = 0;
  for (const auto& [name, fn] : checks) {
    ++i;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", i, name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/10 passed\n", 10 - failed);
  return failed == 0 ? 0 : 1;
}
