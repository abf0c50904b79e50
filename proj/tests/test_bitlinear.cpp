#include <doctest.h>

#include <random>

#include "mmf/bitlinear.hpp"
#include "mmf/error.hpp"
#include "oracle.hpp"

using namespace mmf;

namespace {

BitLinearLayer random_layer(std::mt19937_64& rng, std::size_t in, std::size_t out) {
  std::vector<float> b(out);
  std::normal_distribution<float> nd(0.0f, 0.3f);
  for (auto& v : b) v = nd(rng);
  return BitLinearLayer(oracle::random_matrix(rng, in, out), b);
}

// Sum(out * R) for the relaxed layer, in double.
double relaxed_loss(const oracle::Mat& x, const oracle::Mat& w, const oracle::Vec& b, const oracle::Mat& r) {
  const oracle::Mat o = oracle::bitlinear_relaxed(x, w, b, kBitLinearEps);
  double s = 0;
  for (std::size_t i = 0; i < o.v.size(); ++i) s += o.v[i] * r.v[i];
  return s;
}

}  // namespace

TEST_CASE("rms_norm_fwd statistics") {
  Matrix x(2, 4);
  x.data = {1, 1, 1, 1, 1, -1, 1, -1};
  const FusedLinearState s = rms_norm_fwd(x, kBitLinearEps);
  CHECK(s.mu[0] == 1.0f);
  CHECK(s.sigma2[0] == 0.0f);
  for (std::size_t c = 0; c < 4; ++c) CHECK(s.y_tilde(0, c) == 0.0f);
  CHECK(s.mu[1] == 0.0f);
  CHECK(s.sigma2[1] == 1.0f);
  CHECK(s.r[1] == doctest::Approx(1.0 / std::sqrt(1.0 + 1e-6)));
  // r(x - mu) = +-r quantizes to +-127 and dequantizes to about +-1.
  CHECK(s.y_tilde(1, 0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(s.y_tilde(1, 1) == doctest::Approx(-1.0).epsilon(1e-5));
}

TEST_CASE("rms_norm_fwd is shift invariant") {
  std::mt19937_64 rng(1);
  Matrix x = oracle::random_matrix(rng, 3, 16);
  Matrix y = x;
  for (float& v : y.data) v += 2.0f;
  CHECK(rms_norm_fwd(x, kBitLinearEps).y_tilde.data == rms_norm_fwd(y, kBitLinearEps).y_tilde.data);
  x.data[0] = std::nanf("");
  CHECK_THROWS_AS(rms_norm_fwd(x, kBitLinearEps), Error);
}

TEST_CASE("forward edge cases") {
  // Identity codes, constant rows: the normalized input is zero.
  BitLinearLayer id = BitLinearLayer::from_ternary(TernaryMatrix::identity(4), std::vector<float>(4, 0.0f));
  Matrix x(2, 4, 3.0f);
  for (float v : forward(id, x).out.data) CHECK(v == 0.0f);

  // Zero input rows: output is the bias.
  Matrix w(3, 3);
  for (std::size_t i = 0; i < 3; ++i) w(i, i) = 1e-3f;
  const std::vector<float> b{0.5f, -1.0f, 2.0f};
  BitLinearLayer layer(w, b);
  const LinearOutput o = forward(layer, Matrix(2, 3));
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t k = 0; k < 3; ++k) CHECK(o.out(t, k) == b[k]);
}

TEST_CASE("fused forward matches the unfused oracle") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::size_t> dim(1, 64);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = dim(rng), k = dim(rng), t = 1 + trial % 4;
    BitLinearLayer layer = random_layer(rng, n, k);
    const Matrix x = oracle::random_matrix(rng, t, n, 2.0);
    const LinearOutput got = forward(layer, x);
    const oracle::Mat want = oracle::bitlinear_ternary(oracle::from_matrix(x), layer.ternary().unpack(), k,
                                                       layer.ternary().scale(),
                                                       oracle::Vec(layer.bias().begin(), layer.bias().end()), 1e-6);
    CHECK(oracle::rel_err_inf(got.out.data, want.v) < 1e-5);
    CHECK(forward(layer, x).out.data == got.out.data);
  }
}

TEST_CASE("relaxed forward matches the relaxed oracle") {
  std::mt19937_64 rng(4);
  BitLinearLayer layer = random_layer(rng, 12, 7);
  layer.mode = QuantMode::Relaxed;
  const Matrix x = oracle::random_matrix(rng, 3, 12);
  const oracle::Mat want = oracle::bitlinear_relaxed(oracle::from_matrix(x), oracle::from_matrix(layer.master()),
                                                     oracle::Vec(layer.bias().begin(), layer.bias().end()), 1e-6);
  CHECK(oracle::rel_err_inf(forward(layer, x).out.data, want.v) < 1e-5);
}

TEST_CASE("rms_norm_bwd matches finite differences") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = oracle::random_matrix(rng, 1, 4);
    const Matrix dy = oracle::random_matrix(rng, 1, 4);
    const FusedLinearState s = rms_norm_fwd(x, kBitLinearEps, QuantMode::Relaxed);
    const NormBackward nb = rms_norm_bwd(dy, x, s.mu, s.sigma2, s.r, QuantMode::Relaxed);

    oracle::Mat xd = oracle::from_matrix(x);
    const oracle::Mat r = oracle::from_matrix(dy);
    const oracle::Vec fd = oracle::finite_diff(xd.v, [&] {
      const oracle::Mat y = oracle::centre_norm(xd, 1e-6);
      double acc = 0;
      for (std::size_t i = 0; i < y.v.size(); ++i) acc += y.v[i] * r.v[i];
      return acc;
    }, 1e-4);
    CHECK(oracle::rel_err_inf(nb.dx.data, fd) < 1e-4);
    double row_sum = 0;
    for (float v : nb.dx.data) row_sum += v;
    CHECK(std::fabs(row_sum) < 1e-5);
  }
  const Matrix x = oracle::random_matrix(rng, 2, 5);
  const FusedLinearState s = rms_norm_fwd(x, kBitLinearEps);
  for (float v : rms_norm_bwd(Matrix(2, 5), x, s.mu, s.sigma2, s.r).dx.data) CHECK(v == 0.0f);
  CHECK_THROWS_AS(rms_norm_bwd(Matrix(3, 5), x, s.mu, s.sigma2, s.r), Error);
}

TEST_CASE("backward matches finite differences of the relaxed forward") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3 + trial % 3, k = 2 + trial % 2, t = 1 + trial % 3;
    BitLinearLayer layer = random_layer(rng, n, k);
    layer.mode = QuantMode::Relaxed;
    const Matrix x = oracle::random_matrix(rng, t, n);
    const Matrix d_out = oracle::random_matrix(rng, t, k);
    const LinearOutput fw = forward(layer, x);
    const LinearBackward bw = backward(layer, fw.state, x, d_out);

    oracle::Mat xd = oracle::from_matrix(x), wd = oracle::from_matrix(layer.master());
    oracle::Vec bd(layer.bias().begin(), layer.bias().end());
    const oracle::Mat r = oracle::from_matrix(d_out);
    auto loss = [&] { return relaxed_loss(xd, wd, bd, r); };
    CHECK(oracle::rel_err_inf(bw.dx.data, oracle::finite_diff(xd.v, loss)) < 1e-3);
    CHECK(oracle::rel_err_inf(bw.grads.dw.data, oracle::finite_diff(wd.v, loss)) < 1e-3);
    CHECK(oracle::rel_err_inf(bw.grads.db, oracle::finite_diff(bd, loss)) < 1e-3);

    for (std::size_t c = 0; c < k; ++c) {
      float sum = 0;
      for (std::size_t i = 0; i < t; ++i) sum += d_out(i, c);
      CHECK(bw.grads.db[c] == doctest::Approx(sum));
    }
  }
}

TEST_CASE("zero upstream gradient gives zero gradients") {
  std::mt19937_64 rng(2);
  BitLinearLayer layer = random_layer(rng, 5, 3);
  const Matrix x = oracle::random_matrix(rng, 2, 5);
  const LinearOutput fw = forward(layer, x);
  const LinearBackward bw = backward(layer, fw.state, x, Matrix(2, 3));
  for (float v : bw.dx.data) CHECK(v == 0.0f);
  for (float v : bw.grads.dw.data) CHECK(v == 0.0f);
  for (float v : bw.grads.db) CHECK(v == 0.0f);
  CHECK_THROWS_AS(backward(layer, fw.state, x, Matrix(2, 4)), Error);
}

TEST_CASE("layer validation") {
  CHECK_THROWS_AS(BitLinearLayer(Matrix(2, 3, 1.0f), std::vector<float>(2)), Error);
  CHECK_THROWS_AS(BitLinearLayer(Matrix(2, 3, 1.0f), std::vector<float>(3), 0.0f), Error);
  CHECK_THROWS_AS(BitLinearLayer(Matrix(2, 3), std::vector<float>(3)), Error);
  BitLinearLayer inf = BitLinearLayer::from_ternary(TernaryMatrix::identity(3), std::vector<float>(3));
  inf.mode = QuantMode::Relaxed;
  CHECK_THROWS_AS(forward(inf, Matrix(1, 3, 1.0f)), Error);
}
