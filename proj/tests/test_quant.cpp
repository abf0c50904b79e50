#include <doctest.h>

#include <random>

#include "mmf/error.hpp"
#include "mmf/quant.hpp"
#include "oracle.hpp"

using namespace mmf;

TEST_CASE("weight_quant worked example") {
  Matrix w(2, 2);
  w.data = {0.3f, -0.6f, 0.9f, 0.0f};
  const TernaryMatrix q = weight_quant(w);
  CHECK(q.unpack() == std::vector<std::int8_t>{1, -1, 1, 0});
  CHECK(q.scale() == doctest::Approx(0.45).epsilon(1e-6));
}

TEST_CASE("weight_quant on already ternary values") {
  Matrix w(1, 2);
  w.data = {1.0f, -1.0f};
  const TernaryMatrix q = weight_quant(w);
  CHECK(q.unpack() == std::vector<std::int8_t>{1, -1});
  CHECK(q.scale() == 1.0f);
}

TEST_CASE("weight_quant matches a scalar-loop oracle") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix w = oracle::random_matrix(rng, 8, 8);
    double mean = 0;
    for (float v : w.data) mean += std::fabs(v);
    mean /= 64.0;
    const Matrix deq = weight_quant(w).dequantize();
    for (std::size_t i = 0; i < 64; ++i) {
      const double code = std::clamp(oracle::round_half_away(w.data[i] / mean), -1.0, 1.0);
      CHECK(deq.data[i] == doctest::Approx(code * mean).epsilon(1e-6));
      CHECK((deq.data[i] == 0.0f || std::fabs(std::fabs(deq.data[i]) - mean) < 1e-6));
    }
  }
}

TEST_CASE("weight_quant rejects degenerate input") {
  CHECK_THROWS_WITH_AS(weight_quant(Matrix(3, 3)), doctest::Contains("degenerate"), Error);
  Matrix w(1, 1);
  w.data[0] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(weight_quant(w), Error);
}

TEST_CASE("activation_quant examples") {
  const std::vector<float> x{1.0f, -2.0f, 0.5f};
  const QuantizedActivation q = activation_quant(x);
  CHECK(q.scale == 63.5f);
  CHECK(q.values == std::vector<std::int8_t>{64, -127, 32});

  const std::vector<float> one{127.0f};
  const QuantizedActivation q1 = activation_quant(one);
  CHECK(q1.scale == 1.0f);
  CHECK(q1.values == std::vector<std::int8_t>{127});

  const std::vector<float> zeros{0.0f, 0.0f};
  const QuantizedActivation q0 = activation_quant(zeros);
  CHECK(q0.scale == 1.0f);
  CHECK(q0.values == std::vector<std::int8_t>{0, 0});
}

TEST_CASE("round half away from zero") {
  CHECK(round_half_away(0.5f) == 1.0f);
  CHECK(round_half_away(-0.5f) == -1.0f);
  CHECK(round_half_away(1.5) == 2.0);
  CHECK(round_half_away(-2.5) == -3.0);
  CHECK(round_half_away(0.49f) == 0.0f);
}

TEST_CASE("packing round-trips and rejects invalid streams") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> pick(-1, 1);
  for (std::size_t cols : {1u, 3u, 4u, 5u, 9u}) {
    std::vector<std::int8_t> v(3 * cols);
    for (auto& x : v) x = static_cast<std::int8_t>(pick(rng));
    const TernaryMatrix a = TernaryMatrix::from_values(3, cols, v, 0.25f);
    CHECK(a.unpack() == v);
    const TernaryMatrix b = TernaryMatrix::from_packed(3, cols, a.packed(), 0.25f);
    CHECK(b.packed() == a.packed());
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < cols; ++c) CHECK(a.at(r, c) == v[r * cols + c]);
  }
  // First entry sits in the low bits.
  const std::vector<std::int8_t> v{1, -1, 0, 1};
  CHECK(TernaryMatrix::from_values(1, 4, v, 1.0f).packed() == std::vector<std::uint8_t>{0b01'00'10'01});
  CHECK_THROWS_AS(TernaryMatrix::from_packed(1, 4, {0b11}, 1.0f), Error);
  CHECK_THROWS_AS(TernaryMatrix::from_packed(1, 3, {0b01'000000}, 1.0f), Error);  // padding must be zero
  CHECK_THROWS_AS(TernaryMatrix::from_values(1, 1, std::vector<std::int8_t>{2}, 1.0f), Error);
  CHECK_THROWS_AS(TernaryMatrix::from_values(1, 1, std::vector<std::int8_t>{1}, 0.0f), Error);
}

TEST_CASE("ternary_matvec basics") {
  const std::vector<std::int8_t> zero(6, 0);
  const TernaryMatrix z = TernaryMatrix::from_values(2, 3, zero, 1.0f);
  CHECK(ternary_matvec(std::vector<float>{1, 2}, z) == std::vector<float>{0, 0, 0});
  CHECK_THROWS_AS(ternary_matvec(std::vector<float>{1, 2, 3}, z), Error);

  std::mt19937_64 rng(2);
  const TernaryMatrix w = weight_quant(oracle::random_matrix(rng, 16, 8));
  std::vector<float> x(16), ax(16);
  std::normal_distribution<float> nd;
  for (std::size_t i = 0; i < 16; ++i) {
    x[i] = nd(rng);
    ax[i] = 4.0f * x[i];
  }
  const auto a = ternary_matvec(x, w);
  const auto b = ternary_matvec(ax, w);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == 4.0f * a[i]);  // power-of-two scaling is exact
}

TEST_CASE("zero_fraction") {
  const std::vector<std::int8_t> zero(12, 0);
  CHECK(zero_fraction(TernaryMatrix::from_values(3, 4, zero, 1.0f)) == 1.0);
  CHECK(zero_fraction(TernaryMatrix::identity(8)) == doctest::Approx((64.0 - 8.0) / 64.0));

  std::mt19937_64 rng(21);
  const TernaryMatrix w = weight_quant(oracle::random_matrix(rng, 64, 64));
  std::size_t zeros = 0;
  for (std::int8_t c : w.unpack()) zeros += c == 0;
  CHECK(zero_fraction(w) == doctest::Approx(zeros / 4096.0));
}
