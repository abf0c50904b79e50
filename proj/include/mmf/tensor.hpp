#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mmf {

/// Dense row-major float matrix. Rows are tokens (or input features for
/// weights stored as in x features out).
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, float fill = 0.0f) : rows(r), cols(c), data(r * c, fill) {}

  float& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<float> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const float> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  [[nodiscard]] bool empty() const { return data.empty(); }
  [[nodiscard]] std::size_t size() const { return data.size(); }
};

void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

// Small elementwise helpers shared by the float modules.
float sigmoid(float x);
float silu(float x);
/// d silu / dx
float silu_grad(float x);

}  // namespace mmf
