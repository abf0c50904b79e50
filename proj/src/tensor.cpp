#include "mmf/tensor.hpp"

#include <cmath>
#include <string>

#include "mmf/error.hpp"

namespace mmf {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows != b.rows || a.cols != b.cols) {
    throw Error(std::string(what) + ": shape mismatch (" + std::to_string(a.rows) + "x" +
                std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                std::to_string(b.cols) + ")");
  }
}

float sigmoid(float x) {
  if (x >= 0.0f) {
    return 1.0f / (1.0f + std::exp(-x));
  }
  const float e = std::exp(x);
  return e / (1.0f + e);
}

float silu(float x) { return x * sigmoid(x); }

float silu_grad(float x) {
  const float s = sigmoid(x);
  return s * (1.0f + x * (1.0f - s));
}

}  // namespace mmf
