#pragma once

// Ternary gated linear unit channel mixer:
//   g = x W_g, u = x W_u, p = silu(g) * u, out = p W_d
// with W_g, W_u : d -> l and W_d : l -> d.

#include <cstddef>
#include <span>

#include "mmf/bitlinear.hpp"

namespace mmf {

/// GLU hidden width: 8d/3 rounded, then to the nearest multiple of 8
/// (at least 8 for d >= 1, so packed rows stay byte aligned).
std::size_t glu_width(std::size_t d);

/// Weight count 3 * d * l (biases excluded).
std::size_t glu_param_count(std::size_t d);

struct GLULayer {
  BitLinearLayer proj_g;
  BitLinearLayer proj_u;
  BitLinearLayer proj_d;

  [[nodiscard]] std::size_t width() const { return proj_g.in_features(); }
  [[nodiscard]] std::size_t hidden() const { return proj_g.out_features(); }
  void validate() const;
  void set_mode(QuantMode mode);
};

void forward_row(const GLULayer& layer, std::span<const float> x, std::span<float> out);
Matrix forward(const GLULayer& layer, const Matrix& x);

struct GLUCache {
  Matrix x;
  FusedLinearState state_g, state_u, state_d;
  Matrix g, u, p;
  Matrix out;
};

GLUCache forward_train(const GLULayer& layer, const Matrix& x);

struct GLUGrads {
  LinearGrads g, u, d;
};

struct GLUBackward {
  Matrix dx;
  GLUGrads grads;
};

GLUBackward backward(const GLULayer& layer, const GLUCache& cache, const Matrix& d_out);

}  // namespace mmf
