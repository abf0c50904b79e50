#pragma once

// MatMul-free linear GRU token mixer:
//   f = sigmoid(x W_f + b_f)        c = silu(x W_c + b_c)
//   h = f * h_prev + (1 - f) * c    g = x W_g + b_g
//   o = (g * sigmoid(h)) W_o + b_o
// Every W is a BitLinear layer; everything else is elementwise, so the
// recurrence is linear in h and admits a parallel scan.

#include <span>
#include <vector>

#include "mmf/bitlinear.hpp"
#include "mmf/tensor.hpp"

namespace mmf {

struct MLGRULayer {
  BitLinearLayer proj_f;
  BitLinearLayer proj_c;
  BitLinearLayer proj_g;
  BitLinearLayer proj_o;
  /// Lower bound on the forget gate: f = floor + (1 - floor) * sigmoid(.).
  /// Zero reproduces the plain gate.
  float forget_floor = 0.0f;

  [[nodiscard]] std::size_t width() const { return proj_f.in_features(); }
  void validate() const;
  void set_mode(QuantMode mode);
};

/// The whole generation-time memory of one layer: d scalars.
struct RecurrentState {
  std::vector<float> h;

  RecurrentState() = default;
  explicit RecurrentState(std::size_t d) : h(d, 0.0f) {}
  [[nodiscard]] std::size_t bytes() const { return h.size() * sizeof(float); }
};

float forget_gate(float pre_activation, float floor);

/// One token. Writes o_t into out and advances state.
void step(const MLGRULayer& layer, std::span<const float> x, RecurrentState& state, std::span<float> out);

/// Token-by-token fold from `state` (zero state when null). Working memory
/// is O(d) apart from the output; `state` is left at h_T.
Matrix forward_sequence(const MLGRULayer& layer, const Matrix& x, RecurrentState* state = nullptr);

/// In-place inclusive scan of the affine maps h -> a_t * h + b_t composed
/// over time (rows), starting from h = 0. On return b holds h_t and a holds
/// the cumulative decay. Chunked: sequential inside chunks of `chunk` rows,
/// Blelloch up/down sweep over chunk aggregates, then a fix-up pass.
void affine_scan(Matrix& a, Matrix& b, std::size_t chunk = 32);

/// Same outputs as forward_sequence, computed with batched projections and
/// the parallel scan.
Matrix forward_scan(const MLGRULayer& layer, const Matrix& x, RecurrentState* state = nullptr);

/// Activations kept for backward_sequence.
struct MLGRUCache {
  Matrix x;
  FusedLinearState state_f, state_c, state_g, state_o;
  Matrix pre_f, pre_c;  // projection outputs before the nonlinearity
  Matrix f, c, g, h, sig_h;
  Matrix o_prime;
  Matrix out;
};

MLGRUCache forward_train(const MLGRULayer& layer, const Matrix& x);

struct MLGRUGrads {
  LinearGrads f, c, g, o;
};

struct MLGRUBackward {
  Matrix dx;
  MLGRUGrads grads;
};

/// Reverse-mode through the explicit recurrence (from h_0 = 0).
MLGRUBackward backward_sequence(const MLGRULayer& layer, const MLGRUCache& cache, const Matrix& d_out);

}  // namespace mmf
