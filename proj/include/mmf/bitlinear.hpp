#pragma once

// Fused normalization -> int8 activation quantization -> ternary linear
// layer, forward and backward. Gradients follow the straight-through
// estimator: both quantizers are treated as identity, and dY is formed with
// the full-precision master weights.

#include <span>
#include <vector>

#include "mmf/quant.hpp"
#include "mmf/tensor.hpp"

namespace mmf {

/// Ternary: the deployed graph. Relaxed: both quantizers replaced by the
/// identity, which is the smooth graph the STE gradients differentiate.
enum class QuantMode { Ternary, Relaxed };

inline constexpr float kBitLinearEps = 1e-6f;

/// Per-row statistics saved by forward for backward.
struct FusedLinearState {
  std::vector<float> mu;
  std::vector<float> sigma2;
  std::vector<float> r;  // 1 / sqrt(sigma2 + eps)
  Matrix y_tilde;        // dequantized quantized activations (relaxed: unquantized)
};

class BitLinearLayer {
 public:
  BitLinearLayer() = default;
  /// Trainable layer: master weights are in_features x out_features.
  BitLinearLayer(Matrix weight, std::vector<float> bias, float eps = kBitLinearEps);
  /// Inference-only layer without master weights.
  static BitLinearLayer from_ternary(TernaryMatrix weight, std::vector<float> bias, float eps = kBitLinearEps);

  [[nodiscard]] std::size_t in_features() const { return ternary_.rows(); }
  [[nodiscard]] std::size_t out_features() const { return ternary_.cols(); }
  [[nodiscard]] bool has_master() const { return !master_.empty(); }

  [[nodiscard]] const Matrix& master() const { return master_; }
  Matrix& master() { return master_; }
  [[nodiscard]] const std::vector<float>& bias() const { return bias_; }
  std::vector<float>& bias() { return bias_; }
  [[nodiscard]] const TernaryMatrix& ternary() const { return ternary_; }
  [[nodiscard]] float eps() const { return eps_; }

  /// Re-derives the ternary weights from the masters. Call after every
  /// master update; the ternary form is a pure function of the masters.
  void refresh();

  QuantMode mode = QuantMode::Ternary;

 private:
  Matrix master_;
  std::vector<float> bias_;
  TernaryMatrix ternary_;
  float eps_ = kBitLinearEps;
};

/// Mean-centred normalization with per-row statistics, followed by
/// activation_quant in Ternary mode.
FusedLinearState rms_norm_fwd(const Matrix& x, float eps, QuantMode mode = QuantMode::Ternary);

struct LinearOutput {
  Matrix out;
  FusedLinearState state;
};

/// O = Y~ (*) W~ + b, one row at a time.
LinearOutput forward(const BitLinearLayer& layer, const Matrix& x);

/// Single-row forward without saved state (generation path).
void forward_row(const BitLinearLayer& layer, std::span<const float> x, std::span<float> out);

struct NormBackward {
  Matrix dx;
  Matrix y_tilde;  // recomputed from x, mu, r
};

NormBackward rms_norm_bwd(const Matrix& dy, const Matrix& x, std::span<const float> mu,
                          std::span<const float> sigma2, std::span<const float> r,
                          QuantMode mode = QuantMode::Ternary);

struct LinearGrads {
  Matrix dw;  // in_features x out_features
  std::vector<float> db;

  void accumulate(const LinearGrads& other);
};

struct LinearBackward {
  Matrix dx;
  LinearGrads grads;
};

LinearBackward backward(const BitLinearLayer& layer, const FusedLinearState& state, const Matrix& x,
                        const Matrix& d_out);

}  // namespace mmf
