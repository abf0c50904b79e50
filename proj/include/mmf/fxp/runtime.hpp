#pragma once

// Integer inference path. Ternary weights are reused as they are; each
// layer's dequantization scale, biases and norm gains become power-of-two
// fixed-point tensors. Activations carry one exponent per vector, chosen
// on the fly, and all rescaling is done with shifts. Embedding and
// unembedding stay in real arithmetic.

#include <cstdint>
#include <span>
#include <vector>

#include "mmf/checkpoint.hpp"
#include "mmf/fxp/fixed_point.hpp"
#include "mmf/model.hpp"

namespace mmf::fxp {

/// W8A16 is the deployment setting; W8A8 exists for comparison only.
enum class Precision { W8A16, W8A8 };

int activation_bits(Precision p);
const char* precision_name(Precision p);
Precision parse_precision(std::string_view name);

struct FxpLinear {
  TernaryMatrix weight;
  FixedPointTensor scale;  // one int8 value; includes the sqrt(n) of the mean-form norm
  FixedPointTensor bias;
  std::int64_t mean_recip = 0;  // round(2^32 / in_features)
};

struct FxpMixer {
  FxpLinear f, c, g, o;
  std::int32_t floor_q15 = 0;
};

struct FxpChannel {
  FxpLinear g, u, d;
};

struct FxpBlock {
  FixedPointTensor norm1, norm2;
  FxpMixer mixer;
  FxpChannel channel;
};

struct QuantizedModel {
  ModelConfig config;
  Precision precision = Precision::W8A16;
  Matrix embed;
  Matrix unembed;
  std::vector<FxpBlock> blocks;
  FixedPointTensor final_norm;

  [[nodiscard]] int act_bits() const { return activation_bits(precision); }
};

FxpLinear quantize_linear(const BitLinearLayer& layer, int act_bits);
QuantizedModel quantize_model(const Model& model, Precision precision = Precision::W8A16);

class FxpSession {
 public:
  explicit FxpSession(const QuantizedModel& model);
  std::vector<float> step(std::int32_t token);
  [[nodiscard]] std::size_t state_bytes() const;

 private:
  const QuantizedModel* model_;
  std::vector<FixedPointTensor> h_;
};

/// logits (T x V), one token at a time.
Matrix run_fxp(const QuantizedModel& model, std::span<const std::int32_t> ids);
Matrix run_w8a16(const Model& model, std::span<const std::int32_t> ids);

std::vector<std::int32_t> generate_fxp(const QuantizedModel& model, std::span<const std::int32_t> prompt,
                                       std::size_t n);

struct MismatchReport {
  double mean_cosine = 0.0;
  double token_agreement = 0.0;  // fraction of positions with equal argmax
  std::size_t positions = 0;
};

MismatchReport compare_logits(std::span<const Matrix> reference, std::span<const Matrix> candidate);
MismatchReport measure_mismatch(const Model& model, const QuantizedModel& quantized,
                                std::span<const std::vector<std::int32_t>> prompts);

Checkpoint to_checkpoint(const QuantizedModel& model);
QuantizedModel quantized_from_checkpoint(const Checkpoint& ckpt);

}  // namespace mmf::fxp
