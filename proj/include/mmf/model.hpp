#pragma once

// Full language model: byte embedding -> L blocks of
//   x += MLGRU(RMSNorm(x; w1));  x += GLU(RMSNorm(x; w2))
// -> final RMSNorm -> dense unembedding. Embedding and unembedding are
// ordinary real matrices; every other projection is a BitLinear layer.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmf/glu.hpp"
#include "mmf/mlgru.hpp"
#include "mmf/norm.hpp"

namespace mmf {

struct ModelConfig {
  std::uint32_t layers = 2;
  std::uint32_t width = 64;
  std::uint32_t glu_width = 168;
  std::uint32_t vocab = 258;
  std::uint64_t seed = 0;
  /// Depth-dependent lower bound on the forget gate (floor = layer / L).
  bool forget_floor = false;

  static ModelConfig toy(std::uint64_t seed = 0);
  /// L = 24, d = 1024 with a 32000-token vocabulary.
  static ModelConfig shape_370m(std::uint64_t seed = 0);
  /// "toy" or "370M-shape".
  static ModelConfig preset(std::string_view name, std::uint64_t seed = 0);

  void validate() const;
  /// All weights, biases, gains and both embedding matrices.
  [[nodiscard]] std::uint64_t parameter_count() const;

  bool operator==(const ModelConfig&) const = default;
};

struct Block {
  MLGRULayer mixer;
  GLULayer channel;
  std::vector<float> norm1;
  std::vector<float> norm2;
};

struct Model {
  ModelConfig config;
  Matrix embed;    // vocab x width
  std::vector<Block> blocks;
  std::vector<float> final_norm;
  Matrix unembed;  // width x vocab

  void set_mode(QuantMode mode);
  /// Re-derives every ternary matrix from its masters.
  void refresh();
  /// Bytes of recurrent state a generation session carries.
  [[nodiscard]] std::size_t state_bytes() const;
};

/// Random initialisation. Without masters only the ternary weights are
/// kept (inference-only; needed to fit the 370M shape in memory).
Model init_model(const ModelConfig& config, bool keep_masters = true);

/// Named dense tensors in a fixed order, shared with ModelGrads.
struct ParamRef {
  std::string name;
  std::span<float> values;
};

std::vector<ParamRef> parameters(Model& model);

struct NamedLinear {
  std::string name;
  BitLinearLayer* layer;
};

std::vector<NamedLinear> linear_layers(Model& model);

void check_tokens(const Model& model, std::span<const std::int32_t> ids);

/// logits (T x V). Layer-by-layer, sequential recurrence.
Matrix forward(const Model& model, std::span<const std::int32_t> ids);

struct PrefillResult {
  Matrix logits;
  std::vector<RecurrentState> states;
};

/// Batched prompt processing with the parallel scan; returns the per-layer
/// states to continue generation from. With all_logits false only the last
/// position is projected to the vocabulary (logits is 1 x V).
PrefillResult prefill(const Model& model, std::span<const std::int32_t> ids, bool all_logits = true);

/// Token-by-token decoding with O(L d) state.
class GenerationSession {
 public:
  explicit GenerationSession(const Model& model);
  GenerationSession(const Model& model, std::vector<RecurrentState> states);

  /// Feeds one token; returns the next-token logits.
  std::vector<float> step(std::int32_t token);
  [[nodiscard]] const std::vector<RecurrentState>& states() const { return states_; }
  [[nodiscard]] std::size_t state_bytes() const;

 private:
  const Model* model_;
  std::vector<RecurrentState> states_;
  std::vector<float> x_, a_, o_, z_;
};

struct Sampler {
  enum class Kind { Greedy, Temperature };
  Kind kind = Kind::Greedy;
  float temperature = 1.0f;
  std::uint64_t seed = 0;

  static Sampler greedy() { return {}; }
  static Sampler with_temperature(float tau, std::uint64_t seed) { return {Kind::Temperature, tau, seed}; }
};

std::int32_t argmax(std::span<const float> logits);

/// Prefills the prompt (BOS when empty) and samples n tokens.
std::vector<std::int32_t> generate(const Model& model, std::span<const std::int32_t> prompt, std::size_t n,
                                   const Sampler& sampler);

// ---- training ------------------------------------------------------------

struct BlockCache {
  Matrix x_in;
  GainNormOutput norm1;
  MLGRUCache mixer;
  Matrix x_mid;
  GainNormOutput norm2;
  GLUCache channel;
};

struct ModelCache {
  std::vector<std::int32_t> ids;
  std::vector<BlockCache> blocks;
  Matrix x_final;
  GainNormOutput norm_final;
  Matrix logits;
};

ModelCache forward_train(const Model& model, std::span<const std::int32_t> ids);

struct BlockGrads {
  MLGRUGrads mixer;
  GLUGrads channel;
  std::vector<float> norm1;
  std::vector<float> norm2;
};

struct ModelGrads {
  Matrix embed;
  std::vector<BlockGrads> blocks;
  std::vector<float> final_norm;
  Matrix unembed;

  void accumulate(const ModelGrads& other);
};

/// Same names and order as parameters(Model&).
std::vector<ParamRef> parameters(ModelGrads& grads);

ModelGrads backward(const Model& model, const ModelCache& cache, const Matrix& d_logits);

// ---- byte-level tokenizer ------------------------------------------------

inline constexpr std::int32_t kBosToken = 256;
inline constexpr std::int32_t kEosToken = 257;
inline constexpr std::uint32_t kByteVocab = 258;

std::vector<std::int32_t> encode_bytes(std::string_view text, bool add_bos);
/// Drops BOS/EOS and any id outside the byte range.
std::string decode_bytes(std::span<const std::int32_t> ids);

}  // namespace mmf
