#pragma once

// Binary checkpoint: a "TMLM" header with the model configuration followed
// by named tensor records. All integers little-endian.
//
//   magic[4] version:u32 layers:u32 width:u32 glu_width:u32 vocab:u32
//   seed:u64 flags:u32 count:u32
//   count x { name_len:u16 name kind:u8 rank:u8 dims:u64[rank]
//             payload_len:u64 payload }
//
// Ternary payloads are the packed codes followed by a float32 scale.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mmf/model.hpp"
#include "mmf/quant.hpp"

namespace mmf {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class TensorKind : std::uint8_t { Real32 = 0, Ternary = 1, Int8 = 2, Int16 = 3, Int32 = 4 };

namespace checkpoint_flags {
inline constexpr std::uint32_t kForgetFloor = 1u << 0;
/// Activation bits of a fixed-point model (0 for float checkpoints).
inline constexpr std::uint32_t kActBitsShift = 8;
inline constexpr std::uint32_t kActBitsMask = 0xffu << kActBitsShift;
}  // namespace checkpoint_flags

struct TensorRecord {
  std::string name;
  TensorKind kind = TensorKind::Real32;
  std::vector<std::uint64_t> shape;
  std::vector<std::uint8_t> payload;

  static TensorRecord real32(std::string name, std::vector<std::uint64_t> shape, std::span<const float> values);
  static TensorRecord ternary(std::string name, const TernaryMatrix& w);
  static TensorRecord integers(std::string name, TensorKind kind, std::vector<std::uint64_t> shape,
                               std::span<const std::int32_t> values);

  [[nodiscard]] std::uint64_t element_count() const;
  [[nodiscard]] std::vector<float> as_real32() const;
  [[nodiscard]] TernaryMatrix as_ternary() const;
  /// Int8/Int16/Int32 payloads widened to int32.
  [[nodiscard]] std::vector<std::int32_t> as_integers() const;
  /// Throws if the payload length disagrees with kind and shape.
  void validate() const;
};

struct Checkpoint {
  ModelConfig config;
  std::uint32_t flags = 0;
  std::vector<TensorRecord> records;

  void add(TensorRecord record);
  [[nodiscard]] const TensorRecord* try_find(const std::string& name) const;
  [[nodiscard]] const TensorRecord& find(const std::string& name) const;
};

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
Checkpoint deserialize(std::span<const std::uint8_t> bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Masters are written when present (the ternary form is re-derived on
/// load); inference-only layers are written packed.
Checkpoint to_checkpoint(const Model& model);
Model model_from_checkpoint(const Checkpoint& ckpt);

void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

}  // namespace mmf
