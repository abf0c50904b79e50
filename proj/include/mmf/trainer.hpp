#pragma once

// Toy-scale training: cross-entropy next-token loss, straight-through
// gradients, plain SGD on the full-precision masters with global-norm
// clipping, and a cosine schedule that is halved at the midpoint.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "mmf/model.hpp"

namespace mmf {

struct TrainConfig {
  double lr0 = 4e-3;
  std::size_t steps = 2000;
  std::size_t batch = 4;
  std::size_t seq_len = 16;
  std::uint64_t seed = 0;
  /// Global gradient-norm limit; 0 disables clipping.
  double clip = 1.0;
  /// Stop once the loss is below this value (0: run every step).
  double target_loss = 0.0;

  void validate() const;
};

/// Cosine decay from lr0 to 0.1 lr0 over `steps`, times 0.5 from steps/2 on.
double lr_at(const TrainConfig& config, std::size_t step);

struct Batch {
  std::vector<std::vector<std::int32_t>> inputs;
  std::vector<std::vector<std::int32_t>> targets;
};

/// Windows drawn from the corpus; a pure function of (seed, step) so a
/// resumed run sees the same data.
Batch sample_batch(std::span<const std::int32_t> corpus, const TrainConfig& config, std::size_t step);

/// Mean cross-entropy over all predicted tokens (nats). When grads is given,
/// it receives d loss / d params.
double batch_loss(const Model& model, const Batch& batch, ModelGrads* grads = nullptr);

/// Global L2 norm of a gradient set.
double grad_norm(ModelGrads& grads);

/// One SGD step; returns the loss before the update. Throws on a non-finite
/// loss or gradient.
double train_step(Model& model, const Batch& batch, double lr, double clip);

struct LossPoint {
  std::size_t step;
  double lr;
  double loss;
};

struct TrainResult {
  std::vector<LossPoint> curve;
  std::size_t next_step = 0;
  bool reached_target = false;
};

using StepCallback = std::function<void(const LossPoint&)>;

/// Trains from `start_step` (for resuming) until config.steps or the target
/// loss. Throws if the corpus is shorter than seq_len + 1 bytes.
TrainResult train_toy(Model& model, std::span<const std::int32_t> corpus, const TrainConfig& config,
                      std::size_t start_step = 0, const StepCallback& on_step = {});

void write_loss_csv(const std::filesystem::path& path, std::span<const LossPoint> curve, bool append = false);

/// Model checkpoint plus a "trainer.step" record.
void save_training_state(const std::filesystem::path& path, const Model& model, std::size_t next_step);

struct TrainingState {
  Model model;
  std::size_t next_step = 0;
};

TrainingState load_training_state(const std::filesystem::path& path);

}  // namespace mmf
