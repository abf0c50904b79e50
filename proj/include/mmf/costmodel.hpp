#pragma once

// Analytic throughput and energy model of a pipelined multi-chip
// deployment, and the op/memory comparison against causal self-attention.

#include <cstdint>
#include <string>
#include <string_view>

namespace mmf {

struct HardwareProfile {
  double t_tps = 0.0;  // seconds per pipeline step
  double n_blocks = 0.0;
  double n_steps_per_block = 0.0;
  double p_static = 0.0;   // watts per chip
  double p_dynamic = 0.0;  // watts per chip
  double slowdown = 1.2;   // inter-chip communication penalty

  void validate() const;
  /// Same profile with a different slowdown.
  [[nodiscard]] HardwareProfile with_slowdown(double s) const;
};

/// Calibrated so the single-chip rates are 13965 tok/s prefill and
/// 71.3 tok/s generation, at 2.8 mJ and 59 mJ per token.
HardwareProfile loihi_370m_profile();
HardwareProfile preset_profile(std::string_view name);

/// Keys: t_tps, n_blocks, n_steps_per_block, p_static, p_dynamic, slowdown.
HardwareProfile profile_from_json(const std::string& text);
std::string profile_to_json(const HardwareProfile& p);

enum class Phase { Prefill, Generate };

double prefill_throughput(const HardwareProfile& p);
double generate_throughput(const HardwareProfile& p);
/// Seconds until one token has passed through every block.
double time_to_first_token(const HardwareProfile& p);
double energy_per_token(const HardwareProfile& p, Phase phase);

struct ComplexityReport {
  std::uint64_t seq_len = 0;
  double attention_ops = 0.0;  // sum_t t * d_attn
  double mlgru_ops = 0.0;      // c * d * T
  double attention_memory = 0.0;  // cached keys/values: T * d_attn
  double mlgru_memory = 0.0;      // recurrent state: d
  double projection_ops = 0.0;    // d_model^2 per token, common to both
  [[nodiscard]] double op_ratio() const { return attention_ops / mlgru_ops; }
};

ComplexityReport complexity_compare(std::uint64_t seq_len, std::uint64_t d_model, std::uint64_t d_attn,
                                    std::uint64_t d, double mlgru_ops_per_channel = 4.0);

}  // namespace mmf
