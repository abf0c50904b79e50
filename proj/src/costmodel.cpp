#include "mmf/costmodel.hpp"

#include <cmath>
#include <algorithm>
#include <json.hpp>

#include "mmf/error.hpp"

namespace mmf {

void HardwareProfile::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw Error(std::string("hardware profile: ") + what + " must be positive");
  };
  positive(t_tps, "t_tps");
  positive(n_blocks, "n_blocks");
  positive(n_steps_per_block, "n_steps_per_block");
  if (!(p_static >= 0.0) || !(p_dynamic >= 0.0)) throw Error("hardware profile: power must be non-negative");
  if (!(slowdown >= 1.0) || !std::isfinite(slowdown)) throw Error("hardware profile: slowdown must be >= 1");
}

HardwareProfile HardwareProfile::with_slowdown(double s) const {
  HardwareProfile p = *this;
  p.slowdown = s;
  p.validate();
  return p;
}

HardwareProfile loihi_370m_profile() {
  constexpr double kPrefillRate = 13965.0;
  constexpr double kGenerateRate = 71.3;
  constexpr double kPrefillEnergy = 2.8e-3;
  constexpr double kGenerateEnergy = 59e-3;
  HardwareProfile p;
  p.t_tps = 1.0 / kPrefillRate;
  p.n_blocks = 24.0;
  p.n_steps_per_block = kPrefillRate / (p.n_blocks * kGenerateRate);
  // Prefill: all chips busy, E = N (Ps + Pd) T_tps.
  // Generate: one active chip, E = (Pd + N Ps) T_ttft.
  const double chip = kPrefillEnergy / (p.n_blocks * p.t_tps);
  const double t_ttft = 1.0 / kGenerateRate;
  p.p_static = (chip - kGenerateEnergy / t_ttft) / (1.0 - p.n_blocks);
  p.p_dynamic = chip - p.p_static;
  p.slowdown = 1.2;
  p.validate();
  return p;
}

HardwareProfile preset_profile(std::string_view name) {
  if (name == "loihi-370m") return loihi_370m_profile();
  throw Error("unknown hardware preset: " + std::string(name));
}

HardwareProfile profile_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("hardware profile: ") + e.what());
  }
  if (!j.is_object()) throw Error("hardware profile: expected a JSON object");
  static const char* kKeys[] = {"t_tps", "n_blocks", "n_steps_per_block", "p_static", "p_dynamic", "slowdown"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(kKeys), std::end(kKeys), key) == std::end(kKeys)) {
      throw Error("hardware profile: unknown key " + key);
    }
  }
  auto get = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_number()) throw Error(std::string("hardware profile: missing number ") + key);
    return j[key].get<double>();
  };
  HardwareProfile p;
  p.t_tps = get("t_tps");
  p.n_blocks = get("n_blocks");
  p.n_steps_per_block = get("n_steps_per_block");
  p.p_static = get("p_static");
  p.p_dynamic = get("p_dynamic");
  p.slowdown = j.contains("slowdown") ? get("slowdown") : 1.2;
  p.validate();
  return p;
}

std::string profile_to_json(const HardwareProfile& p) {
  nlohmann::json j = {{"t_tps", p.t_tps},       {"n_blocks", p.n_blocks},   {"n_steps_per_block", p.n_steps_per_block},
                      {"p_static", p.p_static}, {"p_dynamic", p.p_dynamic}, {"slowdown", p.slowdown}};
  return j.dump(2);
}

double prefill_throughput(const HardwareProfile& p) {
  p.validate();
  return 1.0 / (p.t_tps * p.slowdown);
}

double time_to_first_token(const HardwareProfile& p) {
  p.validate();
  return p.n_blocks * p.n_steps_per_block * p.t_tps * p.slowdown;
}

double generate_throughput(const HardwareProfile& p) { return 1.0 / time_to_first_token(p); }

double energy_per_token(const HardwareProfile& p, Phase phase) {
  p.validate();
  if (phase == Phase::Prefill) return p.n_blocks * (p.p_static + p.p_dynamic) * p.t_tps * p.slowdown;
  return (p.p_dynamic + p.n_blocks * p.p_static) * time_to_first_token(p);
}

ComplexityReport complexity_compare(std::uint64_t seq_len, std::uint64_t d_model, std::uint64_t d_attn,
                                    std::uint64_t d, double mlgru_ops_per_channel) {
  if (seq_len == 0 || d_attn == 0 || d == 0) throw Error("complexity_compare: sizes must be positive");
  if (!(mlgru_ops_per_channel > 0.0)) throw Error("complexity_compare: ops per channel must be positive");
  const auto T = static_cast<double>(seq_len);
  ComplexityReport r;
  r.seq_len = seq_len;
  r.attention_ops = static_cast<double>(d_attn) * T * (T + 1.0) / 2.0;
  r.mlgru_ops = mlgru_ops_per_channel * static_cast<double>(d) * T;
  r.attention_memory = T * static_cast<double>(d_attn);
  r.mlgru_memory = static_cast<double>(d);
  r.projection_ops = static_cast<double>(d_model) * static_cast<double>(d_model) * T;
  return r;
}

}  // namespace mmf
