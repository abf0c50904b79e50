#include <cmath>

#include "mmf/error.hpp"
#include "mmf/fxp/rmsnorm.hpp"

namespace mmf::fxp {

DoubleNormParams double_rmsnorm_params(std::span<const double> g1, std::span<const double> g2, double eps) {
  if (g1.size() != g2.size()) throw Error("double_rmsnorm_params: gain length mismatch");
  DoubleNormParams p;
  p.gain.resize(g1.size());
  p.eps.resize(g1.size());
  for (std::size_t i = 0; i < g1.size(); ++i) {
    const double denom = g1[i] * g1[i] + eps;
    p.gain[i] = denom > 0.0 ? g1[i] * g2[i] / std::sqrt(denom) : 0.0;
    p.eps[i] = denom > 0.0 ? eps * eps / denom : 0.0;
  }
  return p;
}

std::vector<double> rmsnorm_mean(std::span<const double> x, std::span<const double> g, double eps) {
  if (x.size() != g.size() || x.empty()) throw Error("rmsnorm_mean: size mismatch");
  double ms = 0.0;
  for (double v : x) ms += v * v;
  ms /= static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(ms + eps);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv * g[i];
  return out;
}

std::vector<double> double_rmsnorm_apply(std::span<const double> x, const DoubleNormParams& p) {
  if (x.size() != p.gain.size() || x.empty()) throw Error("double_rmsnorm_apply: size mismatch");
  double ms = 0.0;
  for (double v : x) ms += v * v;
  ms /= static_cast<double>(x.size());
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * p.gain[i] / std::sqrt(ms + p.eps[i]);
  return out;
}

}  // namespace mmf::fxp
