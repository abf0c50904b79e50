#include "mmf/norm.hpp"

#include <cmath>

#include "mmf/error.hpp"

namespace mmf {
namespace {

float inv_rms_of(std::span<const float> x, float eps) {
  double sq = 0.0;
  for (float v : x) sq += static_cast<double>(v) * v;
  return static_cast<float>(1.0 / std::sqrt(sq / static_cast<double>(x.size()) + eps));
}

}  // namespace

void rms_norm_row(std::span<const float> x, std::span<const float> gain, float eps, std::span<float> out) {
  if (gain.size() != x.size() || out.size() != x.size()) throw Error("rms_norm: dimension mismatch");
  const float inv = inv_rms_of(x, eps);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv * gain[i];
}

GainNormOutput rms_norm_gain_fwd(const Matrix& x, std::span<const float> gain, float eps) {
  if (gain.size() != x.cols) throw Error("rms_norm: gain length does not match width");
  GainNormOutput res{Matrix(x.rows, x.cols), std::vector<float>(x.rows)};
  for (std::size_t m = 0; m < x.rows; ++m) {
    const auto xr = x.row(m);
    const float inv = inv_rms_of(xr, eps);
    res.inv_rms[m] = inv;
    auto yr = res.y.row(m);
    for (std::size_t i = 0; i < x.cols; ++i) yr[i] = xr[i] * inv * gain[i];
  }
  return res;
}

GainNormBackward rms_norm_gain_bwd(const Matrix& dy, const Matrix& x, std::span<const float> gain,
                                   std::span<const float> inv_rms) {
  require_same_shape(dy, x, "rms_norm_gain_bwd");
  GainNormBackward res{Matrix(x.rows, x.cols), std::vector<float>(x.cols, 0.0f)};
  const auto n = static_cast<float>(x.cols);
  for (std::size_t m = 0; m < x.rows; ++m) {
    const auto xr = x.row(m);
    const auto dyr = dy.row(m);
    const float inv = inv_rms[m];
    // dx = inv * (w dy - x * inv^2 * mean(w dy x))
    float dot = 0.0f;
    for (std::size_t i = 0; i < x.cols; ++i) {
      dot += gain[i] * dyr[i] * xr[i];
      res.dgain[i] += dyr[i] * xr[i] * inv;
    }
    const float coef = inv * inv * inv * dot / n;
    auto dxr = res.dx.row(m);
    for (std::size_t i = 0; i < x.cols; ++i) dxr[i] = inv * gain[i] * dyr[i] - coef * xr[i];
  }
  return res;
}

}  // namespace mmf
