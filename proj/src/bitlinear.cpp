#include "mmf/bitlinear.hpp"

#include <cmath>
#include <string>

#include "mmf/error.hpp"
#include "mmf/kernels.hpp"

namespace mmf {
namespace {

struct RowStats {
  float mu;
  float sigma2;
  float r;
};

RowStats row_stats(std::span<const float> x, float eps) {
  double sum = 0.0;
  for (float v : x) {
    if (!std::isfinite(v)) throw Error("bitlinear: non-finite activation");
    sum += v;
  }
  const double n = static_cast<double>(x.size());
  const double mu = sum / n;
  double sq = 0.0;
  for (float v : x) sq += (v - mu) * (v - mu);
  const double sigma2 = sq / n;  // biased estimator
  return {static_cast<float>(mu), static_cast<float>(sigma2),
          static_cast<float>(1.0 / std::sqrt(sigma2 + static_cast<double>(eps)))};
}

void check_eps(float eps) {
  if (!(eps > 0.0f)) throw Error("bitlinear: eps must be positive");
}

// Normalizes one row into y (length N). In Ternary mode y holds the
// integer-valued int8 codes and the activation scale is returned; in Relaxed
// mode y holds r (x - mu) and the returned scale is 1.
float normalize_row(std::span<const float> x, const RowStats& st, QuantMode mode, std::span<float> y) {
  for (std::size_t j = 0; j < x.size(); ++j) y[j] = st.r * (x[j] - st.mu);
  if (mode == QuantMode::Relaxed) return 1.0f;
  const QuantizedActivation q = activation_quant(y);
  for (std::size_t j = 0; j < x.size(); ++j) y[j] = static_cast<float>(q.values[j]);
  return q.scale;
}

void project_row(const BitLinearLayer& layer, std::span<const float> y, float act_scale,
                 std::span<float> out) {
  const auto& k = kernels::active();
  if (layer.mode == QuantMode::Relaxed) {
    if (!layer.has_master()) throw Error("bitlinear: relaxed mode needs master weights");
    k.dense_f32(y.data(), layer.master().data.data(), layer.in_features(), layer.out_features(), out.data());
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += layer.bias()[c];
    return;
  }
  // Integer-valued inputs accumulate exactly; rescale once per output.
  k.ternary_f32(y.data(), layer.ternary().view(), out.data());
  const float rescale = layer.ternary().scale() / act_scale;
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = out[c] * rescale + layer.bias()[c];
}

}  // namespace

BitLinearLayer::BitLinearLayer(Matrix weight, std::vector<float> bias, float eps)
    : master_(std::move(weight)), bias_(std::move(bias)), eps_(eps) {
  check_eps(eps_);
  if (bias_.size() != master_.cols) throw Error("bitlinear: bias length does not match output width");
  refresh();
}

BitLinearLayer BitLinearLayer::from_ternary(TernaryMatrix weight, std::vector<float> bias, float eps) {
  check_eps(eps);
  if (bias.size() != weight.cols()) throw Error("bitlinear: bias length does not match output width");
  BitLinearLayer layer;
  layer.ternary_ = std::move(weight);
  layer.bias_ = std::move(bias);
  layer.eps_ = eps;
  return layer;
}

void BitLinearLayer::refresh() {
  if (!has_master()) throw Error("bitlinear: no master weights to quantize");
  ternary_ = weight_quant(master_);
}

FusedLinearState rms_norm_fwd(const Matrix& x, float eps, QuantMode mode) {
  check_eps(eps);
  FusedLinearState st;
  st.mu.resize(x.rows);
  st.sigma2.resize(x.rows);
  st.r.resize(x.rows);
  st.y_tilde = Matrix(x.rows, x.cols);
  for (std::size_t m = 0; m < x.rows; ++m) {
    const RowStats rs = row_stats(x.row(m), eps);
    st.mu[m] = rs.mu;
    st.sigma2[m] = rs.sigma2;
    st.r[m] = rs.r;
    auto y = st.y_tilde.row(m);
    const float s = normalize_row(x.row(m), rs, mode, y);
    if (mode == QuantMode::Ternary) {
      for (float& v : y) v /= s;
    }
  }
  return st;
}

LinearOutput forward(const BitLinearLayer& layer, const Matrix& x) {
  if (x.cols != layer.in_features()) {
    throw Error("bitlinear forward: input width " + std::to_string(x.cols) + " != " +
                std::to_string(layer.in_features()));
  }
  LinearOutput res;
  res.out = Matrix(x.rows, layer.out_features());
  auto& st = res.state;
  st.mu.resize(x.rows);
  st.sigma2.resize(x.rows);
  st.r.resize(x.rows);
  st.y_tilde = Matrix(x.rows, x.cols);
  for (std::size_t m = 0; m < x.rows; ++m) {
    const RowStats rs = row_stats(x.row(m), layer.eps());
    st.mu[m] = rs.mu;
    st.sigma2[m] = rs.sigma2;
    st.r[m] = rs.r;
    auto y = st.y_tilde.row(m);
    const float s = normalize_row(x.row(m), rs, layer.mode, y);
    project_row(layer, y, s, res.out.row(m));
    if (layer.mode == QuantMode::Ternary) {
      for (float& v : y) v /= s;
    }
  }
  return res;
}

void forward_row(const BitLinearLayer& layer, std::span<const float> x, std::span<float> out) {
  if (x.size() != layer.in_features() || out.size() != layer.out_features()) {
    throw Error("bitlinear forward_row: dimension mismatch");
  }
  std::vector<float> y(x.size());
  const RowStats rs = row_stats(x, layer.eps());
  const float s = normalize_row(x, rs, layer.mode, y);
  project_row(layer, y, s, out);
}

NormBackward rms_norm_bwd(const Matrix& dy, const Matrix& x, std::span<const float> mu,
                          std::span<const float> sigma2, std::span<const float> r, QuantMode mode) {
  require_same_shape(dy, x, "rms_norm_bwd");
  if (mu.size() != x.rows || sigma2.size() != x.rows || r.size() != x.rows) {
    throw Error("rms_norm_bwd: statistics do not match row count");
  }
  NormBackward res{Matrix(x.rows, x.cols), Matrix(x.rows, x.cols)};
  const auto n = static_cast<float>(x.cols);
  std::vector<float> centered(x.cols);
  for (std::size_t m = 0; m < x.rows; ++m) {
    const auto xr = x.row(m);
    const auto dyr = dy.row(m);
    const float rm = r[m];
    float mean_centered = 0.0f;
    for (std::size_t j = 0; j < x.cols; ++j) {
      centered[j] = xr[j] - mu[m];
      mean_centered += centered[j];
    }
    mean_centered /= n;

    auto yt = res.y_tilde.row(m);
    for (std::size_t j = 0; j < x.cols; ++j) yt[j] = rm * centered[j];
    if (mode == QuantMode::Ternary) {
      const QuantizedActivation q = activation_quant(yt);
      for (std::size_t j = 0; j < x.cols; ++j) yt[j] = static_cast<float>(q.values[j]) / q.scale;
    }

    float d_sigma2 = 0.0f;
    float sum_r_dy = 0.0f;
    for (std::size_t j = 0; j < x.cols; ++j) {
      d_sigma2 += dyr[j] * centered[j] * -0.5f * rm * rm * rm;
      sum_r_dy += -rm * dyr[j];
    }
    const float d_mu = sum_r_dy + d_sigma2 * mean_centered;
    auto dxr = res.dx.row(m);
    for (std::size_t j = 0; j < x.cols; ++j) {
      dxr[j] = rm * dyr[j] + 2.0f * d_sigma2 * centered[j] / n + d_mu / n;
    }
  }
  return res;
}

void LinearGrads::accumulate(const LinearGrads& other) {
  if (dw.empty()) {
    *this = other;
    return;
  }
  require_same_shape(dw, other.dw, "LinearGrads::accumulate");
  for (std::size_t i = 0; i < dw.size(); ++i) dw.data[i] += other.dw.data[i];
  for (std::size_t i = 0; i < db.size(); ++i) db[i] += other.db[i];
}

LinearBackward backward(const BitLinearLayer& layer, const FusedLinearState& state, const Matrix& x,
                        const Matrix& d_out) {
  if (!layer.has_master()) throw Error("bitlinear backward: layer has no master weights");
  if (x.cols != layer.in_features() || d_out.cols != layer.out_features() || d_out.rows != x.rows ||
      state.r.size() != x.rows) {
    throw Error("bitlinear backward: shape mismatch");
  }
  const std::size_t rows = x.rows;
  const std::size_t n_in = layer.in_features();
  const std::size_t n_out = layer.out_features();
  const Matrix& w = layer.master();

  Matrix dy(rows, n_in);
  for (std::size_t m = 0; m < rows; ++m) {
    const auto dor = d_out.row(m);
    auto dyr = dy.row(m);
    for (std::size_t n = 0; n < n_in; ++n) {
      const float* wr = w.data.data() + n * n_out;
      float acc = 0.0f;
      for (std::size_t k = 0; k < n_out; ++k) acc += dor[k] * wr[k];
      dyr[n] = acc;
    }
  }

  NormBackward nb = rms_norm_bwd(dy, x, state.mu, state.sigma2, state.r, layer.mode);

  LinearBackward res;
  res.dx = std::move(nb.dx);
  res.grads.dw = Matrix(n_in, n_out);
  res.grads.db.assign(n_out, 0.0f);
  for (std::size_t m = 0; m < rows; ++m) {
    const auto yr = nb.y_tilde.row(m);
    const auto dor = d_out.row(m);
    for (std::size_t n = 0; n < n_in; ++n) {
      const float yv = yr[n];
      if (yv == 0.0f) continue;
      float* dwr = res.grads.dw.data.data() + n * n_out;
      for (std::size_t k = 0; k < n_out; ++k) dwr[k] += yv * dor[k];
    }
    for (std::size_t k = 0; k < n_out; ++k) res.grads.db[k] += dor[k];
  }
  return res;
}

}  // namespace mmf
