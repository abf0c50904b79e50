#include "mmf/glu.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "mmf/error.hpp"

namespace mmf {

std::size_t glu_width(std::size_t d) {
  if (d == 0) return 0;
  const double scaled = std::round(8.0 * static_cast<double>(d) / 3.0);
  const auto l = static_cast<std::size_t>(8.0 * std::round(scaled / 8.0));
  return std::max<std::size_t>(l, 8);
}

std::size_t glu_param_count(std::size_t d) { return 3 * d * glu_width(d); }

void GLULayer::validate() const {
  const std::size_t d = proj_g.in_features();
  const std::size_t l = proj_g.out_features();
  if (proj_u.in_features() != d || proj_u.out_features() != l || proj_d.in_features() != l ||
      proj_d.out_features() != d) {
    throw Error("glu: inconsistent projection shapes");
  }
}

void GLULayer::set_mode(QuantMode mode) {
  proj_g.mode = mode;
  proj_u.mode = mode;
  proj_d.mode = mode;
}

void forward_row(const GLULayer& layer, std::span<const float> x, std::span<float> out) {
  if (x.size() != layer.width() || out.size() != layer.width()) throw Error("glu forward: dimension mismatch");
  const std::size_t l = layer.hidden();
  std::vector<float> g(l), u(l);
  forward_row(layer.proj_g, x, g);
  forward_row(layer.proj_u, x, u);
  for (std::size_t i = 0; i < l; ++i) g[i] = silu(g[i]) * u[i];
  forward_row(layer.proj_d, g, out);
}

Matrix forward(const GLULayer& layer, const Matrix& x) {
  if (x.cols != layer.width()) throw Error("glu forward: dimension mismatch");
  Matrix out(x.rows, layer.width());
  for (std::size_t t = 0; t < x.rows; ++t) forward_row(layer, x.row(t), out.row(t));
  return out;
}

GLUCache forward_train(const GLULayer& layer, const Matrix& x) {
  if (x.cols != layer.width()) throw Error("glu forward: dimension mismatch");
  GLUCache cache;
  cache.x = x;
  LinearOutput lg = forward(layer.proj_g, x);
  LinearOutput lu = forward(layer.proj_u, x);
  cache.state_g = std::move(lg.state);
  cache.state_u = std::move(lu.state);
  cache.g = std::move(lg.out);
  cache.u = std::move(lu.out);
  cache.p = Matrix(x.rows, layer.hidden());
  for (std::size_t i = 0; i < cache.p.size(); ++i) cache.p.data[i] = silu(cache.g.data[i]) * cache.u.data[i];
  LinearOutput ld = forward(layer.proj_d, cache.p);
  cache.state_d = std::move(ld.state);
  cache.out = std::move(ld.out);
  return cache;
}

GLUBackward backward(const GLULayer& layer, const GLUCache& cache, const Matrix& d_out) {
  if (cache.x.rows != d_out.rows || d_out.cols != layer.width()) throw Error("glu backward: shape mismatch");
  LinearBackward bd = backward(layer.proj_d, cache.state_d, cache.p, d_out);
  Matrix dg(cache.g.rows, cache.g.cols), du(cache.u.rows, cache.u.cols);
  for (std::size_t i = 0; i < dg.size(); ++i) {
    const float dp = bd.dx.data[i];
    dg.data[i] = dp * cache.u.data[i] * silu_grad(cache.g.data[i]);
    du.data[i] = dp * silu(cache.g.data[i]);
  }
  LinearBackward bg = backward(layer.proj_g, cache.state_g, cache.x, dg);
  LinearBackward bu = backward(layer.proj_u, cache.state_u, cache.x, du);
  GLUBackward res;
  res.dx = std::move(bg.dx);
  for (std::size_t i = 0; i < res.dx.size(); ++i) res.dx.data[i] += bu.dx.data[i];
  res.grads.g = std::move(bg.grads);
  res.grads.u = std::move(bu.grads);
  res.grads.d = std::move(bd.grads);
  return res;
}

}  // namespace mmf
