#include "mmf/mlgru.hpp"

#include <algorithm>
#include <bit>
#include <string>

#include "mmf/error.hpp"

namespace mmf {

void MLGRULayer::validate() const {
  const std::size_t d = proj_f.in_features();
  for (const BitLinearLayer* p : {&proj_f, &proj_c, &proj_g, &proj_o}) {
    if (p->in_features() != d || p->out_features() != d) throw Error("mlgru: projections must all be d x d");
  }
  if (!(forget_floor >= 0.0f && forget_floor < 1.0f)) throw Error("mlgru: forget floor must be in [0, 1)");
}

void MLGRULayer::set_mode(QuantMode mode) {
  proj_f.mode = mode;
  proj_c.mode = mode;
  proj_g.mode = mode;
  proj_o.mode = mode;
}

float forget_gate(float pre_activation, float floor) {
  return floor + (1.0f - floor) * sigmoid(pre_activation);
}

void step(const MLGRULayer& layer, std::span<const float> x, RecurrentState& state, std::span<float> out) {
  const std::size_t d = layer.width();
  if (x.size() != d || out.size() != d || state.h.size() != d) throw Error("mlgru step: dimension mismatch");
  std::vector<float> pf(d), pc(d), g(d), op(d);
  forward_row(layer.proj_f, x, pf);
  forward_row(layer.proj_c, x, pc);
  forward_row(layer.proj_g, x, g);
  for (std::size_t i = 0; i < d; ++i) {
    const float f = forget_gate(pf[i], layer.forget_floor);
    const float c = silu(pc[i]);
    state.h[i] = f * state.h[i] + (1.0f - f) * c;
    op[i] = g[i] * sigmoid(state.h[i]);
  }
  forward_row(layer.proj_o, op, out);
}

Matrix forward_sequence(const MLGRULayer& layer, const Matrix& x, RecurrentState* state) {
  const std::size_t d = layer.width();
  if (x.cols != d) throw Error("mlgru forward_sequence: input width mismatch");
  RecurrentState local(d);
  RecurrentState& st = state != nullptr ? *state : local;
  if (st.h.size() != d) throw Error("mlgru forward_sequence: state width mismatch");
  Matrix out(x.rows, d);
  for (std::size_t t = 0; t < x.rows; ++t) step(layer, x.row(t), st, out.row(t));
  return out;
}

namespace {

// (a1, b1) then (a2, b2)  ->  (a1 a2, a2 b1 + b2), elementwise over d.
void compose_into(std::span<const float> a1, std::span<const float> b1, std::span<float> a2, std::span<float> b2) {
  for (std::size_t i = 0; i < a2.size(); ++i) {
    b2[i] = a2[i] * b1[i] + b2[i];
    a2[i] = a1[i] * a2[i];
  }
}

}  // namespace

void affine_scan(Matrix& a, Matrix& b, std::size_t chunk) {
  require_same_shape(a, b, "affine_scan");
  if (chunk == 0) throw Error("affine_scan: chunk must be positive");
  const std::size_t steps = a.rows;
  const std::size_t d = a.cols;
  if (steps == 0) return;

  // 1. Local inclusive prefixes inside each chunk.
  const std::size_t n_chunks = (steps + chunk - 1) / chunk;
  for (std::size_t k = 0; k < n_chunks; ++k) {
    const std::size_t begin = k * chunk;
    const std::size_t end = std::min(steps, begin + chunk);
    for (std::size_t t = begin + 1; t < end; ++t) compose_into(a.row(t - 1), b.row(t - 1), a.row(t), b.row(t));
  }

  // 2. Exclusive Blelloch scan over the chunk aggregates (last row of each
  //    chunk), padded to a power of two with the identity map (1, 0).
  const std::size_t padded = std::bit_ceil(n_chunks);
  Matrix agg_a(padded, d, 1.0f);
  Matrix agg_b(padded, d, 0.0f);
  for (std::size_t k = 0; k < n_chunks; ++k) {
    const std::size_t last = std::min(steps, (k + 1) * chunk) - 1;
    std::copy_n(a.row(last).begin(), d, agg_a.row(k).begin());
    std::copy_n(b.row(last).begin(), d, agg_b.row(k).begin());
  }
  for (std::size_t s = 1; s < padded; s *= 2) {
    for (std::size_t i = 2 * s - 1; i < padded; i += 2 * s) {
      compose_into(agg_a.row(i - s), agg_b.row(i - s), agg_a.row(i), agg_b.row(i));
    }
  }
  std::fill_n(agg_a.row(padded - 1).begin(), d, 1.0f);
  std::fill_n(agg_b.row(padded - 1).begin(), d, 0.0f);
  std::vector<float> left_a(d), left_b(d);
  for (std::size_t s = padded / 2; s >= 1; s /= 2) {
    for (std::size_t i = 2 * s - 1; i < padded; i += 2 * s) {
      // left <- prefix; node <- prefix then left subtree
      std::copy_n(agg_a.row(i - s).begin(), d, left_a.begin());
      std::copy_n(agg_b.row(i - s).begin(), d, left_b.begin());
      std::copy_n(agg_a.row(i).begin(), d, agg_a.row(i - s).begin());
      std::copy_n(agg_b.row(i).begin(), d, agg_b.row(i - s).begin());
      std::copy_n(left_a.begin(), d, agg_a.row(i).begin());
      std::copy_n(left_b.begin(), d, agg_b.row(i).begin());
      compose_into(agg_a.row(i - s), agg_b.row(i - s), agg_a.row(i), agg_b.row(i));
    }
  }

  // 3. Prepend each chunk's exclusive prefix.
  for (std::size_t k = 1; k < n_chunks; ++k) {
    const std::size_t begin = k * chunk;
    const std::size_t end = std::min(steps, begin + chunk);
    for (std::size_t t = begin; t < end; ++t) compose_into(agg_a.row(k), agg_b.row(k), a.row(t), b.row(t));
  }
}

Matrix forward_scan(const MLGRULayer& layer, const Matrix& x, RecurrentState* state) {
  const std::size_t d = layer.width();
  if (x.cols != d) throw Error("mlgru forward_scan: input width mismatch");
  if (state != nullptr && state->h.size() != d) throw Error("mlgru forward_scan: state width mismatch");
  if (x.rows == 0) return Matrix(0, d);
  Matrix a = forward(layer.proj_f, x).out;
  Matrix b = forward(layer.proj_c, x).out;
  const Matrix g = forward(layer.proj_g, x).out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const float f = forget_gate(a.data[i], layer.forget_floor);
    b.data[i] = (1.0f - f) * silu(b.data[i]);
    a.data[i] = f;
  }
  if (state != nullptr) {
    // Fold a non-zero initial state into the first map.
    for (std::size_t i = 0; i < d; ++i) b(0, i) += a(0, i) * state->h[i];
  }
  affine_scan(a, b);
  Matrix op(x.rows, d);
  for (std::size_t i = 0; i < op.size(); ++i) op.data[i] = g.data[i] * sigmoid(b.data[i]);
  if (state != nullptr) std::copy_n(b.row(x.rows - 1).begin(), d, state->h.begin());
  return forward(layer.proj_o, op).out;
}

MLGRUCache forward_train(const MLGRULayer& layer, const Matrix& x) {
  const std::size_t d = layer.width();
  if (x.cols != d) throw Error("mlgru forward_train: input width mismatch");
  MLGRUCache cache;
  cache.x = x;
  LinearOutput lf = forward(layer.proj_f, x);
  LinearOutput lc = forward(layer.proj_c, x);
  LinearOutput lg = forward(layer.proj_g, x);
  cache.state_f = std::move(lf.state);
  cache.state_c = std::move(lc.state);
  cache.state_g = std::move(lg.state);
  cache.pre_f = std::move(lf.out);
  cache.pre_c = std::move(lc.out);
  cache.g = std::move(lg.out);
  const std::size_t steps = x.rows;
  cache.f = Matrix(steps, d);
  cache.c = Matrix(steps, d);
  cache.h = Matrix(steps, d);
  cache.sig_h = Matrix(steps, d);
  cache.o_prime = Matrix(steps, d);
  std::vector<float> h(d, 0.0f);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < d; ++i) {
      const float f = forget_gate(cache.pre_f(t, i), layer.forget_floor);
      const float c = silu(cache.pre_c(t, i));
      h[i] = f * h[i] + (1.0f - f) * c;
      cache.f(t, i) = f;
      cache.c(t, i) = c;
      cache.h(t, i) = h[i];
      cache.sig_h(t, i) = sigmoid(h[i]);
      cache.o_prime(t, i) = cache.g(t, i) * cache.sig_h(t, i);
    }
  }
  LinearOutput lo = forward(layer.proj_o, cache.o_prime);
  cache.state_o = std::move(lo.state);
  cache.out = std::move(lo.out);
  return cache;
}

MLGRUBackward backward_sequence(const MLGRULayer& layer, const MLGRUCache& cache, const Matrix& d_out) {
  const std::size_t d = layer.width();
  if (cache.x.rows != d_out.rows || cache.h.rows != d_out.rows || cache.x.cols != d) {
    throw Error("mlgru backward_sequence: missing or mismatched forward cache");
  }
  if (d_out.cols != d) throw Error("mlgru backward_sequence: gradient width mismatch");
  const std::size_t steps = d_out.rows;

  LinearBackward bo = backward(layer.proj_o, cache.state_o, cache.o_prime, d_out);
  const Matrix& d_op = bo.dx;

  Matrix d_pre_f(steps, d), d_pre_c(steps, d), d_g(steps, d);
  std::vector<float> carry(d, 0.0f);
  const float gate_span = 1.0f - layer.forget_floor;
  for (std::size_t t = steps; t-- > 0;) {
    for (std::size_t i = 0; i < d; ++i) {
      const float sh = cache.sig_h(t, i);
      d_g(t, i) = d_op(t, i) * sh;
      const float dh = d_op(t, i) * cache.g(t, i) * sh * (1.0f - sh) + carry[i];
      const float h_prev = t > 0 ? cache.h(t - 1, i) : 0.0f;
      const float f = cache.f(t, i);
      const float df = dh * (h_prev - cache.c(t, i));
      const float dc = dh * (1.0f - f);
      carry[i] = dh * f;
      const float sf = sigmoid(cache.pre_f(t, i));
      d_pre_f(t, i) = df * gate_span * sf * (1.0f - sf);
      d_pre_c(t, i) = dc * silu_grad(cache.pre_c(t, i));
    }
  }

  LinearBackward bf = backward(layer.proj_f, cache.state_f, cache.x, d_pre_f);
  LinearBackward bc = backward(layer.proj_c, cache.state_c, cache.x, d_pre_c);
  LinearBackward bg = backward(layer.proj_g, cache.state_g, cache.x, d_g);

  MLGRUBackward res;
  res.dx = std::move(bf.dx);
  for (std::size_t i = 0; i < res.dx.size(); ++i) res.dx.data[i] += bc.dx.data[i] + bg.dx.data[i];
  res.grads.f = std::move(bf.grads);
  res.grads.c = std::move(bc.grads);
  res.grads.g = std::move(bg.grads);
  res.grads.o = std::move(bo.grads);
  return res;
}

}  // namespace mmf
