#include <cmath>

#include "eigen_view.hpp"
#include "poolformer/errors.hpp"
#include "poolformer/layers.hpp"

namespace poolformer::nn {

using detail::view;

CausalAttention CausalAttention::make(std::size_t d, std::size_t heads, bool multi_query,
                                      SeededRng& rng) {
  if (heads == 0 || d % heads != 0) {
    throw ArgumentError("attention: D=" + std::to_string(d) + " not divisible by H=" +
                        std::to_string(heads));
  }
  CausalAttention a;
  a.d = d;
  a.heads = heads;
  a.multi_query = multi_query;
  const double lecun = 1.0 / static_cast<double>(d);
  a.w_q = Parameter(gaussian_init(rng, {d, d}, lecun));
  a.w_k = Parameter(gaussian_init(rng, {d, a.kv_dim()}, lecun));
  a.w_v = Parameter(gaussian_init(rng, {d, a.kv_dim()}, lecun));
  a.w_o = Parameter(gaussian_init(rng, {d, d}, lecun));
  return a;
}

Tensor CausalAttention::forward(const Tensor& x, Cache* cache) const {
  if (x.rank() != 2 || x.cols() != d) throw ArgumentError("attention: bad input shape");
  const std::size_t steps = x.rows();
  const std::size_t dh = head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor q = matmul(x, w_q.value);
  Tensor k = matmul(x, w_k.value);
  Tensor v = matmul(x, w_v.value);
  Tensor o({steps, d});
  std::vector<Tensor> probs;
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t qoff = h * dh;
    const std::size_t kvoff = multi_query ? 0 : h * dh;
    Tensor p({steps, steps});
    for (std::size_t i = 0; i < steps; ++i) {
      double mx = -INFINITY;
      for (std::size_t j = 0; j <= i; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += q.at(i, qoff + c) * k.at(j, kvoff + c);
        p.at(i, j) = s * scale;
        mx = std::max(mx, p.at(i, j));
      }
      double z = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        p.at(i, j) = std::exp(p.at(i, j) - mx);
        z += p.at(i, j);
      }
      for (std::size_t j = 0; j <= i; ++j) {
        p.at(i, j) /= z;
        for (std::size_t c = 0; c < dh; ++c) o.at(i, qoff + c) += p.at(i, j) * v.at(j, kvoff + c);
      }
    }
    if (cache) probs.push_back(std::move(p));
  }
  Tensor y = matmul(o, w_o.value);
  if (cache) {
    cache->x = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->o = std::move(o);
    cache->probs = std::move(probs);
  }
  return y;
}

Tensor CausalAttention::backward(const Cache& c, const Tensor& dy) {
  const std::size_t steps = c.x.rows();
  const std::size_t dh = head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  view(w_o.grad).noalias() += view(c.o).transpose() * view(dy);
  const Tensor d_o = matmul(dy, transpose(w_o.value));
  Tensor dq({steps, d});
  Tensor dk({steps, kv_dim()});
  Tensor dv({steps, kv_dim()});
  std::vector<double> dp(steps);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t qoff = h * dh;
    const std::size_t kvoff = multi_query ? 0 : h * dh;
    const Tensor& p = c.probs[h];
    for (std::size_t i = 0; i < steps; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        double s = 0.0;
        for (std::size_t cc = 0; cc < dh; ++cc) {
          s += d_o.at(i, qoff + cc) * c.v.at(j, kvoff + cc);
          dv.at(j, kvoff + cc) += p.at(i, j) * d_o.at(i, qoff + cc);
        }
        dp[j] = s;
        row += s * p.at(i, j);
      }
      for (std::size_t j = 0; j <= i; ++j) {
        const double ds = p.at(i, j) * (dp[j] - row) * scale;
        for (std::size_t cc = 0; cc < dh; ++cc) {
          dq.at(i, qoff + cc) += ds * c.k.at(j, kvoff + cc);
          dk.at(j, kvoff + cc) += ds * c.q.at(i, qoff + cc);
        }
      }
    }
  }
  const auto xv = view(c.x);
  view(w_q.grad).noalias() += xv.transpose() * view(dq);
  view(w_k.grad).noalias() += xv.transpose() * view(dk);
  view(w_v.grad).noalias() += xv.transpose() * view(dv);
  Tensor dx({steps, d});
  auto dxv = view(dx);
  dxv.noalias() = view(dq) * view(w_q.value).transpose();
  dxv.noalias() += view(dk) * view(w_k.value).transpose();
  dxv.noalias() += view(dv) * view(w_v.value).transpose();
  return dx;
}

void CausalAttention::visit_params(const ParamVisitor& visit, const std::string& prefix) {
  visit(join_name(prefix, "w_q"), w_q);
  visit(join_name(prefix, "w_k"), w_k);
  visit(join_name(prefix, "w_v"), w_v);
  visit(join_name(prefix, "w_o"), w_o);
}

std::vector<double> CausalAttention::step(std::span<const double> x, State& state) const {
  const Tensor xr({1, d}, std::vector<double>(x.begin(), x.end()));
  const Tensor q = matmul(xr, w_q.value);
  const Tensor k = matmul(xr, w_k.value);
  const Tensor v = matmul(xr, w_v.value);
  state.k.insert(state.k.end(), k.data().begin(), k.data().end());
  state.v.insert(state.v.end(), v.data().begin(), v.data().end());
  ++state.t;
  const std::size_t kv = kv_dim();
  const std::size_t dh = head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor o({1, d});
  std::vector<double> p(state.t);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t qoff = h * dh;
    const std::size_t kvoff = multi_query ? 0 : h * dh;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < state.t; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < dh; ++c) s += q[qoff + c] * state.k[j * kv + kvoff + c];
      p[j] = s * scale;
      mx = std::max(mx, p[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < state.t; ++j) {
      p[j] = std::exp(p[j] - mx);
      z += p[j];
    }
    for (std::size_t j = 0; j < state.t; ++j) {
      for (std::size_t c = 0; c < dh; ++c) o[qoff + c] += p[j] / z * state.v[j * kv + kvoff + c];
    }
  }
  const Tensor y = matmul(o, w_o.value);
  return {y.data().begin(), y.data().end()};
}

}  // namespace poolformer::nn
