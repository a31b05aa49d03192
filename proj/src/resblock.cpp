#include "poolformer/errors.hpp"
#include "poolformer/layers.hpp"

namespace poolformer::nn {

namespace {

template <class... F>
struct overloaded : F... {
  using F::operator()...;
};

Tensor row_tensor(std::span<const double> x) {
  return Tensor({1, x.size()}, std::vector<double>(x.begin(), x.end()));
}

}  // namespace

ResBlock ResBlock::make(const ResBlockConfig& cfg, SeededRng& rng, std::uint64_t tag) {
  if (cfg.d == 0) throw ArgumentError("resblock: D must be positive");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) {
    throw ArgumentError("resblock: dropout rate must lie in [0, 1)");
  }
  ResBlock b;
  b.cfg = cfg;
  b.tag = tag;
  b.norm = Norm::make(cfg.norm, cfg.d);
  switch (cfg.inner) {
    case InnerKind::mlp:
      b.inner = Dense::make(cfg.d, cfg.d, true, rng);
      break;
    case InnerKind::rg_lru:
      b.inner = RgLru::make(cfg.rglru_mode, cfg.d, cfg.d_rec ? cfg.d_rec : cfg.d, rng, cfg.ring);
      break;
    case InnerKind::attention:
      b.inner = CausalAttention::make(cfg.d, cfg.heads, cfg.multi_query, rng);
      break;
  }
  const std::size_t mid = b.inner_out_dim();
  if (cfg.gated) b.gate = Dense::make(cfg.d, mid, true, rng);
  b.out = Dense::make(mid, cfg.d, true, rng, cfg.init_scale);
  return b;
}

std::size_t ResBlock::inner_out_dim() const {
  return std::visit(overloaded{[](const Dense& l) { return l.out(); },
                               [](const RgLru& l) { return l.d_rec; },
                               [](const CausalAttention& l) { return l.d; }},
                    inner);
}

Tensor ResBlock::forward(const Tensor& x, Cache* cache) const {
  Norm::Cache norm_cache;
  Tensor xn = norm.forward(x, cache ? &norm_cache : nullptr);

  Tensor inner_out = std::visit(
      [&](const auto& layer) {
        using L = std::decay_t<decltype(layer)>;
        if (!cache) return layer.forward(xn, nullptr);
        typename L::Cache c;
        Tensor y = layer.forward(xn, &c);
        cache->inner = std::move(c);
        return y;
      },
      inner);

  Tensor mix = inner_out;
  Tensor gate_pre;
  if (cfg.gated) {
    gate_pre = gate.forward(xn, cache ? &cache->gate : nullptr);
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] *= gelu(gate_pre[i]);
  } else {
    for (double& v : mix.data()) v = gelu(v);
  }
  Tensor o = out.forward(mix, cache ? &cache->out : nullptr);

  std::vector<double> mask;
  if (dropout_mode.training && cfg.dropout > 0.0) {
    SeededRng rng = SeededRng(dropout_mode.seed).split(tag);
    const double keep = 1.0 / (1.0 - cfg.dropout);
    mask.resize(o.size());
    for (std::size_t i = 0; i < o.size(); ++i) {
      mask[i] = rng.uniform() < cfg.dropout ? 0.0 : keep;
      o[i] *= mask[i];
    }
  }
  Tensor y = x;
  y += o;
  if (cache) {
    cache->norm = std::move(norm_cache);
    cache->xn = std::move(xn);
    cache->inner_out = std::move(inner_out);
    cache->gate_pre = std::move(gate_pre);
    cache->mix = std::move(mix);
    cache->mask = std::move(mask);
  }
  return y;
}

Tensor ResBlock::backward(const Cache& c, const Tensor& dy) {
  Tensor d_o = dy;
  if (!c.mask.empty()) {
    for (std::size_t i = 0; i < d_o.size(); ++i) d_o[i] *= c.mask[i];
  }
  const Tensor dmix = out.backward(c.out, d_o);
  Tensor dinner = dmix;
  Tensor dxn;
  if (cfg.gated) {
    Tensor dgate = dmix;
    for (std::size_t i = 0; i < dmix.size(); ++i) {
      dinner[i] = dmix[i] * gelu(c.gate_pre[i]);
      dgate[i] = dmix[i] * c.inner_out[i] * gelu_grad(c.gate_pre[i]);
    }
    dxn = gate.backward(c.gate, dgate);
  } else {
    for (std::size_t i = 0; i < dinner.size(); ++i) dinner[i] *= gelu_grad(c.inner_out[i]);
  }
  Tensor from_inner = std::visit(
      [&](auto& layer) {
        using L = std::decay_t<decltype(layer)>;
        return layer.backward(std::get<typename L::Cache>(c.inner), dinner);
      },
      inner);
  if (dxn.empty()) {
    dxn = std::move(from_inner);
  } else {
    dxn += from_inner;
  }
  Tensor dx = dy;
  dx += norm.backward(c.norm, dxn);
  return dx;
}

void ResBlock::visit_params(const ParamVisitor& visit, const std::string& prefix) {
  norm.visit_params(visit, join_name(prefix, "norm"));
  std::visit([&](auto& layer) { layer.visit_params(visit, join_name(prefix, "inner")); }, inner);
  if (cfg.gated) gate.visit_params(visit, join_name(prefix, "gate"));
  out.visit_params(visit, join_name(prefix, "out"));
}

ResBlock::State ResBlock::initial_state() const {
  State s;
  if (const auto* r = std::get_if<RgLru>(&inner)) s.inner = r->initial_state();
  if (const auto* a = std::get_if<CausalAttention>(&inner)) s.inner = a->initial_state();
  return s;
}

std::vector<double> ResBlock::step(std::span<const double> x, State& state) const {
  const Tensor xr = row_tensor(x);
  const Tensor xn = norm.forward(xr, nullptr);
  Tensor mix = std::visit(
      overloaded{[&](const Dense& l) { return l.forward(xn, nullptr); },
                 [&](const RgLru& l) {
                   return row_tensor(l.step(xn.row(0), std::get<RgLru::State>(state.inner)));
                 },
                 [&](const CausalAttention& l) {
                   return row_tensor(
                       l.step(xn.row(0), std::get<CausalAttention::State>(state.inner)));
                 }},
      inner);
  if (cfg.gated) {
    const Tensor g = gate.forward(xn, nullptr);
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] *= gelu(g[i]);
  } else {
    for (double& v : mix.data()) v = gelu(v);
  }
  const Tensor o = out.forward(mix, nullptr);
  std::vector<double> y(x.begin(), x.end());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += o[i];
  return y;
}

}  // namespace poolformer::nn
