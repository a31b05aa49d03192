#include "poolformer/layers.hpp"

#include <cmath>
#include <numbers>

#include "eigen_view.hpp"
#include "poolformer/errors.hpp"

namespace poolformer::nn {

using detail::view;

namespace {

template <class E, std::size_t N>
E parse_enum(std::string_view s, const std::pair<std::string_view, E> (&table)[N],
             const char* what) {
  for (const auto& [name, value] : table) {
    if (name == s) return value;
  }
  throw ArgumentError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

constexpr std::pair<std::string_view, NormKind> kNorms[] = {
    {"layer", NormKind::layer}, {"rms", NormKind::rms}, {"none", NormKind::none}};
constexpr std::pair<std::string_view, InnerKind> kInners[] = {
    {"mlp", InnerKind::mlp}, {"rg_lru", InnerKind::rg_lru}, {"attention", InnerKind::attention}};
constexpr std::pair<std::string_view, RgLruMode> kModes[] = {{"real", RgLruMode::real},
                                                             {"complex", RgLruMode::complex}};
constexpr std::pair<std::string_view, RingPreset> kRings[] = {
    {"small", RingPreset::small},
    {"half", RingPreset::half},
    {"full", RingPreset::full},
    {"full_circle", RingPreset::full_circle}};

template <class E, std::size_t N>
std::string_view name_of(E value, const std::pair<std::string_view, E> (&table)[N]) {
  for (const auto& [name, v] : table) {
    if (v == value) return name;
  }
  return "?";
}

}  // namespace

NormKind parse_norm_kind(std::string_view s) { return parse_enum(s, kNorms, "norm kind"); }
InnerKind parse_inner_kind(std::string_view s) { return parse_enum(s, kInners, "mixer kind"); }
RgLruMode parse_rglru_mode(std::string_view s) { return parse_enum(s, kModes, "rg-lru mode"); }
RingPreset parse_ring_preset(std::string_view s) { return parse_enum(s, kRings, "ring preset"); }
std::string_view to_string(NormKind k) { return name_of(k, kNorms); }
std::string_view to_string(InnerKind k) { return name_of(k, kInners); }
std::string_view to_string(RgLruMode m) { return name_of(m, kModes); }
std::string_view to_string(RingPreset p) { return name_of(p, kRings); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

std::vector<double> sinusoidal_embed(std::uint8_t code, std::size_t d) {
  if (d == 0 || d % 2 != 0) {
    throw ArgumentError("sinusoidal_embed: dimension must be even, got " + std::to_string(d));
  }
  const std::size_t half = d / 2;
  std::vector<double> out(d);
  for (std::size_t j = 0; j < half; ++j) {
    const double arg = code / std::pow(10000.0, static_cast<double>(j) / half);
    out[j] = std::cos(arg);
    out[half + j] = std::sin(arg);
  }
  return out;
}

Tensor sinusoidal_table(std::size_t d) {
  Tensor t({256, d});
  for (std::size_t c = 0; c < 256; ++c) {
    const auto row = sinusoidal_embed(static_cast<std::uint8_t>(c), d);
    std::copy(row.begin(), row.end(), t.row(c).begin());
  }
  return t;
}

std::size_t count_rnn_params(std::string_view kind, std::size_t d) {
  if (d == 0) throw ArgumentError("count_rnn_params: D must be >= 1");
  const std::size_t sq = d * d;
  if (kind == "elman") return 3 * sq + 2 * d;
  if (kind == "lstm") return 8 * sq + 4 * d;
  if (kind == "gru") return 6 * sq + 3 * d;
  if (kind == "rglru" || kind == "rg_lru" || kind == "rg-lru") return 2 * sq + 3 * d;
  throw ArgumentError("count_rnn_params: unknown layer kind '" + std::string(kind) + "'");
}

// dense

Dense Dense::make(std::size_t in, std::size_t out, bool bias, SeededRng& rng, double scale) {
  Dense layer;
  layer.w = Parameter(gaussian_init(rng, {in, out}, scale / static_cast<double>(in)));
  layer.has_bias = bias;
  if (bias) layer.b = Parameter(Tensor({out}));
  return layer;
}

Tensor Dense::forward(const Tensor& x, Cache* cache) const {
  if (x.rank() != 2 || x.cols() != in()) {
    throw ArgumentError("dense: expected [S x " + std::to_string(in()) + "], got " +
                        to_string(x.shape()));
  }
  if (cache) cache->x = x;
  Tensor y({x.rows(), out()});
  auto yv = view(y);
  yv.noalias() = view(x) * view(w.value);
  if (has_bias) {
    for (std::size_t r = 0; r < y.rows(); ++r) {
      for (std::size_t c = 0; c < out(); ++c) y.at(r, c) += b.value[c];
    }
  }
  return y;
}

Tensor Dense::backward(const Cache& cache, const Tensor& dy) {
  view(w.grad).noalias() += view(cache.x).transpose() * view(dy);
  if (has_bias) {
    for (std::size_t r = 0; r < dy.rows(); ++r) {
      for (std::size_t c = 0; c < out(); ++c) b.grad[c] += dy.at(r, c);
    }
  }
  Tensor dx({dy.rows(), in()});
  view(dx).noalias() = view(dy) * view(w.value).transpose();
  return dx;
}

void Dense::visit_params(const ParamVisitor& visit, const std::string& prefix) {
  visit(join_name(prefix, "w"), w);
  if (has_bias) visit(join_name(prefix, "b"), b);
}

// gelu

Tensor Gelu::forward(const Tensor& x, Cache* cache) const {
  if (cache) cache->x = x;
  Tensor y = x;
  for (double& v : y.data()) v = gelu(v);
  return y;
}

Tensor Gelu::backward(const Cache& cache, const Tensor& dy) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= gelu_grad(cache.x[i]);
  return dx;
}

// norms

Norm Norm::make(NormKind kind, std::size_t d, double eps) {
  Norm n;
  n.kind = kind;
  n.eps = eps;
  if (kind != NormKind::none) n.gamma = Parameter(Tensor::filled({d}, 1.0));
  if (kind == NormKind::layer) n.beta = Parameter(Tensor({d}));
  return n;
}

Tensor Norm::forward(const Tensor& x, Cache* cache) const {
  if (kind == NormKind::none) return x;
  const std::size_t rows = x.rows();
  const std::size_t d = x.cols();
  Tensor xhat({rows, d});
  std::vector<double> inv(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto xr = x.row(r);
    double mean = 0.0;
    if (kind == NormKind::layer) {
      for (double v : xr) mean += v;
      mean /= d;
    }
    double ms = 0.0;
    for (double v : xr) ms += (v - mean) * (v - mean);
    ms /= d;
    inv[r] = 1.0 / std::sqrt(ms + eps);
    for (std::size_t c = 0; c < d; ++c) xhat.at(r, c) = (xr[c] - mean) * inv[r];
  }
  Tensor y = xhat;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      y.at(r, c) = y.at(r, c) * gamma.value[c] + (kind == NormKind::layer ? beta.value[c] : 0.0);
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv);
  }
  return y;
}

Tensor Norm::backward(const Cache& cache, const Tensor& dy) {
  if (kind == NormKind::none) return dy;
  const std::size_t rows = dy.rows();
  const std::size_t d = dy.cols();
  Tensor dx({rows, d});
  std::vector<double> g(d);
  for (std::size_t r = 0; r < rows; ++r) {
    double mean_g = 0.0;
    double mean_gx = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double xh = cache.xhat.at(r, c);
      gamma.grad[c] += dy.at(r, c) * xh;
      if (kind == NormKind::layer) beta.grad[c] += dy.at(r, c);
      g[c] = dy.at(r, c) * gamma.value[c];
      mean_g += g[c];
      mean_gx += g[c] * xh;
    }
    mean_g /= d;
    mean_gx /= d;
    if (kind == NormKind::rms) mean_g = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      dx.at(r, c) = cache.inv_std[r] * (g[c] - mean_g - cache.xhat.at(r, c) * mean_gx);
    }
  }
  return dx;
}

void Norm::visit_params(const ParamVisitor& visit, const std::string& prefix) {
  if (kind == NormKind::none) return;
  visit(join_name(prefix, "gamma"), gamma);
  if (kind == NormKind::layer) visit(join_name(prefix, "beta"), beta);
}

}  // namespace poolformer::nn
