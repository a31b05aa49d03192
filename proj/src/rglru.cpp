#include <cmath>
#include <numbers>

#include "eigen_view.hpp"
#include "poolformer/errors.hpp"
#include "poolformer/layers.hpp"
#include "poolformer/scan.hpp"

namespace poolformer::nn {

using detail::view;

namespace {

constexpr double kPi = std::numbers::pi;

// Principal value in (-pi, pi].
double wrap_phase(double t) { return t - 2.0 * kPi * std::ceil((t - kPi) / (2.0 * kPi)); }

double log_sigmoid(double l) {
  return l >= 0 ? -std::log1p(std::exp(-l)) : l - std::log1p(std::exp(l));
}

Tensor affine(const Tensor& x, const Parameter& w, const Parameter* b) {
  Tensor y({x.rows(), w.value.dim(1)});
  view(y).noalias() = view(x) * view(w.value);
  if (b) {
    for (std::size_t r = 0; r < y.rows(); ++r) {
      for (std::size_t c = 0; c < y.cols(); ++c) y.at(r, c) += b->value[c];
    }
  }
  return y;
}

double row_dot(std::span<const double> x, const Tensor& w, std::size_t col) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * w.at(i, col);
  return s;
}

scan::States run_scan(const scan::DiagonalAffineSeq& seq, ScanMode mode, std::size_t workers) {
  return mode == ScanMode::blelloch ? scan::blelloch_scan(seq, workers)
                                    : scan::sequential_recurrence(seq);
}

}  // namespace

RingRange ring_range(RingPreset preset) {
  switch (preset) {
    case RingPreset::small:
      return {0.9, 0.99, 0.0, kPi / 10};
    case RingPreset::half:
      return {0.9, 0.99, 0.0, kPi};
    case RingPreset::full:
      return {0.9, 0.99, 0.0, 2 * kPi};
    case RingPreset::full_circle:
      return {0.01, 0.99, 0.0, 2 * kPi};
  }
  throw ArgumentError("ring_range: unknown preset");
}

RingSample ring_init(SeededRng& rng, std::size_t n, const RingRange& range) {
  if (!(range.mag_lo > 0.0 && range.mag_lo < range.mag_hi && range.mag_hi < 1.0)) {
    throw ArgumentError("ring_init: need 0 < lo < hi < 1");
  }
  if (!(range.phase_lo <= range.phase_hi)) {
    throw ArgumentError("ring_init: phase range is reversed");
  }
  RingSample out;
  out.lambda.resize(n);
  out.theta.resize(n);
  const double lo2 = range.mag_lo * range.mag_lo;
  const double hi2 = range.mag_hi * range.mag_hi;
  for (std::size_t i = 0; i < n; ++i) {
    const double mag = std::sqrt(rng.uniform(lo2, hi2));
    out.lambda[i] = std::log(mag / (1.0 - mag));
    out.theta[i] = rng.uniform(range.phase_lo, range.phase_hi);
  }
  return out;
}

RgLru RgLru::make(RgLruMode mode, std::size_t d_in, std::size_t d_rec, SeededRng& rng,
                  const RingRange& ring) {
  if (d_in == 0 || d_rec == 0) throw ArgumentError("rg_lru: dimensions must be positive");
  if (mode == RgLruMode::complex && d_rec % 2 != 0) {
    throw ArgumentError("rg_lru: complex mode needs an even recurrence dimension");
  }
  RgLru layer;
  layer.mode = mode;
  layer.d_in = d_in;
  layer.d_rec = d_rec;
  const std::size_t n = layer.states();
  const double lecun = 1.0 / static_cast<double>(d_in);
  layer.w_a = Parameter(gaussian_init(rng, {d_in, n}, lecun));
  layer.b_a = Parameter(Tensor({n}));
  layer.w_x = Parameter(gaussian_init(rng, {d_in, n}, lecun));
  layer.b_x = Parameter(Tensor({n}));
  if (d_in != d_rec) layer.w_v = Parameter(gaussian_init(rng, {d_in, d_rec}, lecun));
  const RingSample s = ring_init(rng, n, ring);
  layer.lambda = Parameter(Tensor({n}, s.lambda));
  if (mode == RgLruMode::complex) layer.theta = Parameter(Tensor({n}, s.theta));
  return layer;
}

std::vector<cplx> RgLru::base_coefficients() const {
  const std::size_t n = states();
  std::vector<cplx> a(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double phase = mode == RgLruMode::complex ? wrap_phase(theta.value[j]) : 0.0;
    a[j] = std::polar(sigmoid(lambda.value[j]), phase);
  }
  return a;
}

double RgLru::mean_magnitude() const {
  double s = 0.0;
  for (const cplx& a : base_coefficients()) s += std::abs(a);
  return s / static_cast<double>(states());
}

Tensor RgLru::forward(const Tensor& x, Cache* cache) const {
  if (x.rank() != 2 || x.cols() != d_in) {
    throw ArgumentError("rg_lru: expected [S x " + std::to_string(d_in) + "], got " +
                        to_string(x.shape()));
  }
  const std::size_t steps = x.rows();
  const std::size_t n = states();
  const Tensor za = affine(x, w_a, &b_a);
  const Tensor zx = affine(x, w_x, &b_x);
  const Tensor v = has_value_proj() ? affine(x, w_v, nullptr) : x;

  std::vector<cplx> log_a(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double phase = mode == RgLruMode::complex ? wrap_phase(theta.value[j]) : 0.0;
    log_a[j] = {log_sigmoid(lambda.value[j]), phase};
  }

  Cache local;
  Cache& c = cache ? *cache : local;
  c.r.assign(steps * n, 0.0);
  c.gate_i.assign(steps * n, 0.0);
  c.xt.assign(steps * n, {});
  c.a.assign(steps * n, {});
  c.m.assign(steps * n, {});

  auto seq = scan::DiagonalAffineSeq::zeros(steps, n);
  for (std::size_t k = 0; k < steps; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t idx = k * n + j;
      const double r = sigmoid(za.at(k, j));
      const double gi = sigmoid(zx.at(k, j));
      const cplx xt = mode == RgLruMode::complex ? cplx(v.at(k, j), v.at(k, n + j))
                                                 : cplx(v.at(k, j), 0.0);
      const cplx a = std::exp(kC * r * log_a[j]);
      const cplx m = std::sqrt(1.0 - a * a);
      const cplx u = m * (gi * xt);
      c.r[idx] = r;
      c.gate_i[idx] = gi;
      c.xt[idx] = xt;
      c.a[idx] = a;
      c.m[idx] = m;
      seq.a_re[idx] = a.real();
      seq.a_im[idx] = a.imag();
      seq.b_re[idx] = u.real();
      seq.b_im[idx] = u.imag();
    }
  }
  const scan::States h = run_scan(seq, scan, scan_workers);

  Tensor y({steps, d_rec});
  for (std::size_t k = 0; k < steps; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      y.at(k, j) = h.re[k * n + j];
      if (mode == RgLruMode::complex) y.at(k, n + j) = h.im[k * n + j];
    }
  }
  if (!y.all_finite()) throw EvaluationError("rg_lru: non-finite hidden state");
  if (cache) {
    c.x = x;
    c.h.resize(steps * n);
    for (std::size_t i = 0; i < steps * n; ++i) c.h[i] = {h.re[i], h.im[i]};
  }
  return y;
}

Tensor RgLru::backward(const Cache& c, const Tensor& dy) {
  const std::size_t steps = c.x.rows();
  const std::size_t n = states();

  // delta_k = dh_k + conj(a_{k+1}) delta_{k+1}, run forward in reversed time.
  auto rev = scan::DiagonalAffineSeq::zeros(steps, n);
  for (std::size_t j = 0; j < steps; ++j) {
    const std::size_t k = steps - 1 - j;
    for (std::size_t q = 0; q < n; ++q) {
      const std::size_t dst = j * n + q;
      if (j > 0) {
        const cplx a_next = std::conj(c.a[(k + 1) * n + q]);
        rev.a_re[dst] = a_next.real();
        rev.a_im[dst] = a_next.imag();
      }
      rev.b_re[dst] = dy.at(k, q);
      rev.b_im[dst] = mode == RgLruMode::complex ? dy.at(k, n + q) : 0.0;
    }
  }
  const scan::States delta = run_scan(rev, scan, scan_workers);

  std::vector<cplx> log_a(n);
  std::vector<double> sig(n);
  for (std::size_t j = 0; j < n; ++j) {
    sig[j] = sigmoid(lambda.value[j]);
    const double phase = mode == RgLruMode::complex ? wrap_phase(theta.value[j]) : 0.0;
    log_a[j] = {log_sigmoid(lambda.value[j]), phase};
  }

  Tensor dza({steps, n});
  Tensor dzx({steps, n});
  Tensor dv({steps, d_rec});
  std::vector<cplx> g_log(n);
  for (std::size_t k = 0; k < steps; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t idx = k * n + j;
      const std::size_t ridx = (steps - 1 - k) * n + j;
      const cplx d(delta.re[ridx], delta.im[ridx]);
      const cplx a = c.a[idx];
      const cplx m = c.m[idx];
      const cplx s = c.gate_i[idx] * c.xt[idx];
      cplx g_a = k > 0 ? std::conj(c.h[idx - n]) * d : cplx{};
      const cplx g_m = std::conj(s) * d;
      const cplx g_s = std::conj(m) * d;
      g_a += std::conj(-a / m) * g_m;
      const double r = c.r[idx];
      const double g_r = kC * (std::conj(log_a[j] * a) * g_a).real();
      g_log[j] += std::conj(kC * r * a) * g_a;
      const double gi = c.gate_i[idx];
      const double g_i = (std::conj(c.xt[idx]) * g_s).real();
      dza.at(k, j) = g_r * r * (1.0 - r);
      dzx.at(k, j) = g_i * gi * (1.0 - gi);
      const cplx g_xt = gi * g_s;
      dv.at(k, j) = g_xt.real();
      if (mode == RgLruMode::complex) dv.at(k, n + j) = g_xt.imag();
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    lambda.grad[j] += g_log[j].real() * (1.0 - sig[j]);
    if (mode == RgLruMode::complex) theta.grad[j] += g_log[j].imag();
  }

  const auto xv = view(c.x);
  view(w_a.grad).noalias() += xv.transpose() * view(dza);
  view(w_x.grad).noalias() += xv.transpose() * view(dzx);
  for (std::size_t k = 0; k < steps; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      b_a.grad[j] += dza.at(k, j);
      b_x.grad[j] += dzx.at(k, j);
    }
  }
  Tensor dx({steps, d_in});
  auto dxv = view(dx);
  dxv.noalias() = view(dza) * view(w_a.value).transpose();
  dxv.noalias() += view(dzx) * view(w_x.value).transpose();
  if (has_value_proj()) {
    view(w_v.grad).noalias() += xv.transpose() * view(dv);
    dxv.noalias() += view(dv) * view(w_v.value).transpose();
  } else {
    dx += dv;
  }
  return dx;
}

void RgLru::visit_params(const ParamVisitor& visit, const std::string& prefix) {
  visit(join_name(prefix, "w_a"), w_a);
  visit(join_name(prefix, "b_a"), b_a);
  visit(join_name(prefix, "w_x"), w_x);
  visit(join_name(prefix, "b_x"), b_x);
  if (has_value_proj()) visit(join_name(prefix, "w_v"), w_v);
  visit(join_name(prefix, "lambda"), lambda);
  if (mode == RgLruMode::complex) visit(join_name(prefix, "theta"), theta);
}

std::vector<double> RgLru::step(std::span<const double> x, State& state) const {
  const std::size_t n = states();
  std::vector<double> y(d_rec);
  for (std::size_t j = 0; j < n; ++j) {
    const double r = sigmoid(row_dot(x, w_a.value, j) + b_a.value[j]);
    const double gi = sigmoid(row_dot(x, w_x.value, j) + b_x.value[j]);
    cplx xt;
    if (has_value_proj()) {
      xt = {row_dot(x, w_v.value, j),
            mode == RgLruMode::complex ? row_dot(x, w_v.value, n + j) : 0.0};
    } else {
      xt = {x[j], mode == RgLruMode::complex ? x[n + j] : 0.0};
    }
    const cplx log_a(log_sigmoid(lambda.value[j]), mode == RgLruMode::complex ? wrap_phase(theta.value[j]) : 0.0);
    const cplx a = std::exp(kC * r * log_a);
    const cplx m = std::sqrt(1.0 - a * a);
    state.h[j] = a * state.h[j] + m * (gi * xt);
    y[j] = state.h[j].real();
    if (mode == RgLruMode::complex) y[n + j] = state.h[j].imag();
  }
  return y;
}

}  // namespace poolformer::nn
