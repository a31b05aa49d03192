#include "poolformer/scan.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>

#include "poolformer/dsp.hpp"
#include "poolformer/errors.hpp"

namespace poolformer::scan {

DiagonalAffineSeq DiagonalAffineSeq::zeros(std::size_t steps, std::size_t dim) {
  DiagonalAffineSeq s;
  s.steps = steps;
  s.dim = dim;
  s.a_re.assign(steps * dim, 0.0);
  s.a_im.assign(steps * dim, 0.0);
  s.b_re.assign(steps * dim, 0.0);
  s.b_im.assign(steps * dim, 0.0);
  s.h0_re.assign(dim, 0.0);
  s.h0_im.assign(dim, 0.0);
  return s;
}

void DiagonalAffineSeq::validate() const {
  const std::size_t n = steps * dim;
  if (a_re.size() != n || a_im.size() != n || b_re.size() != n || b_im.size() != n) {
    throw ArgumentError("DiagonalAffineSeq: coefficient arrays must all be steps x dim");
  }
  if (h0_re.size() != dim || h0_im.size() != dim) {
    throw ArgumentError("DiagonalAffineSeq: initial state must have length dim");
  }
}

AffineMap AffineMap::identity(std::size_t dim) {
  return {std::vector<double>(dim, 1.0), std::vector<double>(dim, 0.0),
          std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
}

std::vector<std::complex<double>> AffineMap::apply(
    const std::vector<std::complex<double>>& x) const {
  if (x.size() != dim()) throw ArgumentError("AffineMap::apply: dimension mismatch");
  std::vector<std::complex<double>> out(x.size());
  for (std::size_t d = 0; d < x.size(); ++d) {
    out[d] = std::complex<double>(m_re[d], m_im[d]) * x[d] + std::complex<double>(c_re[d], c_im[d]);
  }
  return out;
}

namespace {

// out = first . second, written element-wise over `dim` channels. `out` may alias `second`.
inline void combine_into(std::size_t dim, const double* m1r, const double* m1i, const double* c1r,
                         const double* c1i, const double* m2r, const double* m2i,
                         const double* c2r, const double* c2i, double* outmr, double* outmi,
                         double* outcr, double* outci) {
  for (std::size_t d = 0; d < dim; ++d) {
    const double ar = m2r[d], ai = m2i[d];
    const double mr = ar * m1r[d] - ai * m1i[d];
    const double mi = ar * m1i[d] + ai * m1r[d];
    const double cr = ar * c1r[d] - ai * c1i[d] + c2r[d];
    const double ci = ar * c1i[d] + ai * c1r[d] + c2i[d];
    outmr[d] = mr;
    outmi[d] = mi;
    outcr[d] = cr;
    outci[d] = ci;
  }
}

// Scan tree storage: `count` nodes of `dim` channels each.
struct Tree {
  std::size_t dim;
  std::vector<double> mr, mi, cr, ci;

  double* p(std::vector<double>& v, std::size_t node) { return v.data() + node * dim; }
};

template <class Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(count, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();  // level barrier
}

// Leaves the exclusive prescan in `tree` (node k = composition of steps < k).
Tree run_blelloch(const DiagonalAffineSeq& seq, std::size_t workers) {
  seq.validate();
  const std::size_t n = dsp::next_power_of_two(std::max<std::size_t>(seq.steps, 1));
  const std::size_t dim = seq.dim;
  Tree t{dim, std::vector<double>(n * dim, 1.0), std::vector<double>(n * dim, 0.0),
         std::vector<double>(n * dim, 0.0), std::vector<double>(n * dim, 0.0)};
  std::copy(seq.a_re.begin(), seq.a_re.end(), t.mr.begin());
  std::copy(seq.a_im.begin(), seq.a_im.end(), t.mi.begin());
  std::copy(seq.b_re.begin(), seq.b_re.end(), t.cr.begin());
  std::copy(seq.b_im.begin(), seq.b_im.end(), t.ci.begin());

  // Up-sweep: sum[v] = sum[L[v]] . sum[R[v]], stored at the right child's slot.
  for (std::size_t stride = 2; stride <= n; stride <<= 1) {
    parallel_for(n / stride, workers, [&](std::size_t node) {
      const std::size_t right = node * stride + stride - 1;
      const std::size_t left = right - stride / 2;
      combine_into(dim, t.p(t.mr, left), t.p(t.mi, left), t.p(t.cr, left), t.p(t.ci, left),
                   t.p(t.mr, right), t.p(t.mi, right), t.p(t.cr, right), t.p(t.ci, right),
                   t.p(t.mr, right), t.p(t.mi, right), t.p(t.cr, right), t.p(t.ci, right));
    });
  }

  // Root receives the identity.
  std::fill_n(t.p(t.mr, n - 1), dim, 1.0);
  std::fill_n(t.p(t.mi, n - 1), dim, 0.0);
  std::fill_n(t.p(t.cr, n - 1), dim, 0.0);
  std::fill_n(t.p(t.ci, n - 1), dim, 0.0);

  // Down-sweep: prescan[L] = prescan[v]; prescan[R] = prescan[v] . sum[L].
  for (std::size_t stride = n; stride >= 2; stride >>= 1) {
    parallel_for(n / stride, workers, [&](std::size_t node) {
      const std::size_t right = node * stride + stride - 1;
      const std::size_t left = right - stride / 2;
      for (std::size_t d = 0; d < dim; ++d) {
        const std::size_t l = left * dim + d;
        const std::size_t r = right * dim + d;
        const double sl_mr = t.mr[l], sl_mi = t.mi[l], sl_cr = t.cr[l], sl_ci = t.ci[l];
        t.mr[l] = t.mr[r];
        t.mi[l] = t.mi[r];
        t.cr[l] = t.cr[r];
        t.ci[l] = t.ci[r];
        combine_into(1, &t.mr[r], &t.mi[r], &t.cr[r], &t.ci[r], &sl_mr, &sl_mi, &sl_cr, &sl_ci,
                     &t.mr[r], &t.mi[r], &t.cr[r], &t.ci[r]);
      }
    });
  }
  return t;
}

}  // namespace

AffineMap combine(const AffineMap& first, const AffineMap& second) {
  if (first.dim() != second.dim()) throw ArgumentError("combine: dimension mismatch");
  AffineMap out = AffineMap::identity(first.dim());
  combine_into(first.dim(), first.m_re.data(), first.m_im.data(), first.c_re.data(),
               first.c_im.data(), second.m_re.data(), second.m_im.data(), second.c_re.data(),
               second.c_im.data(), out.m_re.data(), out.m_im.data(), out.c_re.data(),
               out.c_im.data());
  return out;
}

States sequential_recurrence(const DiagonalAffineSeq& seq) {
  seq.validate();
  States out(seq.steps, seq.dim);
  std::vector<double> hr = seq.h0_re;
  std::vector<double> hi = seq.h0_im;
  for (std::size_t k = 0; k < seq.steps; ++k) {
    const std::size_t base = k * seq.dim;
    for (std::size_t d = 0; d < seq.dim; ++d) {
      const std::size_t i = base + d;
      const double ar = seq.a_re[i], ai = seq.a_im[i];
      const double nr = ar * hr[d] - ai * hi[d] + seq.b_re[i];
      const double ni = ar * hi[d] + ai * hr[d] + seq.b_im[i];
      hr[d] = nr;
      hi[d] = ni;
      out.re[i] = nr;
      out.im[i] = ni;
    }
  }
  return out;
}

std::vector<AffineMap> blelloch_prescan(const DiagonalAffineSeq& seq, std::size_t workers) {
  Tree t = run_blelloch(seq, workers);
  std::vector<AffineMap> out(seq.steps);
  for (std::size_t k = 0; k < seq.steps; ++k) {
    const auto b = static_cast<std::ptrdiff_t>(k * seq.dim);
    const auto e = b + static_cast<std::ptrdiff_t>(seq.dim);
    out[k] = {{t.mr.begin() + b, t.mr.begin() + e},
              {t.mi.begin() + b, t.mi.begin() + e},
              {t.cr.begin() + b, t.cr.begin() + e},
              {t.ci.begin() + b, t.ci.begin() + e}};
  }
  return out;
}

States blelloch_scan(const DiagonalAffineSeq& seq, std::size_t workers) {
  Tree t = run_blelloch(seq, workers);
  States out(seq.steps, seq.dim);
  // Inclusive element k = prescan[k] . e_k, applied to h0.
  parallel_for(seq.steps, workers, [&](std::size_t k) {
    for (std::size_t d = 0; d < seq.dim; ++d) {
      const std::size_t i = k * seq.dim + d;
      double mr, mi, cr, ci;
      combine_into(1, &t.mr[i], &t.mi[i], &t.cr[i], &t.ci[i], &seq.a_re[i], &seq.a_im[i],
                   &seq.b_re[i], &seq.b_im[i], &mr, &mi, &cr, &ci);
      out.re[i] = mr * seq.h0_re[d] - mi * seq.h0_im[d] + cr;
      out.im[i] = mr * seq.h0_im[d] + mi * seq.h0_re[d] + ci;
    }
  });
  return out;
}

States conv_recurrence(const DiagonalAffineSeq& seq) {
  seq.validate();
  const std::size_t S = seq.steps;
  const std::size_t D = seq.dim;
  for (std::size_t k = 1; k < S; ++k) {
    for (std::size_t d = 0; d < D; ++d) {
      if (seq.a_re[k * D + d] != seq.a_re[d] || seq.a_im[k * D + d] != seq.a_im[d]) {
        throw ArgumentError(
            "conv_recurrence: coefficients vary over time at step " + std::to_string(k) +
            "; the convolutional view needs a time-invariant recurrence");
      }
    }
  }
  States out(S, D);
  if (S == 0) return out;
  const std::size_t n = dsp::next_power_of_two(2 * S);
  const dsp::FftPlan plan(n);
  std::vector<double> kr(n), ki(n), xr(n), xi(n);
  for (std::size_t d = 0; d < D; ++d) {
    const std::complex<double> a(seq.a_re[d], seq.a_im[d]);
    std::fill(kr.begin(), kr.end(), 0.0);
    std::fill(ki.begin(), ki.end(), 0.0);
    std::fill(xr.begin(), xr.end(), 0.0);
    std::fill(xi.begin(), xi.end(), 0.0);
    std::complex<double> power(1.0, 0.0);
    for (std::size_t j = 0; j < S; ++j) {
      kr[j] = power.real();
      ki[j] = power.imag();
      power *= a;
      xr[j] = seq.b_re[j * D + d];
      xi[j] = seq.b_im[j * D + d];
    }
    plan.forward(kr, ki);
    plan.forward(xr, xi);
    for (std::size_t j = 0; j < n; ++j) {
      const double r = kr[j] * xr[j] - ki[j] * xi[j];
      const double i = kr[j] * xi[j] + ki[j] * xr[j];
      xr[j] = r;
      xi[j] = i;
    }
    plan.inverse(xr, xi);
    // Zero-input response a^{k+1} h0.
    const std::complex<double> h0(seq.h0_re[d], seq.h0_im[d]);
    std::complex<double> carry = a * h0;
    for (std::size_t k = 0; k < S; ++k) {
      out.re[k * D + d] = xr[k] + carry.real();
      out.im[k * D + d] = xi[k] + carry.imag();
      carry *= a;
    }
  }
  return out;
}

namespace {

// exp(z) - 1 without cancellation for small |z|.
std::complex<double> expm1(std::complex<double> z) {
  const double x = z.real();
  const double y = z.imag();
  const double s = std::sin(0.5 * y);
  return {std::expm1(x) * std::cos(y) - 2.0 * s * s, std::exp(x) * std::sin(y)};
}

}  // namespace

ZohDiscrete zoh_discretize(const ZohParams& p) {
  if (!(p.delta > 0.0)) throw ArgumentError("zoh_discretize: delta must be positive");
  if (p.a.size() != p.b.size()) throw ArgumentError("zoh_discretize: a and b lengths differ");
  ZohDiscrete out;
  out.a_bar.resize(p.a.size());
  out.b_bar.resize(p.a.size());
  for (std::size_t i = 0; i < p.a.size(); ++i) {
    const std::complex<double> z = p.a[i] * p.delta;
    out.a_bar[i] = std::exp(z);
    out.b_bar[i] = p.a[i] == 0.0 ? p.delta * p.b[i] : expm1(z) / p.a[i] * p.b[i];
  }
  return out;
}

}  // namespace poolformer::scan
