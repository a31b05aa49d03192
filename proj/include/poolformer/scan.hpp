#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace poolformer::scan {

/// Per-step diagonal affine maps h_k = a_k (.) h_{k-1} + b_k over `dim` complex
/// channels, stored as split re/im arrays in row-major [steps x dim] layout.
struct DiagonalAffineSeq {
  std::size_t steps = 0;
  std::size_t dim = 0;
  std::vector<double> a_re, a_im;
  std::vector<double> b_re, b_im;
  std::vector<double> h0_re, h0_im;  // [dim]

  static DiagonalAffineSeq zeros(std::size_t steps, std::size_t dim);
  void validate() const;
  std::size_t index(std::size_t k, std::size_t d) const { return k * dim + d; }
};

/// Hidden states [steps x dim], split re/im.
struct States {
  std::size_t steps = 0;
  std::size_t dim = 0;
  std::vector<double> re, im;

  States() = default;
  States(std::size_t s, std::size_t d) : steps(s), dim(d), re(s * d, 0.0), im(s * d, 0.0) {}
  std::complex<double> at(std::size_t k, std::size_t d) const {
    return {re[k * dim + d], im[k * dim + d]};
  }
};

/// Composite affine map x -> m (.) x + c over `dim` channels; the scan element.
struct AffineMap {
  std::vector<double> m_re, m_im, c_re, c_im;

  static AffineMap identity(std::size_t dim);
  std::size_t dim() const { return m_re.size(); }
  std::vector<std::complex<double>> apply(const std::vector<std::complex<double>>& x) const;
};

/// Apply `first`, then `second`: [m1, c1] . [m2, c2] = [m2 m1, m2 c1 + c2].
AffineMap combine(const AffineMap& first, const AffineMap& second);

States sequential_recurrence(const DiagonalAffineSeq& seq);

/// Exclusive prescan: element k is the composition of steps 0..k-1 (identity at k = 0).
/// Steps are padded with identity elements up to a power of two; the combine
/// tree is fixed, so the result does not depend on `workers`.
std::vector<AffineMap> blelloch_prescan(const DiagonalAffineSeq& seq, std::size_t workers = 1);

/// Work-efficient up-sweep/down-sweep scan; levels are split across `workers`
/// threads with a barrier between levels.
States blelloch_scan(const DiagonalAffineSeq& seq, std::size_t workers = 1);

/// Time-invariant recurrence via FFT convolution with K = (1, a, a^2, ...),
/// zero-padded to avoid circular wraparound. Throws ArgumentError if any a_k
/// differs from a_0.
States conv_recurrence(const DiagonalAffineSeq& seq);

struct ZohParams {
  std::vector<std::complex<double>> a;  // continuous diagonal
  std::vector<std::complex<double>> b;  // input coefficient
  double delta = 1.0;
};

struct ZohDiscrete {
  std::vector<std::complex<double>> a_bar;
  std::vector<std::complex<double>> b_bar;
};

/// a_bar = exp(a delta), b_bar = (exp(a delta) - 1) / a * b, with b_bar = delta * b at a = 0.
ZohDiscrete zoh_discretize(const ZohParams& p);

}  // namespace poolformer::scan
