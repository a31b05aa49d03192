#include "poolformer/dsp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <string>

#include "poolformer/errors.hpp"

namespace poolformer::dsp {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double sign(double v) { return (v > 0.0) - (v < 0.0); }

void require_power_of_two(std::size_t n, const char* what) {
  if (!is_power_of_two(n)) {
    throw ArgumentError(std::string(what) + ": length " + std::to_string(n) +
                        " is not a power of two");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Companding

double mu_law_compress(double x, int mu) {
  return sign(x) * std::log1p(mu * std::abs(x)) / std::log1p(static_cast<double>(mu));
}

double mu_law_expand(double y, int mu) {
  return sign(y) * (std::pow(1.0 + mu, std::abs(y)) - 1.0) / mu;
}

namespace {

std::uint8_t quantize_unit(double y, int levels) {
  const double scaled = std::round((y + 1.0) / 2.0 * (levels - 1));
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, static_cast<double>(levels - 1)));
}

double dequantize_unit(std::uint8_t code, int levels) {
  return static_cast<double>(code) / (levels - 1) * 2.0 - 1.0;
}

}  // namespace

std::uint8_t mu_law_encode(double x, const MuLawCodec& codec) {
  if (std::isnan(x)) throw ArgumentError("mu_law_encode: NaN input");
  if (codec.mu <= 0 || codec.bits != 8) {
    throw ArgumentError("mu_law_encode: codec must have mu > 0 and 8 bits");
  }
  x = std::clamp(x, -1.0, 1.0);  // saturate out-of-range amplitudes
  return quantize_unit(mu_law_compress(x, codec.mu), codec.levels());
}

double mu_law_decode(std::uint8_t code, const MuLawCodec& codec) {
  return mu_law_expand(dequantize_unit(code, codec.levels()), codec.mu);
}

std::uint8_t linear_encode(double x) {
  if (std::isnan(x)) throw ArgumentError("linear_encode: NaN input");
  return quantize_unit(std::clamp(x, -1.0, 1.0), 256);
}

double linear_decode(std::uint8_t code) { return dequantize_unit(code, 256); }

// ---------------------------------------------------------------------------
// FFT

ComplexVec::ComplexVec(std::vector<double> r, std::vector<double> i)
    : re(std::move(r)), im(std::move(i)) {
  if (re.size() != im.size()) throw ArgumentError("ComplexVec: re/im lengths differ");
}

ComplexVec ComplexVec::from_real(std::span<const double> values) {
  return ComplexVec(std::vector<double>(values.begin(), values.end()),
                    std::vector<double>(values.size(), 0.0));
}

bool is_power_of_two(std::size_t n) { return n != 0 && std::has_single_bit(n); }

std::size_t next_power_of_two(std::size_t n) { return n <= 1 ? 1 : std::bit_ceil(n); }

FftPlan::FftPlan(std::size_t n) : n_(n) {
  require_power_of_two(n, "FftPlan");
  const int log_n = std::countr_zero(n);
  bitrev_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t r = 0;
    for (int b = 0; b < log_n; ++b) r |= ((i >> b) & 1u) << (log_n - 1 - b);
    bitrev_[i] = r;
  }
  // omega^k = exp(-2 pi i k / n) for k < n/2
  tw_re_.resize(n / 2);
  tw_im_.resize(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double angle = -kTwoPi * static_cast<double>(k) / static_cast<double>(n);
    tw_re_[k] = std::cos(angle);
    tw_im_[k] = std::sin(angle);
  }
}

void FftPlan::forward(std::span<double> re, std::span<double> im) const {
  if (re.size() != n_ || im.size() != n_) throw ArgumentError("FftPlan: buffer length mismatch");
  for (std::size_t i = 0; i < n_; ++i) {
    const std::size_t j = bitrev_[i];
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  // Butterflies: X_k = E_k + w^k O_k, X_{k+half} = E_k - w^k O_k.
  for (std::size_t len = 2; len <= n_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n_ / len;
    for (std::size_t start = 0; start < n_; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const double wr = tw_re_[k * stride];
        const double wi = tw_im_[k * stride];
        const std::size_t a = start + k;
        const std::size_t b = a + half;
        const double tr = wr * re[b] - wi * im[b];
        const double ti = wr * im[b] + wi * re[b];
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
      }
    }
  }
}

void FftPlan::inverse(std::span<double> re, std::span<double> im) const {
  for (double& v : im) v = -v;
  forward(re, im);
  const double scale = 1.0 / static_cast<double>(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    re[i] *= scale;
    im[i] *= -scale;
  }
}

ComplexVec fft(const ComplexVec& v) {
  FftPlan plan(v.size());
  ComplexVec out = v;
  plan.forward(out.re, out.im);
  return out;
}

ComplexVec ifft(const ComplexVec& v) {
  FftPlan plan(v.size());
  ComplexVec out = v;
  plan.inverse(out.re, out.im);
  return out;
}

ComplexVec naive_dft(const ComplexVec& v) {
  const std::size_t n = v.size();
  ComplexVec out(n);
  for (std::size_t k = 0; k < n; ++k) {
    double sr = 0.0;
    double si = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      // Reduce k*j mod n before scaling keeps the angle accurate for large n.
      const double angle = -kTwoPi * static_cast<double>((k * j) % n) / static_cast<double>(n);
      const double c = std::cos(angle);
      const double s = std::sin(angle);
      sr += v.re[j] * c - v.im[j] * s;
      si += v.re[j] * s + v.im[j] * c;
    }
    out.re[k] = sr;
    out.im[k] = si;
  }
  return out;
}

std::vector<double> circular_convolve(std::span<const double> f, std::span<const double> g) {
  if (f.size() != g.size()) {
    throw ArgumentError("circular_convolve: length mismatch " + std::to_string(f.size()) + " vs " +
                        std::to_string(g.size()));
  }
  require_power_of_two(f.size(), "circular_convolve");
  const FftPlan plan(f.size());
  ComplexVec fs = ComplexVec::from_real(f);
  ComplexVec gs = ComplexVec::from_real(g);
  plan.forward(fs.re, fs.im);
  plan.forward(gs.re, gs.im);
  for (std::size_t k = 0; k < fs.size(); ++k) {
    const double r = fs.re[k] * gs.re[k] - fs.im[k] * gs.im[k];
    const double i = fs.re[k] * gs.im[k] + fs.im[k] * gs.re[k];
    fs.re[k] = r;
    fs.im[k] = i;
  }
  plan.inverse(fs.re, fs.im);
  return fs.re;
}

std::vector<double> naive_circular_convolve(std::span<const double> f,
                                            std::span<const double> g) {
  if (f.size() != g.size()) throw ArgumentError("naive_circular_convolve: length mismatch");
  const std::size_t n = f.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) out[k] += f[j] * g[(k + n - j) % n];
  }
  return out;
}

// ---------------------------------------------------------------------------
// STFT

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (n < 2) return w;
  for (std::size_t j = 0; j < n; ++j) {
    w[j] = 0.5 * (1.0 - std::cos(kTwoPi * static_cast<double>(j) / static_cast<double>(n - 1)));
  }
  return w;
}

StftConfig StftConfig::make(std::size_t frame_length, std::size_t hop, WindowKind kind) {
  StftConfig cfg;
  cfg.frame_length = frame_length;
  cfg.hop = hop;
  cfg.window = kind == WindowKind::hann ? hann_window(frame_length)
                                        : std::vector<double>(frame_length, 1.0);
  cfg.validate();
  return cfg;
}

void StftConfig::validate() const {
  require_power_of_two(frame_length, "StftConfig frame length");
  if (hop == 0 || hop > frame_length) {
    throw ArgumentError("StftConfig: hop must satisfy 0 < hop <= frame length");
  }
  if (window.size() != frame_length) {
    throw ArgumentError("StftConfig: window length must equal frame length");
  }
}

double Spectrogram::magnitude(std::size_t m, std::size_t k) const {
  return std::sqrt(power(m, k));
}

double Spectrogram::power(std::size_t m, std::size_t k) const {
  const std::size_t i = m * bins + k;
  return re[i] * re[i] + im[i] * im[i];
}

std::size_t stft_frame_count(std::size_t signal_length, const StftConfig& cfg) {
  if (signal_length < cfg.frame_length) {
    throw ArgumentError("stft: signal of length " + std::to_string(signal_length) +
                        " is shorter than one frame (" + std::to_string(cfg.frame_length) + ")");
  }
  return (signal_length - cfg.frame_length) / cfg.hop + 1;
}

Spectrogram stft(std::span<const double> signal, const StftConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.frame_length;
  Spectrogram out;
  out.frames = stft_frame_count(signal.size(), cfg);
  out.bins = n;
  out.re.resize(out.frames * n);
  out.im.assign(out.frames * n, 0.0);
  const FftPlan plan(n);
  for (std::size_t m = 0; m < out.frames; ++m) {
    std::span<double> re(out.re.data() + m * n, n);
    std::span<double> im(out.im.data() + m * n, n);
    for (std::size_t j = 0; j < n; ++j) re[j] = cfg.window[j] * signal[j + m * cfg.hop];
    plan.forward(re, im);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mel

double hz_to_mel(double hz) {
  if (!(hz >= 0.0)) throw ArgumentError("hz_to_mel: frequency must be non-negative");
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank::MelFilterbank(std::size_t bands, std::size_t frame_length, double sample_rate)
    : bands_(bands), bins_(frame_length / 2 + 1), sample_rate_(sample_rate) {
  if (bands == 0) throw ArgumentError("MelFilterbank: need at least one band");
  require_power_of_two(frame_length, "MelFilterbank frame length");
  if (!(sample_rate > 0.0)) throw ArgumentError("MelFilterbank: sample rate must be positive");

  const double top = hz_to_mel(sample_rate / 2.0);
  std::vector<double> points(bands + 2);
  for (std::size_t i = 0; i < points.size(); ++i) {
    points[i] = top * static_cast<double>(i) / static_cast<double>(bands + 1);
  }
  centers_mel_.assign(points.begin() + 1, points.end() - 1);
  weights_.assign(bands * bins_, 0.0);
  for (std::size_t b = 0; b < bands; ++b) {
    const double left = points[b];
    const double centre = points[b + 1];
    const double right = points[b + 2];
    for (std::size_t k = 0; k < bins_; ++k) {
      const double mel = hz_to_mel(static_cast<double>(k) * sample_rate / frame_length);
      double w = 0.0;
      if (mel > left && mel <= centre) {
        w = (mel - left) / (centre - left);
      } else if (mel > centre && mel < right) {
        w = (right - mel) / (right - centre);
      }
      weights_[b * bins_ + k] = w;
    }
  }
}

Tensor mel_spectrogram(const Spectrogram& spec, const MelFilterbank& bank) {
  if (spec.bins / 2 + 1 != bank.bins()) {
    throw ArgumentError("mel_spectrogram: filterbank built for a different frame length");
  }
  Tensor out({spec.frames, bank.bands()});
  for (std::size_t m = 0; m < spec.frames; ++m) {
    for (std::size_t b = 0; b < bank.bands(); ++b) {
      double acc = 0.0;
      for (std::size_t k = 0; k < bank.bins(); ++k) {
        const double w = bank.weight(b, k);
        if (w != 0.0) acc += w * spec.power(m, k);
      }
      out.at(m, b) = acc;
    }
  }
  return out;
}

}  // namespace poolformer::dsp
