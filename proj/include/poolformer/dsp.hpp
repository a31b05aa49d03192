#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "poolformer/tensor.hpp"

namespace poolformer::dsp {

// ---------------------------------------------------------------------------
// Companding
// ---------------------------------------------------------------------------

/// mu-law compander with uniform quantization of the companded value.
/// Codes are round((F(x) + 1) / 2 * (2^bits - 1)); inputs outside [-1, 1] saturate.
struct MuLawCodec {
  int mu = 255;
  int bits = 8;

  int levels() const { return 1 << bits; }
  /// Quantization step in the companded domain [-1, 1].
  double step() const { return 2.0 / (levels() - 1); }
};

double mu_law_compress(double x, int mu = 255);
double mu_law_expand(double y, int mu = 255);
std::uint8_t mu_law_encode(double x, const MuLawCodec& codec = {});
double mu_law_decode(std::uint8_t code, const MuLawCodec& codec = {});

/// Plain uniform 8-bit quantizer using the same mid-rise binning as the mu-law path.
std::uint8_t linear_encode(double x);
double linear_decode(std::uint8_t code);

// ---------------------------------------------------------------------------
// Fourier analysis
// ---------------------------------------------------------------------------

/// Split real/imaginary storage.
struct ComplexVec {
  std::vector<double> re;
  std::vector<double> im;

  ComplexVec() = default;
  explicit ComplexVec(std::size_t n) : re(n, 0.0), im(n, 0.0) {}
  ComplexVec(std::vector<double> r, std::vector<double> i);
  static ComplexVec from_real(std::span<const double> values);

  std::size_t size() const { return re.size(); }
};

bool is_power_of_two(std::size_t n);
std::size_t next_power_of_two(std::size_t n);

/// Precomputed bit-reversal permutation and twiddles for one power-of-two length.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n);

  std::size_t size() const { return n_; }
  /// In-place forward DFT (sign -1, no scaling).
  void forward(std::span<double> re, std::span<double> im) const;
  /// In-place inverse via IDFT(X) = conj(DFT(conj(X))) / n.
  void inverse(std::span<double> re, std::span<double> im) const;

 private:
  std::size_t n_;
  std::vector<std::uint32_t> bitrev_;
  std::vector<double> tw_re_;
  std::vector<double> tw_im_;
};

ComplexVec fft(const ComplexVec& v);
ComplexVec ifft(const ComplexVec& v);
/// Textbook O(n^2) evaluation of the DFT sum; any length.
ComplexVec naive_dft(const ComplexVec& v);

/// (f * g)_k = sum_j f_j g_{(k-j) mod n}, evaluated as ifft(fft(f) . fft(g)).
std::vector<double> circular_convolve(std::span<const double> f, std::span<const double> g);
std::vector<double> naive_circular_convolve(std::span<const double> f, std::span<const double> g);

// ---------------------------------------------------------------------------
// Short-time analysis
// ---------------------------------------------------------------------------

enum class WindowKind { hann, rectangular };

std::vector<double> hann_window(std::size_t n);

struct StftConfig {
  std::size_t frame_length = 256;
  std::size_t hop = 128;
  std::vector<double> window;  // length frame_length

  static StftConfig make(std::size_t frame_length, std::size_t hop,
                         WindowKind kind = WindowKind::hann);
  void validate() const;
};

/// Complex STFT: frames x frame_length bins (full spectrum).
struct Spectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<double> re;  // row-major [frames x bins]
  std::vector<double> im;

  double magnitude(std::size_t m, std::size_t k) const;
  double power(std::size_t m, std::size_t k) const;
};

std::size_t stft_frame_count(std::size_t signal_length, const StftConfig& cfg);
Spectrogram stft(std::span<const double> signal, const StftConfig& cfg);

// ---------------------------------------------------------------------------
// Mel scale
// ---------------------------------------------------------------------------

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filters whose (left, centre, right) points are equally spaced on
/// the mel axis between 0 Hz and Nyquist, evaluated at FFT bin frequencies.
class MelFilterbank {
 public:
  MelFilterbank(std::size_t bands, std::size_t frame_length, double sample_rate);

  std::size_t bands() const { return bands_; }
  std::size_t bins() const { return bins_; }  // frame_length / 2 + 1
  double sample_rate() const { return sample_rate_; }
  double weight(std::size_t band, std::size_t bin) const { return weights_[band * bins_ + bin]; }
  double center_mel(std::size_t band) const { return centers_mel_[band]; }

 private:
  std::size_t bands_;
  std::size_t bins_;
  double sample_rate_;
  std::vector<double> weights_;
  std::vector<double> centers_mel_;
};

/// Filterbank applied to the one-sided power spectrum of each frame: [frames x bands].
Tensor mel_spectrogram(const Spectrogram& spec, const MelFilterbank& bank);

}  // namespace poolformer::dsp
