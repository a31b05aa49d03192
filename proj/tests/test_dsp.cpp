#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "poolformer/dsp.hpp"
#include "poolformer/errors.hpp"
#include "poolformer/rng.hpp"

using namespace poolformer;
using namespace poolformer::dsp;

namespace {

ComplexVec random_complex(SeededRng& rng, std::size_t n) {
  ComplexVec v(n);
  for (std::size_t i = 0; i < n; ++i) {
    v.re[i] = rng.uniform(-1.0, 1.0);
    v.im[i] = rng.uniform(-1.0, 1.0);
  }
  return v;
}

double max_err(const ComplexVec& a, const ComplexVec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::hypot(a.re[i] - b.re[i], a.im[i] - b.im[i]));
  }
  return m;
}

}  // namespace

TEST_CASE("mu-law encode endpoints and zero") {
  CHECK(mu_law_encode(0.0) == 128);
  CHECK(mu_law_encode(1.0) == 255);
  CHECK(mu_law_encode(-1.0) == 0);
  // Saturation outside [-1, 1].
  CHECK(mu_law_encode(3.0) == 255);
  CHECK(mu_law_encode(-3.0) == 0);
  CHECK_THROWS_AS(mu_law_encode(std::nan("")), ArgumentError);
}

TEST_CASE("mu-law companding matches the definition") {
  const double expected = std::log(26.5) / std::log(256.0);
  CHECK(std::abs(mu_law_compress(0.1) - expected) < 1e-12);
  CHECK(mu_law_encode(0.1) == static_cast<int>(std::round((expected + 1.0) / 2.0 * 255.0)));
  CHECK(mu_law_expand(1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(mu_law_expand(-1.0) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(std::abs(mu_law_expand(mu_law_compress(0.37)) - 0.37) < 1e-12);
}

TEST_CASE("mu-law decode reproduces grid midpoints") {
  const MuLawCodec codec;
  for (int c = 0; c < 256; ++c) {
    const auto code = static_cast<std::uint8_t>(c);
    const double x = mu_law_decode(code, codec);
    CHECK(mu_law_encode(x, codec) == code);
    const double y_mid = c / 255.0 * 2.0 - 1.0;
    CHECK(std::abs(mu_law_compress(x) - y_mid) <= codec.step() / 2);
  }
  CHECK(std::abs(mu_law_decode(mu_law_encode(0.0))) <= mu_law_expand(codec.step() / 2));
}

TEST_CASE("mu-law is monotone over all PCM16 levels") {
  int previous = -1;
  for (int s = -32768; s <= 32767; ++s) {
    const int code = mu_law_encode(s / 32768.0);
    CHECK_MESSAGE(code >= previous, "sample " << s);
    previous = code;
  }
}

TEST_CASE("mu-law beats linear quantization at small amplitude") {
  const double x = 0.01;
  const double mu_err = std::abs(mu_law_decode(mu_law_encode(x)) - x);
  const double lin_err = std::abs(linear_decode(linear_encode(x)) - x);
  CHECK(mu_err < lin_err);
}

TEST_CASE("fft small cases") {
  const ComplexVec impulse = fft(ComplexVec({1, 0, 0, 0}, {0, 0, 0, 0}));
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(impulse.re[k] == doctest::Approx(1.0));
    CHECK(std::abs(impulse.im[k]) < 1e-15);
  }
  const ComplexVec constant = fft(ComplexVec({1, 1, 1, 1}, {0, 0, 0, 0}));
  CHECK(constant.re[0] == doctest::Approx(4.0));
  for (std::size_t k = 1; k < 4; ++k) {
    CHECK(std::abs(constant.re[k]) < 1e-15);
    CHECK(std::abs(constant.im[k]) < 1e-15);
  }
  CHECK_THROWS_AS(fft(ComplexVec(6)), ArgumentError);
  CHECK_THROWS_AS(ifft(ComplexVec(12)), ArgumentError);
}

TEST_CASE("fft agrees with the naive DFT") {
  SeededRng rng(5);
  const ComplexVec v = random_complex(rng, 256);
  CHECK(max_err(fft(v), naive_dft(v)) < 1e-9);
}

TEST_CASE("ifft small cases and roundtrip") {
  ComplexVec spike(8);
  spike.re[0] = 8.0;
  const ComplexVec ones = ifft(spike);
  for (std::size_t k = 0; k < 8; ++k) {
    CHECK(ones.re[k] == doctest::Approx(1.0));
    CHECK(std::abs(ones.im[k]) < 1e-15);
  }
  const ComplexVec zeros = ifft(ComplexVec(16));
  for (std::size_t k = 0; k < 16; ++k) CHECK(zeros.re[k] == 0.0);

  SeededRng rng(6);
  for (std::size_t n = 1; n <= (1u << 14); n <<= 1) {
    const ComplexVec v = random_complex(rng, n);
    CHECK_MESSAGE(max_err(ifft(fft(v)), v) < 1e-9, "n=" << n);
  }
}

TEST_CASE("fft is linear") {
  SeededRng rng(8);
  const ComplexVec x = random_complex(rng, 512);
  const ComplexVec y = random_complex(rng, 512);
  const double alpha = 0.7;
  const double beta = -1.3;
  ComplexVec mix(512);
  for (std::size_t i = 0; i < 512; ++i) {
    mix.re[i] = alpha * x.re[i] + beta * y.re[i];
    mix.im[i] = alpha * x.im[i] + beta * y.im[i];
  }
  const ComplexVec fx = fft(x);
  const ComplexVec fy = fft(y);
  ComplexVec combined(512);
  for (std::size_t i = 0; i < 512; ++i) {
    combined.re[i] = alpha * fx.re[i] + beta * fy.re[i];
    combined.im[i] = alpha * fx.im[i] + beta * fy.im[i];
  }
  CHECK(max_err(fft(mix), combined) < 1e-9);
}

TEST_CASE("circular convolution") {
  const std::vector<double> f{1, 2, 3, 4};
  const std::vector<double> delta0{1, 0, 0, 0};
  const std::vector<double> delta1{0, 1, 0, 0};
  const auto same = circular_convolve(f, delta0);
  const auto shifted = circular_convolve(f, delta1);
  const std::vector<double> expected_shift{4, 1, 2, 3};
  CHECK(naive_circular_convolve(f, delta1) == expected_shift);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(std::abs(same[i] - f[i]) < 1e-12);
    CHECK(std::abs(shifted[i] - expected_shift[i]) < 1e-12);
  }
  CHECK_THROWS_AS(circular_convolve(f, std::vector<double>{1, 2}), ArgumentError);

  SeededRng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = std::size_t{8} << (trial % 8);  // 8 .. 1024
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.uniform(-1, 1);
      b[i] = rng.uniform(-1, 1);
    }
    const auto fast = circular_convolve(a, b);
    const auto slow = naive_circular_convolve(a, b);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) err = std::max(err, std::abs(fast[i] - slow[i]));
    CHECK_MESSAGE(err < 1e-9, "n=" << n);
  }
}

TEST_CASE("stft of a whole-period sine concentrates in one bin") {
  const std::size_t n = 64;
  std::vector<double> signal(n);
  for (std::size_t j = 0; j < n; ++j) signal[j] = std::sin(2 * std::numbers::pi * 5 * j / n);
  const Spectrogram spec = stft(signal, StftConfig::make(n, n, WindowKind::rectangular));
  REQUIRE(spec.frames == 1);
  CHECK(spec.magnitude(0, 5) == doctest::Approx(n / 2.0));
  CHECK(spec.magnitude(0, n - 5) == doctest::Approx(n / 2.0));
  for (std::size_t k = 0; k < n; ++k) {
    if (k == 5 || k == n - 5) continue;
    CHECK(spec.magnitude(0, k) < 1e-9);
  }
}

TEST_CASE("hann window reduces leakage for a fractional-period sine") {
  const std::size_t n = 64;
  std::vector<double> signal(n);
  for (std::size_t j = 0; j < n; ++j) signal[j] = std::sin(2 * std::numbers::pi * 5.5 * j / n);
  auto leakage = [&](WindowKind kind, std::size_t* peak) {
    const Spectrogram s = stft(signal, StftConfig::make(n, n, kind));
    double total = 0.0, far = 0.0, best = -1.0;
    for (std::size_t k = 0; k <= n / 2; ++k) {
      const double p = s.power(0, k);
      total += p;
      if (k < 4 || k > 7) far += p;
      if (p > best) {
        best = p;
        *peak = k;
      }
    }
    return far / total;
  };
  std::size_t rect_peak = 0, hann_peak = 0;
  const double rect = leakage(WindowKind::rectangular, &rect_peak);
  const double hann = leakage(WindowKind::hann, &hann_peak);
  CHECK(hann < rect);
  CHECK((hann_peak == 5 || hann_peak == 6));
}

TEST_CASE("stft frame count and errors") {
  const auto cfg = StftConfig::make(16, 4);
  CHECK(stft_frame_count(16, cfg) == 1);
  CHECK(stft_frame_count(40, cfg) == (40 - 16) / 4 + 1);
  CHECK_THROWS_AS(stft(std::vector<double>(8, 0.0), cfg), ArgumentError);
  CHECK_THROWS_AS(StftConfig::make(16, 0), ArgumentError);
  CHECK_THROWS_AS(StftConfig::make(24, 4), ArgumentError);

  const Spectrogram zero = stft(std::vector<double>(64, 0.0), cfg);
  for (double v : zero.re) CHECK(v == 0.0);
  for (double v : zero.im) CHECK(v == 0.0);
}

TEST_CASE("hann window shape") {
  const auto w = hann_window(9);
  CHECK(w.front() == doctest::Approx(0.0));
  CHECK(w.back() == doctest::Approx(0.0));
  CHECK(w[4] == doctest::Approx(1.0));
}

TEST_CASE("mel scale") {
  CHECK(hz_to_mel(0.0) == 0.0);
  CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)).epsilon(1e-12));
  CHECK(mel_to_hz(hz_to_mel(1234.5)) == doctest::Approx(1234.5));
  CHECK_THROWS_AS(hz_to_mel(-1.0), ArgumentError);
}

TEST_CASE("mel filterbank invariants and zero input") {
  const MelFilterbank bank(64, 512, 16000.0);
  CHECK(bank.bins() == 257);
  for (std::size_t b = 0; b < bank.bands(); ++b) {
    double mass = 0.0;
    for (std::size_t k = 0; k < bank.bins(); ++k) {
      CHECK(bank.weight(b, k) >= 0.0);
      mass += bank.weight(b, k);
    }
    CHECK(mass > 0.0);
    if (b > 0) CHECK(bank.center_mel(b) > bank.center_mel(b - 1));
  }
  const Spectrogram zero = stft(std::vector<double>(1024, 0.0), StftConfig::make(512, 256));
  const Tensor mel = mel_spectrogram(zero, bank);
  CHECK(mel.rows() == zero.frames);
  CHECK(max_abs(mel) == 0.0);
}
