#include <cmath>
#include <complex>

#include "doctest.h"
#include "poolformer/errors.hpp"
#include "poolformer/rng.hpp"
#include "poolformer/scan.hpp"

using namespace poolformer;
using namespace poolformer::scan;

namespace {

DiagonalAffineSeq prefix_sum_seq() {
  const std::vector<double> b{3, 1, 7, 0, 4, 1, 6, 3};
  auto seq = DiagonalAffineSeq::zeros(b.size(), 1);
  std::fill(seq.a_re.begin(), seq.a_re.end(), 1.0);
  seq.b_re = b;
  return seq;
}

// |a| < 1 complex coefficients, offsets in the unit square.
DiagonalAffineSeq random_seq(SeededRng& rng, std::size_t steps, std::size_t dim) {
  auto seq = DiagonalAffineSeq::zeros(steps, dim);
  for (std::size_t i = 0; i < steps * dim; ++i) {
    const double mag = std::sqrt(rng.uniform());
    const double phase = rng.uniform(-3.14159, 3.14159);
    seq.a_re[i] = mag * std::cos(phase);
    seq.a_im[i] = mag * std::sin(phase);
    seq.b_re[i] = rng.uniform(-1, 1);
    seq.b_im[i] = rng.uniform(-1, 1);
  }
  for (std::size_t d = 0; d < dim; ++d) {
    seq.h0_re[d] = rng.uniform(-1, 1);
    seq.h0_im[d] = rng.uniform(-1, 1);
  }
  return seq;
}

double max_diff(const States& a, const States& b) {
  REQUIRE(a.re.size() == b.re.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.re.size(); ++i) {
    m = std::max(m, std::hypot(a.re[i] - b.re[i], a.im[i] - b.im[i]));
  }
  return m;
}

AffineMap random_map(SeededRng& rng, std::size_t dim) {
  AffineMap m = AffineMap::identity(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    m.m_re[d] = rng.uniform(-1, 1);
    m.m_im[d] = rng.uniform(-1, 1);
    m.c_re[d] = rng.uniform(-1, 1);
    m.c_im[d] = rng.uniform(-1, 1);
  }
  return m;
}

}  // namespace

TEST_CASE("sequential recurrence examples") {
  const States sums = sequential_recurrence(prefix_sum_seq());
  const std::vector<double> expected{3, 4, 11, 11, 15, 16, 22, 25};
  for (std::size_t k = 0; k < 8; ++k) CHECK(sums.re[k] == expected[k]);

  auto memoryless = prefix_sum_seq();
  std::fill(memoryless.a_re.begin(), memoryless.a_re.end(), 0.0);
  const States copy = sequential_recurrence(memoryless);
  for (std::size_t k = 0; k < 8; ++k) CHECK(copy.re[k] == memoryless.b_re[k]);

  auto half = DiagonalAffineSeq::zeros(3, 1);
  std::fill(half.a_re.begin(), half.a_re.end(), 0.5);
  std::fill(half.b_re.begin(), half.b_re.end(), 1.0);
  const States h = sequential_recurrence(half);
  CHECK(h.re[0] == 1.0);
  CHECK(h.re[1] == 1.5);
  CHECK(h.re[2] == 1.75);
}

TEST_CASE("blelloch prescan reproduces the textbook prefix sums") {
  const auto pre = blelloch_prescan(prefix_sum_seq(), 2);
  const std::vector<double> exclusive{0, 3, 4, 11, 11, 15, 16, 22};
  for (std::size_t k = 0; k < 8; ++k) {
    CHECK(pre[k].c_re[0] == exclusive[k]);
    CHECK(pre[k].m_re[0] == 1.0);
  }
  const States inclusive = blelloch_scan(prefix_sum_seq(), 2);
  const std::vector<double> expected{3, 4, 11, 11, 15, 16, 22, 25};
  for (std::size_t k = 0; k < 8; ++k) CHECK(inclusive.re[k] == expected[k]);
}

TEST_CASE("identity elements keep the initial state") {
  auto seq = DiagonalAffineSeq::zeros(16, 2);
  std::fill(seq.a_re.begin(), seq.a_re.end(), 1.0);
  seq.h0_re = {0.25, -2.0};
  seq.h0_im = {1.0, 0.5};
  const States s = blelloch_scan(seq, 3);
  for (std::size_t k = 0; k < 16; ++k) {
    CHECK(s.at(k, 0) == std::complex<double>(0.25, 1.0));
    CHECK(s.at(k, 1) == std::complex<double>(-2.0, 0.5));
  }
}

TEST_CASE("blelloch scan matches sequential for non-power-of-two lengths") {
  SeededRng rng(21);
  for (std::size_t steps : {1, 2, 3, 5, 13, 100}) {
    const auto seq = random_seq(rng, steps, 3);
    CHECK(max_diff(blelloch_scan(seq, 2), sequential_recurrence(seq)) < 1e-12);
  }
}

TEST_CASE("blelloch scan on long complex sequences is worker-count invariant") {
  SeededRng rng(22);
  const auto seq = random_seq(rng, 1 << 14, 8);
  const States reference = sequential_recurrence(seq);
  const States one = blelloch_scan(seq, 1);
  CHECK(max_diff(one, reference) < 1e-12);
  for (std::size_t workers : {2, 4}) {
    const States many = blelloch_scan(seq, workers);
    CHECK(many.re == one.re);
    CHECK(many.im == one.im);
  }
}

TEST_CASE("combine is associative") {
  SeededRng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const auto e1 = random_map(rng, 4);
    const auto e2 = random_map(rng, 4);
    const auto e3 = random_map(rng, 4);
    std::vector<std::complex<double>> x(4);
    for (auto& v : x) v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const auto left = combine(combine(e1, e2), e3).apply(x);
    const auto right = combine(e1, combine(e2, e3)).apply(x);
    const auto direct = e3.apply(e2.apply(e1.apply(x)));
    for (std::size_t d = 0; d < 4; ++d) {
      CHECK(std::abs(left[d] - right[d]) < 1e-12);
      CHECK(std::abs(left[d] - direct[d]) < 1e-12);
    }
  }
}

TEST_CASE("convolutional view") {
  SUBCASE("a = 0 copies the inputs") {
    auto seq = prefix_sum_seq();
    std::fill(seq.a_re.begin(), seq.a_re.end(), 0.0);
    const States s = conv_recurrence(seq);
    for (std::size_t k = 0; k < 8; ++k) CHECK(std::abs(s.re[k] - seq.b_re[k]) < 1e-12);
  }
  SUBCASE("a = 1 with unit inputs counts") {
    auto seq = DiagonalAffineSeq::zeros(1024, 1);
    std::fill(seq.a_re.begin(), seq.a_re.end(), 1.0);
    std::fill(seq.b_re.begin(), seq.b_re.end(), 1.0);
    const States s = conv_recurrence(seq);
    for (std::size_t k = 0; k < 1024; ++k) CHECK(std::abs(s.re[k] - (k + 1.0)) < 1e-9);
  }
  SUBCASE("a = 0.9 random inputs match sequential") {
    SeededRng rng(24);
    auto seq = DiagonalAffineSeq::zeros(256, 2);
    std::fill(seq.a_re.begin(), seq.a_re.end(), 0.9);
    for (auto& v : seq.b_re) v = rng.uniform(-1, 1);
    CHECK(max_diff(conv_recurrence(seq), sequential_recurrence(seq)) < 1e-9);
  }
  SUBCASE("complex constant coefficient with initial state") {
    SeededRng rng(25);
    auto seq = random_seq(rng, 300, 4);
    for (std::size_t k = 1; k < seq.steps; ++k) {
      for (std::size_t d = 0; d < seq.dim; ++d) {
        seq.a_re[k * 4 + d] = seq.a_re[d];
        seq.a_im[k * 4 + d] = seq.a_im[d];
      }
    }
    CHECK(max_diff(conv_recurrence(seq), sequential_recurrence(seq)) < 1e-9);
  }
  SUBCASE("time-varying coefficients are rejected") {
    auto seq = prefix_sum_seq();
    seq.a_re[3] = 0.5;
    CHECK_THROWS_AS(conv_recurrence(seq), ArgumentError);
  }
}

TEST_CASE("stability bound holds for |a| <= 1") {
  SeededRng rng(26);
  const auto seq = random_seq(rng, 4096, 4);
  const States s = sequential_recurrence(seq);
  for (std::size_t d = 0; d < 4; ++d) {
    double bound = std::hypot(seq.h0_re[d], seq.h0_im[d]);
    for (std::size_t k = 0; k < seq.steps; ++k) {
      bound += std::hypot(seq.b_re[k * 4 + d], seq.b_im[k * 4 + d]);
      CHECK(std::abs(s.at(k, d)) <= bound + 1e-12);
    }
  }
}

TEST_CASE("zero-order hold discretization") {
  SUBCASE("a = 0 takes the analytic limit") {
    const auto z = zoh_discretize({{0.0}, {2.0}, 0.25});
    CHECK(z.a_bar[0] == std::complex<double>(1.0, 0.0));
    CHECK(std::abs(z.b_bar[0] - 0.5) < 1e-15);
  }
  SUBCASE("a = -1, delta = ln 2 halves the state") {
    const auto z = zoh_discretize({{-1.0}, {1.0}, std::log(2.0)});
    CHECK(std::abs(z.a_bar[0] - 0.5) < 1e-15);
    CHECK(std::abs(z.b_bar[0] - 0.5) < 1e-15);  // (0.5 - 1) / -1
  }
  SUBCASE("tiny a is continuous with the limit") {
    const auto z = zoh_discretize({{1e-12}, {3.0}, 0.1});
    CHECK(std::abs(z.b_bar[0] - 0.3) < 1e-12);
  }
  SUBCASE("delta -> 0") {
    const auto z = zoh_discretize({{{-0.5, 2.0}}, {1.0}, 1e-10});
    CHECK(std::abs(z.a_bar[0] - 1.0) < 1e-9);
    CHECK(std::abs(z.b_bar[0]) < 1e-9);
  }
  SUBCASE("non-positive delta is rejected") {
    CHECK_THROWS_AS(zoh_discretize({{-1.0}, {1.0}, 0.0}), ArgumentError);
  }
}
