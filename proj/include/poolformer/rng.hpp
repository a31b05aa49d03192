#pragma once

#include <cstdint>
#include <string_view>

#include "poolformer/tensor.hpp"

namespace poolformer {

/// Counter-based generator: the n-th draw is a pure function of (key, n), so a
/// stream is reproducible bit-for-bit and `split` yields independent child
/// streams without consuming draws from the parent.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of precision.
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller (two draws per sample, no cached spare).
  double normal();
  /// Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n);

  SeededRng split(std::uint64_t tag) const;
  SeededRng split(std::string_view tag) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  SeededRng(std::uint64_t seed, std::uint64_t key, int);

  std::uint64_t seed_ = 0;
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

/// Samples i.i.d. N(0, variance). Zero variance yields exact zeros.
Tensor gaussian_init(SeededRng& rng, const Shape& shape, double variance);

}  // namespace poolformer
