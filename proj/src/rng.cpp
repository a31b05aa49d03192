#include "poolformer/rng.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "poolformer/errors.hpp"

namespace poolformer {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed), key_(mix64(seed + kGolden)) {}

SeededRng::SeededRng(std::uint64_t seed, std::uint64_t key, int) : seed_(seed), key_(key) {}

std::uint64_t SeededRng::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double SeededRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double SeededRng::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t SeededRng::below(std::uint64_t n) {
  if (n == 0) throw ArgumentError("SeededRng::below: n must be positive");
  // Rejection keeps the result exactly uniform.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return v % n;
}

SeededRng SeededRng::split(std::uint64_t tag) const {
  return SeededRng(seed_, mix64(key_ ^ mix64(tag + 0x632BE59BD9B4E019ULL)), 0);
}

SeededRng SeededRng::split(std::string_view tag) const {
  // FNV-1a over the tag bytes.
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return split(h);
}

Tensor gaussian_init(SeededRng& rng, const Shape& shape, double variance) {
  if (!(variance >= 0.0)) {
    throw ArgumentError("gaussian_init: variance must be non-negative, got " +
                        std::to_string(variance));
  }
  Tensor t(shape);
  if (variance == 0.0) return t;
  const double stddev = std::sqrt(variance);
  for (double& v : t.data()) v = stddev * rng.normal();
  return t;
}

}  // namespace poolformer
