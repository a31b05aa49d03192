#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace poolformer {

/// Invalid caller input: bad shapes, out-of-range hyperparameters, inconsistent configs.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed on-disk data (WAV headers, token files, checkpoints, manifests).
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

/// An operation was requested in a state that cannot serve it (e.g. missing checkpoint).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A numeric evaluation produced NaN or infinity.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace poolformer
