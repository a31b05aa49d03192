#pragma once

#include <cstdint>
#include <vector>

#include "poolformer/layers.hpp"
#include "poolformer/tensor.hpp"

namespace poolformer::metrics {

struct GaussianStats {
  Tensor mean;  // [d]
  Tensor cov;   // [d x d]

  std::size_t dim() const { return mean.size(); }
};

/// Sample mean and unbiased, symmetrized covariance of [N x d] rows.
GaussianStats fit_gaussian(const Tensor& features);

struct SymmetricEigen {
  std::vector<double> values;  // ascending
  Tensor vectors;              // columns are eigenvectors
};

/// Cyclic Jacobi rotations on a symmetric matrix.
SymmetricEigen jacobi_eigen(const Tensor& m, double tol = 1e-14, int max_sweeps = 100);

/// Q sqrt(max(L, 0)) Q^T. Throws ArgumentError if m is not symmetric within 1e-8.
Tensor psd_sqrt(const Tensor& m);

/// Squared Frechet distance between two Gaussians. Negative round-off down to
/// -1e-8 is clamped to 0.
double frechet_distance(const GaussianStats& p, const GaussianStats& q);

/// Rows of probs must be distributions (non-negative, sum 1 within 1e-9).
void validate_probs(const Tensor& probs);

/// exp(mean_i KL(p_i || mean_j p_j)).
double inception_score(const Tensor& probs);

/// Auxiliary diagnostics from the GAN-evaluation literature, not part of the
/// model's own definitions:
///   mIS = exp(mean over ordered pairs i != j of KL(p_i || p_j)), log argument
///         floored at 1e-12; 1 when fewer than two rows
///   AM  = KL(ref || mean_i p_i) + mean_i H(p_i), ref defaulting to uniform
struct AuxScores {
  double mis = 1.0;
  double am = 0.0;
};
AuxScores modified_is_and_am(const Tensor& probs, const std::vector<double>& ref_marginal = {});

// ---------------------------------------------------------------- classifier

struct ClassifierConfig {
  std::size_t classes = 4;
  double sample_rate = 8000.0;
  std::size_t frame = 256;
  std::size_t hop = 128;
  std::size_t bands = 32;
  std::size_t hidden = 16;
  std::size_t epochs = 400;
  double lr = 0.01;
  std::uint64_t seed = 0;
};

/// Log-mel features averaged over time -> dense -> gelu -> dense -> softmax.
/// The gelu activations are the embedding used for Frechet distances.
class TinyClassifier {
 public:
  explicit TinyClassifier(ClassifierConfig cfg = {});

  /// [N x bands] time-averaged log-mel energies.
  Tensor mel_features(const std::vector<std::vector<double>>& waves) const;

  /// Full-batch AdamW on cross-entropy.
  void fit(const std::vector<std::vector<double>>& waves, const std::vector<std::size_t>& labels);
  bool trained() const { return trained_; }

  struct Output {
    Tensor probs;     // [N x K]
    Tensor features;  // [N x hidden]
  };
  /// Throws StateError before fit().
  Output classify(const std::vector<std::vector<double>>& waves) const;
  double accuracy(const std::vector<std::vector<double>>& waves,
                  const std::vector<std::size_t>& labels) const;

  const ClassifierConfig& config() const { return cfg_; }

 private:
  Tensor standardize(const Tensor& feats) const;

  ClassifierConfig cfg_;
  bool trained_ = false;
  std::vector<double> feat_mean_, feat_std_;
  nn::Dense l1_, l2_;
};

}  // namespace poolformer::metrics
