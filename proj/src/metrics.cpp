#include "poolformer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "poolformer/dsp.hpp"
#include "poolformer/errors.hpp"
#include "poolformer/training.hpp"

namespace poolformer::metrics {

namespace {

void require_square(const Tensor& m, const char* what) {
  if (m.rank() != 2 || m.rows() != m.cols()) {
    throw ArgumentError(std::string(what) + ": expected a square matrix, got " + to_string(m.shape()));
  }
}

Tensor symmetrized(const Tensor& m) {
  Tensor s = m;
  const std::size_t n = m.rows();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = 0.5 * (m.at(i, j) + m.at(j, i));
      s.at(i, j) = v;
      s.at(j, i) = v;
    }
  }
  return s;
}

double trace(const Tensor& m) {
  double t = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) t += m.at(i, i);
  return t;
}

}  // namespace

GaussianStats fit_gaussian(const Tensor& x) {
  if (x.rank() != 2) throw ArgumentError("fit_gaussian: features must be [N x d]");
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (n < 2) throw ArgumentError("fit_gaussian: need at least 2 samples, got " + std::to_string(n));
  GaussianStats s{Tensor({d}), Tensor({d, d})};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += x.at(i, j);
  }
  for (std::size_t j = 0; j < d; ++j) s.mean[j] /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < d; ++a) {
      const double da = x.at(i, a) - s.mean[a];
      for (std::size_t b = a; b < d; ++b) s.cov.at(a, b) += da * (x.at(i, b) - s.mean[b]);
    }
  }
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a; b < d; ++b) {
      s.cov.at(a, b) /= static_cast<double>(n - 1);
      s.cov.at(b, a) = s.cov.at(a, b);
    }
  }
  return s;
}

SymmetricEigen jacobi_eigen(const Tensor& m, double tol, int max_sweeps) {
  require_square(m, "jacobi_eigen");
  const std::size_t n = m.rows();
  Tensor a = symmetrized(m);
  Tensor v({n, n});
  for (std::size_t i = 0; i < n; ++i) v.at(i, i) = 1.0;
  double norm = 0.0;
  for (double x : a.data()) norm += x * x;
  norm = std::sqrt(norm);

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
    }
    if (std::sqrt(off) <= tol * norm || off == 0.0) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (std::abs(apq) <= 1e-300) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::hypot(theta, 1.0));
        const double c = 1.0 / std::hypot(t, 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a.at(k, p), akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a.at(p, k), aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
        a.at(p, q) = 0.0;
        a.at(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v.at(k, p), vkq = v.at(k, q);
          v.at(k, p) = c * vkp - s * vkq;
          v.at(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return a.at(i, i) < a.at(j, j); });
  SymmetricEigen out{std::vector<double>(n), Tensor({n, n})};
  for (std::size_t c = 0; c < n; ++c) {
    out.values[c] = a.at(order[c], order[c]);
    for (std::size_t r = 0; r < n; ++r) out.vectors.at(r, c) = v.at(r, order[c]);
  }
  return out;
}

Tensor psd_sqrt(const Tensor& m) {
  require_square(m, "psd_sqrt");
  const std::size_t n = m.rows();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(m.at(i, j) - m.at(j, i)) > 1e-8) {
        throw ArgumentError("psd_sqrt: matrix is not symmetric at (" + std::to_string(i) + ", " +
                            std::to_string(j) + ")");
      }
    }
  }
  const SymmetricEigen e = jacobi_eigen(m);
  Tensor out({n, n});
  for (std::size_t k = 0; k < n; ++k) {
    const double r = std::sqrt(std::max(e.values[k], 0.0));
    if (r == 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const double qi = e.vectors.at(i, k) * r;
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += qi * e.vectors.at(j, k);
    }
  }
  return symmetrized(out);
}

double frechet_distance(const GaussianStats& p, const GaussianStats& q) {
  if (p.dim() != q.dim() || p.cov.rows() != p.dim() || q.cov.rows() != q.dim()) {
    throw ArgumentError("frechet_distance: dimension mismatch " + std::to_string(p.dim()) +
                        " vs " + std::to_string(q.dim()));
  }
  double mean_term = 0.0;
  for (std::size_t i = 0; i < p.dim(); ++i) {
    const double d = p.mean[i] - q.mean[i];
    mean_term += d * d;
  }
  const Tensor s = psd_sqrt(symmetrized(p.cov));
  const Tensor inner = symmetrized(matmul(matmul(s, q.cov), s));
  // eigenvalues at rounding level are zero; their square roots would be ~1e-8 each
  const auto lambda = jacobi_eigen(inner).values;
  double top = 0.0;
  for (double l : lambda) top = std::max(top, std::abs(l));
  const double floor = 1e-13 * top;
  double tr_cross = 0.0;
  for (double l : lambda) tr_cross += l > floor ? std::sqrt(l) : 0.0;
  const double d2 = mean_term + trace(p.cov) + trace(q.cov) - 2.0 * tr_cross;
  if (d2 < 0.0) {
    if (d2 >= -1e-8) return 0.0;
    throw EvaluationError("frechet_distance: negative result " + format_double(d2) +
                          " (covariances not PSD?)");
  }
  return d2;
}

void validate_probs(const Tensor& probs) {
  if (probs.rank() != 2 || probs.rows() == 0 || probs.cols() == 0) {
    throw ArgumentError("class probabilities must be a non-empty [N x K] matrix");
  }
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double sum = 0.0;
    for (double v : probs.row(i)) {
      if (!(v >= 0.0)) throw ArgumentError("class probabilities: negative or NaN entry in row " + std::to_string(i));
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ArgumentError("class probabilities: row " + std::to_string(i) + " sums to " +
                          std::to_string(sum));
    }
  }
}

namespace {

std::vector<double> column_mean(const Tensor& probs) {
  std::vector<double> m(probs.cols(), 0.0);
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    for (std::size_t k = 0; k < probs.cols(); ++k) m[k] += probs.at(i, k);
  }
  for (double& v : m) v /= static_cast<double>(probs.rows());
  return m;
}

// KL(p || q); terms with p_k = 0 vanish, q floored at 1e-12 inside the log.
double kl(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) s += p[k] * std::log(p[k] / std::max(q[k], 1e-12));
  }
  return s;
}

}  // namespace

double inception_score(const Tensor& probs) {
  validate_probs(probs);
  const auto marginal = column_mean(probs);
  double total = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) total += kl(probs.row(i), marginal);
  return std::exp(total / static_cast<double>(probs.rows()));
}

AuxScores modified_is_and_am(const Tensor& probs, const std::vector<double>& ref_marginal) {
  validate_probs(probs);
  const std::size_t n = probs.rows();
  const std::size_t k = probs.cols();
  AuxScores out;
  if (n >= 2) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i != j) total += kl(probs.row(i), probs.row(j));
      }
    }
    out.mis = std::exp(total / static_cast<double>(n * (n - 1)));
  }
  std::vector<double> ref = ref_marginal;
  if (ref.empty()) ref.assign(k, 1.0 / static_cast<double>(k));
  if (ref.size() != k) throw ArgumentError("AM: reference marginal has the wrong length");
  const auto marginal = column_mean(probs);
  double entropy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (double p : probs.row(i)) {
      if (p > 0.0) entropy -= p * std::log(p);
    }
  }
  out.am = kl(ref, marginal) + entropy / static_cast<double>(n);
  return out;
}

// ---------------------------------------------------------------- classifier

TinyClassifier::TinyClassifier(ClassifierConfig cfg) : cfg_(cfg) {
  if (cfg_.classes < 2) throw ArgumentError("classifier needs at least 2 classes");
  if (cfg_.bands == 0 || cfg_.hidden == 0) throw ArgumentError("classifier sizes must be positive");
}

Tensor TinyClassifier::mel_features(const std::vector<std::vector<double>>& waves) const {
  const auto stft_cfg = dsp::StftConfig::make(cfg_.frame, cfg_.hop);
  const dsp::MelFilterbank bank(cfg_.bands, cfg_.frame, cfg_.sample_rate);
  Tensor out({waves.size(), cfg_.bands});
  for (std::size_t i = 0; i < waves.size(); ++i) {
    if (waves[i].size() < cfg_.frame) {
      throw ArgumentError("classifier: waveform shorter than one frame (" +
                          std::to_string(cfg_.frame) + " samples)");
    }
    const Tensor mel = dsp::mel_spectrogram(dsp::stft(waves[i], stft_cfg), bank);
    for (std::size_t f = 0; f < mel.rows(); ++f) {
      for (std::size_t b = 0; b < cfg_.bands; ++b) out.at(i, b) += std::log(mel.at(f, b) + 1e-8);
    }
    for (std::size_t b = 0; b < cfg_.bands; ++b) out.at(i, b) /= static_cast<double>(mel.rows());
  }
  return out;
}

Tensor TinyClassifier::standardize(const Tensor& feats) const {
  Tensor out = feats;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t b = 0; b < out.cols(); ++b) {
      out.at(i, b) = (out.at(i, b) - feat_mean_[b]) / feat_std_[b];
    }
  }
  return out;
}

void TinyClassifier::fit(const std::vector<std::vector<double>>& waves,
                         const std::vector<std::size_t>& labels) {
  if (waves.empty() || waves.size() != labels.size()) {
    throw ArgumentError("classifier fit: need one label per waveform");
  }
  for (std::size_t y : labels) {
    if (y >= cfg_.classes) throw ArgumentError("classifier fit: label " + std::to_string(y) + " >= classes");
  }
  const Tensor raw = mel_features(waves);
  const std::size_t n = raw.rows();
  feat_mean_.assign(cfg_.bands, 0.0);
  feat_std_.assign(cfg_.bands, 0.0);
  for (std::size_t b = 0; b < cfg_.bands; ++b) {
    for (std::size_t i = 0; i < n; ++i) feat_mean_[b] += raw.at(i, b);
    feat_mean_[b] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      feat_std_[b] += (raw.at(i, b) - feat_mean_[b]) * (raw.at(i, b) - feat_mean_[b]);
    }
    feat_std_[b] = std::max(std::sqrt(feat_std_[b] / static_cast<double>(n)), 1e-6);
  }
  const Tensor x = standardize(raw);

  SeededRng rng(cfg_.seed);
  SeededRng r1 = rng.split("l1"), r2 = rng.split("l2");
  l1_ = nn::Dense::make(cfg_.bands, cfg_.hidden, true, r1);
  l2_ = nn::Dense::make(cfg_.hidden, cfg_.classes, true, r2);
  std::vector<NamedParameter> params;
  l1_.visit_params([&](const std::string& nm, Parameter& p) { params.push_back({nm, &p}); }, "l1");
  l2_.visit_params([&](const std::string& nm, Parameter& p) { params.push_back({nm, &p}); }, "l2");
  AdamW opt({0.9, 0.999, 1e-8, 0.0});
  const nn::Gelu gelu;
  nn::Gelu gelu_back;
  for (std::size_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
    for (auto& p : params) p.param->zero_grad();
    nn::Dense::Cache c1, c2;
    nn::Gelu::Cache cg;
    const Tensor z = l2_.forward(gelu.forward(l1_.forward(x, &c1), &cg), &c2);
    Tensor dz({n, cfg_.classes});
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = z.row(i);
      const double mx = *std::max_element(row.begin(), row.end());
      double sum = 0.0;
      for (double v : row) sum += std::exp(v - mx);
      for (std::size_t k = 0; k < cfg_.classes; ++k) {
        dz.at(i, k) = (std::exp(row[k] - mx) / sum - (k == labels[i] ? 1.0 : 0.0)) /
                      static_cast<double>(n);
      }
    }
    l1_.backward(c1, gelu_back.backward(cg, l2_.backward(c2, dz)));
    opt.step(params, cfg_.lr);
  }
  trained_ = true;
}

TinyClassifier::Output TinyClassifier::classify(const std::vector<std::vector<double>>& waves) const {
  if (!trained_) throw StateError("classifier has not been trained");
  const Tensor x = standardize(mel_features(waves));
  const nn::Gelu gelu;
  Output out;
  out.features = gelu.forward(l1_.forward(x, nullptr), nullptr);
  out.probs = l2_.forward(out.features, nullptr);
  for (std::size_t i = 0; i < out.probs.rows(); ++i) {
    auto row = out.probs.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : row) v /= sum;
  }
  return out;
}

double TinyClassifier::accuracy(const std::vector<std::vector<double>>& waves,
                                const std::vector<std::size_t>& labels) const {
  if (waves.size() != labels.size() || waves.empty()) {
    throw ArgumentError("accuracy: need one label per waveform");
  }
  const Output o = classify(waves);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = o.probs.row(i);
    hits += static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()) == labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace poolformer::metrics
