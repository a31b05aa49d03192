#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "poolformer/data.hpp"
#include "poolformer/errors.hpp"
#include "poolformer/metrics.hpp"

using namespace poolformer;
using namespace poolformer::metrics;

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) m(i, j) = t.at(i, j);
  }
  return m;
}

Tensor from_eigen(const Eigen::MatrixXd& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) t.at(i, j) = m(i, j);
  }
  return t;
}

Tensor random_psd(SeededRng& rng, std::size_t d, std::size_t rank) {
  const Tensor b = gaussian_init(rng, {d, rank}, 1.0);
  return matmul(b, transpose(b));
}

GaussianStats random_stats(SeededRng& rng, std::size_t d) {
  return {gaussian_init(rng, {d}, 1.0), random_psd(rng, d, d + 2)};
}

Eigen::MatrixXd eigen_sqrtm(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

// Independent FID through Eigen's eigensolver.
double eigen_fid(const GaussianStats& p, const GaussianStats& q) {
  const Eigen::MatrixXd s1 = to_eigen(p.cov), s2 = to_eigen(q.cov);
  const Eigen::MatrixXd r = eigen_sqrtm(s1);
  const Eigen::MatrixXd inner = r * s2 * r;
  const Eigen::MatrixXd sym = 0.5 * (inner + inner.transpose());
  double dm = 0.0;
  for (std::size_t i = 0; i < p.dim(); ++i) dm += (p.mean[i] - q.mean[i]) * (p.mean[i] - q.mean[i]);
  return dm + s1.trace() + s2.trace() - 2.0 * eigen_sqrtm(sym).trace();
}

Tensor random_probs(SeededRng& rng, std::size_t n, std::size_t k, double sharp) {
  Tensor p({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      p.at(i, j) = std::exp(sharp * rng.normal());
      s += p.at(i, j);
    }
    for (std::size_t j = 0; j < k; ++j) p.at(i, j) /= s;
  }
  return p;
}

}  // namespace

TEST_CASE("fit_gaussian") {
  const Tensor two({2, 3}, {1.0, 2.0, 3.0, 1.0, 2.0, 3.0});
  const GaussianStats s = fit_gaussian(two);
  CHECK(s.cov == Tensor({3, 3}));
  CHECK(s.mean == Tensor({3}, {1.0, 2.0, 3.0}));

  SeededRng rng(1);
  const Tensor x = gaussian_init(rng, {10000, 4}, 1.0);
  const GaussianStats g = fit_gaussian(x);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(std::abs(g.mean[i]) < 0.05);
    for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(g.cov.at(i, j) - (i == j)) < 0.1);
  }

  // unbiased estimator against Eigen
  const Tensor small = gaussian_init(rng, {7, 3}, 2.0);
  const Eigen::MatrixXd m = to_eigen(small);
  const Eigen::MatrixXd centered = m.rowwise() - m.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / 6.0;
  const GaussianStats gs = fit_gaussian(small);
  CHECK((to_eigen(gs.cov) - cov).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(fit_gaussian(Tensor({1, 3})), ArgumentError);
}

TEST_CASE("jacobi eigen matches Eigen's solver") {
  SeededRng rng(2);
  for (std::size_t d : {1, 2, 6, 12}) {
    const Tensor b = gaussian_init(rng, {d, d}, 1.0);
    const Tensor a = b + transpose(b);
    const SymmetricEigen e = jacobi_eigen(a);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(a));
    for (std::size_t i = 0; i < d; ++i) CHECK(std::abs(e.values[i] - es.eigenvalues()(i)) < 1e-10);
    const Eigen::MatrixXd q = to_eigen(e.vectors);
    const Eigen::MatrixXd recon = q * Eigen::VectorXd::Map(e.values.data(), d).asDiagonal() * q.transpose();
    CHECK((recon - to_eigen(a)).norm() < 1e-10 * (1 + to_eigen(a).norm()));
    CHECK((q.transpose() * q - Eigen::MatrixXd::Identity(d, d)).norm() < 1e-12);
  }
}

TEST_CASE("psd_sqrt") {
  Tensor eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  CHECK((to_eigen(psd_sqrt(eye)) - to_eigen(eye)).norm() < 1e-15);
  const Tensor r = psd_sqrt(Tensor({2, 2}, {4.0, 0.0, 0.0, 9.0}));
  CHECK(r.at(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(r.at(1, 1) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(r.at(0, 1) == 0.0);

  SeededRng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = random_psd(rng, 6, trial % 2 ? 6 : 3);  // full rank and rank deficient
    const Eigen::MatrixXd s = to_eigen(psd_sqrt(a));
    const Eigen::MatrixXd am = to_eigen(a);
    CHECK((s * s - am).norm() <= 1e-8 * (1 + am.norm()));
  }
  // a slightly negative eigenvalue is clamped
  const Tensor neg({2, 2}, {1.0, 0.0, 0.0, -1e-12});
  CHECK(psd_sqrt(neg).at(1, 1) == 0.0);
  CHECK_THROWS_AS(psd_sqrt(Tensor({2, 2}, {1.0, 0.5, 0.4, 1.0})), ArgumentError);
}

TEST_CASE("frechet distance") {
  SeededRng rng(4);
  const GaussianStats a{Tensor({1}, {0.0}), Tensor({1, 1}, {1.0})};
  const GaussianStats b{Tensor({1}, {1.0}), Tensor({1, 1}, {4.0})};
  CHECK(std::abs(frechet_distance(a, b) - 2.0) < 1e-12);

  for (int trial = 0; trial < 20; ++trial) {
    // 1-D closed form
    const double m1 = rng.normal(), m2 = rng.normal();
    const double s1 = rng.uniform(0.1, 3), s2 = rng.uniform(0.1, 3);
    const GaussianStats p{Tensor({1}, {m1}), Tensor({1, 1}, {s1 * s1})};
    const GaussianStats q{Tensor({1}, {m2}), Tensor({1, 1}, {s2 * s2})};
    CHECK(std::abs(frechet_distance(p, q) - ((m1 - m2) * (m1 - m2) + (s1 - s2) * (s1 - s2))) < 1e-9);

    const GaussianStats x = random_stats(rng, 5), y = random_stats(rng, 5);
    CHECK(std::abs(frechet_distance(x, x)) < 1e-9);
    CHECK(std::abs(frechet_distance(x, y) - frechet_distance(y, x)) < 1e-9);
    CHECK(std::abs(frechet_distance(x, y) - eigen_fid(x, y)) < 1e-8 * (1 + eigen_fid(x, y)));

    // simultaneous rotation
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(to_eigen(gaussian_init(rng, {5, 5}, 1.0)));
    const Eigen::MatrixXd rot = qr.householderQ();
    auto rotate = [&](const GaussianStats& g) {
      const Eigen::VectorXd mu = rot * to_eigen(Tensor({5, 1}, {g.mean.data().begin(), g.mean.data().end()}));
      const Eigen::MatrixXd c = rot * to_eigen(g.cov) * rot.transpose();
      GaussianStats r{Tensor({5}), from_eigen(0.5 * (c + c.transpose()))};
      for (std::size_t i = 0; i < 5; ++i) r.mean[i] = mu(static_cast<Eigen::Index>(i));
      return r;
    };
    CHECK(std::abs(frechet_distance(rotate(x), rotate(y)) - frechet_distance(x, y)) < 1e-8);
  }

  // interpolating a sample set toward the reference lowers the distance
  const Tensor ref = gaussian_init(rng, {2000, 3}, 1.0);
  const Tensor far = gaussian_init(rng, {2000, 3}, 4.0);
  const GaussianStats ref_stats = fit_gaussian(ref);
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 4; ++k) {
    const double t = k / 4.0;
    Tensor mix = far * (1 - t) + ref * t;
    for (std::size_t i = 0; i < mix.rows(); ++i) mix.at(i, 0) += 3.0 * (1 - t);
    const double d = frechet_distance(fit_gaussian(mix), ref_stats);
    CHECK(d < prev);
    prev = d;
  }
  CHECK(prev < 1e-9);

  // fewer samples than dimensions: singular covariances, still zero against itself
  for (int trial = 0; trial < 10; ++trial) {
    const GaussianStats few = fit_gaussian(gaussian_init(rng, {6, 16}, 3.0));
    CHECK(std::abs(frechet_distance(few, few)) < 1e-9);
    const GaussianStats other = fit_gaussian(gaussian_init(rng, {6, 16}, 3.0));
    CHECK(std::abs(frechet_distance(few, other) - eigen_fid(few, other)) < 1e-6 * (1 + eigen_fid(few, other)));
  }
  CHECK_THROWS_AS(frechet_distance(a, random_stats(rng, 2)), ArgumentError);
}

TEST_CASE("inception score") {
  const std::size_t k = 5;
  Tensor same({8, k});
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < k; ++j) same.at(i, j) = j == 1 ? 0.6 : 0.1;
  }
  CHECK(std::abs(inception_score(same) - 1.0) < 1e-12);
  Tensor onehot({k, k});
  for (std::size_t i = 0; i < k; ++i) onehot.at(i, i) = 1.0;
  CHECK(std::abs(inception_score(onehot) - static_cast<double>(k)) < 1e-12);

  SeededRng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t kk = 2 + rng.below(9);
    const Tensor p = random_probs(rng, 1 + rng.below(20), kk, rng.uniform(0.1, 6));
    const double is = inception_score(p);
    CHECK(is >= 1.0 - 1e-12);
    CHECK(is <= static_cast<double>(kk) + 1e-12);
  }
  CHECK_THROWS_AS(inception_score(Tensor({0, 3})), ArgumentError);
  CHECK_THROWS_AS(inception_score(Tensor({1, 2}, {0.5, 0.6})), ArgumentError);
  CHECK_THROWS_AS(inception_score(Tensor({1, 2}, {1.5, -0.5})), ArgumentError);
}

TEST_CASE("mIS and AM") {
  const std::size_t k = 4;
  Tensor same({6, k});
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < k; ++j) same.at(i, j) = j == 2 ? 0.7 : 0.1;
  }
  CHECK(std::abs(modified_is_and_am(same).mis - 1.0) < 1e-12);

  const Tensor uniform = Tensor::filled({5, k}, 0.25);
  const AuxScores u = modified_is_and_am(uniform);
  CHECK(std::abs(u.am - std::log(4.0)) < 1e-12);
  CHECK(std::abs(u.mis - 1.0) < 1e-12);

  Tensor onehot({k, k});
  for (std::size_t i = 0; i < k; ++i) onehot.at(i, i) = 1.0;
  const AuxScores o = modified_is_and_am(onehot);
  CHECK(std::abs(o.am) < 1e-12);  // confident and balanced
  CHECK(o.mis > 1e5);               // floored log keeps it finite
  CHECK(std::isfinite(o.mis));

  const AuxScores one = modified_is_and_am(Tensor({1, 3}, {0.2, 0.3, 0.5}));
  CHECK(std::isfinite(one.mis));
  CHECK(std::isfinite(one.am));
  CHECK(one.mis == 1.0);
}

TEST_CASE("tiny classifier on the synthetic set") {
  data::SyntheticSpec spec;
  spec.seed = 11;
  const auto examples = data::generate_synthetic(spec);
  std::vector<std::vector<double>> train_w, held_w;
  std::vector<std::size_t> train_y, held_y;
  for (const auto& e : examples) {
    const auto wave = data::decode_all(e.tokens, data::Encoding::mu_law);
    if (e.split == "train") {
      train_w.push_back(wave);
      train_y.push_back(e.label);
    } else {
      held_w.push_back(wave);
      held_y.push_back(e.label);
    }
  }
  TinyClassifier clf;
  CHECK_THROWS_AS(clf.classify(held_w), StateError);
  clf.fit(train_w, train_y);
  const double acc = clf.accuracy(held_w, held_y);
  MESSAGE("held-out accuracy " << acc << " on " << held_w.size());
  CHECK(acc > 0.9);

  const auto out = clf.classify({held_w[0], held_w[0], held_w[1]});
  CHECK(out.features.shape() == Shape{3, 16});
  CHECK(std::equal(out.probs.row(0).begin(), out.probs.row(0).end(), out.probs.row(1).begin()));
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0.0;
    for (double v : out.probs.row(i)) s += v;
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
  // the same set against itself
  const auto self = clf.classify(held_w).features;
  CHECK(frechet_distance(fit_gaussian(self), fit_gaussian(self)) < 1e-9);
}
