#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <numeric>

#include "ainv/baselines.hpp"
#include "ainv/error.hpp"
#include "ainv/rng.hpp"
#include "support/oracles.hpp"

using namespace ainv;

namespace {

std::vector<double> sine(double freq_hz, double fs, int n, double amp = 1.0,
                         double phase = 0.0) {
  std::vector<double> x(static_cast<size_t>(n));
  for (int t = 0; t < n; ++t)
    x[static_cast<size_t>(t)] = amp * std::sin(2.0 * M_PI * freq_hz * t / fs + phase);
  return x;
}

double total(const std::vector<double>& v, size_t from = 0) {
  double s = 0;
  for (size_t i = from; i < v.size(); ++i) s += v[i];
  return s;
}

}  // namespace

TEST_CASE("welch: constant signal carries no non-DC power") {
  const std::vector<double> x(128, 3.7);
  for (const auto window : {WelchWindow::kHann, WelchWindow::kRect}) {
    const auto psd = welch_psd(x, 256.0, 64, 32, window);
    REQUIRE(psd.size() == 33);
    const double non_dc = total(psd, 1);
    const double all = total(psd);
    CHECK(non_dc <= 1e-10 * std::max(all, 1e-12));
  }
}

TEST_CASE("welch: bin-aligned 32 Hz sinusoid against the direct DFT oracle") {
  const auto x = sine(32.0, 256.0, 128);

  // Rectangular window: the periodogram of a bin-aligned sinusoid is a
  // single line; >= 99% of non-DC power sits in bin 8 (= 64*32/256).
  const auto rect = welch_psd(x, 256.0, 64, 32, WelchWindow::kRect);
  const double non_dc = total(rect, 1);
  CHECK(rect[8] >= 0.99 * non_dc);

  // Both windows agree with the independently computed direct-DFT estimate.
  for (const bool hann : {true, false}) {
    const auto got = welch_psd(x, 256.0, 64, 32,
                               hann ? WelchWindow::kHann : WelchWindow::kRect);
    const auto ref = oracle::welch_direct_dft(x, 256.0, 64, 32, hann);
    REQUIRE(got.size() == ref.size());
    for (size_t k = 0; k < got.size(); ++k)
      CHECK(got[k] == doctest::Approx(ref[k]).epsilon(1e-9));
  }

  // The Hann window spreads a bin-aligned line over three bins with exact
  // 4:1:1 power ratios; the center still dominates.
  const auto hann = welch_psd(x, 256.0, 64, 32, WelchWindow::kHann);
  const double hann_non_dc = total(hann, 1);
  CHECK(hann[8] / hann_non_dc == doctest::Approx(2.0 / 3.0).epsilon(1e-6));
  CHECK(hann[7] == doctest::Approx(hann[9]).epsilon(1e-9));
}

TEST_CASE("welch: 10 Hz sinusoid leaks but the alpha band dominates") {
  const auto x = sine(10.0, 256.0, 128);
  const auto psd = welch_psd(x, 256.0, 64, 32, WelchWindow::kHann);
  const auto ref = oracle::welch_direct_dft(x, 256.0, 64, 32, true);
  for (size_t k = 0; k < psd.size(); ++k)
    CHECK(psd[k] == doctest::Approx(ref[k]).epsilon(1e-9));

  const auto bands = default_bands();
  const double bin_hz = 256.0 / 64;
  std::vector<double> band_power(bands.size(), 0.0);
  for (size_t k = 0; k < psd.size(); ++k) {
    const double f = static_cast<double>(k) * bin_hz;
    for (size_t b = 0; b < bands.size(); ++b)
      if (f >= bands[b].low_hz && f < bands[b].high_hz) band_power[b] += psd[k];
  }
  const double alpha = band_power[1];  // [8, 15)
  CHECK(alpha >= 0.6 * total(psd));
  for (size_t b = 0; b < bands.size(); ++b)
    if (b != 1) CHECK(alpha > band_power[b]);
}

TEST_CASE("welch: precondition errors") {
  const std::vector<double> x(100, 0.0);
  CHECK_THROWS_AS(welch_psd(x, 256.0, 63, 32), ArgumentError);   // not pow2
  CHECK_THROWS_AS(welch_psd(x, 256.0, 128, 32), ArgumentError);  // too long
  CHECK_THROWS_AS(welch_psd(x, 256.0, 64, 64), ArgumentError);   // overlap
  CHECK_THROWS_AS(welch_psd(x, 0.0, 64, 32), ArgumentError);
}

TEST_CASE("log_bandpowers: 16 channels x 8 bands = 128 features") {
  Rng rng(21);
  const Tensor x = oracle::random_tensor<float>({16, 128}, rng);
  const auto bands = default_bands();
  const auto features = log_bandpowers(x, 256.0, bands, 64, 32);
  CHECK(features.size() == 128);
}

TEST_CASE("log_bandpowers: doubling amplitude adds ln 4 to every band") {
  // One tone per band keeps every bandpower far above the log floor, where
  // the identity is exact (doubling a float signal is exact scaling).
  const double tones[8] = {6, 11, 17, 22, 27, 37, 52, 67};
  Tensor x({1, 128});
  for (int t = 0; t < 128; ++t) {
    double v = 0;
    for (const double f : tones) v += std::sin(2.0 * M_PI * f * t / 256.0 + f);
    x.data[static_cast<size_t>(t)] = static_cast<float>(v);
  }
  Tensor x2 = x;
  for (auto& v : x2.data) v *= 2.0f;
  const auto bands = default_bands();
  const auto f1 = log_bandpowers(x, 256.0, bands, 64, 32);
  const auto f2 = log_bandpowers(x2, 256.0, bands, 64, 32);
  for (size_t b = 0; b < f1.size(); ++b)
    CHECK(f2[b] - f1[b] == doctest::Approx(std::log(4.0)).epsilon(1e-9));
}

TEST_CASE("log_bandpowers: all-zero channel hits the log floor") {
  Tensor x({2, 128});
  const auto bands = default_bands();
  const auto f = log_bandpowers(x, 256.0, bands, 64, 32);
  for (const double v : f) CHECK(v == doctest::Approx(std::log(1e-12)));
}

TEST_CASE("welch: constant offset never moves bins at 4 Hz and up") {
  // Segment detrending makes the estimate offset-invariant; in the double
  // path the residual is rounding of x + c only.
  Rng rng(23);
  std::vector<double> x(128), shifted(128);
  for (int t = 0; t < 128; ++t) {
    x[static_cast<size_t>(t)] = rng.uniform(-1.0, 1.0);
    shifted[static_cast<size_t>(t)] = x[static_cast<size_t>(t)] + 17.5;
  }
  const auto p1 = welch_psd(x, 256.0, 64, 32);
  const auto p2 = welch_psd(shifted, 256.0, 64, 32);
  for (size_t k = 1; k < p1.size(); ++k)
    CHECK(std::fabs(p1[k] - p2[k]) < 1e-9);
}

TEST_CASE("log_bandpowers: offsets at float storage granularity stay inert") {
  Rng rng(24);
  Tensor x = oracle::random_tensor<float>({3, 128}, rng);
  Tensor shifted = x;
  for (int64_t t = 0; t < 128; ++t) shifted.data[static_cast<size_t>(t)] += 17.5f;
  const auto bands = default_bands();
  const auto f1 = log_bandpowers(x, 256.0, bands, 64, 32);
  const auto f2 = log_bandpowers(shifted, 256.0, bands, 64, 32);
  // The offset itself is only representable to ~1e-6 in float.
  for (size_t i = 0; i < f1.size(); ++i)
    CHECK(std::fabs(f1[i] - f2[i]) < 1e-4);
}

TEST_CASE("log_bandpowers: band beyond Nyquist is rejected") {
  Tensor x({1, 128});
  const std::vector<BandDef> bad{{"hf", 60, 130}};
  CHECK_THROWS_AS(log_bandpowers(x, 256.0, bad, 64, 32), ArgumentError);
}

namespace {

// Data matrix with exactly the requested sample covariance: orthonormalized
// Gaussian scores scaled by the target eigenvalues.
Tensor64 data_with_covariance(const Eigen::VectorXd& eigvals, int64_t n,
                              Rng& rng) {
  const int64_t d = eigvals.size();
  Eigen::MatrixXd z(n, d);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) z(i, j) = rng.normal();
  z.rowwise() -= z.colwise().mean();
  // Whiten the empirical covariance, then scale to the target spectrum.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      z.transpose() * z / static_cast<double>(n - 1));
  const Eigen::MatrixXd whiten =
      es.eigenvectors() *
      es.eigenvalues().cwiseMax(1e-12).cwiseSqrt().cwiseInverse().asDiagonal() *
      es.eigenvectors().transpose();
  Eigen::MatrixXd x = z * whiten;
  for (int64_t j = 0; j < d; ++j) x.col(j) *= std::sqrt(eigvals(j));

  Tensor64 out({n, d});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) out.ptr()[i * d + j] = x(i, j);
  return out;
}

}  // namespace

TEST_CASE("pca_fit: collinear 2-D data keeps one perfect component") {
  Tensor64 x({50, 2});
  Rng rng(31);
  for (int64_t i = 0; i < 50; ++i) {
    const double t = rng.uniform(-2.0, 2.0);
    x.ptr()[i * 2] = t;
    x.ptr()[i * 2 + 1] = 3.0 * t;
  }
  const PcaModel model = pca_fit(x, 0.9);
  CHECK(model.kept() == 1);
  CHECK(model.explained_ratio[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("pca_fit: analytic spectrum diag(100,1,...,1) over 11 dims") {
  Rng rng(32);
  Eigen::VectorXd eigvals(11);
  eigvals.setOnes();
  eigvals(0) = 100.0;
  const Tensor64 x = data_with_covariance(eigvals, 400, rng);
  const PcaModel model = pca_fit(x, 0.9);
  // Cumulative ratios: 100/110 = 0.909 >= 0.9 at one component.
  CHECK(model.kept() == 1);
  double kept_ratio = 0;
  for (int64_t i = 0; i < model.kept(); ++i) kept_ratio += model.explained_ratio[static_cast<size_t>(i)];
  CHECK(kept_ratio >= 0.9);
  CHECK(kept_ratio - model.explained_ratio[0] < 0.9);
}

TEST_CASE("pca: transform of the training mean is zero; variances match "
          "eigenvalues; projections contract") {
  Rng rng(33);
  Eigen::VectorXd eigvals(6);
  eigvals << 9, 4, 1, 0.25, 0.04, 0.01;
  const Tensor64 x = data_with_covariance(eigvals, 300, rng);
  const PcaModel model = pca_fit(x, 0.999);

  Tensor64 mean_row({1, 6});
  for (int64_t j = 0; j < 6; ++j) mean_row.ptr()[j] = model.mean.ptr()[j];
  const Tensor64 zero_proj = pca_transform(model, mean_row);
  for (const double v : zero_proj.data) CHECK(std::fabs(v) < 1e-9);

  const Tensor64 proj = pca_transform(model, x);
  for (int64_t k = 0; k < model.kept(); ++k) {
    double mean = 0, var = 0;
    for (int64_t i = 0; i < 300; ++i) mean += proj.ptr()[i * model.kept() + k];
    mean /= 300;
    for (int64_t i = 0; i < 300; ++i) {
      const double d = proj.ptr()[i * model.kept() + k] - mean;
      var += d * d;
    }
    var /= 299;
    CHECK(var == doctest::Approx(eigvals(k)).epsilon(1e-6));
  }

  // Orthonormal rows never lengthen a vector.
  for (int64_t i = 0; i < 20; ++i) {
    double in_norm = 0, out_norm = 0;
    for (int64_t j = 0; j < 6; ++j) {
      const double c = x.ptr()[i * 6 + j] - model.mean.ptr()[j];
      in_norm += c * c;
    }
    for (int64_t k = 0; k < model.kept(); ++k) {
      const double p = proj.ptr()[i * model.kept() + k];
      out_norm += p * p;
    }
    CHECK(std::sqrt(out_norm) <= std::sqrt(in_norm) + 1e-6);
  }
}

TEST_CASE("pca invariants: orthonormal components, sorted ratios") {
  Rng rng(34);
  Tensor64 x({120, 9});
  for (auto& v : x.data) v = rng.uniform(-1.0, 1.0) + 0.4 * rng.normal();
  const PcaModel model = pca_fit(x, 0.95);
  const int64_t d = 9, kept = model.kept();
  for (int64_t a = 0; a < kept; ++a)
    for (int64_t b = 0; b < kept; ++b) {
      double dot = 0;
      for (int64_t j = 0; j < d; ++j)
        dot += model.components.ptr()[a * d + j] * model.components.ptr()[b * d + j];
      CHECK(dot == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-6));
    }
  double sum = 0;
  for (size_t i = 0; i + 1 < model.explained_ratio.size(); ++i)
    CHECK(model.explained_ratio[i] >= model.explained_ratio[i + 1] - 1e-12);
  for (const double r : model.explained_ratio) sum += r;
  CHECK(sum <= 1.0 + 1e-9);
}

TEST_CASE("pca_fit: degenerate inputs error") {
  Tensor64 one({1, 3});
  CHECK_THROWS_AS(pca_fit(one, 0.9), ArgumentError);
  Tensor64 flat = Tensor64::full({10, 3}, 2.5);
  CHECK_THROWS_AS(pca_fit(flat, 0.9), ArgumentError);
}

TEST_CASE("qda: closed-form rule for unit-variance classes splits at zero") {
  // True parameters (means -1/+1, unit variance, equal priors): the Bayes
  // boundary is exactly 0, so predictions flip at 0 +- 1e-3.
  QdaModel model;
  model.means = Tensor64({2, 1}, {-1.0, 1.0});
  for (int k = 0; k < 2; ++k) {
    model.chol_lower.push_back(Tensor64({1, 1}, {1.0}));
    model.log_det.push_back(0.0);
    model.log_prior.push_back(std::log(0.5));
  }
  Tensor64 probe({2, 1}, {-1e-3, 1e-3});
  const QdaPrediction pred = qda_predict(model, probe);
  CHECK(pred.labels[0] == 0);
  CHECK(pred.labels[1] == 1);

  // A fitted model on large samples lands its boundary near zero too.
  Rng rng(41);
  const int64_t n = 4000;
  Tensor64 x({2 * n, 1});
  std::vector<int> y(static_cast<size_t>(2 * n));
  for (int64_t i = 0; i < n; ++i) {
    x.ptr()[i] = -1.0 + rng.normal();
    y[static_cast<size_t>(i)] = 0;
    x.ptr()[n + i] = 1.0 + rng.normal();
    y[static_cast<size_t>(n + i)] = 1;
  }
  const QdaModel fitted = qda_fit(x, y, 1e-4);
  Tensor64 far({2, 1}, {-0.1, 0.1});
  const QdaPrediction fitted_pred = qda_predict(fitted, far);
  CHECK(fitted_pred.labels[0] == 0);
  CHECK(fitted_pred.labels[1] == 1);
}

TEST_CASE("qda: single-class fit is rejected") {
  Tensor64 x({10, 2});
  std::vector<int> y(10, 0);
  CHECK_THROWS_AS(qda_fit(x, y, 1e-3), ArgumentError);
  // A class missing from the middle of the range is also an error.
  std::vector<int> gappy(10, 0);
  for (size_t i = 5; i < 10; ++i) gappy[i] = 2;
  CHECK_THROWS_AS(qda_fit(x, gappy, 1e-3), ArgumentError);
}

TEST_CASE("qda: matches the exact Bayes classifier on known Gaussians") {
  // Three 3-D Gaussians with distinct means and covariances.
  Rng rng(42);
  const std::vector<Eigen::Vector3d> means = {
      {0, 0, 0}, {2.5, 0.5, -1.0}, {-1.5, 2.0, 1.0}};
  std::vector<Eigen::Matrix3d> covs(3);
  covs[0] << 1.0, 0.2, 0.0, 0.2, 1.5, 0.1, 0.0, 0.1, 0.8;
  covs[1] << 0.6, -0.1, 0.0, -0.1, 0.9, 0.2, 0.0, 0.2, 1.2;
  covs[2] << 1.2, 0.3, -0.2, 0.3, 0.7, 0.0, -0.2, 0.0, 0.5;
  std::vector<Eigen::Matrix3d> chols(3);
  for (int k = 0; k < 3; ++k) chols[k] = covs[k].llt().matrixL();

  auto draw = [&](int k) {
    Eigen::Vector3d z(rng.normal(), rng.normal(), rng.normal());
    return (means[static_cast<size_t>(k)] + chols[static_cast<size_t>(k)] * z).eval();
  };

  const int64_t train_per_class = 8000;
  Tensor64 train_x({3 * train_per_class, 3});
  std::vector<int> train_y(static_cast<size_t>(3 * train_per_class));
  for (int k = 0; k < 3; ++k)
    for (int64_t i = 0; i < train_per_class; ++i) {
      const auto v = draw(k);
      const int64_t row = k * train_per_class + i;
      for (int64_t j = 0; j < 3; ++j) train_x.ptr()[row * 3 + j] = v(j);
      train_y[static_cast<size_t>(row)] = k;
    }
  const QdaModel model = qda_fit(train_x, train_y, 1e-4);

  // Bayes oracle: exact log densities from the true parameters.
  auto bayes = [&](const Eigen::Vector3d& v) {
    int best = 0;
    double best_score = -1e300;
    for (int k = 0; k < 3; ++k) {
      const Eigen::Vector3d diff = v - means[static_cast<size_t>(k)];
      const double mahal =
          diff.transpose() * covs[static_cast<size_t>(k)].inverse() * diff;
      const double score =
          -0.5 * std::log(covs[static_cast<size_t>(k)].determinant()) -
          0.5 * mahal;  // equal priors
      if (score > best_score) {
        best_score = score;
        best = k;
      }
    }
    return best;
  };

  const int64_t n_test = 1000;
  Tensor64 test_x({n_test, 3});
  std::vector<int> bayes_labels(static_cast<size_t>(n_test));
  for (int64_t i = 0; i < n_test; ++i) {
    const int k = static_cast<int>(rng.uniform_int(3));
    const auto v = draw(k);
    for (int64_t j = 0; j < 3; ++j) test_x.ptr()[i * 3 + j] = v(j);
    bayes_labels[static_cast<size_t>(i)] = bayes(v);
  }
  const QdaPrediction pred = qda_predict(model, test_x);
  int64_t agree = 0;
  for (int64_t i = 0; i < n_test; ++i)
    agree += pred.labels[static_cast<size_t>(i)] == bayes_labels[static_cast<size_t>(i)];
  CHECK(static_cast<double>(agree) / static_cast<double>(n_test) >= 0.99);
}

TEST_CASE("qda: class means classify to themselves; posteriors normalize") {
  Rng rng(43);
  Tensor64 x({400, 2});
  std::vector<int> y(400);
  const double offsets[4][2] = {{0, 0}, {4, 0}, {0, 4}, {4, 4}};
  for (int64_t i = 0; i < 400; ++i) {
    const int k = static_cast<int>(i % 4);
    x.ptr()[i * 2] = offsets[k][0] + rng.normal();
    x.ptr()[i * 2 + 1] = offsets[k][1] + rng.normal();
    y[static_cast<size_t>(i)] = k;
  }
  const QdaModel model = qda_fit(x, y, 1e-3);
  Tensor64 probes({4, 2});
  for (int k = 0; k < 4; ++k) {
    probes.ptr()[k * 2] = model.means.ptr()[k * 2];
    probes.ptr()[k * 2 + 1] = model.means.ptr()[k * 2 + 1];
  }
  const QdaPrediction pred = qda_predict(model, probes);
  for (int k = 0; k < 4; ++k) {
    CHECK(pred.labels[static_cast<size_t>(k)] == k);
    double sum = 0;
    for (int j = 0; j < 4; ++j)
      sum += std::exp(pred.log_posteriors.ptr()[k * 4 + j]);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("qda: equal covariances reduce to the linear rule") {
  // Construct the model directly with a shared covariance.
  const int d = 3;
  QdaModel model;
  model.means = Tensor64({2, d});
  Eigen::Matrix3d sigma;
  sigma << 1.0, 0.3, 0.0, 0.3, 1.2, 0.1, 0.0, 0.1, 0.9;
  const Eigen::Matrix3d lower = sigma.llt().matrixL();
  const Eigen::Vector3d mu0(0.5, -0.2, 0.1), mu1(-0.4, 0.7, 0.3);
  for (int j = 0; j < d; ++j) {
    model.means.ptr()[j] = mu0(j);
    model.means.ptr()[d + j] = mu1(j);
  }
  for (int k = 0; k < 2; ++k) {
    Tensor64 l({d, d});
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) l.ptr()[a * d + b] = lower(a, b);
    model.chol_lower.push_back(std::move(l));
    model.log_det.push_back(std::log(sigma.determinant()));
    model.log_prior.push_back(std::log(0.5));
  }

  const Eigen::Matrix3d prec = sigma.inverse();
  Rng rng(44);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::Vector3d v(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    Tensor64 probe({1, d});
    for (int j = 0; j < d; ++j) probe.ptr()[j] = v(j);
    const QdaPrediction pred = qda_predict(model, probe);
    const double qda_margin =
        pred.log_posteriors.ptr()[1] - pred.log_posteriors.ptr()[0];
    // LDA decision value: w^T v + b with w = prec (mu1 - mu0).
    const Eigen::Vector3d w = prec * (mu1 - mu0);
    const double b =
        -0.5 * (mu1.dot(prec * mu1) - mu0.dot(prec * mu0));
    const double lda_margin = w.dot(v) + b;
    CHECK(std::fabs(qda_margin - lda_margin) < 1e-8);
  }
}

TEST_CASE("qda: insufficient per-class samples demand more data") {
  Tensor64 x({10, 12});
  Rng rng(45);
  for (auto& v : x.data) v = rng.normal();
  std::vector<int> y(10);
  for (size_t i = 0; i < 10; ++i) y[i] = static_cast<int>(i % 2);
  // 5 samples per class for 12 dims: below the d/2 requirement.
  CHECK_THROWS_AS(qda_fit(x, y, 1e-3), ArgumentError);
}
