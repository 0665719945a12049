#pragma once

#include <span>
#include <string>
#include <vector>

#include "ainv/tensor.hpp"

namespace ainv {

// Frequency band, half-open interval [low_hz, high_hz).
struct BandDef {
  std::string name;
  double low_hz = 0, high_hz = 0;
};

// The fixed eight-band set used by the spectral baseline:
// theta [4,8), alpha [8,15), beta [15,20) [20,25) [25,30),
// gamma [30,45) [45,60) [60,75).
std::vector<BandDef> default_bands();

enum class WelchWindow { kHann, kRect };

// Welch power spectral density estimate. seg_len must be a power of two and
// <= len(x); segments advance by seg_len - overlap. Each segment is
// mean-detrended, windowed, and its window-power-normalized periodogram
// averaged into a one-sided density of seg_len/2 + 1 bins; bin k sits at
// k * sample_rate / seg_len Hz.
std::vector<double> welch_psd(std::span<const double> x, double sample_rate,
                              int seg_len, int overlap,
                              WelchWindow window = WelchWindow::kHann);

// Per channel, per band: natural log of (sum of PSD bins with
// low <= f < high, + floor 1e-12). Concatenated channel-major, so the result
// has C * bands.size() entries.
std::vector<double> log_bandpowers(const Tensor& X, double sample_rate,
                                   std::span<const BandDef> bands, int seg_len,
                                   int overlap,
                                   WelchWindow window = WelchWindow::kHann);

// ---------------------------------------------------------------------------
// PCA: eigendecomposition of the training sample covariance; keeps the
// minimal component count whose cumulative explained-variance ratio reaches
// the threshold. Components are orthonormal rows, eigenvector signs
// canonicalized (largest-magnitude entry positive).
// ---------------------------------------------------------------------------
struct PcaModel {
  Tensor64 mean;             // (D)
  Tensor64 components;       // (d, D)
  std::vector<double> explained_ratio;  // all D ratios, non-increasing

  int64_t kept() const { return components.dim(0); }
};

PcaModel pca_fit(const Tensor64& X, double var_threshold = 0.9);
Tensor64 pca_transform(const PcaModel& model, const Tensor64& X);

// ---------------------------------------------------------------------------
// QDA with shrinkage-regularized per-class covariances:
//   Sigma_k <- (1 - alpha) Sigma_k + alpha (tr Sigma_k / d) I
// Decision: argmax_k log prior_k - 1/2 log|Sigma_k|
//                  - 1/2 (x - mu_k)^T Sigma_k^{-1} (x - mu_k),
// ties to the lowest class index.
// ---------------------------------------------------------------------------
struct QdaModel {
  Tensor64 means;                     // (K, d)
  std::vector<Tensor64> chol_lower;   // per class (d, d) lower Cholesky
  std::vector<double> log_det;        // per class log|Sigma_k|
  std::vector<double> log_prior;      // per class
  int classes() const { return static_cast<int>(means.dim(0)); }
};

QdaModel qda_fit(const Tensor64& X, std::span<const int> y,
                 double shrinkage = 1e-3);

struct QdaPrediction {
  std::vector<int> labels;
  Tensor64 log_posteriors;  // (N, K), normalized per row
};

QdaPrediction qda_predict(const QdaModel& model, const Tensor64& X);

}  // namespace ainv
