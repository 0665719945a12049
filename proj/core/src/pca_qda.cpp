#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ainv/baselines.hpp"
#include "ainv/error.hpp"

namespace ainv {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const Mat>;
using Map = Eigen::Map<Mat>;

}  // namespace

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

PcaModel pca_fit(const Tensor64& X, double var_threshold) {
  require_rank(X, 2, "pca_fit");
  const int64_t n = X.dim(0), d = X.dim(1);
  if (n < 2) throw ArgumentError("pca_fit: needs at least 2 samples");
  if (var_threshold <= 0 || var_threshold > 1)
    throw ArgumentError("pca_fit: variance threshold must be in (0, 1]");

  ConstMap data(X.ptr(), n, d);
  PcaModel model;
  model.mean = Tensor64({d});
  Eigen::Map<Eigen::VectorXd> mean(model.mean.ptr(), d);
  mean = data.colwise().mean();

  Mat centered = data.rowwise() - mean.transpose();
  Mat cov = (centered.transpose() * centered) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Mat> solver(cov);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("pca_fit: eigendecomposition failed");

  // Eigen returns ascending eigenvalues; flip to descending.
  Eigen::VectorXd evals = solver.eigenvalues().reverse();
  Mat evecs = solver.eigenvectors().rowwise().reverse();

  double total = 0;
  for (int64_t i = 0; i < d; ++i) {
    evals[i] = std::max(evals[i], 0.0);
    total += evals[i];
  }
  if (total <= 0) throw ArgumentError("pca_fit: data has zero total variance");

  model.explained_ratio.resize(static_cast<size_t>(d));
  for (int64_t i = 0; i < d; ++i)
    model.explained_ratio[static_cast<size_t>(i)] = evals[i] / total;

  int64_t kept = 0;
  double cumulative = 0;
  while (kept < d && cumulative < var_threshold) {
    cumulative += model.explained_ratio[static_cast<size_t>(kept)];
    ++kept;
  }

  model.components = Tensor64({kept, d});
  for (int64_t k = 0; k < kept; ++k) {
    Eigen::VectorXd v = evecs.col(k);
    // Canonical sign: the largest-magnitude entry is positive.
    int64_t arg = 0;
    for (int64_t i = 1; i < d; ++i)
      if (std::fabs(v[i]) > std::fabs(v[arg])) arg = i;
    if (v[arg] < 0) v = -v;
    for (int64_t i = 0; i < d; ++i) model.components.ptr()[k * d + i] = v[i];
  }
  return model;
}

Tensor64 pca_transform(const PcaModel& model, const Tensor64& X) {
  require_rank(X, 2, "pca_transform");
  const int64_t n = X.dim(0), d = X.dim(1);
  if (d != model.mean.numel())
    throw DimensionError("pca_transform: feature dim mismatch");
  const int64_t kept = model.kept();

  Tensor64 out({n, kept});
  ConstMap data(X.ptr(), n, d);
  ConstMap comps(model.components.ptr(), kept, d);
  Eigen::Map<const Eigen::VectorXd> mean(model.mean.ptr(), d);
  Map result(out.ptr(), n, kept);
  result.noalias() = (data.rowwise() - mean.transpose()) * comps.transpose();
  return out;
}

// ---------------------------------------------------------------------------
// QDA
// ---------------------------------------------------------------------------

QdaModel qda_fit(const Tensor64& X, std::span<const int> y, double shrinkage) {
  require_rank(X, 2, "qda_fit");
  const int64_t n = X.dim(0), d = X.dim(1);
  if (static_cast<int64_t>(y.size()) != n)
    throw DimensionError("qda_fit: label count != sample count");
  if (shrinkage < 0 || shrinkage > 1)
    throw ArgumentError("qda_fit: shrinkage must be in [0, 1]");

  int classes = 0;
  for (const int label : y) {
    if (label < 0) throw ArgumentError("qda_fit: negative class label");
    classes = std::max(classes, label + 1);
  }
  if (classes < 2) throw ArgumentError("qda_fit: needs at least 2 classes");

  std::vector<int64_t> counts(static_cast<size_t>(classes), 0);
  for (const int label : y) counts[static_cast<size_t>(label)]++;
  for (int k = 0; k < classes; ++k) {
    if (counts[static_cast<size_t>(k)] == 0)
      throw ArgumentError("qda_fit: class " + std::to_string(k) +
                          " absent from labels");
    if (2 * counts[static_cast<size_t>(k)] < d)
      throw ArgumentError(
          "qda_fit: class " + std::to_string(k) + " has " +
          std::to_string(counts[static_cast<size_t>(k)]) +
          " samples for dimension " + std::to_string(d) +
          "; need more shrinkage or data");
  }

  ConstMap data(X.ptr(), n, d);
  QdaModel model;
  model.means = Tensor64({classes, d});
  model.chol_lower.reserve(static_cast<size_t>(classes));
  model.log_det.resize(static_cast<size_t>(classes));
  model.log_prior.resize(static_cast<size_t>(classes));

  Map means(model.means.ptr(), classes, d);
  means.setZero();
  for (int64_t i = 0; i < n; ++i)
    means.row(y[static_cast<size_t>(i)]) += data.row(i);
  for (int k = 0; k < classes; ++k)
    means.row(k) /= static_cast<double>(counts[static_cast<size_t>(k)]);

  for (int k = 0; k < classes; ++k) {
    Mat cov = Mat::Zero(d, d);
    for (int64_t i = 0; i < n; ++i) {
      if (y[static_cast<size_t>(i)] != k) continue;
      const Eigen::RowVectorXd diff = data.row(i) - means.row(k);
      cov.noalias() += diff.transpose() * diff;
    }
    cov /= static_cast<double>(counts[static_cast<size_t>(k)]);

    const double mean_eig = cov.trace() / static_cast<double>(d);
    cov = (1.0 - shrinkage) * cov;
    cov.diagonal().array() += shrinkage * mean_eig;

    Eigen::LLT<Mat> llt(cov);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("qda_fit: regularized covariance of class " +
                               std::to_string(k) + " is not positive definite");

    Tensor64 lower({d, d});
    Map lmap(lower.ptr(), d, d);
    lmap = llt.matrixL();
    double logdet = 0;
    for (int64_t i = 0; i < d; ++i) logdet += 2.0 * std::log(lmap(i, i));
    model.chol_lower.push_back(std::move(lower));
    model.log_det[static_cast<size_t>(k)] = logdet;
    model.log_prior[static_cast<size_t>(k)] =
        std::log(static_cast<double>(counts[static_cast<size_t>(k)]) /
                 static_cast<double>(n));
  }
  return model;
}

QdaPrediction qda_predict(const QdaModel& model, const Tensor64& X) {
  require_rank(X, 2, "qda_predict");
  const int64_t n = X.dim(0), d = X.dim(1);
  if (d != model.means.dim(1))
    throw DimensionError("qda_predict: feature dim mismatch");
  const int classes = model.classes();

  QdaPrediction pred;
  pred.labels.resize(static_cast<size_t>(n));
  pred.log_posteriors = Tensor64({n, classes});

  ConstMap data(X.ptr(), n, d);
  ConstMap means(model.means.ptr(), classes, d);

  Eigen::VectorXd diff(d), solved(d);
  std::vector<double> scores(static_cast<size_t>(classes));
  for (int64_t i = 0; i < n; ++i) {
    for (int k = 0; k < classes; ++k) {
      diff = (data.row(i) - means.row(k)).transpose();
      ConstMap lmap(model.chol_lower[static_cast<size_t>(k)].ptr(), d, d);
      solved = lmap.triangularView<Eigen::Lower>().solve(diff);
      const double mahal = solved.squaredNorm();
      scores[static_cast<size_t>(k)] =
          model.log_prior[static_cast<size_t>(k)] -
          0.5 * model.log_det[static_cast<size_t>(k)] - 0.5 * mahal;
    }
    int best = 0;
    double best_score = scores[0];
    double max_score = scores[0];
    for (int k = 1; k < classes; ++k) {
      if (scores[static_cast<size_t>(k)] > best_score) {
        best_score = scores[static_cast<size_t>(k)];
        best = k;
      }
      max_score = std::max(max_score, scores[static_cast<size_t>(k)]);
    }
    double denom = 0;
    for (int k = 0; k < classes; ++k)
      denom += std::exp(scores[static_cast<size_t>(k)] - max_score);
    const double log_denom = max_score + std::log(denom);
    for (int k = 0; k < classes; ++k)
      pred.log_posteriors.ptr()[i * classes + k] =
          scores[static_cast<size_t>(k)] - log_denom;
    pred.labels[static_cast<size_t>(i)] = best;
  }
  return pred;
}

}  // namespace ainv
