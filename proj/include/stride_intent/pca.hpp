#pragma once

#include "stride_intent/common.hpp"

namespace stride_intent {

struct PcaResult {
  Matrix components;           // channels x k, orthonormal columns
  Matrix scores;               // samples x k
  Vector explained_variance;   // k, nonincreasing
  Eigen::RowVectorXd mean;     // per-channel mean removed before projection
  double total_variance = 0.0;
};

/// Principal components of the sample covariance (divisor N - 1).
inline PcaResult pca(const Matrix& data, Eigen::Index n_components) {
  require(n_components >= 1 && n_components <= data.cols(), "pca: n_components must be in [1, channels]");
  require(data.rows() >= 2, "pca: need at least two samples");
  PcaResult r;
  r.mean = data.colwise().mean();
  const Matrix centered = data.rowwise() - r.mean;
  const Matrix cov = (centered.transpose() * centered) / static_cast<double>(data.rows() - 1);
  r.total_variance = cov.trace();
  const SortedEigen eig = sorted_symmetric_eigen(cov);
  r.components = eig.vectors.leftCols(n_components);
  r.explained_variance = eig.values.head(n_components).cwiseMax(0.0);
  r.scores = centered * r.components;
  return r;
}

}  // namespace stride_intent
