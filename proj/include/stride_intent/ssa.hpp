#pragma once

// Singular spectrum analysis: Hankel embedding, eigendecomposition of the lag
// covariance W W^T, and reconstruction by anti-diagonal averaging.

#include "stride_intent/common.hpp"

#include <set>

namespace stride_intent {

/// Hankel trajectory matrix: W(i, j) = w[i + j], l rows, p = m - l + 1 columns.
struct TrajectoryMatrix {
  Matrix W;
  std::size_t l = 0;
  std::size_t m = 0;
  std::size_t p = 0;
};

inline TrajectoryMatrix hankel_embed(const Series& series, std::size_t l) {
  const std::size_t m = series.size();
  require(l >= 1 && l <= m, "hankel_embed: embedding dimension must satisfy 1 <= l <= len(series)");
  const std::size_t p = m - l + 1;
  TrajectoryMatrix t{Matrix(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(p)), l, m, p};
  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t i = 0; i < l; ++i) t.W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = series[i + j];
  return t;
}

struct SsaDecomposition {
  std::size_t l = 0;
  Vector eigenvalues;    // nonincreasing, clipped at 0
  Matrix eigenvectors;   // l x l, column i pairs with eigenvalues(i)
  Series source;
  bool degenerate = false;  // all eigenvalues zero

  double total_energy() const { return eigenvalues.sum(); }
};

namespace detail {

/// Lag covariance C = W W^T without materialising W. Uses the shift identity
/// C(i+1, j+1) = C(i, j) - w[i]w[j] + w[i+p]w[j+p].
inline Matrix lag_covariance(const Series& w, std::size_t l) {
  const std::size_t p = w.size() - l + 1;
  const auto L = static_cast<Eigen::Index>(l);
  Matrix C(L, L);
  for (std::size_t j = 0; j < l; ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < p; ++k) acc += w[k] * w[k + j];
    C(0, static_cast<Eigen::Index>(j)) = acc;
  }
  for (std::size_t i = 0; i + 1 < l; ++i)
    for (std::size_t j = i; j + 1 < l; ++j)
      C(static_cast<Eigen::Index>(i + 1), static_cast<Eigen::Index>(j + 1)) =
          C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - w[i] * w[j] + w[i + p] * w[j + p];
  return C.selfadjointView<Eigen::Upper>();
}

/// Diagonal-averaged reconstruction of u u^T W for one unit vector u,
/// accumulated into `sum` (not yet divided by the anti-diagonal counts).
inline void accumulate_elementary(const Series& w, const Vector& u, Series& sum) {
  const std::size_t l = static_cast<std::size_t>(u.size());
  const std::size_t p = w.size() - l + 1;
  Series z(p, 0.0);
  for (std::size_t k = 0; k < p; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < l; ++i) acc += u(static_cast<Eigen::Index>(i)) * w[k + i];
    z[k] = acc;
  }
  for (std::size_t k = 0; k < p; ++k) {
    const double zk = z[k];
    for (std::size_t i = 0; i < l; ++i) sum[k + i] += u(static_cast<Eigen::Index>(i)) * zk;
  }
}

inline double antidiagonal_count(std::size_t t, std::size_t l, std::size_t p) {
  const std::size_t lo = t + 1 > p ? t + 1 - p : 0;
  const std::size_t hi = std::min(l - 1, t);
  return static_cast<double>(hi - lo + 1);
}

}  // namespace detail

inline SsaDecomposition ssa_decompose(const Series& series, std::size_t l) {
  require(l >= 1 && l <= series.size(), "ssa_decompose: embedding dimension must satisfy 1 <= l <= len(series)");
  const Matrix C = detail::lag_covariance(series, l);
  SortedEigen eig = sorted_symmetric_eigen(C);
  SsaDecomposition d;
  d.l = l;
  d.eigenvalues = eig.values.cwiseMax(0.0);
  d.eigenvectors = std::move(eig.vectors);
  d.source = series;
  d.degenerate = !(d.eigenvalues.maxCoeff() > 0.0);
  if (d.degenerate) log_warn("ssa_decompose: series has zero energy");
  return d;
}

/// Sum of the selected elementary reconstructions. Large selections are
/// computed as the original minus the complement.
inline Series ssa_reconstruct(const SsaDecomposition& d, const std::set<std::size_t>& components) {
  const std::size_t m = d.source.size();
  const std::size_t l = d.l;
  const std::size_t p = m - l + 1;
  for (std::size_t c : components) require(c < l, "ssa_reconstruct: component index out of range");
  if (components.empty()) {
    log_warn("ssa_reconstruct: empty component set yields a zero series");
    return Series(m, 0.0);
  }
  const bool use_complement = components.size() * 2 > l;
  Series sum(m, 0.0);
  for (std::size_t c = 0; c < l; ++c) {
    if ((components.count(c) > 0) != use_complement)
      detail::accumulate_elementary(d.source, d.eigenvectors.col(static_cast<Eigen::Index>(c)), sum);
  }
  Series out(m);
  for (std::size_t t = 0; t < m; ++t) {
    const double avg = sum[t] / detail::antidiagonal_count(t, l, p);
    out[t] = use_complement ? d.source[t] - avg : avg;
  }
  return out;
}

/// Indices of the smallest leading set of components whose eigenvalue share
/// reaches `share`.
inline std::set<std::size_t> leading_components(const SsaDecomposition& d, double share) {
  std::set<std::size_t> out;
  const double total = d.total_energy();
  if (total <= 0.0) {
    out.insert(0);
    return out;
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < d.l; ++i) {
    out.insert(i);
    acc += d.eigenvalues(static_cast<Eigen::Index>(i));
    if (acc / total >= share) break;
  }
  return out;
}

inline Series ssa_denoise(const Series& series, std::size_t l, double share = 0.9) {
  const auto d = ssa_decompose(series, l);
  return ssa_reconstruct(d, leading_components(d, share));
}

}  // namespace stride_intent
