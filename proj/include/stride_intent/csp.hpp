#pragma once

// Class covariances, Ledoit-Wolf shrinkage and (regularised) common spatial
// patterns.

#include "stride_intent/signal.hpp"

#include <optional>
#include <span>

namespace stride_intent {

struct ClassCovariance {
  Matrix C;
  Eigen::Index n_channels = 0;
  std::size_t n_windows = 0;
  double shrinkage_alpha = 0.0;
  double target_scale = 0.0;  // trace(C_raw) / n
  bool dead_channel = false;  // some channel had zero variance in every window
};

namespace detail {

/// Trace-normalised covariance of one mean-centred window.
inline Matrix normalised_window_covariance(const Matrix& x, bool* zero = nullptr) {
  const Matrix centered = x.rowwise() - x.colwise().mean();
  Matrix c = centered.transpose() * centered;
  const double tr = c.trace();
  if (!(tr > 0)) {
    if (zero) *zero = true;
    return Matrix::Zero(x.cols(), x.cols());
  }
  return c / tr;
}

inline std::vector<std::size_t> indices_of_label(const WindowSet& ws, std::span<const std::size_t> subset,
                                                 int label) {
  std::vector<std::size_t> out;
  if (subset.empty()) {
    for (std::size_t i = 0; i < ws.size(); ++i)
      if (ws.labels[i] == label) out.push_back(i);
  } else {
    for (std::size_t i : subset)
      if (ws.labels[i] == label) out.push_back(i);
  }
  return out;
}

struct PooledCovariance {
  ClassCovariance cov;
  double dispersion = 0.0;  // (1/N^2) sum_w ||C_w - C||_F^2
};

inline PooledCovariance pool(const WindowSet& ws, const std::vector<std::size_t>& idx) {
  if (idx.empty()) throw ValidationError("class covariance: no windows of the requested class");
  const Eigen::Index n = ws.n_channels();
  std::vector<Matrix> per;
  per.reserve(idx.size());
  Matrix sum = Matrix::Zero(n, n);
  Vector channel_energy = Vector::Zero(n);
  for (std::size_t i : idx) {
    per.push_back(normalised_window_covariance(ws.windows[i]));
    sum += per.back();
    channel_energy += per.back().diagonal();
  }
  PooledCovariance p;
  p.cov.C = sum / static_cast<double>(idx.size());
  p.cov.C = 0.5 * (p.cov.C + p.cov.C.transpose());
  p.cov.n_channels = n;
  p.cov.n_windows = idx.size();
  p.cov.target_scale = p.cov.C.trace() / static_cast<double>(n);
  p.cov.dead_channel = (channel_energy.array() == 0.0).any();
  double disp = 0.0;
  for (const auto& c : per) disp += (c - p.cov.C).squaredNorm();
  p.dispersion = disp / (static_cast<double>(idx.size()) * static_cast<double>(idx.size()));
  return p;
}

}  // namespace detail

/// Average of per-window trace-normalised covariances for one class. An empty
/// `subset` means every window.
inline ClassCovariance class_covariance(const WindowSet& ws, int label, std::span<const std::size_t> subset = {}) {
  auto p = detail::pool(ws, detail::indices_of_label(ws, subset, label));
  if (p.cov.dead_channel) log_warn("class_covariance: a channel has zero variance");
  return p.cov;
}

/// Convex combination (1 - a) C + a mu I with mu = trace(C) / n. The
/// intensity follows Ledoit-Wolf with per-window covariances as observations:
/// a = min(b2, d2) / d2, b2 = (1/N^2) sum ||C_w - C||^2, d2 = ||C - mu I||^2.
/// Fewer than two windows force a = 1.
inline ClassCovariance shrink_covariance(const ClassCovariance& raw, double dispersion,
                                         std::optional<double> forced_alpha = {}) {
  const Eigen::Index n = raw.n_channels;
  const double mu = raw.C.trace() / static_cast<double>(n);
  double alpha;
  if (forced_alpha) {
    require(*forced_alpha >= 0 && *forced_alpha <= 1, "shrinkage alpha must be in [0, 1]");
    alpha = *forced_alpha;
  } else if (raw.n_windows < 2) {
    alpha = 1.0;
  } else {
    const double d2 = (raw.C - mu * Matrix::Identity(n, n)).squaredNorm();
    alpha = d2 > 0 ? std::min(dispersion, d2) / d2 : 1.0;
  }
  alpha = std::clamp(alpha, 0.0, 1.0);
  ClassCovariance out = raw;
  out.shrinkage_alpha = alpha;
  out.target_scale = mu;
  if (alpha == 1.0)
    out.C = mu * Matrix::Identity(n, n);
  else if (alpha > 0.0)
    out.C = (1.0 - alpha) * raw.C + alpha * mu * Matrix::Identity(n, n);
  return out;
}

inline ClassCovariance ledoit_wolf_shrink(const WindowSet& ws, int label, std::span<const std::size_t> subset = {},
                                          std::optional<double> forced_alpha = {}) {
  const auto p = detail::pool(ws, detail::indices_of_label(ws, subset, label));
  return shrink_covariance(p.cov, p.dispersion, forced_alpha);
}

/// Classic sample-level Ledoit-Wolf for a data matrix (rows = observations).
/// Returns the shrunk covariance and the intensity.
inline std::pair<Matrix, double> ledoit_wolf_samples(const Matrix& X) {
  const auto N = static_cast<double>(X.rows());
  const Eigen::Index n = X.cols();
  const Matrix centered = X.rowwise() - X.colwise().mean();
  const Matrix S = centered.transpose() * centered / N;
  const double mu = S.trace() / static_cast<double>(n);
  if (X.rows() < 2) return {mu * Matrix::Identity(n, n), 1.0};
  const double d2 = (S - mu * Matrix::Identity(n, n)).squaredNorm();
  double b2 = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Vector x = centered.row(i).transpose();
    b2 += (x * x.transpose() - S).squaredNorm();
  }
  b2 /= N * N;
  const double alpha = d2 > 0 ? std::min(b2, d2) / d2 : 1.0;
  return {(1 - alpha) * S + alpha * mu * Matrix::Identity(n, n), alpha};
}

// ---------------------------------------------------------------------------
// CSP
// ---------------------------------------------------------------------------

struct SpatialFilterBank {
  Matrix filters;   // channels x k
  Vector eigenvalues;
  Matrix patterns;  // channels x k
  std::pair<int, int> class_pair{0, 1};
  bool no_discrimination = false;

  Eigen::Index k() const { return filters.cols(); }
  Eigen::Index n_channels() const { return filters.rows(); }
};

struct CspOptions {
  /// Solve inside the numerical range of Ca + Cb instead of rejecting a
  /// singular sum (for unregularised CSP on rank-deficient data).
  bool restrict_to_range = false;
  double rank_tolerance = 1e-10;
  double discrimination_floor = 0.1;  // max |log lambda| below this flags the bank
};

namespace detail {

inline bool order_before(double la, double lb) {
  const double a = std::abs(std::log(la)), b = std::abs(std::log(lb));
  if (a != b) return a > b;
  return la > lb;
}

inline SpatialFilterBank take_columns(const Matrix& filters, const Vector& lambdas, const Matrix& sum,
                                      std::vector<Eigen::Index> cols) {
  std::stable_sort(cols.begin(), cols.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return order_before(lambdas(a), lambdas(b)); });
  SpatialFilterBank bank;
  const auto k = static_cast<Eigen::Index>(cols.size());
  bank.filters.resize(filters.rows(), k);
  bank.eigenvalues.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    bank.filters.col(i) = filters.col(cols[static_cast<std::size_t>(i)]);
    bank.eigenvalues(i) = lambdas(cols[static_cast<std::size_t>(i)]);
  }
  // Columns of the inverse-transpose of the full filter matrix: since
  // S^T (Ca + Cb) S = I, that is (Ca + Cb) S.
  bank.patterns = sum * bank.filters;
  return bank;
}

}  // namespace detail

/// Every generalised eigenpair of Ca s = lambda Cb s, ordered by |log lambda|
/// (ties: larger lambda first), normalised so s^T (Ca + Cb) s = 1.
inline SpatialFilterBank csp_full(const Matrix& Ca, const Matrix& Cb, const CspOptions& opt = {}) {
  require(Ca.rows() == Cb.rows() && Ca.cols() == Cb.cols() && Ca.rows() == Ca.cols(),
          "csp: covariance dimensions differ");
  const Matrix sum = Ca + Cb;
  const SortedEigen se = sorted_symmetric_eigen(sum);
  const double top = se.values(0);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < se.values.size(); ++i)
    if (se.values(i) > opt.rank_tolerance * top) ++rank;
  if (!(top > 0) || (rank < sum.rows() && !opt.restrict_to_range))
    throw ComputeError("csp: Ca + Cb is not positive definite; use shrinkage (RCSP)");
  const Matrix P = se.values.head(rank).cwiseSqrt().cwiseInverse().asDiagonal() * se.vectors.leftCols(rank).transpose();
  Matrix M = P * Ca * P.transpose();
  M = 0.5 * (M + M.transpose());
  const SortedEigen me = sorted_symmetric_eigen(M);
  const Matrix filters = P.transpose() * me.vectors;
  Vector lambdas(rank);
  for (Eigen::Index i = 0; i < rank; ++i) {
    const Vector s = filters.col(i);
    const double num = s.dot(Ca * s), den = s.dot(Cb * s);
    lambdas(i) = den > 0 ? num / den : std::numeric_limits<double>::infinity();
    if (!(lambdas(i) > 0)) lambdas(i) = std::numeric_limits<double>::min();
  }
  std::vector<Eigen::Index> cols(static_cast<std::size_t>(rank));
  std::iota(cols.begin(), cols.end(), 0);
  auto bank = detail::take_columns(filters, lambdas, sum, cols);
  bank.no_discrimination = std::abs(std::log(bank.eigenvalues(0))) < opt.discrimination_floor;
  return bank;
}

/// k/2 filters from each end of the spectrum, reordered by |log lambda|.
inline SpatialFilterBank csp_solve(const ClassCovariance& Ca, const ClassCovariance& Cb, int k,
                                   const CspOptions& opt = {}) {
  require(k >= 2 && k % 2 == 0, "csp_solve: k must be a positive even number");
  const SpatialFilterBank full = csp_full(Ca.C, Cb.C, opt);
  require(k <= full.k(), "csp_solve: k exceeds the available components");
  // sort by lambda descending to pick both ends
  std::vector<Eigen::Index> by_lambda(static_cast<std::size_t>(full.k()));
  std::iota(by_lambda.begin(), by_lambda.end(), 0);
  std::stable_sort(by_lambda.begin(), by_lambda.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return full.eigenvalues(a) > full.eigenvalues(b); });
  std::vector<Eigen::Index> cols;
  for (int i = 0; i < k / 2; ++i) {
    cols.push_back(by_lambda[static_cast<std::size_t>(i)]);
    cols.push_back(by_lambda[by_lambda.size() - 1 - static_cast<std::size_t>(i)]);
  }
  auto bank = detail::take_columns(full.filters, full.eigenvalues, Ca.C + Cb.C, cols);
  bank.no_discrimination = full.no_discrimination;
  if (bank.no_discrimination) log_info("csp_solve: bank shows no discrimination");
  return bank;
}

/// First `k` filters of a bank (0 = all).
inline SpatialFilterBank truncate_bank(const SpatialFilterBank& bank, Eigen::Index k) {
  if (k <= 0 || k >= bank.k()) return bank;
  SpatialFilterBank out = bank;
  out.filters = bank.filters.leftCols(k);
  out.eigenvalues = bank.eigenvalues.head(k);
  out.patterns = bank.patterns.leftCols(k);
  return out;
}

inline constexpr double kFeatureEpsilon = 1e-12;

/// Normalised log-variance of the first k filtered components:
/// f_i = log(var_i / sum_j var_j).
inline Vector apply_filters(const Matrix& window, const SpatialFilterBank& bank, Eigen::Index k = 0,
                            std::size_t* floored = nullptr) {
  require(window.cols() == bank.n_channels(), "apply_filters: channel count differs from bank");
  const Eigen::Index kk = k > 0 ? std::min(k, bank.k()) : bank.k();
  const Matrix z = window * bank.filters.leftCols(kk);
  const Matrix centered = z.rowwise() - z.colwise().mean();
  const Vector var = centered.colwise().squaredNorm().transpose() / static_cast<double>(window.rows());
  const double total = var.sum();
  Vector f(kk);
  for (Eigen::Index i = 0; i < kk; ++i) {
    const double ratio = total > 0 ? var(i) / total : 0.0;
    if (ratio > 0) {
      f(i) = std::log(ratio);
    } else {
      f(i) = std::log(kFeatureEpsilon);
      if (floored) ++*floored;
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// Feature matrices
// ---------------------------------------------------------------------------

struct FeatureMatrix {
  Matrix values;  // windows x features
  std::vector<int> labels;
  std::vector<int> parent_epoch_id;

  Eigen::Index rows() const { return values.rows(); }
};

inline FeatureMatrix compute_features(const WindowSet& ws, const std::vector<SpatialFilterBank>& banks,
                                      std::span<const std::size_t> subset = {}, Eigen::Index k = 0) {
  std::vector<std::size_t> idx;
  if (subset.empty()) {
    idx.resize(ws.size());
    std::iota(idx.begin(), idx.end(), 0);
  } else {
    idx.assign(subset.begin(), subset.end());
  }
  Eigen::Index cols = 0;
  for (const auto& b : banks) cols += k > 0 ? std::min(k, b.k()) : b.k();
  FeatureMatrix fm;
  fm.values.resize(static_cast<Eigen::Index>(idx.size()), cols);
  std::size_t floored = 0;
  for (std::size_t r = 0; r < idx.size(); ++r) {
    Eigen::Index c0 = 0;
    for (const auto& b : banks) {
      const Vector f = apply_filters(ws.windows[idx[r]], b, k, &floored);
      fm.values.row(static_cast<Eigen::Index>(r)).segment(c0, f.size()) = f.transpose();
      c0 += f.size();
    }
    fm.labels.push_back(ws.labels[idx[r]]);
    fm.parent_epoch_id.push_back(ws.parent_epoch_id[idx[r]]);
  }
  if (floored > 0) log_warn("apply_filters: " + std::to_string(floored) + " zero-variance feature(s) floored");
  return fm;
}

inline std::string features_to_csv(const FeatureMatrix& fm, LabelScheme scheme) {
  const auto names = class_names(scheme);
  std::string out = "window_id,parent_epoch,label";
  for (Eigen::Index j = 0; j < fm.values.cols(); ++j) out += ",f" + std::to_string(j + 1);
  out += '\n';
  for (Eigen::Index i = 0; i < fm.values.rows(); ++i) {
    out += std::to_string(i) + ',' + std::to_string(fm.parent_epoch_id[static_cast<std::size_t>(i)]) + ',' +
           names[static_cast<std::size_t>(fm.labels[static_cast<std::size_t>(i)])];
    for (Eigen::Index j = 0; j < fm.values.cols(); ++j) {
      out += ',';
      csv::append(out, fm.values(i, j));
    }
    out += '\n';
  }
  return out;
}

enum class CspVariant { Csp, Rcsp };

inline std::string_view to_string(CspVariant v) { return v == CspVariant::Csp ? "CSP" : "RCSP"; }

/// Two-class bank from windows, with or without shrinkage.
inline SpatialFilterBank fit_bank(const WindowSet& ws, int class_a, int class_b, int k, CspVariant variant,
                                  std::span<const std::size_t> subset = {}, CspOptions opt = {}) {
  ClassCovariance a, b;
  if (variant == CspVariant::Rcsp) {
    a = ledoit_wolf_shrink(ws, class_a, subset);
    b = ledoit_wolf_shrink(ws, class_b, subset);
  } else {
    a = class_covariance(ws, class_a, subset);
    b = class_covariance(ws, class_b, subset);
    opt.restrict_to_range = true;
  }
  SpatialFilterBank bank;
  if (k <= 0) {
    bank = csp_full(a.C, b.C, opt);
  } else {
    bank = csp_solve(a, b, k, opt);
  }
  bank.class_pair = {class_a, class_b};
  return bank;
}

/// Banks for (0 vs 2), (1 vs 2) and (0 vs 1) of a three-class window set.
inline std::vector<SpatialFilterBank> multiclass_banks(const WindowSet& ws, int k,
                                                       std::span<const std::size_t> subset = {},
                                                       CspVariant variant = CspVariant::Rcsp) {
  require(ws.scheme == LabelScheme::ThreeClass, "multiclass_banks: need three-class windows");
  for (int c = 0; c < 3; ++c)
    require(!detail::indices_of_label(ws, subset, c).empty(),
            "multiclass_banks: missing class " + class_names(LabelScheme::ThreeClass)[static_cast<std::size_t>(c)]);
  static constexpr std::pair<int, int> kPairs[] = {{0, 2}, {1, 2}, {0, 1}};
  std::vector<SpatialFilterBank> banks;
  for (const auto& [a, b] : kPairs) banks.push_back(fit_bank(ws, a, b, k, variant, subset));
  return banks;
}

/// Filters or patterns of a set of banks as CSV: rows are channels, columns
/// components; the first three rows carry pair, component index and eigenvalue.
inline std::string banks_to_csv(const std::vector<SpatialFilterBank>& banks,
                                const std::vector<std::string>& channel_names, LabelScheme scheme,
                                bool patterns) {
  const auto names = class_names(scheme);
  std::string out = "channel";
  std::vector<std::string> pair_row, comp_row, eig_row;
  for (const auto& b : banks) {
    const std::string pair = names[static_cast<std::size_t>(b.class_pair.first)] + "_vs_" +
                             names[static_cast<std::size_t>(b.class_pair.second)];
    for (Eigen::Index i = 0; i < b.k(); ++i) {
      out += ",c" + std::to_string(comp_row.size());
      pair_row.push_back(pair);
      comp_row.push_back(std::to_string(i));
      eig_row.push_back(csv::format(b.eigenvalues(i)));
    }
  }
  out += "\npair";
  for (const auto& s : pair_row) out += ',' + s;
  out += "\ncomponent";
  for (const auto& s : comp_row) out += ',' + s;
  out += "\neigenvalue";
  for (const auto& s : eig_row) out += ',' + s;
  out += '\n';
  for (std::size_t ch = 0; ch < channel_names.size(); ++ch) {
    out += channel_names[ch];
    for (const auto& b : banks) {
      const Matrix& m = patterns ? b.patterns : b.filters;
      for (Eigen::Index i = 0; i < b.k(); ++i) {
        out += ',';
        csv::append(out, m(static_cast<Eigen::Index>(ch), i));
      }
    }
    out += '\n';
  }
  return out;
}

/// Patterns (not filters): the matrices shown as scalp topographies.
inline std::pair<Matrix, std::vector<std::string>> topography_export(const SpatialFilterBank& bank,
                                                                      const std::vector<std::string>& channel_names) {
  require(static_cast<Eigen::Index>(channel_names.size()) == bank.n_channels(),
          "topography_export: channel name count differs from bank");
  return {bank.patterns, channel_names};
}

}  // namespace stride_intent
