#pragma once

// Linear discriminant analysis and a kernel SVM trained by SMO.

#include "stride_intent/csp.hpp"

#include <map>

namespace stride_intent {

// ---------------------------------------------------------------------------
// LDA
// ---------------------------------------------------------------------------

struct LdaModel {
  std::vector<int> classes;  // ascending
  Matrix means;              // classes x features
  Matrix pooled_covariance;
  Vector priors;
  Matrix weights;  // classes x features: Sigma^-1 mu_c
  Vector bias;     // -0.5 mu_c^T Sigma^-1 mu_c + log prior
  double shrinkage_alpha = 0.0;

  Vector scores(const Vector& x) const { return weights * x + bias; }
};

inline LdaModel lda_fit(const Matrix& X, const std::vector<int>& y, bool shrinkage = true) {
  require(static_cast<std::size_t>(X.rows()) == y.size(), "lda_fit: feature and label counts differ");
  require(X.cols() > 0, "lda_fit: need at least one feature");
  std::map<int, std::vector<Eigen::Index>> by_class;
  for (std::size_t i = 0; i < y.size(); ++i) by_class[y[i]].push_back(static_cast<Eigen::Index>(i));
  require(by_class.size() >= 2, "lda_fit: need at least two classes");
  for (const auto& [c, idx] : by_class)
    require(idx.size() >= 2, "lda_fit: need at least two samples of class " + std::to_string(c));

  LdaModel m;
  const Eigen::Index d = X.cols();
  const auto K = static_cast<Eigen::Index>(by_class.size());
  m.means.resize(K, d);
  m.priors.resize(K);
  Matrix centered(X.rows(), d);
  Eigen::Index row = 0, k = 0;
  for (const auto& [c, idx] : by_class) {
    m.classes.push_back(c);
    Vector mu = Vector::Zero(d);
    for (auto i : idx) mu += X.row(i).transpose();
    mu /= static_cast<double>(idx.size());
    m.means.row(k) = mu.transpose();
    m.priors(k) = static_cast<double>(idx.size()) / static_cast<double>(X.rows());
    for (auto i : idx) centered.row(row++) = X.row(i) - mu.transpose();
    ++k;
  }
  if (shrinkage) {
    auto [S, alpha] = ledoit_wolf_samples(centered);
    // the column means of within-class residuals are zero, so only the divisor differs
    m.pooled_covariance = S;
    m.shrinkage_alpha = alpha;
  } else {
    m.pooled_covariance = centered.transpose() * centered / static_cast<double>(X.rows() - K);
  }
  const SortedEigen se = sorted_symmetric_eigen(m.pooled_covariance);
  if (!(se.values(d - 1) > 1e-12 * std::max(se.values(0), 1e-300)))
    throw ComputeError("lda_fit: pooled covariance is singular; enable shrinkage");
  const Matrix inv = se.vectors * se.values.cwiseInverse().asDiagonal() * se.vectors.transpose();
  m.weights = m.means * inv;
  m.bias.resize(K);
  for (Eigen::Index c = 0; c < K; ++c)
    m.bias(c) = -0.5 * m.weights.row(c).dot(m.means.row(c)) + std::log(m.priors(c));
  return m;
}

/// Class with the largest discriminant; ties go to the lower class index.
inline int lda_predict_one(const LdaModel& m, const Vector& x) {
  const Vector s = m.scores(x);
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < s.size(); ++c)
    if (s(c) > s(best)) best = c;
  return m.classes[static_cast<std::size_t>(best)];
}

inline std::vector<int> lda_predict(const LdaModel& m, const Matrix& X) {
  std::vector<int> out(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) out[static_cast<std::size_t>(i)] = lda_predict_one(m, X.row(i).transpose());
  return out;
}

// ---------------------------------------------------------------------------
// SVM
// ---------------------------------------------------------------------------

enum class KernelKind { Linear, Rbf };

inline std::string_view to_string(KernelKind k) { return k == KernelKind::Linear ? "linear" : "rbf"; }

struct SvmParams {
  KernelKind kernel = KernelKind::Rbf;
  double c_reg = 1.0;
  double gamma = 0.0;  // 0 = 1 / (n_features * feature variance)
  double tolerance = 1e-3;
  std::size_t max_iter = 0;  // 0 = max(10^7, 100 n)
  std::uint64_t seed = 0;
};

struct SvmModel {
  KernelKind kernel = KernelKind::Rbf;
  double c_reg = 1.0;
  double gamma = 0.0;
  Matrix support_vectors;
  Vector dual_coef;  // alpha_i * y_i
  Vector alpha;      // alpha_i in [0, C] for each support vector
  double bias = 0.0;
  std::pair<int, int> class_pair{0, 1};  // negative, positive
  double kkt_residual = 0.0;
  std::size_t iterations = 0;
  bool converged = true;
  std::uint64_t seed = 0;

  double kernel_value(const Vector& a, const Vector& b) const {
    if (kernel == KernelKind::Linear) return a.dot(b);
    return std::exp(-gamma * (a - b).squaredNorm());
  }

  double decision(const Vector& x) const {
    double f = bias;
    for (Eigen::Index i = 0; i < support_vectors.rows(); ++i)
      f += dual_coef(i) * kernel_value(support_vectors.row(i).transpose(), x);
    return f;
  }

  int predict_one(const Vector& x) const { return decision(x) > 0 ? class_pair.second : class_pair.first; }
};

namespace detail {

inline Matrix kernel_matrix(const Matrix& X, KernelKind kind, double gamma) {
  Matrix K = X * X.transpose();
  if (kind == KernelKind::Rbf) {
    const Vector sq = X.rowwise().squaredNorm();
    for (Eigen::Index i = 0; i < K.rows(); ++i)
      for (Eigen::Index j = 0; j < K.cols(); ++j) K(i, j) = std::exp(-gamma * std::max(0.0, sq(i) + sq(j) - 2.0 * K(i, j)));
  }
  return K;
}

/// b minimising sum_i max(0, 1 - y_i (s_i + b)); the hinge sum is convex and
/// piecewise linear with kinks at b = y_i - s_i.
inline double hinge_optimal_bias(const Vector& s, const Vector& y) {
  double best_b = 0.0, best = std::numeric_limits<double>::infinity();
  auto loss = [&](double b) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) acc += std::max(0.0, 1.0 - y(i) * (s(i) + b));
    return acc;
  };
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double b = y(i) - s(i);
    const double l = loss(b);
    if (l < best - 1e-12 || (std::abs(l - best) <= 1e-12 && std::abs(b) < std::abs(best_b))) {
      best = l;
      best_b = b;
    }
  }
  return best_b;
}

}  // namespace detail

inline double default_gamma(const Matrix& X) {
  const double m = X.mean();
  const double var = (X.array() - m).square().mean();
  return var > 0 ? 1.0 / (static_cast<double>(X.cols()) * var) : 1.0;
}

/// C-SVC dual solved by SMO with second-order working-set selection. Labels
/// must take exactly two values; the larger is the positive class.
inline SvmModel svm_fit(const Matrix& X, const std::vector<int>& labels, const SvmParams& p = {}) {
  require(static_cast<std::size_t>(X.rows()) == labels.size(), "svm_fit: feature and label counts differ");
  require(X.cols() > 0, "svm_fit: need at least one feature");
  require(p.c_reg > 0, "svm_fit: c_reg must be positive");
  std::vector<int> distinct(labels.begin(), labels.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  require(distinct.size() == 2, "svm_fit: need exactly two classes");

  const Eigen::Index n = X.rows();
  SvmModel m;
  m.kernel = p.kernel;
  m.c_reg = p.c_reg;
  m.gamma = p.kernel == KernelKind::Rbf ? (p.gamma > 0 ? p.gamma : default_gamma(X)) : 0.0;
  m.class_pair = {distinct[0], distinct[1]};
  m.seed = p.seed;
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = labels[static_cast<std::size_t>(i)] == distinct[1] ? 1.0 : -1.0;

  const Matrix K = detail::kernel_matrix(X, p.kernel, m.gamma);
  const double C = p.c_reg;
  const double tau = 1e-12;
  Vector alpha = Vector::Zero(n);
  Vector G = Vector::Constant(n, -1.0);  // gradient of 0.5 a^T Q a - e^T a
  auto in_up = [&](Eigen::Index t) { return (y(t) > 0 && alpha(t) < C) || (y(t) < 0 && alpha(t) > 0); };
  auto in_low = [&](Eigen::Index t) { return (y(t) > 0 && alpha(t) > 0) || (y(t) < 0 && alpha(t) < C); };

  const std::size_t max_iter =
      p.max_iter > 0 ? p.max_iter : std::max<std::size_t>(10'000'000, 100 * static_cast<std::size_t>(n));
  std::size_t iter = 0;
  double gap = 0.0;
  for (; iter < max_iter; ++iter) {
    double gmax = -std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    for (Eigen::Index t = 0; t < n; ++t)
      if (in_up(t) && -y(t) * G(t) > gmax) {
        gmax = -y(t) * G(t);
        i = t;
      }
    double gmin = std::numeric_limits<double>::infinity();
    Eigen::Index j = -1;
    double best_obj = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < n; ++t) {
      if (!in_low(t)) continue;
      const double v = -y(t) * G(t);
      gmin = std::min(gmin, v);
      if (i < 0) continue;
      const double b = gmax - v;
      if (b > 0) {
        double a = K(i, i) + K(t, t) - 2.0 * K(i, t);
        if (a <= 0) a = tau;
        const double obj = -(b * b) / a;
        if (obj < best_obj) {
          best_obj = obj;
          j = t;
        }
      }
    }
    gap = (i < 0 || !std::isfinite(gmin)) ? 0.0 : gmax - gmin;
    if (gap < p.tolerance || j < 0) break;

    // analytic two-variable update
    const double yi = y(i), yj = y(j);
    const double old_ai = alpha(i), old_aj = alpha(j);
    double quad = K(i, i) + K(j, j) - 2.0 * K(i, j);
    if (quad <= 0) quad = tau;
    if (yi != yj) {
      const double delta = (-G(i) - G(j)) / quad;
      const double diff = alpha(i) - alpha(j);
      alpha(i) += delta;
      alpha(j) += delta;
      if (diff > 0 && alpha(j) < 0) {
        alpha(j) = 0;
        alpha(i) = diff;
      } else if (diff <= 0 && alpha(i) < 0) {
        alpha(i) = 0;
        alpha(j) = -diff;
      }
      if (diff > 0 && alpha(i) > C) {
        alpha(i) = C;
        alpha(j) = C - diff;
      } else if (diff <= 0 && alpha(j) > C) {
        alpha(j) = C;
        alpha(i) = C + diff;
      }
    } else {
      const double delta = (G(i) - G(j)) / quad;
      const double sum = alpha(i) + alpha(j);
      alpha(i) -= delta;
      alpha(j) += delta;
      if (sum > C && alpha(i) > C) {
        alpha(i) = C;
        alpha(j) = sum - C;
      } else if (sum <= C && alpha(j) < 0) {
        alpha(j) = 0;
        alpha(i) = sum;
      }
      if (sum > C && alpha(j) > C) {
        alpha(j) = C;
        alpha(i) = sum - C;
      } else if (sum <= C && alpha(i) < 0) {
        alpha(i) = 0;
        alpha(j) = sum;
      }
    }
    const double dai = alpha(i) - old_ai, daj = alpha(j) - old_aj;
    for (Eigen::Index t = 0; t < n; ++t) G(t) += y(t) * (yi * K(t, i) * dai + yj * K(t, j) * daj);
  }
  m.iterations = iter;
  m.kkt_residual = gap;
  m.converged = gap < p.tolerance;
  if (!m.converged) log_warn("svm_fit: SMO stopped before reaching the KKT tolerance");

  // at a free vector y_t (s_t + b) = 1 and y_t G_t = s_t - y_t, so b = -y_t G_t
  double acc = 0.0;
  std::size_t free = 0;
  for (Eigen::Index t = 0; t < n; ++t)
    if (alpha(t) > 0 && alpha(t) < C) {
      acc += -y(t) * G(t);
      ++free;
    }
  if (free > 0) {
    m.bias = acc / static_cast<double>(free);
  } else {
    const Vector s = K * alpha.cwiseProduct(y);
    m.bias = detail::hinge_optimal_bias(s, y);
  }

  std::vector<Eigen::Index> sv;
  for (Eigen::Index t = 0; t < n; ++t)
    if (alpha(t) > 0) sv.push_back(t);
  m.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), X.cols());
  m.dual_coef.resize(static_cast<Eigen::Index>(sv.size()));
  m.alpha.resize(static_cast<Eigen::Index>(sv.size()));
  for (std::size_t r = 0; r < sv.size(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    m.support_vectors.row(ri) = X.row(sv[r]);
    m.alpha(ri) = alpha(sv[r]);
    m.dual_coef(ri) = alpha(sv[r]) * y(sv[r]);
  }
  return m;
}

inline std::vector<int> svm_predict(const SvmModel& m, const Matrix& X, std::vector<double>* decisions = nullptr) {
  std::vector<int> out(static_cast<std::size_t>(X.rows()));
  if (decisions) decisions->resize(out.size());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double f = m.decision(X.row(i).transpose());
    out[static_cast<std::size_t>(i)] = f > 0 ? m.class_pair.second : m.class_pair.first;
    if (decisions) (*decisions)[static_cast<std::size_t>(i)] = f;
  }
  return out;
}

/// Largest KKT violation of the model on its training data.
inline double svm_kkt_violation(const SvmModel& m, const Matrix& X, const std::vector<int>& labels,
                                const std::vector<double>& alpha_full) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double y = labels[static_cast<std::size_t>(i)] == m.class_pair.second ? 1.0 : -1.0;
    const double yf = y * m.decision(X.row(i).transpose());
    const double a = alpha_full[static_cast<std::size_t>(i)];
    double v = 0.0;
    if (a <= 0)
      v = std::max(0.0, 1.0 - yf);
    else if (a >= m.c_reg)
      v = std::max(0.0, yf - 1.0);
    else
      v = std::abs(yf - 1.0);
    worst = std::max(worst, v);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Generic classifier
// ---------------------------------------------------------------------------

enum class ClassifierKind { Lda, Svm };

inline std::string_view to_string(ClassifierKind k) { return k == ClassifierKind::Lda ? "LDA" : "SVM"; }

inline std::optional<ClassifierKind> parse_classifier(std::string_view s) {
  if (s == "LDA" || s == "lda") return ClassifierKind::Lda;
  if (s == "SVM" || s == "svm") return ClassifierKind::Svm;
  return std::nullopt;
}

struct ClassifierSpec {
  ClassifierKind kind = ClassifierKind::Lda;
  bool lda_shrinkage = true;
  SvmParams svm;
};

/// LDA, SVM or (with no features) a majority-class rule.
struct Classifier {
  ClassifierSpec spec;
  std::optional<LdaModel> lda;
  std::optional<SvmModel> svm;
  int majority = 0;
  std::vector<int> classes;

  /// Signed score for binary problems: positive favours the larger label.
  double decision(const Vector& x) const {
    if (lda && lda->classes.size() == 2) {
      const Vector s = lda->scores(x);
      return s(1) - s(0);
    }
    if (svm) return svm->decision(x);
    if (classes.size() == 2) return majority == classes[1] ? 1.0 : -1.0;
    return 0.0;
  }

  int predict(const Vector& x) const {
    if (lda) return lda_predict_one(*lda, x);
    if (svm) return svm->predict_one(x);
    return majority;
  }
};

inline int majority_label(const std::vector<int>& y) {
  std::map<int, std::size_t> counts;
  for (int v : y) ++counts[v];
  int best = counts.begin()->first;
  for (const auto& [c, n] : counts)
    if (n > counts[best]) best = c;
  return best;
}

inline Classifier fit_classifier(const Matrix& X, const std::vector<int>& y, const ClassifierSpec& spec) {
  require(!y.empty(), "fit_classifier: no training samples");
  Classifier c;
  c.spec = spec;
  c.classes = y;
  std::sort(c.classes.begin(), c.classes.end());
  c.classes.erase(std::unique(c.classes.begin(), c.classes.end()), c.classes.end());
  c.majority = majority_label(y);
  if (X.cols() == 0 || c.classes.size() < 2) return c;
  // constant features (e.g. a single normalised log-variance) carry nothing to fit
  if ((X.rowwise() - X.colwise().mean()).cwiseAbs().maxCoeff() == 0.0) return c;
  if (spec.kind == ClassifierKind::Lda)
    c.lda = lda_fit(X, y, spec.lda_shrinkage);
  else
    c.svm = svm_fit(X, y, spec.svm);
  return c;
}

}  // namespace stride_intent
