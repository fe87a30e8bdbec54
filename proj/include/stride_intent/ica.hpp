#pragma once

// Infomax ICA (natural gradient, logistic nonlinearity) and removal of
// gait-locked components.

#include "stride_intent/signal.hpp"
#include "stride_intent/spectrum.hpp"

#include <set>

namespace stride_intent {

struct IcaOptions {
  Eigen::Index n_components = 0;  // 0 = all channels
  int max_iter = 512;
  std::uint64_t seed = 0;
  double tolerance = 1e-6;       // squared Frobenius norm of the per-epoch weight change
  double learning_rate = 1e-3;   // per sample; a block update scales by the block size
  double min_learning_rate = 1e-6;
  std::size_t block_size = 0;    // 0 = ceil(min(5 ln N, 0.3 N))
  std::size_t max_samples = 0;   // 0 = fit on every sample; otherwise an evenly strided subset
};

struct IcaModel {
  Eigen::RowVectorXd channel_mean;  // removed before unmixing
  Matrix whitener;                  // comps x channels (PCA sphering)
  Matrix unmixing;                  // comps x comps, acts on whitened data
  Matrix mixing;                    // channels x comps, pseudo-inverse of unmixing * whitener
  int iterations = 0;
  double final_change = 0.0;
  double final_gradient_norm = 0.0;  // ||I + E[(1 - 2g(u)) u^T]||_F on the fitted samples
  bool converged = false;
  std::uint64_t seed = 0;

  Eigen::Index n_components() const { return unmixing.rows(); }
  Matrix filters() const { return unmixing * whitener; }

  /// Component activations, samples x comps.
  Matrix sources(const Matrix& data) const {
    return (data.rowwise() - channel_mean) * filters().transpose();
  }
};

namespace detail {

inline double logistic(double u) { return 1.0 / (1.0 + std::exp(-u)); }

inline double natural_gradient_norm(const Matrix& U, const Matrix& X) {
  const Matrix u = U * X;
  const Matrix y = u.unaryExpr([](double v) { return 1.0 - 2.0 * logistic(v); });
  const Matrix G = Matrix::Identity(U.rows(), U.rows()) + (y * u.transpose()) / static_cast<double>(X.cols());
  return G.norm();
}

}  // namespace detail

inline IcaModel ica_infomax(const Matrix& data, const IcaOptions& opt = {}) {
  const Eigen::Index channels = data.cols();
  const Eigen::Index comps = opt.n_components > 0 ? opt.n_components : channels;
  require(comps <= channels, "ica_infomax: n_components exceeds channel count");
  require(data.rows() >= 20 * channels, "ica_infomax: need at least 20 samples per channel");

  IcaModel model;
  model.seed = opt.seed;
  model.channel_mean = data.colwise().mean();
  const Matrix centered = data.rowwise() - model.channel_mean;
  const Matrix cov = centered.transpose() * centered / static_cast<double>(data.rows() - 1);
  const SortedEigen eig = sorted_symmetric_eigen(cov);
  if (!(eig.values(comps - 1) > 1e-12 * eig.values(0)))
    throw ComputeError("ica_infomax: covariance rank below requested component count");
  model.whitener = eig.values.head(comps).cwiseSqrt().cwiseInverse().asDiagonal() *
                   eig.vectors.leftCols(comps).transpose();

  // Fit samples as columns of the whitened data.
  std::vector<Eigen::Index> rows;
  const auto n_all = static_cast<std::size_t>(data.rows());
  const std::size_t n_fit = opt.max_samples > 0 ? std::min(opt.max_samples, n_all) : n_all;
  for (std::size_t i = 0; i < n_fit; ++i)
    rows.push_back(static_cast<Eigen::Index>(i * n_all / n_fit));
  Matrix X(comps, static_cast<Eigen::Index>(n_fit));
  for (std::size_t i = 0; i < n_fit; ++i)
    X.col(static_cast<Eigen::Index>(i)) = model.whitener * centered.row(rows[i]).transpose();

  const std::size_t N = n_fit;
  const std::size_t block =
      opt.block_size > 0 ? opt.block_size
                         : static_cast<std::size_t>(std::ceil(std::min(5.0 * std::log(static_cast<double>(N)), 0.3 * N)));
  Rng rng(opt.seed);
  std::vector<Eigen::Index> order(N);
  std::iota(order.begin(), order.end(), 0);

  const Matrix I = Matrix::Identity(comps, comps);
  Matrix U = I;
  Matrix prev_delta;
  double lr = opt.learning_rate;
  int iter = 0;
  bool converged = false;
  double change = 0.0;
  Matrix xb(comps, static_cast<Eigen::Index>(block));
  while (iter < opt.max_iter) {
    const Matrix U_start = U;
    std::shuffle(order.begin(), order.end(), rng);
    bool blowup = false;
    for (std::size_t start = 0; start < N; start += block) {
      const std::size_t b = std::min(block, N - start);
      if (xb.cols() != static_cast<Eigen::Index>(b)) xb.resize(comps, static_cast<Eigen::Index>(b));
      for (std::size_t j = 0; j < b; ++j) xb.col(static_cast<Eigen::Index>(j)) = X.col(order[start + j]);
      const Matrix u = U * xb;
      const Matrix y = u.unaryExpr([](double v) { return 1.0 - 2.0 * detail::logistic(v); });
      U += lr * (static_cast<double>(b) * I + y * u.transpose()) * U;
      if (!U.allFinite() || U.cwiseAbs().maxCoeff() > 1e8) {
        blowup = true;
        break;
      }
    }
    ++iter;
    if (blowup) {
      // restart from the identity with a smaller step
      log_warn("ica_infomax: weights diverged, restarting with a lower learning rate");
      U = I;
      prev_delta.resize(0, 0);
      lr *= 0.5;
      if (lr < opt.min_learning_rate) break;
      continue;
    }
    const Matrix delta = U - U_start;
    change = delta.squaredNorm();
    if (change < opt.tolerance) {
      converged = true;
      break;
    }
    if (prev_delta.size() > 0) {
      const double cosine = (delta.array() * prev_delta.array()).sum() / (delta.norm() * prev_delta.norm());
      // direction reversal beyond 60 degrees counts as oscillation
      if (cosine < 0.5) lr = std::max(opt.min_learning_rate, lr * 0.5);
    }
    prev_delta = delta;
  }
  model.unmixing = U;
  model.iterations = iter;
  model.final_change = change;
  model.converged = converged;
  model.final_gradient_norm = detail::natural_gradient_norm(U, X);
  if (!converged)
    log_warn("ica_infomax: not converged after " + std::to_string(iter) + " iterations");
  model.mixing = model.filters().completeOrthogonalDecomposition().pseudoInverse();
  return model;
}

inline IcaModel ica_infomax(const MultichannelSignal& signal, const IcaOptions& opt = {}) {
  return ica_infomax(signal.data(), opt);
}

/// Amari performance index of P = W A, normalised to [0, 1]; 0 means P is a
/// scaled permutation.
inline double amari_index(const Matrix& P) {
  require(P.rows() == P.cols() && P.rows() >= 2, "amari_index: need a square matrix of size >= 2");
  const Matrix a = P.cwiseAbs();
  const double n = static_cast<double>(P.rows());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) acc += a.row(i).sum() / a.row(i).maxCoeff() - 1.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j) acc += a.col(j).sum() / a.col(j).maxCoeff() - 1.0;
  return acc / (2.0 * n * (n - 1.0));
}

// ---------------------------------------------------------------------------
// Motion component scoring and removal
// ---------------------------------------------------------------------------

struct RejectionReport {
  Series component_scores;
  std::set<std::size_t> rejected;
  std::string rule;

  std::string to_csv() const {
    std::string out = "component,score,rejected\n";
    for (std::size_t i = 0; i < component_scores.size(); ++i) {
      out += std::to_string(i);
      out += ',';
      csv::append(out, component_scores[i]);
      out += rejected.count(i) ? ",1\n" : ",0\n";
    }
    return out;
  }
};

struct MotionScoreOptions {
  double threshold = 0.5;
  int harmonics = 4;
  double half_width_hz = 0.3;
  std::set<std::size_t> manual_override;  // when non-empty, replaces the heuristic set
};

/// Fraction of each component's power within +-0.3 Hz of the first four
/// harmonics of every given step frequency.
inline RejectionReport score_motion_components(const IcaModel& model, const MultichannelSignal& signal,
                                               const Series& step_freqs_hz, const MotionScoreOptions& opt = {}) {
  require(!step_freqs_hz.empty(), "score_motion_components: need a step frequency");
  for (double f : step_freqs_hz) require(f > 0, "score_motion_components: step frequency must be positive");
  Series centres;
  for (double f : step_freqs_hz)
    for (int k = 1; k <= opt.harmonics; ++k) centres.push_back(k * f);
  const Matrix S = model.sources(signal.data());
  RejectionReport rep;
  rep.component_scores.assign(static_cast<std::size_t>(S.cols()), 0.0);
  parallel_for(static_cast<std::size_t>(S.cols()), [&](std::size_t c) {
    const Vector col = S.col(static_cast<Eigen::Index>(c));
    const Series act(col.data(), col.data() + col.size());
    rep.component_scores[c] = welch(act, signal.sample_rate_hz()).band_fraction(centres, opt.half_width_hz);
  });
  if (!opt.manual_override.empty()) {
    for (std::size_t c : opt.manual_override)
      require(c < rep.component_scores.size(), "score_motion_components: override index out of range");
    rep.rejected = opt.manual_override;
    rep.rule = "manual override";
  } else {
    for (std::size_t c = 0; c < rep.component_scores.size(); ++c)
      if (rep.component_scores[c] > opt.threshold) rep.rejected.insert(c);
    rep.rule = "gait harmonic power fraction > " + csv::format(opt.threshold);
  }
  return rep;
}

inline RejectionReport score_motion_components(const IcaModel& model, const MultichannelSignal& signal,
                                               double step_freq_hz, const MotionScoreOptions& opt = {}) {
  return score_motion_components(model, signal, Series{step_freq_hz}, opt);
}

/// x_clean = mean + A[:, keep] * (W (x - mean))[keep].
inline MultichannelSignal remove_components(const MultichannelSignal& signal, const IcaModel& model,
                                            const std::set<std::size_t>& rejected) {
  const auto comps = static_cast<std::size_t>(model.n_components());
  for (std::size_t c : rejected) require(c < comps, "remove_components: component index out of range");
  if (rejected.size() >= comps) throw ValidationError("remove_components: cannot reject every component");
  std::vector<Eigen::Index> keep;
  for (std::size_t c = 0; c < comps; ++c)
    if (!rejected.count(c)) keep.push_back(static_cast<Eigen::Index>(c));
  const Matrix filters = model.filters();
  Matrix Fk(static_cast<Eigen::Index>(keep.size()), filters.cols());
  Matrix Ak(model.mixing.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    Fk.row(static_cast<Eigen::Index>(i)) = filters.row(keep[i]);
    Ak.col(static_cast<Eigen::Index>(i)) = model.mixing.col(keep[i]);
  }
  const Matrix projector = Ak * Fk;  // channels x channels
  Matrix out = ((signal.data().rowwise() - model.channel_mean) * projector.transpose()).rowwise() + model.channel_mean;
  return signal.with_data(std::move(out));
}

}  // namespace stride_intent
