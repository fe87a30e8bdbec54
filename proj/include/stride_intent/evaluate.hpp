#pragma once

// Grouped cross-validation, hold-out testing, one-vs-one voting and the
// window / component sweeps.

#include "stride_intent/classify.hpp"
#include "stride_intent/epoching.hpp"

namespace stride_intent {

// ---------------------------------------------------------------------------
// Confusion matrix
// ---------------------------------------------------------------------------

/// Rows are predicted classes, columns true classes; each column is a
/// percentage of its true class.
struct ConfusionMatrix {
  Matrix counts;
  Matrix percent;
  std::vector<std::string> class_names;
  std::vector<bool> column_defined;

  static ConfusionMatrix from_predictions(const std::vector<int>& truth, const std::vector<int>& predicted,
                                          const std::vector<std::string>& names) {
    require(truth.size() == predicted.size(), "confusion: size mismatch");
    const auto K = static_cast<Eigen::Index>(names.size());
    ConfusionMatrix cm;
    cm.class_names = names;
    cm.counts = Matrix::Zero(K, K);
    for (std::size_t i = 0; i < truth.size(); ++i) {
      require(truth[i] >= 0 && truth[i] < K && predicted[i] >= 0 && predicted[i] < K, "confusion: label out of range");
      cm.counts(predicted[i], truth[i]) += 1.0;
    }
    cm.percent = Matrix::Zero(K, K);
    cm.column_defined.assign(names.size(), false);
    for (Eigen::Index c = 0; c < K; ++c) {
      const double total = cm.counts.col(c).sum();
      if (total > 0) {
        cm.percent.col(c) = 100.0 * cm.counts.col(c) / total;
        cm.column_defined[static_cast<std::size_t>(c)] = true;
      } else {
        log_warn("confusion: class " + names[static_cast<std::size_t>(c)] + " absent; sensitivity undefined");
      }
    }
    return cm;
  }

  /// Diagonal as fractions; NaN for absent classes.
  Series sensitivity() const {
    Series out;
    for (Eigen::Index c = 0; c < percent.rows(); ++c)
      out.push_back(column_defined[static_cast<std::size_t>(c)] ? percent(c, c) / 100.0
                                                                 : std::numeric_limits<double>::quiet_NaN());
    return out;
  }

  std::string to_csv() const {
    std::string out = "predicted";
    for (const auto& n : class_names) out += ',' + n;
    out += '\n';
    for (Eigen::Index r = 0; r < percent.rows(); ++r) {
      out += class_names[static_cast<std::size_t>(r)];
      for (Eigen::Index c = 0; c < percent.cols(); ++c) {
        out += ',';
        csv::append(out, percent(r, c));
      }
      out += '\n';
    }
    return out;
  }
};

inline double accuracy(const std::vector<int>& truth, const std::vector<int>& predicted) {
  require(truth.size() == predicted.size() && !truth.empty(), "accuracy: empty or mismatched");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += truth[i] == predicted[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

// ---------------------------------------------------------------------------
// Models over windows
// ---------------------------------------------------------------------------

struct ModelSpec {
  LabelScheme scheme = LabelScheme::AdaptNonAdapt;
  int k_components = 6;
  CspVariant variant = CspVariant::Rcsp;
  ClassifierSpec classifier;
  /// Take the top k filters of the full |log lambda| ordering instead of k/2
  /// from each end (used by the component sweep; allows odd k).
  bool ranked_components = false;
};

struct PairDecision {
  int class_a = 0, class_b = 1;
  int vote = 0;
  double decision = 0.0;
};

/// Majority vote over pairwise decisions; a three-way tie goes to the class
/// with the largest summed |decision| among its votes, then the lower index.
inline int one_vs_one_predict(const std::vector<PairDecision>& pairs, int n_classes) {
  std::vector<int> votes(static_cast<std::size_t>(n_classes), 0);
  Series strength(static_cast<std::size_t>(n_classes), 0.0);
  for (const auto& p : pairs) {
    require(p.vote >= 0 && p.vote < n_classes, "one_vs_one_predict: vote out of range");
    ++votes[static_cast<std::size_t>(p.vote)];
    strength[static_cast<std::size_t>(p.vote)] += std::abs(p.decision);
  }
  int best = 0;
  for (int c = 1; c < n_classes; ++c) {
    const auto cu = static_cast<std::size_t>(c), bu = static_cast<std::size_t>(best);
    if (votes[cu] > votes[bu] || (votes[cu] == votes[bu] && strength[cu] > strength[bu])) best = c;
  }
  return best;
}

struct TrainedModel {
  ModelSpec spec;
  std::vector<SpatialFilterBank> banks;
  std::vector<Classifier> classifiers;

  Vector features(const Matrix& window, std::size_t bank) const {
    const Eigen::Index k = spec.ranked_components ? spec.k_components : 0;
    if (spec.k_components == 0) return Vector(0);
    return apply_filters(window, banks[bank], k);
  }

  int predict(const Matrix& window) const {
    if (banks.size() == 1) return classifiers[0].predict(features(window, 0));
    std::vector<PairDecision> pairs;
    for (std::size_t b = 0; b < banks.size(); ++b) {
      const Vector f = features(window, b);
      pairs.push_back({banks[b].class_pair.first, banks[b].class_pair.second, classifiers[b].predict(f),
                       classifiers[b].decision(f)});
    }
    return one_vs_one_predict(pairs, class_count(spec.scheme));
  }
};

namespace detail {

inline SpatialFilterBank fit_spec_bank(const WindowSet& ws, int a, int b, const ModelSpec& spec,
                                       std::span<const std::size_t> idx) {
  if (spec.ranked_components || spec.k_components == 0) return fit_bank(ws, a, b, 0, spec.variant, idx);
  return fit_bank(ws, a, b, spec.k_components, spec.variant, idx);
}

inline std::pair<Matrix, std::vector<int>> pair_features(const WindowSet& ws, const TrainedModel& m, std::size_t bank,
                                                         std::span<const std::size_t> idx) {
  const auto [a, b] = m.banks[bank].class_pair;
  std::vector<std::size_t> keep;
  for (std::size_t i : idx)
    if (ws.labels[i] == a || ws.labels[i] == b) keep.push_back(i);
  const Eigen::Index dim = m.spec.k_components == 0 ? 0
                           : m.spec.ranked_components ? std::min<Eigen::Index>(m.spec.k_components, m.banks[bank].k())
                                                      : m.banks[bank].k();
  Matrix X(static_cast<Eigen::Index>(keep.size()), dim);
  std::vector<int> y;
  for (std::size_t r = 0; r < keep.size(); ++r) {
    if (dim > 0) X.row(static_cast<Eigen::Index>(r)) = m.features(ws.windows[keep[r]], bank).transpose();
    y.push_back(ws.labels[keep[r]]);
  }
  return {std::move(X), std::move(y)};
}

}  // namespace detail

/// Fits the spatial filter bank(s) and classifier(s) on the given windows.
inline TrainedModel train_model(const WindowSet& ws, std::span<const std::size_t> idx, const ModelSpec& spec) {
  require(!idx.empty(), "train_model: no training windows");
  TrainedModel m;
  m.spec = spec;
  if (spec.scheme == LabelScheme::ThreeClass) {
    m.banks = {};
    static constexpr std::pair<int, int> kPairs[] = {{0, 2}, {1, 2}, {0, 1}};
    for (const auto& [a, b] : kPairs) {
      auto bank = detail::fit_spec_bank(ws, a, b, spec, idx);
      bank.class_pair = {a, b};
      m.banks.push_back(std::move(bank));
    }
  } else {
    auto bank = detail::fit_spec_bank(ws, 0, 1, spec, idx);
    bank.class_pair = {0, 1};
    m.banks.push_back(std::move(bank));
  }
  for (std::size_t b = 0; b < m.banks.size(); ++b) {
    auto [X, y] = detail::pair_features(ws, m, b, idx);
    m.classifiers.push_back(fit_classifier(X, y, spec.classifier));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Fold assignment
// ---------------------------------------------------------------------------

/// Fold of each group: groups of each label are shuffled and dealt
/// round-robin, continuing the deal across labels so fold sizes balance.
inline std::vector<int> assign_group_folds(const std::vector<int>& group_labels, int k, std::uint64_t seed) {
  require(k >= 2, "assign_group_folds: need at least 2 folds");
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t g = 0; g < group_labels.size(); ++g) by_label[group_labels[g]].push_back(g);
  for (const auto& [label, groups] : by_label)
    if (groups.size() < static_cast<std::size_t>(k))
      throw ValidationError("grouped cv: insufficient groups for label " + std::to_string(label) + " (" +
                            std::to_string(groups.size()) + " < " + std::to_string(k) + " folds)");
  Rng rng(seed);
  std::vector<int> fold(group_labels.size(), -1);
  std::size_t deal = 0;
  for (auto& [label, groups] : by_label) {
    std::shuffle(groups.begin(), groups.end(), rng);
    for (std::size_t g : groups) fold[g] = static_cast<int>(deal++ % static_cast<std::size_t>(k));
  }
  return fold;
}

/// Label of each parent epoch (all windows of an epoch must agree).
inline std::vector<int> epoch_labels(const std::vector<int>& labels, const std::vector<int>& parent) {
  require(labels.size() == parent.size(), "epoch_labels: size mismatch");
  int n = 0;
  for (int p : parent) n = std::max(n, p + 1);
  std::vector<int> out(static_cast<std::size_t>(n), -1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int& slot = out[static_cast<std::size_t>(parent[i])];
    if (slot >= 0 && slot != labels[i]) throw ValidationError("windows of one epoch carry different labels");
    slot = labels[i];
  }
  return out;
}

/// Majority vote of window predictions per parent epoch (ties: lower class).
inline std::map<int, int> epoch_votes(const std::vector<int>& parent, const std::vector<int>& predicted,
                                      int n_classes) {
  std::map<int, std::vector<int>> tally;
  for (std::size_t i = 0; i < parent.size(); ++i) {
    auto& t = tally[parent[i]];
    if (t.empty()) t.assign(static_cast<std::size_t>(n_classes), 0);
    ++t[static_cast<std::size_t>(predicted[i])];
  }
  std::map<int, int> out;
  for (const auto& [e, t] : tally) out[e] = static_cast<int>(std::max_element(t.begin(), t.end()) - t.begin());
  return out;
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

struct CvOptions {
  int folds = 10;
  std::uint64_t seed = 0;
  bool refit = true;  // re-estimate spatial filters inside every training fold
};

struct CvReport {
  Series fold_loss_window;
  Series fold_loss_epoch;
  double loss_window = 0.0;
  double loss_epoch = 0.0;  // generalisation loss (headline)
  double acc_window = 0.0;
  double acc_epoch = 0.0;
  ConfusionMatrix confusion_epoch;
  ConfusionMatrix confusion_window;
  Series sensitivity_epoch;
  std::vector<int> epoch_fold;

  double generalization_loss() const { return loss_epoch; }
};

/// Runs `fit_predict(train_windows, test_windows) -> predictions for test`
/// over grouped stratified folds of parent epochs.
template <typename FitPredict>
CvReport run_grouped_cv(const std::vector<int>& labels, const std::vector<int>& parent, LabelScheme scheme,
                        const CvOptions& opt, FitPredict&& fit_predict) {
  const auto elabels = epoch_labels(labels, parent);
  std::vector<int> present_labels;
  std::vector<std::size_t> present_epochs;
  for (std::size_t e = 0; e < elabels.size(); ++e)
    if (elabels[e] >= 0) {
      present_epochs.push_back(e);
      present_labels.push_back(elabels[e]);
    }
  const auto dense = assign_group_folds(present_labels, opt.folds, opt.seed);
  std::vector<int> efold(elabels.size(), -1);
  for (std::size_t i = 0; i < present_epochs.size(); ++i) efold[present_epochs[i]] = dense[i];

  const int K = class_count(scheme);
  std::vector<std::vector<int>> fold_pred(static_cast<std::size_t>(opt.folds));
  std::vector<std::vector<std::size_t>> fold_test(static_cast<std::size_t>(opt.folds));
  parallel_for(static_cast<std::size_t>(opt.folds), [&](std::size_t f) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < labels.size(); ++i)
      (efold[static_cast<std::size_t>(parent[i])] == static_cast<int>(f) ? test : train).push_back(i);
    fold_pred[f] = fit_predict(train, test);
    fold_test[f] = std::move(test);
  });

  CvReport rep;
  rep.epoch_fold = efold;
  std::vector<int> all_truth_w, all_pred_w, all_truth_e, all_pred_e;
  for (std::size_t f = 0; f < fold_test.size(); ++f) {
    std::vector<int> truth, pred = fold_pred[f], par;
    for (std::size_t i : fold_test[f]) {
      truth.push_back(labels[i]);
      par.push_back(parent[i]);
    }
    rep.fold_loss_window.push_back(1.0 - accuracy(truth, pred));
    const auto votes = epoch_votes(par, pred, K);
    std::vector<int> et, ep;
    for (const auto& [e, v] : votes) {
      et.push_back(elabels[static_cast<std::size_t>(e)]);
      ep.push_back(v);
    }
    rep.fold_loss_epoch.push_back(1.0 - accuracy(et, ep));
    all_truth_w.insert(all_truth_w.end(), truth.begin(), truth.end());
    all_pred_w.insert(all_pred_w.end(), pred.begin(), pred.end());
    all_truth_e.insert(all_truth_e.end(), et.begin(), et.end());
    all_pred_e.insert(all_pred_e.end(), ep.begin(), ep.end());
  }
  rep.loss_window = mean(rep.fold_loss_window);
  rep.loss_epoch = mean(rep.fold_loss_epoch);
  rep.acc_window = 1.0 - rep.loss_window;
  rep.acc_epoch = 1.0 - rep.loss_epoch;
  rep.confusion_window = ConfusionMatrix::from_predictions(all_truth_w, all_pred_w, class_names(scheme));
  rep.confusion_epoch = ConfusionMatrix::from_predictions(all_truth_e, all_pred_e, class_names(scheme));
  rep.sensitivity_epoch = rep.confusion_epoch.sensitivity();
  return rep;
}

/// Classifier-only cross-validation on precomputed features.
inline CvReport grouped_kfold_cv(const FeatureMatrix& fm, LabelScheme scheme, const ClassifierSpec& spec,
                                 const CvOptions& opt = {}) {
  return run_grouped_cv(fm.labels, fm.parent_epoch_id, scheme, opt,
                        [&](const std::vector<std::size_t>& train, const std::vector<std::size_t>& test) {
                          Matrix X(static_cast<Eigen::Index>(train.size()), fm.values.cols());
                          std::vector<int> y;
                          for (std::size_t r = 0; r < train.size(); ++r) {
                            X.row(static_cast<Eigen::Index>(r)) = fm.values.row(static_cast<Eigen::Index>(train[r]));
                            y.push_back(fm.labels[train[r]]);
                          }
                          const Classifier c = fit_classifier(X, y, spec);
                          std::vector<int> out;
                          for (std::size_t i : test) out.push_back(c.predict(fm.values.row(static_cast<Eigen::Index>(i)).transpose()));
                          return out;
                        });
}

/// Full window pipeline: spatial filters (re-fit per fold unless disabled)
/// and classifier.
inline CvReport grouped_kfold_cv(const WindowSet& ws, const ModelSpec& spec, const CvOptions& opt = {}) {
  std::optional<TrainedModel> global;
  if (!opt.refit) {
    std::vector<std::size_t> all(ws.size());
    std::iota(all.begin(), all.end(), 0);
    global = train_model(ws, all, spec);
  }
  return run_grouped_cv(ws.labels, ws.parent_epoch_id, spec.scheme, opt,
                        [&](const std::vector<std::size_t>& train, const std::vector<std::size_t>& test) {
                          TrainedModel m;
                          if (global) {
                            m = *global;
                            m.classifiers.clear();
                            for (std::size_t b = 0; b < m.banks.size(); ++b) {
                              auto [X, y] = detail::pair_features(ws, m, b, train);
                              m.classifiers.push_back(fit_classifier(X, y, spec.classifier));
                            }
                          } else {
                            m = train_model(ws, train, spec);
                          }
                          std::vector<int> out;
                          for (std::size_t i : test) out.push_back(m.predict(ws.windows[i]));
                          return out;
                        });
}

// ---------------------------------------------------------------------------
// Hold-out
// ---------------------------------------------------------------------------

struct HoldoutReport {
  double acc_window = 0.0;
  double acc_epoch = 0.0;
  ConfusionMatrix confusion_window;
  ConfusionMatrix confusion_epoch;
  std::size_t n_train_epochs = 0, n_test_epochs = 0;
};

/// Classifier trained on one feature set and scored on another.
inline HoldoutReport evaluate_holdout(const FeatureMatrix& train, const FeatureMatrix& test, LabelScheme scheme,
                                      const ClassifierSpec& spec) {
  {
    std::set<int> tr(train.parent_epoch_id.begin(), train.parent_epoch_id.end());
    for (int e : test.parent_epoch_id)
      require(!tr.count(e), "evaluate_holdout: train and test share parent epoch " + std::to_string(e));
  }
  const Classifier c = fit_classifier(train.values, train.labels, spec);
  std::vector<int> pred;
  for (Eigen::Index i = 0; i < test.values.rows(); ++i) pred.push_back(c.predict(test.values.row(i).transpose()));
  HoldoutReport rep;
  const auto names = class_names(scheme);
  rep.acc_window = accuracy(test.labels, pred);
  rep.confusion_window = ConfusionMatrix::from_predictions(test.labels, pred, names);
  const auto votes = epoch_votes(test.parent_epoch_id, pred, class_count(scheme));
  const auto el = epoch_labels(test.labels, test.parent_epoch_id);
  std::vector<int> et, ep;
  for (const auto& [e, v] : votes) {
    et.push_back(el[static_cast<std::size_t>(e)]);
    ep.push_back(v);
  }
  rep.acc_epoch = accuracy(et, ep);
  rep.confusion_epoch = ConfusionMatrix::from_predictions(et, ep, names);
  rep.n_test_epochs = votes.size();
  rep.n_train_epochs = std::set<int>(train.parent_epoch_id.begin(), train.parent_epoch_id.end()).size();
  return rep;
}

/// Grouped stratified split (one fold of `1 / test_fraction`) held out; the
/// model including spatial filters is fit on the remainder.
inline HoldoutReport evaluate_holdout(const WindowSet& ws, const ModelSpec& spec, double test_fraction = 0.2,
                                      std::uint64_t seed = 0) {
  require(test_fraction > 0 && test_fraction < 1, "evaluate_holdout: test fraction must be in (0, 1)");
  const int k = std::max(2, static_cast<int>(std::lround(1.0 / test_fraction)));
  const auto el = epoch_labels(ws.labels, ws.parent_epoch_id);
  std::vector<int> present;
  std::vector<std::size_t> ids;
  for (std::size_t e = 0; e < el.size(); ++e)
    if (el[e] >= 0) {
      present.push_back(el[e]);
      ids.push_back(e);
    }
  const auto folds = assign_group_folds(present, k, seed);
  std::vector<char> is_test(el.size(), 0);
  for (std::size_t i = 0; i < ids.size(); ++i) is_test[ids[i]] = folds[i] == 0;
  std::vector<std::size_t> train, test;
  for (std::size_t i = 0; i < ws.size(); ++i)
    (is_test[static_cast<std::size_t>(ws.parent_epoch_id[i])] ? test : train).push_back(i);
  const TrainedModel m = train_model(ws, train, spec);
  std::vector<int> truth, pred, par;
  for (std::size_t i : test) {
    truth.push_back(ws.labels[i]);
    pred.push_back(m.predict(ws.windows[i]));
    par.push_back(ws.parent_epoch_id[i]);
  }
  HoldoutReport rep;
  const auto names = class_names(spec.scheme);
  rep.acc_window = accuracy(truth, pred);
  rep.confusion_window = ConfusionMatrix::from_predictions(truth, pred, names);
  const auto votes = epoch_votes(par, pred, class_count(spec.scheme));
  std::vector<int> et, ep;
  for (const auto& [e, v] : votes) {
    et.push_back(el[static_cast<std::size_t>(e)]);
    ep.push_back(v);
  }
  rep.acc_epoch = accuracy(et, ep);
  rep.confusion_epoch = ConfusionMatrix::from_predictions(et, ep, names);
  rep.n_test_epochs = votes.size();
  rep.n_train_epochs = ids.size() - votes.size();
  return rep;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct ComponentCurve {
  std::vector<int> k;
  Series cv_loss;
  double chance_loss = 0.0;  // k = 0, majority classifier

  std::string to_csv() const {
    std::string out = "k,cv_loss\n";
    for (std::size_t i = 0; i < k.size(); ++i) {
      out += std::to_string(k[i]) + ',';
      csv::append(out, cv_loss[i]);
      out += '\n';
    }
    return out;
  }
};

/// CV loss (epoch level) as filters are added one at a time in |log lambda|
/// order, for k = 1..max_k.
inline ComponentCurve component_sweep(const WindowSet& ws, int max_k, ModelSpec spec, const CvOptions& opt = {}) {
  require(max_k >= 1 && max_k <= ws.n_channels(), "component_sweep: max_k must be in [1, channels]");
  ComponentCurve curve;
  spec.ranked_components = true;
  spec.k_components = 0;
  curve.chance_loss = grouped_kfold_cv(ws, spec, opt).loss_epoch;
  for (int k = 1; k <= max_k; ++k) {
    spec.k_components = k;
    curve.k.push_back(k);
    curve.cv_loss.push_back(grouped_kfold_cv(ws, spec, opt).loss_epoch);
  }
  return curve;
}

struct SweepRow {
  int w = 0;
  CspVariant feature = CspVariant::Rcsp;
  ClassifierKind classifier = ClassifierKind::Lda;
  double acc_window = 0.0;
  double acc_epoch = 0.0;
  double cv_loss = 0.0;
};

struct SweepTable {
  std::vector<SweepRow> rows;

  std::string to_csv() const {
    std::string out = "w,feature,classifier,acc_window,acc_epoch,cv_loss\n";
    for (const auto& r : rows) {
      out += std::to_string(r.w) + ',' + std::string(to_string(r.feature)) + ',' + std::string(to_string(r.classifier)) + ',';
      csv::append(out, r.acc_window);
      out += ',';
      csv::append(out, r.acc_epoch);
      out += ',';
      csv::append(out, r.cv_loss);
      out += '\n';
    }
    return out;
  }

  double mean_acc_epoch(CspVariant v) const {
    Series a;
    for (const auto& r : rows)
      if (r.feature == v) a.push_back(r.acc_epoch);
    return a.empty() ? 0.0 : mean(a);
  }
};

/// Full factorial over window sizes, {CSP, RCSP} and {LDA, SVM}.
inline SweepTable window_sweep(const EpochSet& epochs, const std::vector<int>& window_sizes, ModelSpec base,
                               const CvOptions& opt = {}, Eigen::Index stride = 5,
                               std::vector<CspVariant> variants = {CspVariant::Csp, CspVariant::Rcsp},
                               std::vector<ClassifierKind> classifiers = {ClassifierKind::Lda, ClassifierKind::Svm}) {
  SweepTable table;
  for (int w : window_sizes) {
    require(w > 0 && w <= epochs.epoch_len(), "window_sweep: window longer than the epoch");
    const WindowSet ws = slide_windows(epochs, w, stride);
    for (auto v : variants)
      for (auto c : classifiers) {
        ModelSpec spec = base;
        spec.variant = v;
        spec.classifier.kind = c;
        const CvReport rep = grouped_kfold_cv(ws, spec, opt);
        table.rows.push_back({w, v, c, rep.acc_window, rep.acc_epoch, rep.loss_epoch});
      }
  }
  return table;
}

}  // namespace stride_intent
