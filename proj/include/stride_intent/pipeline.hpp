#pragma once

// Pipeline configuration and stages: steps -> preprocess -> epochs/behaviour
// -> features -> train/evaluate.

#include "stride_intent/evaluate.hpp"
#include "stride_intent/filter.hpp"
#include "stride_intent/ica.hpp"
#include "stride_intent/synth.hpp"

#include <json.hpp>

namespace stride_intent {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct PipelineConfig {
  // [filter]
  double filter_low_hz = 3.0;
  double filter_high_hz = 45.0;
  int filter_n_taps = 501;
  // [gait]
  std::size_t ssa_l = 0;
  double ssa_share = 0.9;
  double peak_min_separation_s = 0.25;
  double peak_threshold_k = 0.0;
  bool swap_sides = false;
  double min_confidence = 0.2;
  double sync_tolerance_s = 0.1;
  // [ica]
  int ica_components = 0;
  int ica_max_iter = 512;
  double ica_threshold = 0.5;
  std::set<std::size_t> ica_override;
  std::size_t ica_max_samples = 20000;
  // [epochs]
  double epoch_len_s = 0.4;
  int n_adapt_steps = 3;
  double rt_band_k = 1.0;
  // [features]
  int w = 90;
  int stride = 5;
  int k_components = 6;
  bool shrinkage = true;
  // [classify]
  ClassifierKind classifier = ClassifierKind::Svm;
  KernelKind kernel = KernelKind::Rbf;
  KernelKind three_class_kernel = KernelKind::Linear;
  double c_reg = 1.0;
  double gamma = 0.0;
  bool lda_shrinkage = true;
  int cv_folds = 10;
  bool refit = true;
  double holdout_fraction = 0.2;
  std::vector<int> sweep_w{90, 80, 70, 60};
  // [run]
  std::uint64_t seed = 1;
  // [synth]
  SessionSpec synth;

  ModelSpec model_spec(LabelScheme scheme) const {
    ModelSpec m;
    m.scheme = scheme;
    m.k_components = k_components;
    m.variant = shrinkage ? CspVariant::Rcsp : CspVariant::Csp;
    m.classifier.kind = classifier;
    m.classifier.lda_shrinkage = lda_shrinkage;
    m.classifier.svm.kernel = scheme == LabelScheme::ThreeClass ? three_class_kernel : kernel;
    m.classifier.svm.c_reg = c_reg;
    m.classifier.svm.gamma = gamma;
    m.classifier.svm.seed = seed;
    return m;
  }

  CvOptions cv_options() const { return {cv_folds, seed, refit}; }

  StrikeParams strike_params() const {
    StrikeParams p;
    p.ssa_l = ssa_l;
    p.ssa_share = ssa_share;
    p.peaks = {peak_min_separation_s, peak_threshold_k};
    p.swap_sides = swap_sides;
    return p;
  }

  void set(std::string_view section, std::string_view key, std::string_view value);
  std::string to_text() const;
};

namespace detail {

inline std::string qualified(std::string_view section, std::string_view key) {
  return section.empty() ? std::string(key) : std::string(section) + "." + std::string(key);
}

inline double parse_number(std::string_view section, std::string_view key, std::string_view v) {
  const auto d = csv::parse_double(v);
  if (!d || !std::isfinite(*d))
    throw ValidationError("config key " + qualified(section, key) + ": not a number: '" + std::string(v) + "'");
  return *d;
}

inline long long parse_integer(std::string_view section, std::string_view key, std::string_view v) {
  const double d = parse_number(section, key, v);
  if (d != std::floor(d))
    throw ValidationError("config key " + qualified(section, key) + ": expected an integer, got '" + std::string(v) + "'");
  return static_cast<long long>(d);
}

inline bool parse_bool(std::string_view section, std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ValidationError("config key " + qualified(section, key) + ": expected true/false, got '" + std::string(v) + "'");
}

inline std::vector<int> parse_int_list(std::string_view section, std::string_view key, std::string_view v) {
  std::vector<int> out;
  if (csv::trim(v).empty()) return out;
  for (auto cell : csv::split(v)) out.push_back(static_cast<int>(parse_integer(section, key, csv::trim(cell))));
  return out;
}

inline KernelKind parse_kernel(std::string_view section, std::string_view key, std::string_view v) {
  if (v == "linear") return KernelKind::Linear;
  if (v == "rbf") return KernelKind::Rbf;
  throw ValidationError("config key " + qualified(section, key) + ": expected linear or rbf");
}

template <typename T>
std::string join(const T& values) {
  std::string out;
  for (const auto& v : values) {
    if (!out.empty()) out += ',';
    out += std::to_string(v);
  }
  return out;
}

}  // namespace detail

inline void PipelineConfig::set(std::string_view section, std::string_view key, std::string_view value) {
  using namespace detail;
  const std::string s(section), k(key);
  const auto num = [&] { return parse_number(section, key, value); };
  const auto integer = [&] { return parse_integer(section, key, value); };
  const auto positive = [&](double v) {
    if (!(v > 0)) throw ValidationError("config key " + qualified(section, key) + ": must be positive");
    return v;
  };
  if (s == "filter") {
    if (k == "low_hz") filter_low_hz = positive(num());
    else if (k == "high_hz") filter_high_hz = positive(num());
    else if (k == "n_taps") filter_n_taps = static_cast<int>(integer());
    else throw ValidationError("unknown config key " + qualified(section, key));
  } else if (s == "gait") {
    if (k == "ssa_l") {
      const auto v = integer();
      if (v < 0) throw ValidationError("config key gait.ssa_l: must be >= 0");
      ssa_l = static_cast<std::size_t>(v);
    } else if (k == "ssa_share") ssa_share = num();
    else if (k == "peak_min_separation_s") peak_min_separation_s = positive(num());
    else if (k == "peak_threshold_k") peak_threshold_k = num();
    else if (k == "swap_sides") swap_sides = parse_bool(section, key, value);
    else if (k == "min_confidence") min_confidence = num();
    else if (k == "sync_tolerance_s") sync_tolerance_s = positive(num());
    else throw ValidationError("unknown config key " + qualified(section, key));
  } else if (s == "ica") {
    if (k == "n_components") ica_components = static_cast<int>(integer());
    else if (k == "max_iter") ica_max_iter = static_cast<int>(positive(static_cast<double>(integer())));
    else if (k == "threshold") ica_threshold = num();
    else if (k == "override") {
      ica_override.clear();
      for (int c : parse_int_list(section, key, value)) {
        if (c < 0) throw ValidationError("config key ica.override: negative component index");
        ica_override.insert(static_cast<std::size_t>(c));
      }
    } else if (k == "max_samples") {
      const auto v = integer();
      if (v < 0) throw ValidationError("config key ica.max_samples: must be >= 0");
      ica_max_samples = static_cast<std::size_t>(v);
    } else throw ValidationError("unknown config key " + qualified(section, key));
  } else if (s == "epochs") {
    if (k == "epoch_len_s") epoch_len_s = positive(num());
    else if (k == "n_adapt_steps") n_adapt_steps = static_cast<int>(positive(static_cast<double>(integer())));
    else if (k == "rt_band_k") rt_band_k = positive(num());
    else throw ValidationError("unknown config key " + qualified(section, key));
  } else if (s == "features") {
    if (k == "w") w = static_cast<int>(positive(static_cast<double>(integer())));
    else if (k == "stride") stride = static_cast<int>(positive(static_cast<double>(integer())));
    else if (k == "k_components") k_components = static_cast<int>(positive(static_cast<double>(integer())));
    else if (k == "shrinkage") shrinkage = parse_bool(section, key, value);
    else throw ValidationError("unknown config key " + qualified(section, key));
  } else if (s == "classify") {
    if (k == "classifier") {
      auto c = parse_classifier(value);
      if (!c) throw ValidationError("config key classify.classifier: expected lda or svm");
      classifier = *c;
    } else if (k == "kernel") kernel = parse_kernel(section, key, value);
    else if (k == "three_class_kernel") three_class_kernel = parse_kernel(section, key, value);
    else if (k == "c_reg") c_reg = positive(num());
    else if (k == "gamma") gamma = num();
    else if (k == "lda_shrinkage") lda_shrinkage = parse_bool(section, key, value);
    else if (k == "cv_folds") cv_folds = static_cast<int>(integer());
    else if (k == "refit") refit = parse_bool(section, key, value);
    else if (k == "holdout_fraction") holdout_fraction = num();
    else if (k == "sweep_w") sweep_w = parse_int_list(section, key, value);
    else throw ValidationError("unknown config key " + qualified(section, key));
  } else if (s == "run") {
    if (k == "seed") {
      const auto v = integer();
      if (v < 0) throw ValidationError("config key run.seed: must be >= 0");
      seed = static_cast<std::uint64_t>(v);
    } else throw ValidationError("unknown config key " + qualified(section, key));
  } else if (s == "synth") {
    try {
      synth.set(key, value);
    } catch (const ValidationError& e) {
      throw ValidationError("config key " + qualified(section, key) + ": " + e.what());
    }
  } else {
    throw ValidationError("unknown config section [" + s + "] (key " + k + ")");
  }
  if (k == "k_components" && k_components % 2 != 0)
    throw ValidationError("config key features.k_components: must be even");
  if (k == "cv_folds" && cv_folds < 2) throw ValidationError("config key classify.cv_folds: must be >= 2");
  if (k == "holdout_fraction" && !(holdout_fraction > 0 && holdout_fraction < 1))
    throw ValidationError("config key classify.holdout_fraction: must be in (0, 1)");
}

inline std::string PipelineConfig::to_text() const {
  using detail::join;
  auto f = [](double v) { return csv::format(v); };
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  std::string out;
  out += "[filter]\nlow_hz = " + f(filter_low_hz) + "\nhigh_hz = " + f(filter_high_hz) +
         "\nn_taps = " + std::to_string(filter_n_taps) + "\n\n";
  out += "[gait]\nssa_l = " + std::to_string(ssa_l) + "\nssa_share = " + f(ssa_share) +
         "\npeak_min_separation_s = " + f(peak_min_separation_s) + "\npeak_threshold_k = " + f(peak_threshold_k) +
         "\nswap_sides = " + b(swap_sides) + "\nmin_confidence = " + f(min_confidence) +
         "\nsync_tolerance_s = " + f(sync_tolerance_s) + "\n\n";
  out += "[ica]\nn_components = " + std::to_string(ica_components) + "\nmax_iter = " + std::to_string(ica_max_iter) +
         "\nthreshold = " + f(ica_threshold) + "\noverride = " + join(ica_override) +
         "\nmax_samples = " + std::to_string(ica_max_samples) + "\n\n";
  out += "[epochs]\nepoch_len_s = " + f(epoch_len_s) + "\nn_adapt_steps = " + std::to_string(n_adapt_steps) +
         "\nrt_band_k = " + f(rt_band_k) + "\n\n";
  out += "[features]\nw = " + std::to_string(w) + "\nstride = " + std::to_string(stride) +
         "\nk_components = " + std::to_string(k_components) + "\nshrinkage = " + b(shrinkage) + "\n\n";
  out += "[classify]\nclassifier = " + std::string(classifier == ClassifierKind::Lda ? "lda" : "svm") +
         "\nkernel = " + std::string(to_string(kernel)) + "\nthree_class_kernel = " +
         std::string(to_string(three_class_kernel)) + "\nc_reg = " + f(c_reg) + "\ngamma = " + f(gamma) +
         "\nlda_shrinkage = " + b(lda_shrinkage) + "\ncv_folds = " + std::to_string(cv_folds) +
         "\nrefit = " + b(refit) + "\nholdout_fraction = " + f(holdout_fraction) + "\nsweep_w = " + join(sweep_w) +
         "\n\n";
  out += "[run]\nseed = " + std::to_string(seed) + "\n\n";
  out += "[synth]\n";
  for (const auto& [k, v] : synth.to_kv()) out += k + " = " + v + "\n";
  return out;
}

/// Applies `key = value` lines with optional [section] headers; '#' starts a
/// comment. Keys outside a section must be written as section.key.
inline void apply_config_text(PipelineConfig& cfg, std::string_view text) {
  csv::LineReader reader(text);
  std::string_view raw;
  std::string section;
  while (reader.next(raw)) {
    std::string_view line = raw.substr(0, raw.find('#'));
    line = csv::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ValidationError("config line " + std::to_string(reader.line_number()) + ": malformed section header");
      section = std::string(csv::trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ValidationError("config line " + std::to_string(reader.line_number()) + ": expected key = value");
    std::string_view key = csv::trim(line.substr(0, eq));
    const std::string_view value = csv::trim(line.substr(eq + 1));
    std::string sec = section;
    if (sec.empty()) {
      const auto dot = key.find('.');
      if (dot == std::string_view::npos)
        throw ValidationError("config key '" + std::string(key) + "' outside a section; use [section] or section.key");
      sec = std::string(key.substr(0, dot));
      key = key.substr(dot + 1);
    }
    cfg.set(sec, key, value);
  }
}

/// `section.key=value` override as given on the command line.
inline void apply_config_override(PipelineConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ValidationError("override '" + std::string(assignment) + "': expected key=value");
  const auto key = csv::trim(assignment.substr(0, eq));
  const auto dot = key.find('.');
  if (dot == std::string_view::npos)
    throw ValidationError("override key '" + std::string(key) + "': expected section.key");
  cfg.set(key.substr(0, dot), key.substr(dot + 1), csv::trim(assignment.substr(eq + 1)));
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

struct StepsResult {
  GaitEvents video;
  GaitEvents accel;
  FusedGait fused;
  std::vector<StepRecord> steps;
};

inline StepsResult run_steps(const KeypointTable& keypoints, const MultichannelSignal& accel, const ToneTimeline& tones,
                             const PipelineConfig& cfg) {
  StepsResult r;
  AnkleGapParams gp;
  gp.min_confidence = cfg.min_confidence;
  r.video = strikes_from_video(keypoints, cfg.strike_params(), gp);
  r.accel = strikes_from_acceleration(accel, cfg.strike_params());
  r.fused = fuse_video_accel(r.video, r.accel, cfg.sync_tolerance_s, 1.0 / accel.sample_rate_hz());
  r.steps = build_steps(r.fused.events, tones);
  log_info("steps: " + std::to_string(r.fused.events.total()) + " strikes, match fraction " +
           csv::format(r.fused.report.match_fraction));
  return r;
}

struct PreprocessResult {
  MultichannelSignal filtered;
  MultichannelSignal clean;
  IcaModel ica;
  RejectionReport rejection;
};

/// Harmonic centres for motion scoring: all three tone tempos.
inline Series motion_step_frequencies() {
  return {tempo_hz(Mode::Slow), tempo_hz(Mode::Normal), tempo_hz(Mode::Fast)};
}

inline PreprocessResult run_preprocess(const MultichannelSignal& eeg, const PipelineConfig& cfg) {
  PreprocessResult r;
  const FirFilter fir = design_bandpass(cfg.filter_low_hz, cfg.filter_high_hz, eeg.sample_rate_hz(), cfg.filter_n_taps);
  r.filtered = filtfilt(eeg, fir);
  IcaOptions io;
  io.n_components = cfg.ica_components;
  io.max_iter = cfg.ica_max_iter;
  io.seed = cfg.seed;
  io.max_samples = cfg.ica_max_samples;
  r.ica = ica_infomax(r.filtered, io);
  MotionScoreOptions mo;
  mo.threshold = cfg.ica_threshold;
  mo.manual_override = cfg.ica_override;
  r.rejection = score_motion_components(r.ica, r.filtered, motion_step_frequencies(), mo);
  r.clean = r.rejection.rejected.empty() ? r.filtered : remove_components(r.filtered, r.ica, r.rejection.rejected);
  log_info("preprocess: ICA " + std::string(r.ica.converged ? "converged" : "not converged") + " after " +
           std::to_string(r.ica.iterations) + " iterations; rejected " + std::to_string(r.rejection.rejected.size()) +
           " component(s)");
  return r;
}

struct EpochBundle {
  std::map<LabelScheme, std::vector<LabeledStep>> labels;
  std::map<LabelScheme, EpochSet> epochs;
  BehaviorReport behavior;
  std::vector<TrialReaction> reactions;
};

inline EpochBundle run_epochs(const MultichannelSignal& clean, const std::vector<StepRecord>& steps,
                              const ToneTimeline& tones, const PipelineConfig& cfg) {
  EpochBundle b;
  for (auto scheme : {LabelScheme::LeftRight, LabelScheme::AdaptNonAdapt, LabelScheme::ThreeClass}) {
    b.labels[scheme] = label_steps(steps, tones, scheme, cfg.n_adapt_steps);
    b.epochs[scheme] = extract_epochs(clean, b.labels[scheme], scheme, cfg.epoch_len_s).epochs;
  }
  b.behavior = behavior_report(steps, tones, cfg.rt_band_k);
  b.reactions = estimate_reaction_time(steps, tones, cfg.rt_band_k);
  return b;
}

struct SchemeResult {
  CvReport cv;
  HoldoutReport holdout;
};

inline SchemeResult run_train_eval(const EpochSet& epochs, LabelScheme scheme, const PipelineConfig& cfg) {
  const WindowSet ws = slide_windows(epochs, cfg.w, cfg.stride);
  const ModelSpec spec = cfg.model_spec(scheme);
  SchemeResult r;
  r.cv = grouped_kfold_cv(ws, spec, cfg.cv_options());
  r.holdout = evaluate_holdout(ws, spec, cfg.holdout_fraction, cfg.seed);
  return r;
}

/// Flat metric map written as metrics.json.
inline nlohmann::ordered_json metrics_json(const std::map<LabelScheme, SchemeResult>& results,
                                           const BehaviorReport& behavior) {
  nlohmann::ordered_json j;
  auto scheme_metrics = [&](LabelScheme s, const std::string& tag) {
    const auto it = results.find(s);
    if (it == results.end()) return;
    const auto& r = it->second;
    j["acc_" + tag + "_epoch"] = r.holdout.acc_epoch;
    j["acc_" + tag + "_window"] = r.holdout.acc_window;
    j["cv_loss_" + tag] = r.cv.loss_epoch;
    j["cv_loss_" + tag + "_window"] = r.cv.loss_window;
    j["cv_acc_" + tag + "_epoch"] = r.cv.acc_epoch;
  };
  scheme_metrics(LabelScheme::AdaptNonAdapt, "ana");
  scheme_metrics(LabelScheme::LeftRight, "lr");
  scheme_metrics(LabelScheme::ThreeClass, "3class");
  if (auto it = results.find(LabelScheme::ThreeClass); it != results.end()) {
    const auto& cm = it->second.cv.confusion_epoch;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < cm.percent.rows(); ++r) {
      nlohmann::ordered_json row = nlohmann::ordered_json::array();
      for (Eigen::Index c = 0; c < cm.percent.cols(); ++c) row.push_back(cm.percent(r, c));
      rows.push_back(row);
    }
    j["confusion_3class"] = rows;
  }
  nlohmann::ordered_json rt;
  for (const auto& m : behavior.modes) {
    nlohmann::ordered_json e;
    e["step_mean"] = m.step_mean;
    e["step_std"] = m.step_std;
    e["rt_mean"] = m.rt_mean;
    e["rt_std"] = m.rt_std;
    e["nsteps_mean"] = m.nsteps_mean;
    e["nsteps_std"] = m.nsteps_std;
    e["n_detected"] = m.n_detected;
    rt[std::string(to_string(m.mode))] = e;
  }
  rt["n_trials_excluded"] = behavior.n_trials_excluded;
  j["rt_report"] = rt;
  return j;
}

}  // namespace stride_intent
