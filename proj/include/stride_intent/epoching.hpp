#pragma once

// Steps, trials, reaction times and labelled epochs.

#include "stride_intent/gait.hpp"

#include <array>
#include <cmath>

namespace stride_intent {

/// Tone tempo (steps per second) for each walking mode.
inline double tempo_hz(Mode m) {
  switch (m) {
    case Mode::Slow: return 0.5 * kNormalStepHz;
    case Mode::Normal: return kNormalStepHz;
    case Mode::Fast: return 1.5 * kNormalStepHz;
  }
  return kNormalStepHz;
}

struct ToneChange {
  double time_s = 0.0;
  Mode mode = Mode::Normal;
  bool operator==(const ToneChange&) const = default;
};

/// Tone changes in time order. `initial_mode` is the tempo walked before the
/// first change.
class ToneTimeline {
 public:
  ToneTimeline() = default;

  explicit ToneTimeline(std::vector<ToneChange> changes, Mode initial_mode = Mode::Normal)
      : changes_(std::move(changes)), initial_(initial_mode) {
    for (std::size_t i = 1; i < changes_.size(); ++i) {
      require(changes_[i].time_s > changes_[i - 1].time_s, "ToneTimeline: change times must strictly increase");
      require(changes_[i].mode != changes_[i - 1].mode, "ToneTimeline: consecutive modes must differ");
    }
  }

  static ToneTimeline from_events(const EventTimeline& events, Mode initial_mode = Mode::Normal) {
    std::vector<ToneChange> out;
    for (const auto& e : events.events())
      if (e.kind == EventKind::ToneChange) out.push_back({e.time_s, *e.mode});
    return ToneTimeline(std::move(out), initial_mode);
  }

  EventTimeline to_events() const {
    std::vector<Event> ev;
    for (const auto& c : changes_) ev.push_back({c.time_s, EventKind::ToneChange, c.mode});
    return EventTimeline(std::move(ev));
  }

  const std::vector<ToneChange>& changes() const { return changes_; }
  std::size_t n_trials() const { return changes_.size(); }
  Mode initial_mode() const { return initial_; }

  /// Mode in force before trial i starts.
  Mode previous_mode(std::size_t trial) const { return trial == 0 ? initial_ : changes_[trial - 1].mode; }

  /// Index of the trial containing t, or -1 before the first change.
  int trial_at(double t) const {
    auto it = std::upper_bound(changes_.begin(), changes_.end(), t,
                               [](double v, const ToneChange& c) { return v < c.time_s; });
    return static_cast<int>(it - changes_.begin()) - 1;
  }

 private:
  std::vector<ToneChange> changes_;
  Mode initial_ = Mode::Normal;
};

struct StepRecord {
  double onset_s = 0.0;
  Side side = Side::Left;
  double duration_s = 0.0;
  int trial_index = -1;  // -1 before the first tone change
  int position_in_trial = 0;
  bool alternation_violation = false;
};

/// A step runs from one heel strike to the next strike of either foot.
inline std::vector<StepRecord> build_steps(const GaitEvents& gait, const ToneTimeline& tones) {
  const auto strikes = gait.merged();
  std::vector<StepRecord> steps;
  if (strikes.size() < 2) return steps;
  int last_trial = -2, position = 0;
  for (std::size_t i = 0; i + 1 < strikes.size(); ++i) {
    StepRecord s;
    s.onset_s = strikes[i].first;
    s.side = strikes[i].second;
    s.duration_s = strikes[i + 1].first - strikes[i].first;
    if (!(s.duration_s > 0)) continue;  // coincident strikes carry no step
    s.trial_index = tones.trial_at(s.onset_s);
    position = s.trial_index == last_trial ? position + 1 : 0;
    last_trial = s.trial_index;
    s.position_in_trial = position;
    s.alternation_violation = i > 0 && strikes[i - 1].second == strikes[i].second;
    steps.push_back(s);
  }
  return steps;
}

inline std::vector<std::vector<const StepRecord*>> steps_by_trial(const std::vector<StepRecord>& steps,
                                                                  std::size_t n_trials) {
  std::vector<std::vector<const StepRecord*>> out(n_trials);
  for (const auto& s : steps)
    if (s.trial_index >= 0 && static_cast<std::size_t>(s.trial_index) < n_trials)
      out[static_cast<std::size_t>(s.trial_index)].push_back(&s);
  return out;
}

struct TrialReaction {
  int trial = 0;
  Mode mode = Mode::Normal;
  double rt_s = 0.0;
  int n_adapt_steps = 0;
  bool detected = false;
  int matched_position = -1;
};

struct ModeStepStats {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

/// Mean/std of every step duration inside trials of each mode.
inline std::array<ModeStepStats, 3> session_step_stats(const std::vector<StepRecord>& steps,
                                                       const ToneTimeline& tones) {
  std::array<Series, 3> by_mode;
  for (const auto& s : steps)
    if (s.trial_index >= 0)
      by_mode[static_cast<int>(tones.changes()[static_cast<std::size_t>(s.trial_index)].mode)].push_back(s.duration_s);
  std::array<ModeStepStats, 3> out;
  for (int m = 0; m < 3; ++m) out[m] = {mean(by_mode[m]), stddev(by_mode[m]), by_mode[m].size()};
  return out;
}

/// Absorbs rounding in strike-time differences when every step is identical.
inline constexpr double kDurationSlack = 1e-9;

/// RT = tone change to the onset of the first step whose duration lies within
/// mean +- band_k * std of the target mode's session-level step durations.
inline std::vector<TrialReaction> estimate_reaction_time(const std::vector<StepRecord>& steps,
                                                         const ToneTimeline& tones, double band_k = 1.0) {
  require(tones.n_trials() >= 1, "estimate_reaction_time: need at least one trial");
  const auto stats = session_step_stats(steps, tones);
  const auto trials = steps_by_trial(steps, tones.n_trials());
  std::vector<TrialReaction> out;
  for (std::size_t t = 0; t < tones.n_trials(); ++t) {
    TrialReaction r;
    r.trial = static_cast<int>(t);
    r.mode = tones.changes()[t].mode;
    const auto& st = stats[static_cast<int>(r.mode)];
    for (std::size_t k = 0; k < trials[t].size(); ++k) {
      const StepRecord& s = *trials[t][k];
      if (std::abs(s.duration_s - st.mean) <= band_k * st.std + kDurationSlack) {
        r.detected = true;
        r.rt_s = s.onset_s - tones.changes()[t].time_s;
        r.n_adapt_steps = static_cast<int>(k) + 1;
        r.matched_position = static_cast<int>(k);
        break;
      }
    }
    out.push_back(r);
  }
  return out;
}

struct ModeBehavior {
  Mode mode = Mode::Normal;
  double step_mean = 0, step_std = 0;
  double rt_mean = 0, rt_std = 0;
  double nsteps_mean = 0, nsteps_std = 0;
  std::size_t n_trials = 0;
  std::size_t n_detected = 0;
  bool single_trial = false;  // n = 1: stds are reported as 0
};

struct BehaviorReport {
  std::array<ModeBehavior, 3> modes;
  std::size_t n_trials_total = 0;
  std::size_t n_trials_excluded = 0;

  std::string to_csv() const {
    std::string out = "mode,step_mean,step_std,rt_mean,rt_std,nsteps_mean,nsteps_std\n";
    for (const auto& m : modes) {
      out += to_string(m.mode);
      for (double v : {m.step_mean, m.step_std, m.rt_mean, m.rt_std, m.nsteps_mean, m.nsteps_std}) {
        out += ',';
        csv::append(out, v);
      }
      out += '\n';
    }
    return out;
  }
};

/// Per-mode aggregates over detected trials. Step duration statistics use the
/// steps from the RT-matched step to the end of each detected trial.
inline BehaviorReport behavior_report(const std::vector<StepRecord>& steps, const ToneTimeline& tones,
                                      double band_k = 1.0) {
  BehaviorReport rep;
  rep.n_trials_total = tones.n_trials();
  for (int m = 0; m < 3; ++m) rep.modes[m].mode = static_cast<Mode>(m);
  if (tones.n_trials() == 0) return rep;
  const auto reactions = estimate_reaction_time(steps, tones, band_k);
  const auto trials = steps_by_trial(steps, tones.n_trials());
  std::array<Series, 3> rt, ns, dur;
  for (const auto& r : reactions) {
    const int m = static_cast<int>(r.mode);
    ++rep.modes[m].n_trials;
    if (!r.detected) {
      ++rep.n_trials_excluded;
      continue;
    }
    ++rep.modes[m].n_detected;
    rt[m].push_back(r.rt_s);
    ns[m].push_back(r.n_adapt_steps);
    const auto& ts = trials[static_cast<std::size_t>(r.trial)];
    for (std::size_t k = static_cast<std::size_t>(r.matched_position); k < ts.size(); ++k)
      dur[m].push_back(ts[k]->duration_s);
  }
  for (int m = 0; m < 3; ++m) {
    auto& mb = rep.modes[m];
    mb.step_mean = mean(dur[m]);
    mb.step_std = stddev(dur[m]);
    mb.rt_mean = mean(rt[m]);
    mb.rt_std = stddev(rt[m]);
    mb.nsteps_mean = mean(ns[m]);
    mb.nsteps_std = stddev(ns[m]);
    mb.single_trial = rt[m].size() == 1;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

struct LabeledStep {
  StepRecord step;
  int label = 0;
};

/// Labels for one scheme. AdaptNonAdapt/ThreeClass: the first n_adapt steps of
/// each trial are adaptation steps, the n_adapt steps centred on the trial
/// midpoint (ties toward earlier) are non-adaptation steps. Trials with fewer
/// than 2 * n_adapt + 1 steps are skipped.
inline std::vector<LabeledStep> label_steps(const std::vector<StepRecord>& steps, const ToneTimeline& tones,
                                            LabelScheme scheme, int n_adapt = 3) {
  std::vector<LabeledStep> out;
  if (scheme == LabelScheme::LeftRight) {
    for (const auto& s : steps) out.push_back({s, s.side == Side::Left ? 0 : 1});
    return out;
  }
  require(n_adapt >= 1, "label_steps: n_adapt must be positive");
  const auto trials = steps_by_trial(steps, tones.n_trials());
  std::size_t skipped = 0;
  for (std::size_t t = 0; t < trials.size(); ++t) {
    const auto& ts = trials[t];
    const auto n = static_cast<int>(ts.size());
    if (n < 2 * n_adapt + 1) {
      ++skipped;
      continue;
    }
    int adapt_label = 0;
    if (scheme == LabelScheme::ThreeClass) {
      const double before = tempo_hz(tones.previous_mode(t));
      const double after = tempo_hz(tones.changes()[t].mode);
      if (before == after) {
        ++skipped;
        continue;
      }
      adapt_label = after > before ? 0 : 1;
    }
    const int non_adapt_label = scheme == LabelScheme::ThreeClass ? 2 : 1;
    const int mid_start = (n - n_adapt) / 2;
    for (int k = 0; k < n_adapt; ++k) out.push_back({*ts[static_cast<std::size_t>(k)], adapt_label});
    for (int k = 0; k < n_adapt; ++k) out.push_back({*ts[static_cast<std::size_t>(mid_start + k)], non_adapt_label});
  }
  if (skipped > 0) log_warn("label_steps: skipped " + std::to_string(skipped) + " trial(s) too short to label");
  std::stable_sort(out.begin(), out.end(),
                   [](const LabeledStep& a, const LabeledStep& b) { return a.step.onset_s < b.step.onset_s; });
  return out;
}

inline std::string labels_to_csv(const std::vector<LabeledStep>& labels, LabelScheme scheme) {
  const auto names = class_names(scheme);
  std::string out = "onset_s,side,trial,label\n";
  for (const auto& l : labels) {
    csv::append(out, l.step.onset_s);
    out += ',';
    out += to_string(l.step.side);
    out += ',';
    out += std::to_string(l.step.trial_index);
    out += ',';
    out += names[static_cast<std::size_t>(l.label)];
    out += '\n';
  }
  return out;
}

inline std::vector<LabeledStep> load_labels(const std::filesystem::path& path, LabelScheme scheme) {
  const std::string text = csv::read_file(path);
  csv::LineReader reader(text);
  std::string_view line;
  if (!reader.next(line) || csv::trim(line) != "onset_s,side,trial,label")
    throw ValidationError("malformed header in " + path.string() + ": expected onset_s,side,trial,label");
  const auto names = class_names(scheme);
  std::vector<LabeledStep> out;
  while (reader.next(line)) {
    if (csv::trim(line).empty()) continue;
    auto cells = csv::split(line);
    if (cells.size() != 4) throw ValidationError("labels line " + std::to_string(reader.line_number()) + ": expected 4 cells");
    LabeledStep l;
    auto t = csv::parse_double(cells[0]);
    auto trial = csv::parse_double(cells[2]);
    if (!t || !trial) throw ValidationError("labels line " + std::to_string(reader.line_number()) + ": bad number");
    l.step.onset_s = *t;
    l.step.trial_index = static_cast<int>(*trial);
    const auto side = csv::trim(cells[1]);
    require(side == "L" || side == "R", "labels: side must be L or R");
    l.step.side = side == "L" ? Side::Left : Side::Right;
    const auto label = csv::trim(cells[3]);
    auto it = std::find(names.begin(), names.end(), label);
    if (it == names.end()) throw ValidationError("labels: unknown label '" + std::string(label) + "' for scheme");
    l.label = static_cast<int>(it - names.begin());
    out.push_back(l);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Epochs and windows
// ---------------------------------------------------------------------------

enum class EpochAlign { Start, Centre };

struct EpochExtraction {
  EpochSet epochs;
  std::size_t dropped = 0;
};

/// Epoch i covers [onset_i, onset_i + epoch_len) (or is centred on the onset).
inline EpochExtraction extract_epochs(const MultichannelSignal& signal, const std::vector<LabeledStep>& steps,
                                      LabelScheme scheme, double epoch_len_s = 0.4,
                                      EpochAlign align = EpochAlign::Start) {
  require(epoch_len_s > 0, "extract_epochs: epoch length must be positive");
  const auto n = static_cast<Eigen::Index>(std::lround(epoch_len_s * signal.sample_rate_hz()));
  std::vector<double> onsets;
  std::vector<int> labels, groups;
  for (const auto& s : steps) {
    onsets.push_back(align == EpochAlign::Start ? s.step.onset_s : s.step.onset_s - 0.5 * epoch_len_s);
    labels.push_back(s.label);
    groups.push_back(s.step.trial_index);
  }
  EpochExtraction out;
  out.epochs = EpochSet::from_onsets(signal, onsets, labels, n, scheme, &out.dropped, groups);
  if (out.epochs.size() == 0) throw ComputeError("extract_epochs: no epoch fits inside the signal");
  if (out.dropped > 0) log_info("extract_epochs: dropped " + std::to_string(out.dropped) + " out-of-range onset(s)");
  return out;
}

inline std::size_t windows_per_epoch(Eigen::Index epoch_len, Eigen::Index w, Eigen::Index stride) {
  return static_cast<std::size_t>((epoch_len - w) / stride + 1);
}

inline WindowSet slide_windows(const EpochSet& epochs, Eigen::Index w_samples, Eigen::Index stride_samples = 5) {
  require(w_samples >= 1, "slide_windows: window length must be positive");
  require(stride_samples >= 1, "slide_windows: stride must be positive");
  require(w_samples <= epochs.epoch_len(), "slide_windows: window longer than epoch");
  WindowSet ws;
  ws.window_len_samples = w_samples;
  ws.scheme = epochs.scheme();
  const std::size_t per = windows_per_epoch(epochs.epoch_len(), w_samples, stride_samples);
  ws.windows.reserve(per * epochs.size());
  for (std::size_t e = 0; e < epochs.size(); ++e) {
    for (std::size_t k = 0; k < per; ++k) {
      ws.windows.emplace_back(epochs.epochs()[e].middleRows(static_cast<Eigen::Index>(k) * stride_samples, w_samples));
      ws.labels.push_back(epochs.labels()[e]);
      ws.parent_epoch_id.push_back(static_cast<int>(e));
    }
  }
  return ws;
}

}  // namespace stride_intent
