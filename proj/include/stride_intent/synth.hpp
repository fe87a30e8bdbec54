#pragma once

// Synthetic walking sessions: tone protocol, gait kinematics, ankle
// keypoints, trunk acceleration and forward-model EEG with planted sources.

#include "stride_intent/epoching.hpp"

#include <openssl/evp.h>

#include <array>
#include <complex>
#include <map>
#include <numbers>
#include <unsupported/Eigen/FFT>

namespace stride_intent {

struct SessionSpec {
  std::uint64_t seed = 1;
  int n_trials_per_mode = 20;
  int steps_min = 18;
  int steps_max = 30;
  std::array<double, 3> rt_time_constant_s{0.42, 0.95, 1.07};  // slow, normal, fast
  double rt_jitter = 0.25;     // lognormal sigma of per-trial time constants
  double step_jitter = 0.015;  // relative per-step duration jitter
  int never_adapt_trials = 0;
  int n_channels = 32;
  double eeg_rate_hz = 250.0;
  double camera_fps = 60.0;
  double snr_db = 20.0;
  double noise_nonstationarity = 0.0;  // lognormal sigma of segment-wise sensor noise gains
  int n_discriminative_sources = 5;
  double adapt_log_gain = 0.8;  // log-amplitude change of adaptation sources
  double lr_modulation = 0.5;
  int n_background_sources = 8;
  double background_scale = 1.0;
  double artifact_gain = 1.0;
  double pixel_noise_px = 2.0;
  double dropout_fraction = 0.01;
  double accel_noise = 0.05;
  double lead_in_s = 3.0;
  double tail_s = 2.0;

  bool operator==(const SessionSpec&) const = default;

  void validate() const {
    require(n_trials_per_mode >= 1, "synth: n_trials_per_mode must be positive");
    require(steps_min >= 1 && steps_max >= steps_min, "synth: need 1 <= steps_min <= steps_max");
    for (double t : rt_time_constant_s) require(t > 0, "synth: rt_time_constant_s must be positive");
    require(rt_jitter >= 0 && step_jitter >= 0 && step_jitter < 0.2, "synth: jitter out of range");
    require(never_adapt_trials >= 0 && never_adapt_trials <= 3 * n_trials_per_mode,
            "synth: never_adapt_trials out of range");
    require(n_channels >= 4, "synth: n_channels must be at least 4");
    require(eeg_rate_hz >= 100, "synth: eeg_rate_hz must be at least 100");
    require(camera_fps >= 10, "synth: camera_fps must be at least 10");
    require(noise_nonstationarity >= 0, "synth: noise_nonstationarity must be non-negative");
    require(n_discriminative_sources >= 1, "synth: n_discriminative_sources must be positive");
    require(n_background_sources >= 0 && background_scale >= 0 && artifact_gain >= 0,
            "synth: source counts and gains must be non-negative");
    require(2 + n_discriminative_sources + 2 + n_background_sources <= n_channels,
            "synth: more sources than channels");
    require(pixel_noise_px >= 0 && dropout_fraction >= 0 && dropout_fraction < 0.5 && accel_noise >= 0,
            "synth: noise parameters out of range");
    require(lead_in_s >= 1 && tail_s >= 0.5, "synth: lead_in_s >= 1 and tail_s >= 0.5 required");
  }

  std::vector<std::pair<std::string, std::string>> to_kv() const {
    std::vector<std::pair<std::string, std::string>> kv;
    auto put = [&](const char* k, double v) { kv.emplace_back(k, csv::format(v)); };
    kv.emplace_back("seed", std::to_string(seed));
    put("n_trials_per_mode", n_trials_per_mode);
    put("steps_min", steps_min);
    put("steps_max", steps_max);
    put("rt_time_constant_slow_s", rt_time_constant_s[0]);
    put("rt_time_constant_normal_s", rt_time_constant_s[1]);
    put("rt_time_constant_fast_s", rt_time_constant_s[2]);
    put("rt_jitter", rt_jitter);
    put("step_jitter", step_jitter);
    put("never_adapt_trials", never_adapt_trials);
    put("n_channels", n_channels);
    put("eeg_rate_hz", eeg_rate_hz);
    put("camera_fps", camera_fps);
    put("snr_db", snr_db);
    put("noise_nonstationarity", noise_nonstationarity);
    put("n_discriminative_sources", n_discriminative_sources);
    put("adapt_log_gain", adapt_log_gain);
    put("lr_modulation", lr_modulation);
    put("n_background_sources", n_background_sources);
    put("background_scale", background_scale);
    put("artifact_gain", artifact_gain);
    put("pixel_noise_px", pixel_noise_px);
    put("dropout_fraction", dropout_fraction);
    put("accel_noise", accel_noise);
    put("lead_in_s", lead_in_s);
    put("tail_s", tail_s);
    return kv;
  }

  /// Sets one field from text; unknown keys throw.
  void set(std::string_view key, std::string_view value) {
    if (key == "seed") {
      std::uint64_t v = 0;
      auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc() || p != value.data() + value.size())
        throw ValidationError("synth.seed: not an unsigned integer: '" + std::string(value) + "'");
      seed = v;
      return;
    }
    const auto d = csv::parse_double(value);
    if (!d || !std::isfinite(*d)) throw ValidationError("synth." + std::string(key) + ": not a number");
    auto as_int = [&](int& dst) {
      if (*d != std::floor(*d)) throw ValidationError("synth." + std::string(key) + ": expected an integer");
      dst = static_cast<int>(*d);
    };
    if (key == "n_trials_per_mode") as_int(n_trials_per_mode);
    else if (key == "steps_min") as_int(steps_min);
    else if (key == "steps_max") as_int(steps_max);
    else if (key == "rt_time_constant_slow_s") rt_time_constant_s[0] = *d;
    else if (key == "rt_time_constant_normal_s") rt_time_constant_s[1] = *d;
    else if (key == "rt_time_constant_fast_s") rt_time_constant_s[2] = *d;
    else if (key == "rt_jitter") rt_jitter = *d;
    else if (key == "step_jitter") step_jitter = *d;
    else if (key == "never_adapt_trials") as_int(never_adapt_trials);
    else if (key == "n_channels") as_int(n_channels);
    else if (key == "eeg_rate_hz") eeg_rate_hz = *d;
    else if (key == "camera_fps") camera_fps = *d;
    else if (key == "snr_db") snr_db = *d;
    else if (key == "noise_nonstationarity") noise_nonstationarity = *d;
    else if (key == "n_discriminative_sources") as_int(n_discriminative_sources);
    else if (key == "adapt_log_gain") adapt_log_gain = *d;
    else if (key == "lr_modulation") lr_modulation = *d;
    else if (key == "n_background_sources") as_int(n_background_sources);
    else if (key == "background_scale") background_scale = *d;
    else if (key == "artifact_gain") artifact_gain = *d;
    else if (key == "pixel_noise_px") pixel_noise_px = *d;
    else if (key == "dropout_fraction") dropout_fraction = *d;
    else if (key == "accel_noise") accel_noise = *d;
    else if (key == "lead_in_s") lead_in_s = *d;
    else if (key == "tail_s") tail_s = *d;
    else throw ValidationError("unknown synth key '" + std::string(key) + "'");
  }
};

/// Standard 32-electrode montage names; extra channels are numbered.
inline std::vector<std::string> eeg_channel_names(int n) {
  static const char* kNames[] = {"Fp1", "Fp2", "F7",  "F3",  "Fz",  "F4",  "F8",  "FC5", "FC1", "FC2", "FC6",
                                 "T7",  "C3",  "Cz",  "C4",  "T8",  "TP9", "CP5", "CP1", "CP2", "CP6", "TP10",
                                 "P7",  "P3",  "Pz",  "P4",  "P8",  "PO9", "O1",  "Oz",  "O2",  "PO10"};
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back(i < 32 ? kNames[i] : "E" + std::to_string(i + 1));
  return out;
}

inline const std::vector<std::string>& accel_channel_names() {
  static const std::vector<std::string> names{"acc_x", "acc_y", "acc_z"};
  return names;
}

// ---------------------------------------------------------------------------
// Protocol
// ---------------------------------------------------------------------------

struct Protocol {
  ToneTimeline tones;
  std::vector<int> steps_per_trial;
  double end_time_s = 0.0;
};

namespace detail {

/// Separate deterministic stream per generator stage.
inline Rng stage_rng(std::uint64_t seed, std::uint64_t stage) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stage)};
  return Rng(seq);
}

/// Can `counts` be ordered with no two equal neighbours, the first differing
/// from `last`?
inline bool arrangeable(const std::array<int, 3>& counts, int last) {
  const int total = counts[0] + counts[1] + counts[2];
  for (int m = 0; m < 3; ++m) {
    const int cap = m == last ? total / 2 : (total + 1) / 2;
    if (counts[m] > cap) return false;
  }
  return true;
}

}  // namespace detail

/// Random mode order with no repeated neighbours (the walker starts at normal
/// tempo) and nominal trial durations from the drawn step counts.
inline Protocol gen_protocol(const SessionSpec& spec) {
  spec.validate();
  Rng rng = detail::stage_rng(spec.seed, 1);
  std::array<int, 3> left{spec.n_trials_per_mode, spec.n_trials_per_mode, spec.n_trials_per_mode};
  int last = static_cast<int>(Mode::Normal);
  std::vector<Mode> order;
  const int total = 3 * spec.n_trials_per_mode;
  for (int i = 0; i < total; ++i) {
    std::vector<int> options;
    for (int m = 0; m < 3; ++m) {
      if (m == last || left[m] == 0) continue;
      auto next = left;
      --next[m];
      if (detail::arrangeable(next, m)) options.push_back(m);
    }
    if (options.empty()) throw ComputeError("gen_protocol: no valid mode order");
    const int pick = options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
    order.push_back(static_cast<Mode>(pick));
    --left[pick];
    last = pick;
  }
  Protocol p;
  std::vector<ToneChange> changes;
  double t = spec.lead_in_s;
  std::uniform_int_distribution<int> steps(spec.steps_min, spec.steps_max);
  for (Mode m : order) {
    changes.push_back({t, m});
    const int n = steps(rng);
    p.steps_per_trial.push_back(n);
    t += n / tempo_hz(m);
  }
  p.end_time_s = t + spec.tail_s;
  p.tones = ToneTimeline(std::move(changes), Mode::Normal);
  return p;
}

// ---------------------------------------------------------------------------
// Kinematics
// ---------------------------------------------------------------------------

/// Programmed reaction time: the moment the noise-free step period enters
/// mean +- kProgrammedRtBandK * std of the target mode's true step durations.
inline constexpr double kProgrammedRtBandK = 1.0;
/// Fallback relative tempo band when the target period lies outside that range.
inline constexpr double kProgrammedRtBand = 0.1;

struct Kinematics {
  GaitEvents strikes;  // true heel strikes
  Series phase_time_s;  // uniform grid
  Series phase;         // gait phase; integer values at strikes (even = left)
  Series programmed_rt_s;  // per trial; NaN for never-adapting trials
  Series time_constant_s;  // per trial
  std::vector<int> never_adapt;
  KeypointTable keypoints;

  /// Gait phase at time t by linear interpolation.
  double phase_at(double t) const {
    if (t <= phase_time_s.front()) return phase.front();
    if (t >= phase_time_s.back()) return phase.back();
    const double dt = phase_time_s[1] - phase_time_s[0];
    const double pos = (t - phase_time_s.front()) / dt;
    const auto i = static_cast<std::size_t>(pos);
    const double f = pos - static_cast<double>(i);
    return phase[i] * (1 - f) + phase[std::min(i + 1, phase.size() - 1)] * f;
  }
};

inline Kinematics gen_kinematics(const Protocol& protocol, const SessionSpec& spec) {
  spec.validate();
  Rng rng = detail::stage_rng(spec.seed, 2);
  const auto& changes = protocol.tones.changes();
  Kinematics k;
  const std::size_t n_trials = changes.size();
  // trials that ignore the tone change
  std::vector<std::size_t> trial_ids(n_trials);
  std::iota(trial_ids.begin(), trial_ids.end(), 0);
  std::shuffle(trial_ids.begin(), trial_ids.end(), rng);
  std::vector<bool> ignore(n_trials, false);
  for (int i = 0; i < spec.never_adapt_trials; ++i) {
    ignore[trial_ids[static_cast<std::size_t>(i)]] = true;
    k.never_adapt.push_back(static_cast<int>(trial_ids[static_cast<std::size_t>(i)]));
  }
  std::sort(k.never_adapt.begin(), k.never_adapt.end());
  for (std::size_t t = 0; t < n_trials; ++t) {
    const double tau = spec.rt_time_constant_s[static_cast<int>(changes[t].mode)] *
                       std::exp(spec.rt_jitter * standard_normal(rng));
    k.time_constant_s.push_back(tau);
  }

  const double dt = 1e-3;
  const auto n = static_cast<std::size_t>(std::ceil(protocol.end_time_s / dt)) + 1;
  k.phase_time_s.resize(n);
  k.phase.resize(n);
  double rate = tempo_hz(protocol.tones.initial_mode());
  double start_rate = rate, target = rate, tau = 1.0, t0 = 0.0;
  bool frozen = true;
  std::size_t next_change = 0;
  double phi = uniform01(rng);
  double jitter = 1.0 + spec.step_jitter * standard_normal(rng);
  k.programmed_rt_s.assign(n_trials, std::numeric_limits<double>::quiet_NaN());
  Series trial_start_rate(n_trials, rate);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    while (next_change < n_trials && changes[next_change].time_s <= t) {
      const std::size_t c = next_change++;
      start_rate = rate;
      t0 = changes[c].time_s;
      tau = k.time_constant_s[c];
      frozen = ignore[c];
      target = frozen ? rate : tempo_hz(changes[c].mode);
      trial_start_rate[c] = start_rate;
    }
    if (!frozen) rate = target + (start_rate - target) * std::exp(-(t - t0) / tau);
    k.phase_time_s[i] = t;
    k.phase[i] = phi;
    const double next_phi = phi + rate * jitter * dt;
    if (std::floor(next_phi) > std::floor(phi)) {
      const double crossing = std::floor(next_phi);
      const double ts = t + dt * (crossing - phi) / (next_phi - phi);
      const auto idx = static_cast<long long>(crossing);
      (idx % 2 == 0 ? k.strikes.left_strikes_s : k.strikes.right_strikes_s).push_back(ts);
      jitter = 1.0 + spec.step_jitter * standard_normal(rng);
    }
    phi = next_phi;
  }
  k.strikes.source = GaitSource::Video;

  const auto stats = session_step_stats(build_steps(k.strikes, protocol.tones), protocol.tones);
  for (std::size_t c = 0; c < n_trials; ++c) {
    if (ignore[c]) continue;
    const auto& st = stats[static_cast<int>(changes[c].mode)];
    const double s0 = trial_start_rate[c], tgt = tempo_hz(changes[c].mode);
    const double hi_period = st.mean + kProgrammedRtBandK * st.std;
    const double lo_period = st.mean - kProgrammedRtBandK * st.std;
    const double tgt_period = 1.0 / tgt;
    double edge = std::numeric_limits<double>::quiet_NaN();  // rate at which the band is entered
    if (st.n > 0 && tgt_period >= lo_period && tgt_period <= hi_period)
      edge = s0 < tgt ? 1.0 / hi_period : (lo_period > 0 ? 1.0 / lo_period : edge);
    double rt;
    if (std::isfinite(edge)) {
      const double ratio = (s0 - tgt) / (edge - tgt);
      rt = ratio > 1 ? k.time_constant_s[c] * std::log(ratio) : 0.0;
    } else {
      const double rel = std::abs(s0 - tgt) / (kProgrammedRtBand * tgt);
      rt = rel > 1 ? k.time_constant_s[c] * std::log(rel) : 0.0;
    }
    k.programmed_rt_s[c] = rt;
  }

  // ankle keypoints: antiphase vertical oscillation, gap = 2a cos(pi phase)
  const double amp = 40.0, y0 = 400.0;
  const auto frames = static_cast<int>(std::floor(protocol.end_time_s * spec.camera_fps));
  for (int f = 0; f <= frames; ++f) {
    const double t = f / spec.camera_fps;
    const double c = std::cos(std::numbers::pi * k.phase_at(t));
    for (int j = 0; j < 2; ++j) {
      KeypointRow r;
      r.frame = f;
      r.time_s = t;
      r.joint = j == 0 ? "ankle_left" : "ankle_right";
      const double sign = j == 0 ? 1.0 : -1.0;
      r.x_px = 320.0 + sign * 25.0 + spec.pixel_noise_px * standard_normal(rng);
      r.y_px = y0 + sign * amp * c + spec.pixel_noise_px * standard_normal(rng);
      r.confidence = 0.6 + 0.4 * uniform01(rng);
      if (uniform01(rng) < spec.dropout_fraction) {
        r.confidence = 0.15 * uniform01(rng);
        r.y_px += 80.0 * standard_normal(rng);
      }
      k.keypoints.push_back(std::move(r));
    }
  }
  return k;
}

// ---------------------------------------------------------------------------
// EEG and acceleration
// ---------------------------------------------------------------------------

enum class SourceKind { LeftRight = 0, Adaptation = 1, Artifact = 2, Background = 3 };

struct SessionGroundTruth {
  Matrix mixing;  // channels x sources
  std::vector<SourceKind> source_kinds;
  std::vector<int> artifact_sources;
  std::vector<int> adaptation_sources;
  GaitEvents strikes;
  Series programmed_rt_s;
  Series time_constant_s;
  std::vector<int> never_adapt_trials;
  std::map<LabelScheme, std::vector<LabeledStep>> labels;
  Series channel_snr_db;
  Vector accel_direction;
};

struct Session {
  SessionSpec spec;
  Protocol protocol;
  MultichannelSignal signals;  // EEG channels then acc_x, acc_y, acc_z
  KeypointTable keypoints;
  SessionGroundTruth truth;

  MultichannelSignal eeg() const { return signals.select(eeg_channel_names(spec.n_channels)); }
  MultichannelSignal accel() const { return signals.select(accel_channel_names()); }
};

namespace detail {

/// Unit-variance Gaussian noise of length n with amplitude spectrum shape(f).
template <typename Shape>
Series shaped_noise(Rng& rng, std::size_t n, double fs, Shape&& shape) {
  std::size_t m = 1;
  while (m < n) m *= 2;
  std::vector<double> white(m);
  for (double& v : white) v = standard_normal(rng);
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, white);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const std::size_t kk = k <= m / 2 ? k : m - k;
    spec[k] *= shape(fs * static_cast<double>(kk) / static_cast<double>(m));
  }
  std::vector<double> out;
  fft.inv(out, spec);
  out.resize(n);
  const double mu = mean(out), sd = stddev(out);
  for (double& v : out) v = sd > 0 ? (v - mu) / sd : 0.0;
  return out;
}

inline double band_shape(double f, double lo, double hi) {
  // flat band with raised-cosine skirts of 1 Hz
  if (f < lo - 1 || f > hi + 1) return 0.0;
  if (f < lo) return 0.5 - 0.5 * std::cos(std::numbers::pi * (f - lo + 1));
  if (f > hi) return 0.5 + 0.5 * std::cos(std::numbers::pi * (f - hi));
  return 1.0;
}

inline double pink_shape(double f) { return f < 0.5 ? 0.0 : 1.0 / std::sqrt(f); }

/// Smooth 0..1 indicator of the union of [start, end) intervals with 50 ms ramps.
inline Series interval_mask(const std::vector<std::pair<double, double>>& intervals, std::size_t n, double fs) {
  Series m(n, 0.0);
  const double ramp = 0.05;
  for (const auto& [a, b] : intervals) {
    const auto i0 = static_cast<std::size_t>(std::max(0.0, std::floor((a - ramp) * fs)));
    const auto i1 = std::min(n, static_cast<std::size_t>(std::ceil((b + ramp) * fs)) + 1);
    for (std::size_t i = i0; i < i1; ++i) {
      const double t = static_cast<double>(i) / fs;
      double v = 1.0;
      if (t < a) v = 0.5 + 0.5 * std::cos(std::numbers::pi * (a - t) / ramp);
      if (t > b) v = 0.5 + 0.5 * std::cos(std::numbers::pi * (t - b) / ramp);
      if (t < a - ramp || t > b + ramp) v = 0.0;
      m[i] = std::max(m[i], v);
    }
  }
  return m;
}

}  // namespace detail

/// Planted-source EEG plus acceleration on the EEG clock.
inline std::pair<MultichannelSignal, SessionGroundTruth> gen_eeg(const Protocol& protocol, const Kinematics& kin,
                                                                 const SessionSpec& spec) {
  spec.validate();
  Rng rng = detail::stage_rng(spec.seed, 3);
  const double fs = spec.eeg_rate_hz;
  const auto n = static_cast<std::size_t>(std::floor(protocol.end_time_s * fs));
  const int n_adapt = spec.n_discriminative_sources;
  const int n_src = 2 + n_adapt + 2 + spec.n_background_sources;
  const int C = spec.n_channels;

  SessionGroundTruth gt;
  gt.strikes = kin.strikes;
  gt.programmed_rt_s = kin.programmed_rt_s;
  gt.time_constant_s = kin.time_constant_s;
  gt.never_adapt_trials = kin.never_adapt;

  Series phase(n);
  for (std::size_t i = 0; i < n; ++i) phase[i] = kin.phase_at(static_cast<double>(i) / fs);

  Matrix S(static_cast<Eigen::Index>(n), n_src);
  int col = 0;
  auto put = [&](const Series& s, SourceKind kind) {
    for (std::size_t i = 0; i < n; ++i) S(static_cast<Eigen::Index>(i), col) = s[i];
    gt.source_kinds.push_back(kind);
    if (kind == SourceKind::Artifact) gt.artifact_sources.push_back(col);
    if (kind == SourceKind::Adaptation) gt.adaptation_sources.push_back(col);
    ++col;
  };

  // (a) lateralised mu-band oscillators
  for (int side = 0; side < 2; ++side) {
    Series s = detail::shaped_noise(rng, n, fs, [](double f) { return detail::band_shape(f, 9.0, 13.0); });
    const double sign = side == 0 ? 1.0 : -1.0;
    for (std::size_t i = 0; i < n; ++i) s[i] *= 1.0 + sign * spec.lr_modulation * std::cos(std::numbers::pi * phase[i]);
    put(s, SourceKind::LeftRight);
  }

  // (b) adaptation sources: beta power changes from the tone change to the
  // end of the third step's epoch, direction-dependent profile
  {
    const auto& changes = protocol.tones.changes();
    const auto merged = kin.strikes.merged();
    std::vector<std::pair<double, double>> up, down;
    for (std::size_t t = 0; t < changes.size(); ++t) {
      const double before = tempo_hz(protocol.tones.previous_mode(t));
      const double after = tempo_hz(changes[t].mode);
      auto it = std::lower_bound(merged.begin(), merged.end(), changes[t].time_s,
                                 [](const auto& s, double v) { return s.first < v; });
      const auto third = std::min<std::ptrdiff_t>(std::distance(it, merged.end()) - 1, 2);
      const double end = third >= 0 ? (it + third)->first + 0.4 : changes[t].time_s + 1.0;
      (after > before ? up : down).emplace_back(changes[t].time_s, end);
    }
    const Series up_mask = detail::interval_mask(up, n, fs);
    const Series down_mask = detail::interval_mask(down, n, fs);
    for (int j = 0; j < n_adapt; ++j) {
      Series s = detail::shaped_noise(rng, n, fs, [](double f) { return detail::band_shape(f, 16.0, 24.0); });
      // alternate synchronisation / desynchronisation; the two directions
      // weight the sources in opposite orders
      const double polarity = j % 2 == 0 ? 1.0 : -1.0;
      const double pos = n_adapt > 1 ? static_cast<double>(j) / (n_adapt - 1) : 0.5;
      const double w_up = 1.0 - 0.8 * pos, w_down = 0.2 + 0.8 * pos;
      for (std::size_t i = 0; i < n; ++i) {
        const double g = polarity * spec.adapt_log_gain * (w_up * up_mask[i] + w_down * down_mask[i]);
        s[i] *= std::exp(g);
      }
      put(s, SourceKind::Adaptation);
    }
  }

  // (c) gait-locked artifacts: pulse trains at the step rate and 3 harmonics
  for (int j = 0; j < 2; ++j) {
    const double offset = uniform01(rng);
    Series s(n);
    for (std::size_t i = 0; i < n; ++i) {
      double v = 0.0;
      for (int h = 1; h <= 4; ++h) v += std::cos(2.0 * std::numbers::pi * h * (phase[i] - offset));
      s[i] = v;
    }
    const double mu = mean(s), sd = stddev(s);
    for (double& v : s) v = sd > 0 ? spec.artifact_gain * (v - mu) / sd : 0.0;
    put(s, SourceKind::Artifact);
  }

  // (d) pink background
  for (int j = 0; j < spec.n_background_sources; ++j) {
    Series s = detail::shaped_noise(rng, n, fs, detail::pink_shape);
    for (double& v : s) v *= spec.background_scale;
    put(s, SourceKind::Background);
  }

  gt.mixing.resize(C, n_src);
  for (Eigen::Index r = 0; r < C; ++r)
    for (Eigen::Index c = 0; c < n_src; ++c) gt.mixing(r, c) = standard_normal(rng);
  for (Eigen::Index c = 0; c < n_src; ++c) gt.mixing.col(c).normalize();

  Matrix X = S * gt.mixing.transpose();  // samples x channels

  // sensor noise: pink, per-channel SNR, optional segment-wise gain changes
  gt.channel_snr_db.resize(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) {
    Series noise = detail::shaped_noise(rng, n, fs, detail::pink_shape);
    if (spec.noise_nonstationarity > 0) {
      const double sigma = spec.noise_nonstationarity;
      Series gain(n);
      std::size_t i = 0;
      while (i < n) {
        const auto len = static_cast<std::size_t>((0.5 + 1.5 * uniform01(rng)) * fs);
        const double g = std::exp(sigma * standard_normal(rng) - sigma * sigma);
        for (std::size_t j = i; j < std::min(n, i + len); ++j) gain[j] = g;
        i += len;
      }
      double ms = 0.0;
      for (double g : gain) ms += g * g;
      ms /= static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j) noise[j] *= gain[j] / std::sqrt(ms);
    }
    const double signal_power = X.col(c).squaredNorm() / static_cast<double>(n);
    const double scale = std::sqrt(signal_power / std::pow(10.0, spec.snr_db / 10.0));
    double noise_power = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = scale * noise[i];
      X(static_cast<Eigen::Index>(i), c) += v;
      noise_power += v * v;
    }
    noise_power /= static_cast<double>(n);
    gt.channel_snr_db[static_cast<std::size_t>(c)] = 10.0 * std::log10(signal_power / noise_power);
  }
  X *= 10.0;  // microvolt-like scale

  // acceleration: smoothed impulses at true strikes along a random axis, plus gravity
  Vector dir(3);
  for (int i = 0; i < 3; ++i) dir(i) = standard_normal(rng);
  dir.normalize();
  gt.accel_direction = dir;
  Series impulse(n, 0.0);
  const double width = 0.03;
  for (const auto& [ts, side] : kin.strikes.merged()) {
    const auto c0 = static_cast<long long>(std::llround(ts * fs));
    const auto half = static_cast<long long>(std::ceil(4 * width * fs));
    for (long long i = std::max(0LL, c0 - half); i <= std::min(static_cast<long long>(n) - 1, c0 + half); ++i) {
      const double d = static_cast<double>(i) / fs - ts;
      impulse[static_cast<std::size_t>(i)] += std::exp(-0.5 * d * d / (width * width));
    }
  }
  Matrix data(static_cast<Eigen::Index>(n), C + 3);
  data.leftCols(C) = X;
  for (std::size_t i = 0; i < n; ++i)
    for (int a = 0; a < 3; ++a)
      data(static_cast<Eigen::Index>(i), C + a) =
          (a == 2 ? 9.81 : 0.0) + 2.0 * impulse[i] * dir(a) + spec.accel_noise * standard_normal(rng);

  auto names = eeg_channel_names(C);
  for (const auto& a : accel_channel_names()) names.push_back(a);
  MultichannelSignal sig(fs, 0.0, std::move(names), std::move(data));

  // labels of the true steps under every scheme
  const auto steps = build_steps(kin.strikes, protocol.tones);
  for (auto scheme : {LabelScheme::LeftRight, LabelScheme::AdaptNonAdapt, LabelScheme::ThreeClass})
    gt.labels[scheme] = label_steps(steps, protocol.tones, scheme);
  return {std::move(sig), std::move(gt)};
}

inline Session gen_session(const SessionSpec& spec) {
  Session s;
  s.spec = spec;
  s.protocol = gen_protocol(spec);
  Kinematics kin = gen_kinematics(s.protocol, spec);
  auto [sig, gt] = gen_eeg(s.protocol, kin, spec);
  s.signals = std::move(sig);
  s.truth = std::move(gt);
  s.keypoints = std::move(kin.keypoints);
  return s;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw ComputeError("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

inline std::string ground_truth_to_csv(const SessionGroundTruth& gt) {
  std::string out = "kind,index,value\n";
  auto row = [&](std::string_view kind, std::size_t index, double value) {
    out += kind;
    out += ',';
    out += std::to_string(index);
    out += ',';
    csv::append(out, value);
    out += '\n';
  };
  const auto merged = gt.strikes.merged();
  for (std::size_t i = 0; i < merged.size(); ++i) {
    row("strike_time", i, merged[i].first);
    row("strike_side", i, merged[i].second == Side::Left ? 0 : 1);
  }
  for (std::size_t i = 0; i < gt.programmed_rt_s.size(); ++i) row("programmed_rt", i, gt.programmed_rt_s[i]);
  for (std::size_t i = 0; i < gt.time_constant_s.size(); ++i) row("time_constant", i, gt.time_constant_s[i]);
  for (std::size_t i = 0; i < gt.never_adapt_trials.size(); ++i) row("never_adapt_trial", i, gt.never_adapt_trials[i]);
  for (const auto& [scheme, labels] : gt.labels) {
    const std::string base = "label_" + std::string(to_string(scheme));
    for (std::size_t i = 0; i < labels.size(); ++i) {
      row(base + "_onset", i, labels[i].step.onset_s);
      row(base, i, labels[i].label);
    }
  }
  for (std::size_t i = 0; i < gt.source_kinds.size(); ++i) row("source_kind", i, static_cast<int>(gt.source_kinds[i]));
  for (std::size_t i = 0; i < gt.artifact_sources.size(); ++i) row("artifact_source", i, gt.artifact_sources[i]);
  for (Eigen::Index r = 0; r < gt.mixing.rows(); ++r)
    for (Eigen::Index c = 0; c < gt.mixing.cols(); ++c)
      row("mixing", static_cast<std::size_t>(r * gt.mixing.cols() + c), gt.mixing(r, c));
  for (std::size_t i = 0; i < gt.channel_snr_db.size(); ++i) row("channel_snr_db", i, gt.channel_snr_db[i]);
  return out;
}

struct Manifest {
  std::vector<std::pair<std::string, std::string>> spec_echo;
  std::vector<std::pair<std::string, std::string>> file_hashes;

  std::string to_csv() const {
    std::string out = "key,value\n";
    for (const auto& [k, v] : spec_echo) out += "spec." + k + ',' + v + '\n';
    for (const auto& [k, v] : file_hashes) out += "sha256." + k + ',' + v + '\n';
    return out;
  }

  static Manifest parse(std::string_view text) {
    Manifest m;
    csv::LineReader reader(text);
    std::string_view line;
    if (!reader.next(line) || csv::trim(line) != "key,value") throw ValidationError("manifest: malformed header");
    while (reader.next(line)) {
      if (csv::trim(line).empty()) continue;
      const auto cells = csv::split(line);
      if (cells.size() != 2) throw ValidationError("manifest: expected 2 cells per line");
      const std::string key(csv::trim(cells[0])), value(csv::trim(cells[1]));
      if (key.rfind("spec.", 0) == 0)
        m.spec_echo.emplace_back(key.substr(5), value);
      else if (key.rfind("sha256.", 0) == 0)
        m.file_hashes.emplace_back(key.substr(7), value);
      else
        throw ValidationError("manifest: unknown key '" + key + "'");
    }
    return m;
  }

  SessionSpec spec() const {
    SessionSpec s;
    for (const auto& [k, v] : spec_echo) s.set(k, v);
    return s;
  }
};

/// Writes signals, keypoints, tone events, ground truth and a manifest.
inline Manifest write_session(const Session& s, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ComputeError("cannot create output directory " + dir.string() + ": " + ec.message());
  Manifest m;
  m.spec_echo = s.spec.to_kv();
  auto emit = [&](const std::string& name, const std::string& content) {
    csv::write_file(dir / name, content);
    m.file_hashes.emplace_back(name, sha256_hex(content));
  };
  {
    save_signal(s.signals, dir / "signals.csv");
    m.file_hashes.emplace_back("signals.csv", sha256_hex(csv::read_file(dir / "signals.csv")));
  }
  {
    save_keypoints(s.keypoints, dir / "keypoints.csv");
    m.file_hashes.emplace_back("keypoints.csv", sha256_hex(csv::read_file(dir / "keypoints.csv")));
  }
  {
    save_events(s.protocol.tones.to_events(), dir / "events.csv");
    m.file_hashes.emplace_back("events.csv", sha256_hex(csv::read_file(dir / "events.csv")));
  }
  emit("ground_truth.csv", ground_truth_to_csv(s.truth));
  csv::write_file(dir / "manifest.csv", m.to_csv());
  return m;
}

inline Manifest gen_session(const SessionSpec& spec, const std::filesystem::path& out_dir) {
  return write_session(gen_session(spec), out_dir);
}

}  // namespace stride_intent
