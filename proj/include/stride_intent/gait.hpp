#pragma once

// Heel-strike extraction from ankle keypoints and trunk acceleration.

#include "stride_intent/pca.hpp"
#include "stride_intent/signal.hpp"
#include "stride_intent/ssa.hpp"

#include <map>

namespace stride_intent {

/// Normal walking tempo in steps per second; used for default SSA windows.
inline constexpr double kNormalStepHz = 1.75;

enum class Side { Left = 0, Right = 1 };

inline std::string_view to_string(Side s) { return s == Side::Left ? "L" : "R"; }

enum class GaitSource { Video, Acceleration, Fused };

struct GaitEvents {
  Series left_strikes_s;
  Series right_strikes_s;
  GaitSource source = GaitSource::Video;
  std::size_t alternation_gaps = 0;  // places where the merged sequence repeats a side

  std::size_t total() const { return left_strikes_s.size() + right_strikes_s.size(); }

  /// Merged (time, side) sequence sorted by time.
  std::vector<std::pair<double, Side>> merged() const {
    std::vector<std::pair<double, Side>> out;
    out.reserve(total());
    for (double t : left_strikes_s) out.emplace_back(t, Side::Left);
    for (double t : right_strikes_s) out.emplace_back(t, Side::Right);
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
  }
};

inline std::size_t count_alternation_gaps(const GaitEvents& g) {
  const auto m = g.merged();
  std::size_t gaps = 0;
  for (std::size_t i = 1; i < m.size(); ++i)
    if (m[i].second == m[i - 1].second) ++gaps;
  return gaps;
}

struct PeakParams {
  double min_separation_s = 0.25;
  double threshold_k = 0.0;
};

/// Local maxima above mean + k * std, thinned greedily so that retained peaks
/// are at least min_separation_s apart (taller peak wins, earlier on ties).
inline Series detect_peaks(const Series& x, double sample_rate_hz, double min_separation_s, double threshold_k,
                           double start_time_s = 0.0) {
  require(min_separation_s > 0, "detect_peaks: min_separation_s must be positive");
  require(sample_rate_hz > 0, "detect_peaks: sample rate must be positive");
  if (x.size() < 3) return {};
  const double threshold = mean(x) + threshold_k * stddev(x);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    if (!(x[i] > threshold)) continue;
    if (!(x[i] > x[i - 1])) continue;
    // Plateau: accept its first sample if it eventually descends.
    std::size_t j = i + 1;
    while (j < x.size() && x[j] == x[i]) ++j;
    if (j < x.size() && x[j] < x[i]) candidates.push_back(i);
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] > x[b]; });
  const double min_sep_samples = min_separation_s * sample_rate_hz;
  std::vector<std::size_t> kept;
  for (std::size_t c : candidates) {
    bool ok = true;
    for (std::size_t k : kept) {
      const double d = std::abs(static_cast<double>(c) - static_cast<double>(k));
      if (d < min_sep_samples - 1e-9) {
        ok = false;
        break;
      }
    }
    if (ok) kept.push_back(c);
  }
  std::sort(kept.begin(), kept.end());
  Series times;
  times.reserve(kept.size());
  for (std::size_t k : kept) times.push_back(start_time_s + static_cast<double>(k) / sample_rate_hz);
  return times;
}

// ---------------------------------------------------------------------------
// Video
// ---------------------------------------------------------------------------

enum class CameraAxis { X, Y };

struct AnkleGapParams {
  CameraAxis axis = CameraAxis::Y;
  double min_confidence = 0.2;
  double min_coverage = 0.9;
  std::string left_joint = "ankle_left";
  std::string right_joint = "ankle_right";
};

struct AnkleGap {
  Series gap;          // signed left - right coordinate difference per frame
  Series frame_times;  // seconds
};

namespace detail {

/// Linear interpolation over missing entries; edges take the nearest valid value.
inline void fill_missing(Series& v, const std::vector<bool>& valid) {
  const std::size_t n = v.size();
  std::size_t prev = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (!valid[i]) continue;
    if (prev == n) {
      for (std::size_t j = 0; j < i; ++j) v[j] = v[i];
    } else if (i > prev + 1) {
      for (std::size_t j = prev + 1; j < i; ++j) {
        const double a = static_cast<double>(j - prev) / static_cast<double>(i - prev);
        v[j] = (1 - a) * v[prev] + a * v[i];
      }
    }
    prev = i;
  }
  if (prev != n)
    for (std::size_t j = prev + 1; j < n; ++j) v[j] = v[prev];
}

}  // namespace detail

inline AnkleGap ankle_gap_series(const KeypointTable& keypoints, const AnkleGapParams& params = {}) {
  struct FrameSlot {
    double time = 0;
    double left = 0, right = 0;
    bool has_left = false, has_right = false;
  };
  std::map<int, FrameSlot> frames;
  for (const auto& r : keypoints) {
    auto& slot = frames[r.frame];
    slot.time = r.time_s;
    const bool usable = r.confidence >= params.min_confidence && std::isfinite(r.x_px) && std::isfinite(r.y_px);
    const double coord = params.axis == CameraAxis::Y ? r.y_px : r.x_px;
    if (r.joint == params.left_joint && usable) {
      slot.left = coord;
      slot.has_left = true;
    } else if (r.joint == params.right_joint && usable) {
      slot.right = coord;
      slot.has_right = true;
    }
  }
  require(!frames.empty(), "ankle_gap_series: no keypoint frames");
  const std::size_t n = frames.size();
  Series left(n), right(n), times(n);
  std::vector<bool> lv(n), rv(n);
  std::size_t i = 0, nl = 0, nr = 0;
  for (const auto& [frame, slot] : frames) {
    times[i] = slot.time;
    left[i] = slot.left;
    right[i] = slot.right;
    lv[i] = slot.has_left;
    rv[i] = slot.has_right;
    nl += slot.has_left;
    nr += slot.has_right;
    ++i;
  }
  const double cov_l = static_cast<double>(nl) / static_cast<double>(n);
  const double cov_r = static_cast<double>(nr) / static_cast<double>(n);
  if (cov_l < params.min_coverage)
    throw ValidationError("ankle_gap_series: joint '" + params.left_joint + "' present in only " +
                          csv::format(100 * cov_l) + "% of frames");
  if (cov_r < params.min_coverage)
    throw ValidationError("ankle_gap_series: joint '" + params.right_joint + "' present in only " +
                          csv::format(100 * cov_r) + "% of frames");
  detail::fill_missing(left, lv);
  detail::fill_missing(right, rv);
  AnkleGap out{Series(n), std::move(times)};
  for (std::size_t k = 0; k < n; ++k) out.gap[k] = left[k] - right[k];
  return out;
}

struct StrikeParams {
  std::size_t ssa_l = 0;        // 0 = round(1.2 * fs / 1.75)
  double ssa_share = 0.9;
  PeakParams peaks{};
  bool swap_sides = false;      // video: maxima are left strikes unless swapped
  Side start_side = Side::Left;  // acceleration: side of the first strike
};

inline std::size_t default_ssa_l(double fs) {
  return static_cast<std::size_t>(std::lround(1.2 * fs / kNormalStepHz));
}

namespace detail {

inline Series times_at(const Series& frame_times, const Series& peak_times_in_samples) {
  Series out;
  out.reserve(peak_times_in_samples.size());
  for (double s : peak_times_in_samples) out.push_back(frame_times[static_cast<std::size_t>(std::lround(s))]);
  return out;
}

}  // namespace detail

inline GaitEvents strikes_from_video(const KeypointTable& keypoints, const StrikeParams& params = {},
                                     const AnkleGapParams& gap_params = {}) {
  const AnkleGap g = ankle_gap_series(keypoints, gap_params);
  require(g.gap.size() >= 8, "strikes_from_video: too few frames");
  Series dt;
  for (std::size_t i = 1; i < g.frame_times.size(); ++i) dt.push_back(g.frame_times[i] - g.frame_times[i - 1]);
  const double fps = 1.0 / median(dt);
  require(std::isfinite(fps) && fps > 0, "strikes_from_video: frame times must increase");
  const std::size_t l = std::min(params.ssa_l ? params.ssa_l : default_ssa_l(fps), g.gap.size());
  const Series clean = ssa_denoise(g.gap, l, params.ssa_share);
  Series negated(clean.size());
  std::transform(clean.begin(), clean.end(), negated.begin(), [](double v) { return -v; });
  // Peaks are located on the sample grid (rate 1) and mapped to frame times so
  // that timestamps are reproduced exactly.
  const double sep_frames = params.peaks.min_separation_s * fps;
  Series maxima = detect_peaks(clean, 1.0, sep_frames, params.peaks.threshold_k);
  Series minima = detect_peaks(negated, 1.0, sep_frames, params.peaks.threshold_k);
  GaitEvents ev;
  ev.source = GaitSource::Video;
  ev.left_strikes_s = detail::times_at(g.frame_times, params.swap_sides ? minima : maxima);
  ev.right_strikes_s = detail::times_at(g.frame_times, params.swap_sides ? maxima : minima);
  if (ev.total() < 4) throw ComputeError("insufficient gait: only " + std::to_string(ev.total()) + " strikes found");
  ev.alternation_gaps = count_alternation_gaps(ev);
  return ev;
}

// ---------------------------------------------------------------------------
// Acceleration
// ---------------------------------------------------------------------------

/// First principal component of the acceleration, oriented so that impacts
/// (positive skew) point up.
inline Series dominant_acceleration(const MultichannelSignal& accel) {
  require(accel.n_channels() == 3, "strikes_from_acceleration: expected 3 acceleration channels");
  const PcaResult p = pca(accel.data(), 1);
  if (!(p.explained_variance(0) > 1e-12 * std::max(1.0, p.mean.squaredNorm())))
    throw ComputeError("strikes_from_acceleration: degenerate acceleration covariance");
  Series s(static_cast<std::size_t>(p.scores.rows()));
  double m3 = 0.0;
  for (Eigen::Index i = 0; i < p.scores.rows(); ++i) {
    s[static_cast<std::size_t>(i)] = p.scores(i, 0);
    m3 += p.scores(i, 0) * p.scores(i, 0) * p.scores(i, 0);
  }
  if (m3 < 0)
    for (double& v : s) v = -v;
  return s;
}

inline GaitEvents strikes_from_acceleration(const MultichannelSignal& accel, const StrikeParams& params = {}) {
  const Series score = dominant_acceleration(accel);
  const double fs = accel.sample_rate_hz();
  const std::size_t l = std::min(params.ssa_l ? params.ssa_l : default_ssa_l(fs), score.size());
  const Series clean = ssa_denoise(score, l, params.ssa_share);
  const Series peaks =
      detect_peaks(clean, fs, params.peaks.min_separation_s, params.peaks.threshold_k, accel.start_time_s());
  GaitEvents ev;
  ev.source = GaitSource::Acceleration;
  Side side = params.start_side;
  for (double t : peaks) {
    (side == Side::Left ? ev.left_strikes_s : ev.right_strikes_s).push_back(t);
    side = side == Side::Left ? Side::Right : Side::Left;
  }
  return ev;
}

// ---------------------------------------------------------------------------
// Fusion
// ---------------------------------------------------------------------------

struct SyncReport {
  double match_fraction = 0.0;
  double median_offset_s = 0.0;  // accel minus video, over matched strikes
  std::size_t n_video = 0;
  std::size_t n_matched = 0;
  bool offset_applied = false;

  std::string to_csv() const {
    return csv::metric_table({{"match_fraction", match_fraction},
                              {"median_offset_s", median_offset_s},
                              {"n_video", static_cast<double>(n_video)},
                              {"n_matched", static_cast<double>(n_matched)},
                              {"offset_applied", offset_applied ? 1.0 : 0.0}});
  }
};

struct FusedGait {
  GaitEvents events;
  SyncReport report;
};

/// Video strikes stay canonical; the accelerometer (on the EEG clock) only
/// estimates the clock offset. Throws when fewer than half the video strikes
/// have an acceleration partner within tolerance.
inline FusedGait fuse_video_accel(const GaitEvents& video, const GaitEvents& accel, double tolerance_s,
                                  double eeg_sample_period_s = 1.0 / 250.0) {
  require(video.total() > 0 && accel.total() > 0, "fuse_video_accel: both inputs must be non-empty");
  Series a;
  for (const auto& [t, s] : accel.merged()) a.push_back(t);
  Series offsets;
  for (const auto& [t, side] : video.merged()) {
    auto it = std::lower_bound(a.begin(), a.end(), t);
    double best = INFINITY;
    if (it != a.end()) best = *it - t;
    if (it != a.begin() && std::abs(*(it - 1) - t) < std::abs(best)) best = *(it - 1) - t;
    if (std::abs(best) <= tolerance_s) offsets.push_back(best);
  }
  FusedGait out;
  out.report.n_video = video.total();
  out.report.n_matched = offsets.size();
  out.report.match_fraction = static_cast<double>(offsets.size()) / static_cast<double>(video.total());
  if (out.report.match_fraction < 0.5)
    throw ComputeError("desynchronization: only " + csv::format(100 * out.report.match_fraction) +
                       "% of video strikes matched acceleration strikes");
  out.report.median_offset_s = median(offsets);
  out.events = video;
  out.events.source = GaitSource::Fused;
  if (std::abs(out.report.median_offset_s) > eeg_sample_period_s) {
    out.report.offset_applied = true;
    for (double& t : out.events.left_strikes_s) t += out.report.median_offset_s;
    for (double& t : out.events.right_strikes_s) t += out.report.median_offset_s;
  }
  return out;
}

inline EventTimeline gait_to_timeline(const GaitEvents& g) {
  std::vector<Event> ev;
  for (const auto& [t, side] : g.merged())
    ev.push_back({t, side == Side::Left ? EventKind::HeelLeft : EventKind::HeelRight, std::nullopt});
  return EventTimeline(std::move(ev));
}

inline GaitEvents timeline_to_gait(const EventTimeline& tl) {
  GaitEvents g;
  for (const auto& e : tl.events()) {
    if (e.kind == EventKind::HeelLeft) g.left_strikes_s.push_back(e.time_s);
    if (e.kind == EventKind::HeelRight) g.right_strikes_s.push_back(e.time_s);
  }
  g.alternation_gaps = count_alternation_gaps(g);
  return g;
}

}  // namespace stride_intent
