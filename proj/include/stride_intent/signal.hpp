#pragma once

#include "stride_intent/common.hpp"
#include "stride_intent/csv.hpp"

#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>

namespace stride_intent {

// ---------------------------------------------------------------------------
// Multichannel signals
// ---------------------------------------------------------------------------

/// Uniformly sampled multichannel recording. Rows are samples, columns are
/// channels. Immutable after construction.
class MultichannelSignal {
 public:
  MultichannelSignal() = default;

  MultichannelSignal(double sample_rate_hz, double start_time_s, std::vector<std::string> channel_names,
                     Matrix data)
      : rate_(sample_rate_hz), start_(start_time_s), names_(std::move(channel_names)), data_(std::move(data)) {
    require(rate_ > 0 && std::isfinite(rate_), "sample_rate_hz must be positive");
    require(std::isfinite(start_), "start_time_s must be finite");
    require(static_cast<Eigen::Index>(names_.size()) == data_.cols(),
            "channel count does not match data columns");
    std::set<std::string> unique(names_.begin(), names_.end());
    require(unique.size() == names_.size(), "channel names must be distinct");
    for (Eigen::Index c = 0; c < data_.cols(); ++c)
      for (Eigen::Index r = 0; r < data_.rows(); ++r)
        if (!std::isfinite(data_(r, c)))
          throw ValidationError("non-finite value at row " + std::to_string(r) + ", col " + std::to_string(c));
  }

  double sample_rate_hz() const { return rate_; }
  double start_time_s() const { return start_; }
  const std::vector<std::string>& channel_names() const { return names_; }
  const Matrix& data() const { return data_; }
  Eigen::Index n_samples() const { return data_.rows(); }
  Eigen::Index n_channels() const { return data_.cols(); }
  double time_at(Eigen::Index i) const { return start_ + static_cast<double>(i) / rate_; }
  double end_time_s() const { return time_at(n_samples()); }

  Eigen::Index channel_index(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return static_cast<Eigen::Index>(i);
    throw ValidationError("unknown channel '" + std::string(name) + "'");
  }

  /// First sample index whose time is >= t (within 1e-9 sample of rounding).
  Eigen::Index index_at_or_after(double t) const {
    const double pos = (t - start_) * rate_;
    const double idx = std::ceil(pos - 1e-9);
    return static_cast<Eigen::Index>(std::clamp(idx, 0.0, static_cast<double>(n_samples())));
  }

  /// Subset of channels by name, in the given order.
  MultichannelSignal select(const std::vector<std::string>& names) const {
    Matrix out(n_samples(), static_cast<Eigen::Index>(names.size()));
    for (std::size_t i = 0; i < names.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = data_.col(channel_index(names[i]));
    return MultichannelSignal(rate_, start_, names, std::move(out));
  }

  MultichannelSignal with_data(Matrix data) const { return MultichannelSignal(rate_, start_, names_, std::move(data)); }

  bool operator==(const MultichannelSignal& o) const {
    return rate_ == o.rate_ && start_ == o.start_ && names_ == o.names_ && data_.rows() == o.data_.rows() &&
           data_.cols() == o.data_.cols() && data_ == o.data_;
  }

 private:
  double rate_ = 1.0;
  double start_ = 0.0;
  std::vector<std::string> names_;
  Matrix data_;
};

/// Rows with t0 <= t < t1.
inline MultichannelSignal slice_time(const MultichannelSignal& s, double t0_s, double t1_s) {
  require(t0_s < t1_s, "slice_time: t0 must be < t1");
  const Eigen::Index begin = s.index_at_or_after(t0_s);
  const Eigen::Index end = s.index_at_or_after(t1_s);
  if (end <= begin) throw ValidationError("slice_time: empty slice");
  return MultichannelSignal(s.sample_rate_hz(), s.time_at(begin), s.channel_names(),
                            s.data().middleRows(begin, end - begin));
}

inline void save_signal(const MultichannelSignal& s, const std::filesystem::path& path) {
  std::string out;
  out.reserve(static_cast<std::size_t>(s.n_samples() * (s.n_channels() + 1) * 22 + 64));
  out += "# rate_hz=";
  csv::append(out, s.sample_rate_hz());
  out += "\ntime_s";
  for (const auto& n : s.channel_names()) {
    out += ',';
    out += n;
  }
  out += '\n';
  const Matrix& d = s.data();
  for (Eigen::Index r = 0; r < d.rows(); ++r) {
    csv::append(out, s.time_at(r));
    for (Eigen::Index c = 0; c < d.cols(); ++c) {
      out += ',';
      csv::append(out, d(r, c));
    }
    out += '\n';
  }
  csv::write_file(path, out);
}

inline MultichannelSignal load_signal(const std::filesystem::path& path, std::optional<double> expected_rate = {}) {
  const std::string text = csv::read_file(path);
  csv::LineReader reader(text);
  std::string_view line;
  if (!reader.next(line)) throw ValidationError("malformed header: empty file " + path.string());
  const std::string_view prefix = "# rate_hz=";
  if (line.substr(0, prefix.size()) != prefix)
    throw ValidationError("malformed header: expected '# rate_hz=<r>' on line 1 of " + path.string());
  auto rate = csv::parse_double(line.substr(prefix.size()));
  if (!rate || !(*rate > 0) || !std::isfinite(*rate))
    throw ValidationError("malformed header: invalid rate in " + path.string());
  if (expected_rate && *expected_rate != *rate)
    throw ValidationError("rate mismatch: file has " + csv::format(*rate) + " Hz, expected " +
                          csv::format(*expected_rate) + " Hz");
  if (!reader.next(line)) throw ValidationError("malformed header: missing column header in " + path.string());
  auto header = csv::split(line);
  if (header.empty() || csv::trim(header[0]) != "time_s")
    throw ValidationError("malformed header: first column must be time_s");
  std::vector<std::string> names;
  for (std::size_t i = 1; i < header.size(); ++i) {
    auto n = csv::trim(header[i]);
    if (n.empty()) throw ValidationError("malformed header: empty channel name");
    names.emplace_back(n);
  }
  const std::size_t cols = names.size();
  std::vector<double> values;
  double start = 0.0;
  std::size_t rows = 0;
  while (reader.next(line)) {
    if (csv::trim(line).empty()) continue;
    auto cells = csv::split(line);
    if (cells.size() != cols + 1)
      throw ValidationError("row " + std::to_string(rows) + " has " + std::to_string(cells.size()) +
                            " cells, expected " + std::to_string(cols + 1));
    for (std::size_t c = 0; c <= cols; ++c) {
      auto v = csv::parse_double(cells[c]);
      if (!v) throw ValidationError("unparseable value at row " + std::to_string(rows) + ", col " + std::to_string(c));
      if (!std::isfinite(*v))
        throw ValidationError("non-finite value at row " + std::to_string(rows) + ", col " + std::to_string(c));
      if (c == 0) {
        if (rows == 0) start = *v;
        const double expected = start + static_cast<double>(rows) / *rate;
        if (std::abs(*v - expected) * *rate > 0.5)
          throw ValidationError("irregular sampling at row " + std::to_string(rows));
      } else {
        values.push_back(*v);
      }
    }
    ++rows;
  }
  Matrix data(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) data(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values[r * cols + c];
  return MultichannelSignal(*rate, start, std::move(names), std::move(data));
}

// ---------------------------------------------------------------------------
// Event timelines
// ---------------------------------------------------------------------------

enum class Mode { Slow = 0, Normal = 1, Fast = 2 };
enum class EventKind { ToneChange, HeelLeft, HeelRight, Frame };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Slow: return "slow";
    case Mode::Normal: return "normal";
    case Mode::Fast: return "fast";
  }
  return "?";
}

inline std::optional<Mode> parse_mode(std::string_view s) {
  if (s == "slow") return Mode::Slow;
  if (s == "normal") return Mode::Normal;
  if (s == "fast") return Mode::Fast;
  return std::nullopt;
}

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::ToneChange: return "tone_change";
    case EventKind::HeelLeft: return "heel_left";
    case EventKind::HeelRight: return "heel_right";
    case EventKind::Frame: return "frame";
  }
  return "?";
}

inline std::optional<EventKind> parse_event_kind(std::string_view s) {
  if (s == "tone_change") return EventKind::ToneChange;
  if (s == "heel_left") return EventKind::HeelLeft;
  if (s == "heel_right") return EventKind::HeelRight;
  if (s == "frame") return EventKind::Frame;
  return std::nullopt;
}

struct Event {
  double time_s = 0.0;
  EventKind kind = EventKind::Frame;
  std::optional<Mode> mode;

  bool operator==(const Event&) const = default;
};

/// Time-ordered events. ToneChange events carry a mode; others carry none.
class EventTimeline {
 public:
  EventTimeline() = default;

  /// Validates payloads and stable-sorts by time.
  explicit EventTimeline(std::vector<Event> events) : events_(std::move(events)) {
    for (const auto& e : events_) {
      require(std::isfinite(e.time_s), "event time must be finite");
      if (e.kind == EventKind::ToneChange)
        require(e.mode.has_value(), "tone_change event without mode at t=" + csv::format(e.time_s));
      else
        require(!e.mode.has_value(), "only tone_change events carry a mode");
    }
    std::stable_sort(events_.begin(), events_.end(),
                     [](const Event& a, const Event& b) { return a.time_s < b.time_s; });
  }

  const std::vector<Event>& events() const { return events_; }
  std::size_t size() const { return events_.size(); }

  std::vector<Event> of_kind(EventKind k) const {
    std::vector<Event> out;
    for (const auto& e : events_)
      if (e.kind == k) out.push_back(e);
    return out;
  }

  bool operator==(const EventTimeline&) const = default;

 private:
  std::vector<Event> events_;
};

inline void save_events(const EventTimeline& timeline, const std::filesystem::path& path) {
  std::string out = "time_s,kind,mode\n";
  for (const auto& e : timeline.events()) {
    csv::append(out, e.time_s);
    out += ',';
    out += to_string(e.kind);
    out += ',';
    if (e.mode) out += to_string(*e.mode);
    out += '\n';
  }
  csv::write_file(path, out);
}

inline EventTimeline load_events(const std::filesystem::path& path) {
  const std::string text = csv::read_file(path);
  csv::LineReader reader(text);
  std::string_view line;
  if (!reader.next(line) || csv::trim(line) != "time_s,kind,mode")
    throw ValidationError("malformed header in " + path.string() + ": expected time_s,kind,mode");
  std::vector<Event> events;
  while (reader.next(line)) {
    if (csv::trim(line).empty()) continue;
    auto cells = csv::split(line);
    if (cells.size() != 3) throw ValidationError("events line " + std::to_string(reader.line_number()) + ": expected 3 cells");
    auto t = csv::parse_double(cells[0]);
    if (!t || !std::isfinite(*t))
      throw ValidationError("events line " + std::to_string(reader.line_number()) + ": bad time");
    auto kind = parse_event_kind(csv::trim(cells[1]));
    if (!kind) throw ValidationError("unknown event kind '" + std::string(csv::trim(cells[1])) + "'");
    Event e{*t, *kind, std::nullopt};
    auto mode_text = csv::trim(cells[2]);
    if (!mode_text.empty()) {
      auto m = parse_mode(mode_text);
      if (!m) throw ValidationError("unknown mode '" + std::string(mode_text) + "'");
      e.mode = *m;
    }
    if (e.kind == EventKind::ToneChange && !e.mode)
      throw ValidationError("tone_change without mode at line " + std::to_string(reader.line_number()));
    events.push_back(e);
  }
  return EventTimeline(std::move(events));
}

// ---------------------------------------------------------------------------
// Keypoints
// ---------------------------------------------------------------------------

struct KeypointRow {
  int frame = 0;
  double time_s = 0.0;
  std::string joint;
  double x_px = 0.0;
  double y_px = 0.0;
  double confidence = 1.0;

  bool operator==(const KeypointRow&) const = default;
};

using KeypointTable = std::vector<KeypointRow>;

inline void save_keypoints(const KeypointTable& rows, const std::filesystem::path& path) {
  std::string out = "frame,time_s,joint,x_px,y_px,confidence\n";
  out.reserve(rows.size() * 60);
  for (const auto& r : rows) {
    out += std::to_string(r.frame);
    out += ',';
    csv::append(out, r.time_s);
    out += ',';
    out += r.joint;
    out += ',';
    csv::append(out, r.x_px);
    out += ',';
    csv::append(out, r.y_px);
    out += ',';
    csv::append(out, r.confidence);
    out += '\n';
  }
  csv::write_file(path, out);
}

inline KeypointTable load_keypoints(const std::filesystem::path& path) {
  const std::string text = csv::read_file(path);
  csv::LineReader reader(text);
  std::string_view line;
  if (!reader.next(line) || csv::trim(line) != "frame,time_s,joint,x_px,y_px,confidence")
    throw ValidationError("malformed header in " + path.string() +
                          ": expected frame,time_s,joint,x_px,y_px,confidence");
  KeypointTable rows;
  while (reader.next(line)) {
    if (csv::trim(line).empty()) continue;
    auto cells = csv::split(line);
    if (cells.size() != 6) throw ValidationError("keypoints line " + std::to_string(reader.line_number()) + ": expected 6 cells");
    KeypointRow r;
    auto frame = csv::parse_double(cells[0]);
    auto t = csv::parse_double(cells[1]);
    auto x = csv::parse_double(cells[3]);
    auto y = csv::parse_double(cells[4]);
    auto c = csv::parse_double(cells[5]);
    if (!frame || !t || !x || !y || !c)
      throw ValidationError("keypoints line " + std::to_string(reader.line_number()) + ": unparseable value");
    r.frame = static_cast<int>(*frame);
    r.time_s = *t;
    r.joint = std::string(csv::trim(cells[2]));
    r.x_px = *x;
    r.y_px = *y;
    r.confidence = *c;
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Labels, epochs and windows
// ---------------------------------------------------------------------------

enum class LabelScheme { LeftRight, AdaptNonAdapt, ThreeClass };

/// Class indices per scheme. LeftRight: 0=Left 1=Right. AdaptNonAdapt:
/// 0=Adapt 1=NonAdapt. ThreeClass: 0=SlowToFast 1=FastToSlow 2=NonAdapt.
inline int class_count(LabelScheme s) { return s == LabelScheme::ThreeClass ? 3 : 2; }

inline std::vector<std::string> class_names(LabelScheme s) {
  switch (s) {
    case LabelScheme::LeftRight: return {"left", "right"};
    case LabelScheme::AdaptNonAdapt: return {"adapt", "non_adapt"};
    case LabelScheme::ThreeClass: return {"slow_to_fast", "fast_to_slow", "non_adapt"};
  }
  return {};
}

inline std::string_view to_string(LabelScheme s) {
  switch (s) {
    case LabelScheme::LeftRight: return "left_right";
    case LabelScheme::AdaptNonAdapt: return "adapt_non_adapt";
    case LabelScheme::ThreeClass: return "three_class";
  }
  return "?";
}

inline std::optional<LabelScheme> parse_label_scheme(std::string_view s) {
  if (s == "left_right") return LabelScheme::LeftRight;
  if (s == "adapt_non_adapt") return LabelScheme::AdaptNonAdapt;
  if (s == "three_class") return LabelScheme::ThreeClass;
  return std::nullopt;
}

/// Fixed-length signal segments (samples x channels) with one label each.
class EpochSet {
 public:
  EpochSet() = default;

  EpochSet(std::vector<Matrix> epochs, std::vector<int> labels, std::vector<double> onsets_s, double sample_rate_hz,
           LabelScheme scheme, std::vector<int> groups = {})
      : epochs_(std::move(epochs)),
        labels_(std::move(labels)),
        onsets_(std::move(onsets_s)),
        groups_(std::move(groups)),
        rate_(sample_rate_hz),
        scheme_(scheme) {
    require(labels_.size() == epochs_.size() && onsets_.size() == epochs_.size(),
            "EpochSet: labels/onsets/epochs length mismatch");
    if (groups_.empty()) groups_.assign(epochs_.size(), -1);
    require(groups_.size() == epochs_.size(), "EpochSet: group length mismatch");
    for (int l : labels_) require(l >= 0 && l < class_count(scheme_), "EpochSet: label invalid for scheme");
    for (const auto& e : epochs_)
      require(e.rows() == epochs_.front().rows() && e.cols() == epochs_.front().cols(),
              "EpochSet: ragged epochs are not allowed");
  }

  /// Epochs of `n_samples` rows starting at each onset. Onsets whose window
  /// falls outside the signal are skipped and counted in `rejected`.
  static EpochSet from_onsets(const MultichannelSignal& s, const std::vector<double>& onsets,
                              const std::vector<int>& labels, Eigen::Index n_samples, LabelScheme scheme,
                              std::size_t* rejected = nullptr, const std::vector<int>& groups = {}) {
    require(onsets.size() == labels.size(), "from_onsets: onset/label mismatch");
    require(n_samples > 0, "from_onsets: epoch length must be positive");
    std::vector<Matrix> epochs;
    std::vector<int> kept_labels, kept_groups;
    std::vector<double> kept_onsets;
    std::size_t dropped = 0;
    for (std::size_t i = 0; i < onsets.size(); ++i) {
      const double pos = (onsets[i] - s.start_time_s()) * s.sample_rate_hz();
      const Eigen::Index begin = static_cast<Eigen::Index>(std::ceil(pos - 1e-9));
      if (pos < -1e-9 || begin + n_samples > s.n_samples()) {
        ++dropped;
        continue;
      }
      epochs.emplace_back(s.data().middleRows(begin, n_samples));
      kept_labels.push_back(labels[i]);
      kept_onsets.push_back(onsets[i]);
      kept_groups.push_back(groups.empty() ? -1 : groups[i]);
    }
    if (rejected) *rejected = dropped;
    return EpochSet(std::move(epochs), std::move(kept_labels), std::move(kept_onsets), s.sample_rate_hz(), scheme,
                    std::move(kept_groups));
  }

  std::size_t size() const { return epochs_.size(); }
  const std::vector<Matrix>& epochs() const { return epochs_; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<double>& onsets_s() const { return onsets_; }
  /// Optional grouping tag per epoch (trial index for generated data, -1 when unknown).
  const std::vector<int>& groups() const { return groups_; }
  double sample_rate_hz() const { return rate_; }
  LabelScheme scheme() const { return scheme_; }
  Eigen::Index epoch_len() const { return epochs_.empty() ? 0 : epochs_.front().rows(); }
  Eigen::Index n_channels() const { return epochs_.empty() ? 0 : epochs_.front().cols(); }

 private:
  std::vector<Matrix> epochs_;
  std::vector<int> labels_;
  std::vector<double> onsets_;
  std::vector<int> groups_;
  double rate_ = 1.0;
  LabelScheme scheme_ = LabelScheme::LeftRight;
};

/// Sub-windows of epochs. Each window inherits its parent epoch's label.
struct WindowSet {
  std::vector<Matrix> windows;
  std::vector<int> labels;
  std::vector<int> parent_epoch_id;
  Eigen::Index window_len_samples = 0;
  LabelScheme scheme = LabelScheme::LeftRight;

  std::size_t size() const { return windows.size(); }
  Eigen::Index n_channels() const { return windows.empty() ? 0 : windows.front().cols(); }

  WindowSet subset(const std::vector<std::size_t>& idx) const {
    WindowSet out;
    out.window_len_samples = window_len_samples;
    out.scheme = scheme;
    out.windows.reserve(idx.size());
    for (std::size_t i : idx) {
      out.windows.push_back(windows[i]);
      out.labels.push_back(labels[i]);
      out.parent_epoch_id.push_back(parent_epoch_id[i]);
    }
    return out;
  }
};

}  // namespace stride_intent
