#include "stride_intent/epoching.hpp"
#include "stride_intent/synth.hpp"

#include <catch_amalgamated.hpp>

using namespace stride_intent;

namespace {

GaitEvents alternating(const Series& times) {
  GaitEvents g;
  for (std::size_t i = 0; i < times.size(); ++i) (i % 2 == 0 ? g.left_strikes_s : g.right_strikes_s).push_back(times[i]);
  return g;
}

// Strikes at a fixed period across [t0, t1).
Series regular(double t0, double t1, double period) {
  Series s;
  for (double t = t0; t < t1 - 1e-9; t += period) s.push_back(t);
  return s;
}

MultichannelSignal ramp_signal(double seconds, double fs = 250.0, int channels = 2) {
  const auto n = static_cast<Eigen::Index>(seconds * fs);
  Matrix d(n, channels);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c = 0; c < channels; ++c) d(i, c) = static_cast<double>(i) + 1000.0 * c;
  std::vector<std::string> names;
  for (int c = 0; c < channels; ++c) names.push_back("c" + std::to_string(c));
  return MultichannelSignal(fs, 0.0, names, d);
}

}  // namespace

TEST_CASE("tempo map") {
  CHECK(tempo_hz(Mode::Slow) == 0.875);
  CHECK(tempo_hz(Mode::Normal) == 1.75);
  CHECK(tempo_hz(Mode::Fast) == 2.625);
}

TEST_CASE("tone timeline invariants") {
  CHECK_THROWS_AS(ToneTimeline({{1.0, Mode::Fast}, {0.5, Mode::Slow}}), ValidationError);
  CHECK_THROWS_AS(ToneTimeline({{1.0, Mode::Fast}, {2.0, Mode::Fast}}), ValidationError);
  const ToneTimeline tl({{1.0, Mode::Fast}, {2.0, Mode::Slow}});
  CHECK(tl.trial_at(0.5) == -1);
  CHECK(tl.trial_at(1.0) == 0);
  CHECK(tl.trial_at(2.5) == 1);
  CHECK(tl.previous_mode(0) == Mode::Normal);
  CHECK(tl.previous_mode(1) == Mode::Fast);
}

TEST_CASE("build_steps") {
  const ToneTimeline tl({{-1.0, Mode::Normal}});
  const auto steps = build_steps(alternating({0.0, 0.57, 1.14}), tl);
  REQUIRE(steps.size() == 2);
  CHECK(steps[0].duration_s == Catch::Approx(0.57));
  CHECK(steps[1].duration_s == Catch::Approx(0.57));
  CHECK(steps[0].side == Side::Left);
  CHECK(steps[1].side == Side::Right);
  CHECK(build_steps(alternating({1.0}), tl).empty());

  GaitEvents g;
  g.left_strikes_s = {0.0, 0.5};
  g.right_strikes_s = {1.0};
  const auto flagged = build_steps(g, tl);
  REQUIRE(flagged.size() == 2);
  CHECK(flagged[1].alternation_violation);
  CHECK_FALSE(flagged[0].alternation_violation);
}

TEST_CASE("steps are partitioned into trials") {
  const ToneTimeline tl({{2.0, Mode::Fast}, {6.0, Mode::Slow}});
  const auto steps = build_steps(alternating(regular(0.0, 10.0, 0.5)), tl);
  for (const auto& s : steps) {
    CHECK(s.trial_index == tl.trial_at(s.onset_s));
    CHECK(s.duration_s > 0);
  }
  CHECK(steps[4].trial_index == 0);
  CHECK(steps[4].position_in_trial == 0);
  CHECK(steps[5].position_in_trial == 1);
}

TEST_CASE("reaction time of an immediate match") {
  const ToneTimeline tl({{1.0, Mode::Normal}});
  const auto steps = build_steps(alternating(regular(0.2, 12.0, 0.6)), tl);
  const auto rt = estimate_reaction_time(steps, tl);
  REQUIRE(rt.size() == 1);
  CHECK(rt[0].detected);
  CHECK(rt[0].n_adapt_steps == 1);
  CHECK(rt[0].rt_s == Catch::Approx(1.4 - 1.0));
}

TEST_CASE("reaction time after a transition and exclusion") {
  // trial 0 (fast): four long steps then target steps; trial 1 (slow): never leaves 0.3 s steps
  Series t;
  double now = 10.0;
  for (int i = 0; i < 4; ++i) t.push_back(now), now += 0.6;
  for (int i = 0; i < 20; ++i) t.push_back(now), now += 0.38;
  const double change2 = now + 0.05;
  for (int i = 0; i < 20; ++i) t.push_back(now + 0.1), now += 0.3;
  t.push_back(now + 0.1);
  const ToneTimeline tl({{10.0, Mode::Fast}, {change2, Mode::Slow}});
  const auto steps = build_steps(alternating(t), tl);
  const auto rt = estimate_reaction_time(steps, tl);
  REQUIRE(rt.size() == 2);
  CHECK(rt[0].detected);
  CHECK(rt[0].n_adapt_steps == 5);
  CHECK(rt[0].rt_s == Catch::Approx(4 * 0.6));
  // slow trial: every step has the same duration, so std = 0 and each matches
  CHECK(rt[1].detected);

  // a trial whose durations drift monotonically never settles inside a zero-width band
  Series drift{0.0};
  for (int i = 1; i < 12; ++i) drift.push_back(drift.back() + 0.5 + 0.01 * i * i);
  const ToneTimeline tl2({{0.0, Mode::Normal}});
  const auto steps2 = build_steps(alternating(drift), tl2);
  const auto rt2 = estimate_reaction_time(steps2, tl2, 0.0);
  CHECK_FALSE(rt2[0].detected);
  const auto rep = behavior_report(steps2, tl2, 0.0);
  CHECK(rep.n_trials_excluded == 1);
}

TEST_CASE("reaction time is invariant to a uniform time shift") {
  SessionSpec spec;
  spec.n_trials_per_mode = 3;
  const auto protocol = gen_protocol(spec);
  const auto kin = gen_kinematics(protocol, spec);
  const auto base = estimate_reaction_time(build_steps(kin.strikes, protocol.tones), protocol.tones);
  const double delta = 17.125;
  GaitEvents g = kin.strikes;
  for (double& v : g.left_strikes_s) v += delta;
  for (double& v : g.right_strikes_s) v += delta;
  std::vector<ToneChange> changes = protocol.tones.changes();
  for (auto& c : changes) c.time_s += delta;
  const ToneTimeline shifted(changes);
  const auto moved = estimate_reaction_time(build_steps(g, shifted), shifted);
  REQUIRE(moved.size() == base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(moved[i].detected == base[i].detected);
    CHECK(moved[i].n_adapt_steps == base[i].n_adapt_steps);
    CHECK(moved[i].rt_s == Catch::Approx(base[i].rt_s).margin(1e-9));
  }
}

TEST_CASE("behavior report degenerate cases") {
  const ToneTimeline tl({{0.0, Mode::Slow}, {20.0, Mode::Normal}, {40.0, Mode::Fast}});
  Series t = regular(0.0, 20.0, 1.1);
  for (double v : regular(20.0, 40.0, 0.57)) t.push_back(v);
  for (double v : regular(40.0, 60.0, 0.38)) t.push_back(v);
  const auto rep = behavior_report(build_steps(alternating(t), tl), tl);
  for (const auto& m : rep.modes) {
    CHECK(m.n_detected == 1);
    CHECK(m.single_trial);
    CHECK(m.rt_std == 0.0);
    CHECK(m.nsteps_std == 0.0);
  }
  const auto empty = behavior_report({}, tl);
  CHECK(empty.n_trials_excluded == empty.n_trials_total);
  CHECK(empty.n_trials_total == 3);
  CHECK(rep.to_csv().rfind("mode,step_mean,step_std,rt_mean,rt_std,nsteps_mean,nsteps_std\nslow,", 0) == 0);
}

TEST_CASE("adaptation and non-adaptation labels") {
  const ToneTimeline tl({{0.0, Mode::Fast}});
  const auto steps = build_steps(alternating(regular(0.05, 0.05 + 24.5 * 0.4, 0.4)), tl);
  REQUIRE(steps.size() == 24);
  const auto labels = label_steps(steps, tl, LabelScheme::AdaptNonAdapt);
  REQUIRE(labels.size() == 6);
  std::vector<int> positions, classes;
  for (const auto& l : labels) {
    positions.push_back(l.step.position_in_trial + 1);
    classes.push_back(l.label);
  }
  CHECK(positions == std::vector<int>{1, 2, 3, 11, 12, 13});
  CHECK(classes == std::vector<int>{0, 0, 0, 1, 1, 1});

  const auto three = label_steps(steps, tl, LabelScheme::ThreeClass);
  REQUIRE(three.size() == 6);
  CHECK(three[0].label == 0);  // normal -> fast is a tempo increase
  CHECK(three[5].label == 2);

  const ToneTimeline down({{0.0, Mode::Slow}});
  CHECK(label_steps(build_steps(alternating(regular(0.05, 30, 1.1)), down), down, LabelScheme::ThreeClass)[0].label == 1);

  const auto lr = label_steps(steps, tl, LabelScheme::LeftRight);
  REQUIRE(lr.size() == steps.size());
  for (const auto& l : lr) CHECK(l.label == static_cast<int>(l.step.side));

  const auto short_trial = build_steps(alternating(regular(0.05, 2.5, 0.4)), tl);
  REQUIRE(short_trial.size() == 6);
  CHECK(label_steps(short_trial, tl, LabelScheme::AdaptNonAdapt).empty());
}

TEST_CASE("labels are balanced on a generated session") {
  SessionSpec spec;
  spec.n_trials_per_mode = 5;
  const auto protocol = gen_protocol(spec);
  const auto kin = gen_kinematics(protocol, spec);
  const auto steps = build_steps(kin.strikes, protocol.tones);
  const auto labels = label_steps(steps, protocol.tones, LabelScheme::AdaptNonAdapt);
  std::map<int, std::array<int, 2>> per_trial;
  for (const auto& l : labels) per_trial[l.step.trial_index][l.label]++;
  for (const auto& [trial, counts] : per_trial) {
    CHECK(counts[0] == 3);
    CHECK(counts[1] == 3);
  }
  CHECK(labels.size() == 6 * protocol.tones.n_trials());
}

TEST_CASE("label files round trip") {
  const ToneTimeline tl({{0.0, Mode::Fast}});
  const auto steps = build_steps(alternating(regular(0.05, 10, 0.4)), tl);
  const auto labels = label_steps(steps, tl, LabelScheme::ThreeClass);
  const auto p = std::filesystem::temp_directory_path() / "stride_intent_labels.csv";
  csv::write_file(p, labels_to_csv(labels, LabelScheme::ThreeClass));
  const auto back = load_labels(p, LabelScheme::ThreeClass);
  REQUIRE(back.size() == labels.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].label == labels[i].label);
    CHECK(back[i].step.onset_s == labels[i].step.onset_s);
    CHECK(back[i].step.side == labels[i].step.side);
    CHECK(back[i].step.trial_index == labels[i].step.trial_index);
  }
}

TEST_CASE("epoch extraction") {
  const auto sig = ramp_signal(10.0);
  std::vector<LabeledStep> steps;
  for (double t : {0.0, 1.0, 9.7, 10.0}) {
    StepRecord s;
    s.onset_s = t;
    steps.push_back({s, 0});
  }
  const auto ex = extract_epochs(sig, steps, LabelScheme::LeftRight);
  CHECK(ex.epochs.size() == 2);
  CHECK(ex.dropped == 2);
  CHECK(ex.epochs.epoch_len() == 100);
  CHECK(ex.epochs.epochs()[1](0, 0) == 250.0);

  std::vector<LabeledStep> late{{StepRecord{11.0}, 0}};
  CHECK_THROWS_AS(extract_epochs(sig, late, LabelScheme::LeftRight), ComputeError);
}

TEST_CASE("sliding windows") {
  const auto sig = ramp_signal(20.0, 250.0, 3);
  std::vector<LabeledStep> steps;
  for (int i = 0; i < 12; ++i) steps.push_back({StepRecord{0.5 + 1.3 * i}, i % 2});
  const auto epochs = extract_epochs(sig, steps, LabelScheme::LeftRight).epochs;
  CHECK(slide_windows(epochs, 90, 5).size() == 3 * epochs.size());
  CHECK(slide_windows(epochs, 60, 5).size() == 9 * epochs.size());
  const auto whole = slide_windows(epochs, 100, 5);
  REQUIRE(whole.size() == epochs.size());
  for (std::size_t i = 0; i < whole.size(); ++i) CHECK(whole.windows[i] == epochs.epochs()[i]);
  CHECK_THROWS_AS(slide_windows(epochs, 101, 5), ValidationError);

  for (int w = 1; w <= 100; w += 7)
    for (int stride = 1; stride <= 13; stride += 3) {
      const auto ws = slide_windows(epochs, w, stride);
      CHECK(ws.size() == epochs.size() * static_cast<std::size_t>((100 - w) / stride + 1));
      for (std::size_t i = 0; i < ws.size(); ++i) {
        const auto parent = static_cast<std::size_t>(ws.parent_epoch_id[i]);
        REQUIRE(parent < epochs.size());
        CHECK(ws.labels[i] == epochs.labels()[parent]);
        const double first = ws.windows[i](0, 0);
        const double offset = first - epochs.epochs()[parent](0, 0);
        CHECK(static_cast<int>(offset) % stride == 0);
        CHECK(ws.windows[i] == epochs.epochs()[parent].middleRows(static_cast<Eigen::Index>(offset), w));
      }
    }
}

TEST_CASE("generated normal-mode steps follow the tone") {
  SessionSpec spec;
  spec.n_trials_per_mode = 6;
  const auto protocol = gen_protocol(spec);
  const auto kin = gen_kinematics(protocol, spec);
  const auto steps = build_steps(kin.strikes, protocol.tones);
  const auto rep = behavior_report(steps, protocol.tones);
  CHECK(std::abs(rep.modes[1].step_mean - 1 / 1.75) <= 0.02);
  CHECK(std::abs(rep.modes[0].step_mean - 1 / 0.875) <= 0.04);
  CHECK(std::abs(rep.modes[2].step_mean - 1 / 2.625) <= 0.015);
}
