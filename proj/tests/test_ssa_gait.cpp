#include "stride_intent/gait.hpp"
#include "stride_intent/synth.hpp"

#include <catch_amalgamated.hpp>

using namespace stride_intent;

namespace {

Series sine(std::size_t n, double fs, double f, double amp = 1.0, double phase = 0.0) {
  Series s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = amp * std::sin(2 * M_PI * f * static_cast<double>(i) / fs + phase);
  return s;
}

Series gaussian(std::size_t n, std::uint64_t seed, double sd = 1.0) {
  Rng rng(seed);
  Series s(n);
  for (double& v : s) v = sd * standard_normal(rng);
  return s;
}

// Explicit trajectory matrix, independent of the library's lag-covariance shortcut.
Matrix explicit_hankel(const Series& w, std::size_t l) {
  const std::size_t p = w.size() - l + 1;
  Matrix W(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = 0; j < p; ++j) W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = w[i + j];
  return W;
}

// Naive Hankelization of sum_i u_i u_i^T W.
Series naive_reconstruct(const Series& w, std::size_t l, const Matrix& U, const std::set<std::size_t>& idx) {
  const Matrix W = explicit_hankel(w, l);
  Matrix X = Matrix::Zero(W.rows(), W.cols());
  for (std::size_t c : idx) {
    const Vector u = U.col(static_cast<Eigen::Index>(c));
    X += u * (u.transpose() * W);
  }
  Series out(w.size(), 0.0), count(w.size(), 0.0);
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      out[static_cast<std::size_t>(i + j)] += X(i, j);
      count[static_cast<std::size_t>(i + j)] += 1;
    }
  for (std::size_t t = 0; t < out.size(); ++t) out[t] /= count[t];
  return out;
}

double max_abs_diff(const Series& a, const Series& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Ankle keypoints for a walker with strikes at the given times, alternating L/R.
KeypointTable walker(const Series& strike_times, double fps, double t_end, double noise_px = 0.0,
                     std::uint64_t seed = 1) {
  Rng rng(seed);
  KeypointTable rows;
  const auto n = static_cast<int>(t_end * fps);
  for (int f = 0; f < n; ++f) {
    const double t = f / fps;
    auto it = std::upper_bound(strike_times.begin(), strike_times.end(), t);
    double phase;
    if (it == strike_times.begin()) phase = 0;
    else if (it == strike_times.end()) phase = static_cast<double>(strike_times.size() - 1);
    else {
      const auto k = static_cast<std::size_t>(it - strike_times.begin()) - 1;
      phase = static_cast<double>(k) + (t - strike_times[k]) / (strike_times[k + 1] - strike_times[k]);
    }
    const double gap = 40 * std::cos(M_PI * phase);
    rows.push_back({f, t, "ankle_left", 0.0, 400 + gap / 2 + noise_px * standard_normal(rng), 0.95});
    rows.push_back({f, t, "ankle_right", 0.0, 400 - gap / 2 + noise_px * standard_normal(rng), 0.95});
  }
  return rows;
}

Series regular_strikes(double period, double t0, double t_end) {
  Series s;
  for (double t = t0; t < t_end; t += period) s.push_back(t);
  return s;
}

double matched_fraction(const Series& truth, const Series& found, double tol) {
  std::size_t hit = 0;
  for (double t : truth) {
    auto it = std::lower_bound(found.begin(), found.end(), t - tol);
    if (it != found.end() && *it <= t + tol) ++hit;
  }
  return truth.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(truth.size());
}

}  // namespace

TEST_CASE("hankel embedding") {
  const auto t = hankel_embed({1, 2, 3, 4}, 2);
  Matrix expected(2, 3);
  expected << 1, 2, 3, 2, 3, 4;
  CHECK(t.W == expected);
  const Series w{5, 6, 7};
  CHECK(hankel_embed(w, 1).W.rows() == 1);
  CHECK(hankel_embed(w, 1).W.row(0).transpose() == Vector::Map(w.data(), 3));
  CHECK(hankel_embed(w, 3).W.cols() == 1);
  CHECK(hankel_embed(w, 3).W.col(0) == Vector::Map(w.data(), 3));
  CHECK_THROWS_AS(hankel_embed(w, 0), ValidationError);
  CHECK_THROWS_AS(hankel_embed(w, 4), ValidationError);
}

TEST_CASE("hankel invariant holds on random series") {
  const auto w = gaussian(73, 2);
  const auto t = hankel_embed(w, 20);
  for (Eigen::Index i = 0; i < t.W.rows(); ++i)
    for (Eigen::Index j = 0; j < t.W.cols(); ++j) CHECK(t.W(i, j) == w[static_cast<std::size_t>(i + j)]);
}

TEST_CASE("ssa eigenvalues match the explicit trajectory covariance") {
  const auto w = gaussian(600, 3);
  const std::size_t l = 37;
  const auto d = ssa_decompose(w, l);
  const Matrix W = explicit_hankel(w, l);
  Eigen::SelfAdjointEigenSolver<Matrix> es(W * W.transpose());
  Vector oracle = es.eigenvalues().reverse();
  CHECK((d.eigenvalues - oracle).cwiseAbs().maxCoeff() <= 1e-8 * oracle(0));
  CHECK(std::abs(d.eigenvalues.sum() - W.squaredNorm()) <= 1e-6 * W.squaredNorm());
  for (Eigen::Index i = 1; i < d.eigenvalues.size(); ++i) CHECK(d.eigenvalues(i) <= d.eigenvalues(i - 1));
  CHECK((d.eigenvectors.transpose() * d.eigenvectors - Matrix::Identity(37, 37)).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("ssa reconstruction matches a naive hankelization") {
  const auto w = gaussian(200, 4);
  const std::size_t l = 25;
  const auto d = ssa_decompose(w, l);
  for (const std::set<std::size_t>& idx : {std::set<std::size_t>{0}, std::set<std::size_t>{1, 2, 7},
                                           std::set<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14}}) {
    CHECK(max_abs_diff(ssa_reconstruct(d, idx), naive_reconstruct(w, l, d.eigenvectors, idx)) <= 1e-9);
  }
}

TEST_CASE("ssa full reconstruction and complementary additivity") {
  for (std::uint64_t seed : {5u, 6u, 7u}) {
    const auto w = gaussian(1000, seed, 10.0);
    for (std::size_t l : {1u, 40u, 143u}) {
      const auto d = ssa_decompose(w, l);
      std::set<std::size_t> all;
      for (std::size_t i = 0; i < l; ++i) all.insert(i);
      CHECK(max_abs_diff(ssa_reconstruct(d, all), w) <= 1e-9);
      Rng rng(seed * 31 + l);
      std::set<std::size_t> a, b;
      for (std::size_t i = 0; i < l; ++i) (uniform01(rng) < 0.5 ? a : b).insert(i);
      if (a.empty() || b.empty()) continue;
      const auto ra = ssa_reconstruct(d, a), rb = ssa_reconstruct(d, b);
      Series sum(w.size());
      for (std::size_t i = 0; i < w.size(); ++i) sum[i] = ra[i] + rb[i];
      CHECK(max_abs_diff(sum, w) <= 1e-9);
    }
  }
}

TEST_CASE("ssa spectra of sine, noise and constants") {
  const auto s = sine(5000, 250.0, 1.75);
  const auto ds = ssa_decompose(s, 40);
  CHECK((ds.eigenvalues(0) + ds.eigenvalues(1)) / ds.eigenvalues.sum() >= 0.99);

  const auto n = gaussian(5000, 9);
  const auto dn = ssa_decompose(n, 40);
  CHECK((dn.eigenvalues(0) + dn.eigenvalues(1)) / dn.eigenvalues.sum() < 0.30);

  const auto dz = ssa_decompose(Series(100, 0.0), 10);
  CHECK(dz.eigenvalues.cwiseAbs().maxCoeff() == 0.0);

  const Series c(300, 3.25);
  const auto r = ssa_reconstruct(ssa_decompose(c, 30), {0});
  CHECK(max_abs_diff(r, c) <= 1e-9);
}

TEST_CASE("ssa denoises a sine at 0 dB") {
  const auto clean = sine(5000, 250.0, 1.75);
  auto noisy = gaussian(5000, 10, std::sqrt(0.5));
  for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] += clean[i];
  const auto d = ssa_decompose(noisy, 143);
  CHECK(pearson(ssa_reconstruct(d, {0, 1}), clean) >= 0.99);
}

TEST_CASE("empty component set yields zeros") {
  const auto d = ssa_decompose(gaussian(50, 1), 5);
  const auto r = ssa_reconstruct(d, {});
  CHECK(std::all_of(r.begin(), r.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("peaks of a 1.75 Hz sine") {
  const auto s = sine(2500, 250.0, 1.75);
  const auto p = detect_peaks(s, 250.0, 0.25, 0.0);
  CHECK(p.size() == 18);
  Series gaps;
  for (std::size_t i = 1; i < p.size(); ++i) gaps.push_back(p[i] - p[i - 1]);
  CHECK(std::abs(median(gaps) - 1 / 1.75) <= 1 / 250.0 + 1e-12);
}

TEST_CASE("peak detection edge cases") {
  CHECK(detect_peaks(Series(500, 1.0), 250.0, 0.25, 0.0).empty());
  Series x(250, 0.0);
  x[100] = 1.0;
  x[125] = 2.0;
  const auto p = detect_peaks(x, 250.0, 0.25, 0.0);
  REQUIRE(p.size() == 1);
  CHECK(p[0] == Catch::Approx(125 / 250.0));
}

TEST_CASE("peak spacing and scale invariance") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto x = gaussian(3000, seed);
    const double sep = 0.05 + 0.05 * static_cast<double>(seed);
    const auto p = detect_peaks(x, 250.0, sep, 0.5);
    for (std::size_t i = 1; i < p.size(); ++i) CHECK(p[i] - p[i - 1] >= sep - 1e-12);
    Series scaled(x);
    for (double& v : scaled) v *= 3.7;
    CHECK(detect_peaks(scaled, 250.0, sep, 0.5) == p);
  }
}

TEST_CASE("ankle gap series") {
  const auto rows = walker(regular_strikes(1 / 1.75, 0.3, 20), 60.0, 20.0);
  const auto g = ankle_gap_series(rows);
  REQUIRE(g.gap.size() == 1200);
  // one maximum and one minimum per gait cycle (two steps)
  const auto maxima = detect_peaks(g.gap, 60.0, 0.25, 0.0);
  Series gaps;
  for (std::size_t i = 1; i < maxima.size(); ++i) gaps.push_back(maxima[i] - maxima[i - 1]);
  CHECK(median(gaps) == Catch::Approx(2 / 1.75).margin(1 / 60.0));

  KeypointTable same;
  for (int f = 0; f < 100; ++f) {
    same.push_back({f, f / 60.0, "ankle_left", 0, 400 + std::sin(f * 0.1), 1});
    same.push_back({f, f / 60.0, "ankle_right", 0, 400 + std::sin(f * 0.1), 1});
  }
  const auto z = ankle_gap_series(same);
  CHECK(std::all_of(z.gap.begin(), z.gap.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("ankle gap interpolates missing frames and enforces coverage") {
  auto rows = walker(regular_strikes(0.5, 0.2, 10), 60.0, 10.0);
  for (std::size_t i = 0; i < rows.size(); i += 40) rows[i].confidence = 0.05;  // 5% of left ankles
  const auto g = ankle_gap_series(rows);
  CHECK(std::all_of(g.gap.begin(), g.gap.end(), [](double v) { return std::isfinite(v); }));
  for (std::size_t i = 0; i < rows.size(); i += 4) rows[i].confidence = 0.05;  // 50% of left ankles
  CHECK_THROWS_WITH(ankle_gap_series(rows), Catch::Matchers::ContainsSubstring("ankle_left"));
}

TEST_CASE("video strikes recover a generated walker") {
  SessionSpec spec;
  spec.n_trials_per_mode = 4;
  const auto protocol = gen_protocol(spec);
  const auto kin = gen_kinematics(protocol, spec);
  const auto ev = strikes_from_video(kin.keypoints);
  CHECK(matched_fraction(kin.strikes.left_strikes_s, ev.left_strikes_s, 0.05) >= 0.95);
  CHECK(matched_fraction(kin.strikes.right_strikes_s, ev.right_strikes_s, 0.05) >= 0.95);

  StrikeParams swapped;
  swapped.swap_sides = true;
  const auto sw = strikes_from_video(kin.keypoints, swapped);
  CHECK(sw.left_strikes_s == ev.right_strikes_s);
  CHECK(sw.right_strikes_s == ev.left_strikes_s);
}

TEST_CASE("video strikes shift with the keypoint clock") {
  const auto rows = walker(regular_strikes(0.55, 0.4, 15), 60.0, 15.0, 1.0, 3);
  const auto base = strikes_from_video(rows);
  auto shifted = rows;
  const double delta = 0.375;
  for (auto& r : shifted) r.time_s += delta;
  const auto moved = strikes_from_video(shifted);
  REQUIRE(moved.left_strikes_s.size() == base.left_strikes_s.size());
  for (std::size_t i = 0; i < base.left_strikes_s.size(); ++i)
    CHECK(moved.left_strikes_s[i] == base.left_strikes_s[i] + delta);
}

TEST_CASE("static keypoints have insufficient gait") {
  KeypointTable rows;
  for (int f = 0; f < 600; ++f) {
    rows.push_back({f, f / 60.0, "ankle_left", 0, 400, 1});
    rows.push_back({f, f / 60.0, "ankle_right", 0, 380, 1});
  }
  CHECK_THROWS_WITH(strikes_from_video(rows), Catch::Matchers::ContainsSubstring("insufficient gait"));
}

TEST_CASE("acceleration strikes from impulses") {
  const auto truth = regular_strikes(0.52, 0.5, 30);
  const double fs = 250.0;
  const auto n = static_cast<Eigen::Index>(31 * fs);
  Rng rng(4);
  Matrix d(n, 3);
  const Vector dir = Vector::Ones(3).normalized();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    double bump = 0;
    for (double s : truth) bump += std::exp(-0.5 * (t - s) * (t - s) / (0.03 * 0.03));
    for (int a = 0; a < 3; ++a) d(i, a) = (a == 2 ? 9.81 : 0.0) + 2 * bump * dir(a) + 0.05 * standard_normal(rng);
  }
  const MultichannelSignal acc(fs, 0.0, {"acc_x", "acc_y", "acc_z"}, d);
  const auto ev = strikes_from_acceleration(acc);
  Series found;
  for (const auto& [t, s] : ev.merged()) found.push_back(t);
  CHECK(matched_fraction(truth, found, 0.06) >= 0.9);
  CHECK(ev.alternation_gaps == 0);

  const MultichannelSignal flat(fs, 0.0, {"acc_x", "acc_y", "acc_z"}, Matrix::Constant(n, 3, 1.0));
  CHECK_THROWS_AS(strikes_from_acceleration(flat), ComputeError);
}

TEST_CASE("pca of isotropic noise spreads variance evenly") {
  Rng rng(12);
  Matrix d(20000, 3);
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (int a = 0; a < 3; ++a) d(i, a) = standard_normal(rng);
  const auto p = pca(d, 3);
  CHECK(p.explained_variance(0) / p.explained_variance.sum() == Catch::Approx(1.0 / 3).margin(0.02));
}

TEST_CASE("fusion of video and acceleration strikes") {
  GaitEvents v;
  v.left_strikes_s = regular_strikes(1.1, 1.0, 60);
  v.right_strikes_s = regular_strikes(1.1, 1.55, 60);
  const auto same = fuse_video_accel(v, v, 0.1);
  CHECK(same.report.match_fraction == 1.0);
  CHECK(same.report.median_offset_s == 0.0);
  CHECK(same.events.left_strikes_s == v.left_strikes_s);

  GaitEvents a = v;
  for (double& t : a.left_strikes_s) t += 0.02;
  for (double& t : a.right_strikes_s) t += 0.02;
  const auto shifted = fuse_video_accel(v, a, 0.1);
  CHECK(std::abs(shifted.report.median_offset_s - 0.02) <= 0.004);
  CHECK(shifted.report.offset_applied);
  CHECK(shifted.events.left_strikes_s.front() == Catch::Approx(1.02));

  GaitEvents far = v;
  for (double& t : far.left_strikes_s) t += 0.3;
  for (double& t : far.right_strikes_s) t += 0.3;
  CHECK_THROWS_AS(fuse_video_accel(v, far, 0.1), ComputeError);
}

TEST_CASE("gait events round trip through event timelines") {
  GaitEvents g;
  g.left_strikes_s = {1.0, 2.0};
  g.right_strikes_s = {1.5, 2.5};
  const auto back = timeline_to_gait(gait_to_timeline(g));
  CHECK(back.left_strikes_s == g.left_strikes_s);
  CHECK(back.right_strikes_s == g.right_strikes_s);
  CHECK(back.alternation_gaps == 0);
}
