#include "stride_intent/csp.hpp"

#include <catch_amalgamated.hpp>

using namespace stride_intent;

namespace {

Matrix gaussian_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = standard_normal(rng);
  return m;
}

Matrix random_rotation(Eigen::Index n, Rng& rng) {
  Eigen::HouseholderQR<Matrix> qr(gaussian_matrix(n, n, rng));
  return qr.householderQ() * Matrix::Identity(n, n);
}

struct Planted {
  WindowSet ws;
  Matrix mixing;  // channels x sources
};

// Source 0 has variance ratio 4:1 between classes, source 1 the reverse; the
// remaining sources are class-independent. Optional white sensor noise.
Planted planted(std::uint64_t seed, Eigen::Index n, int windows_per_class, bool orthogonal, double snr_db = 1e9,
                Eigen::Index w = 90) {
  Rng rng(seed);
  Planted p;
  p.mixing = orthogonal ? random_rotation(n, rng) : gaussian_matrix(n, n, rng);
  p.ws.window_len_samples = w;
  p.ws.scheme = LabelScheme::LeftRight;
  const double noise_sd = std::sqrt(std::pow(10.0, -snr_db / 10.0) * 1.5);
  for (int label = 0; label < 2; ++label)
    for (int k = 0; k < windows_per_class; ++k) {
      Matrix s = gaussian_matrix(w, n, rng);
      s.col(0) *= label == 0 ? 2.0 : 1.0;
      s.col(1) *= label == 0 ? 1.0 : 2.0;
      Matrix x = s * p.mixing.transpose();
      if (snr_db < 1e8) x += noise_sd * gaussian_matrix(w, n, rng);
      p.ws.windows.push_back(x);
      p.ws.labels.push_back(label);
      p.ws.parent_epoch_id.push_back(static_cast<int>(p.ws.windows.size()) - 1);
    }
  return p;
}

// Independent pooled covariance and window-level Ledoit-Wolf intensity.
std::pair<Matrix, double> oracle_window_lw(const WindowSet& ws, int label) {
  std::vector<Matrix> covs;
  for (std::size_t i = 0; i < ws.size(); ++i) {
    if (ws.labels[i] != label) continue;
    Matrix x = ws.windows[i];
    for (Eigen::Index c = 0; c < x.cols(); ++c) x.col(c).array() -= x.col(c).mean();
    Matrix c = Matrix::Zero(x.cols(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) c += x.row(r).transpose() * x.row(r);
    covs.push_back(c / c.trace());
  }
  Matrix C = Matrix::Zero(covs[0].rows(), covs[0].cols());
  for (const auto& c : covs) C += c;
  C /= static_cast<double>(covs.size());
  const double N = static_cast<double>(covs.size());
  double b2 = 0;
  for (const auto& c : covs) b2 += (c - C).squaredNorm();
  b2 /= N * N;
  const double mu = C.trace() / static_cast<double>(C.rows());
  const double d2 = (C - mu * Matrix::Identity(C.rows(), C.cols())).squaredNorm();
  return {C, std::min(b2, d2) / d2};
}

// Sample Ledoit-Wolf via the fourth-moment identity
// sum_k ||x_k x_k^T - S||^2 = sum_k ||x_k||^4 - n ||S||^2.
double oracle_sample_lw(const Matrix& X) {
  const double n = static_cast<double>(X.rows());
  const Matrix Z = X.rowwise() - X.colwise().mean();
  const Matrix S = Z.transpose() * Z / n;
  const double mu = S.trace() / static_cast<double>(S.rows());
  const double d2 = (S - mu * Matrix::Identity(S.rows(), S.cols())).squaredNorm();
  double m4 = 0;
  for (Eigen::Index i = 0; i < Z.rows(); ++i) m4 += std::pow(Z.row(i).squaredNorm(), 2);
  const double b2 = (m4 / n - S.squaredNorm()) / n;
  return std::min(b2, d2) / d2;
}

double condition_number(const Matrix& C) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(C);
  return es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
}

ClassCovariance wrap(const Matrix& C) {
  ClassCovariance c;
  c.C = C;
  c.n_channels = C.rows();
  c.n_windows = 10;
  return c;
}

}  // namespace

TEST_CASE("class covariance of white noise") {
  Rng rng(1);
  WindowSet ws;
  ws.windows.push_back(gaussian_matrix(20000, 4, rng));
  ws.labels.push_back(0);
  ws.parent_epoch_id.push_back(0);
  const auto c = class_covariance(ws, 0);
  CHECK((c.C - Matrix::Identity(4, 4) / 4.0).cwiseAbs().maxCoeff() < 0.01);
  CHECK(c.C.trace() == Catch::Approx(1.0));
  CHECK_THROWS_AS(class_covariance(ws, 1), ValidationError);

  ws.windows.push_back(ws.windows[0]);
  ws.labels.push_back(0);
  ws.parent_epoch_id.push_back(1);
  CHECK((class_covariance(ws, 0).C - c.C).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("dead channels are flagged") {
  Rng rng(2);
  Matrix x = gaussian_matrix(100, 3, rng);
  x.col(1).setConstant(4.0);
  WindowSet ws{{x, x * 2.0}, {0, 0}, {0, 1}, 100, LabelScheme::LeftRight};
  const auto c = class_covariance(ws, 0);
  CHECK(c.dead_channel);
  CHECK(c.C.row(1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(c.C.col(1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("window Ledoit-Wolf matches the independent oracle") {
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    const auto p = planted(seed, 6, 40, false, 10.0, 30);
    for (int label : {0, 1}) {
      const auto [C, alpha] = oracle_window_lw(p.ws, label);
      const auto raw = class_covariance(p.ws, label);
      const auto shrunk = ledoit_wolf_shrink(p.ws, label);
      CHECK((raw.C - C).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK(shrunk.shrinkage_alpha == Catch::Approx(alpha).epsilon(1e-10));
      const double mu = C.trace() / 6.0;
      CHECK((shrunk.C - ((1 - alpha) * C + alpha * mu * Matrix::Identity(6, 6))).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK(shrunk.target_scale == Catch::Approx(mu));
    }
  }
}

TEST_CASE("shrinkage degenerate and forced cases") {
  Rng rng(6);
  WindowSet one{{gaussian_matrix(50, 4, rng)}, {0}, {0}, 50, LabelScheme::LeftRight};
  const auto s = ledoit_wolf_shrink(one, 0);
  CHECK(s.shrinkage_alpha == 1.0);
  CHECK(s.C == s.target_scale * Matrix::Identity(4, 4));

  const auto p = planted(7, 5, 20, true);
  const auto raw = class_covariance(p.ws, 0);
  CHECK(ledoit_wolf_shrink(p.ws, 0, {}, 0.0).C == raw.C);
  CHECK_THROWS_AS(ledoit_wolf_shrink(p.ws, 0, {}, 1.5), ValidationError);
}

TEST_CASE("shrunk covariance invariants") {
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    const auto p = planted(seed, 8, 15, false, 5.0, 20);
    const auto c = ledoit_wolf_shrink(p.ws, 1);
    CHECK(c.shrinkage_alpha >= 0.0);
    CHECK(c.shrinkage_alpha <= 1.0);
    CHECK((c.C - c.C.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
    Eigen::SelfAdjointEigenSolver<Matrix> es(c.C);
    if (c.shrinkage_alpha > 0)
      CHECK(es.eigenvalues().minCoeff() >= c.shrinkage_alpha * c.target_scale * (1 - 1e-10));
  }
}

TEST_CASE("shrinkage condition number is monotone in alpha") {
  const auto p = planted(16, 6, 12, false, 20.0, 15);
  const auto raw = class_covariance(p.ws, 0);
  double prev = INFINITY;
  for (double a : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const double cn = condition_number(shrink_covariance(raw, 0.0, a).C);
    CHECK(cn <= prev * (1 + 1e-12));
    prev = cn;
  }
  CHECK(prev == Catch::Approx(1.0));
}

TEST_CASE("sample Ledoit-Wolf matches frozen reference values") {
  Matrix X(40, 5);
  const double scale[] = {1, 2, 0.5, 1.5, 1};
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 5; ++j)
      X(i, j) = (std::sin(0.37 * i * (j + 1) + 0.5 * j) + 0.1 * std::cos(1.3 * i + j)) * scale[j];
  const auto [S, alpha] = ledoit_wolf_samples(X);
  CHECK(alpha == Catch::Approx(0.17929524540803055).epsilon(1e-10));
  CHECK(S(0, 0) == Catch::Approx(0.565841823390163).epsilon(1e-10));
  CHECK(S(1, 2) == Catch::Approx(0.013942125571731403).epsilon(1e-9));

  Matrix Y(40, 5);
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 5; ++j) Y(i, j) = std::cos(0.91 * i * (j + 2));
  CHECK(ledoit_wolf_samples(Y).second == 1.0);
}

TEST_CASE("sample Ledoit-Wolf agrees with the moment identity") {
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix X = gaussian_matrix(60 + 40 * trial, 6, rng);
    X.col(0) *= 3.0;
    X.col(2) += 0.5 * X.col(1);
    const double alpha = ledoit_wolf_samples(X).second;
    CHECK(alpha == Catch::Approx(oracle_sample_lw(X)).epsilon(1e-9));
    CHECK(alpha >= 0.0);
    CHECK(alpha <= 1.0);
  }
}

TEST_CASE("isotropic samples shrink toward a near-identity estimate") {
  Rng rng(18);
  const Matrix X = gaussian_matrix(20000, 8, rng);
  const auto [S, alpha] = ledoit_wolf_samples(X);
  CHECK(alpha == Catch::Approx(oracle_sample_lw(X)).epsilon(1e-9));
  CHECK((S - Matrix::Identity(8, 8)).norm() < 0.05);
}

TEST_CASE("csp diagonal case") {
  Matrix Ca = Matrix::Zero(2, 2), Cb = Matrix::Zero(2, 2);
  Ca.diagonal() << 2, 1;
  Cb.diagonal() << 1, 2;
  const auto bank = csp_solve(wrap(Ca), wrap(Cb), 2);
  REQUIRE(bank.k() == 2);
  CHECK(std::abs(bank.eigenvalues(0) - 2.0) <= 1e-10);
  CHECK(std::abs(bank.eigenvalues(1) - 0.5) <= 1e-10);
  CHECK(std::abs(bank.filters(1, 0)) <= 1e-10);
  CHECK(std::abs(bank.filters(0, 1)) <= 1e-10);
  for (int i = 0; i < 2; ++i) {
    const Vector s = bank.filters.col(i);
    CHECK(s.dot((Ca + Cb) * s) == Catch::Approx(1.0).margin(1e-8));
  }
  CHECK_FALSE(bank.no_discrimination);

  // orthonormal case: patterns equal filters
  const auto unit = csp_solve(wrap(Ca / 3.0), wrap(Cb / 3.0), 2);
  CHECK((unit.patterns - unit.filters).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("identical classes show no discrimination") {
  Rng rng(19);
  const Matrix A = gaussian_matrix(5, 5, rng);
  const Matrix C = A * A.transpose();
  const auto bank = csp_solve(wrap(C), wrap(C), 4);
  CHECK(bank.no_discrimination);
  for (Eigen::Index i = 0; i < bank.k(); ++i) CHECK(bank.eigenvalues(i) == Catch::Approx(1.0).margin(1e-8));
}

TEST_CASE("csp requires a positive definite sum unless restricted") {
  Matrix C = Matrix::Zero(3, 3);
  C(0, 0) = 1;
  C(1, 1) = 2;
  CHECK_THROWS_WITH(csp_solve(wrap(C), wrap(C), 2), Catch::Matchers::ContainsSubstring("shrinkage"));
  CspOptions opt;
  opt.restrict_to_range = true;
  CHECK(csp_full(C, C, opt).k() == 2);
  CHECK_THROWS_AS(csp_solve(wrap(C), wrap(C), 3), ValidationError);
}

TEST_CASE("csp bank invariants on random covariances") {
  Rng rng(20);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix A = gaussian_matrix(7, 9, rng), B = gaussian_matrix(7, 9, rng);
    const Matrix Ca = A * A.transpose(), Cb = B * B.transpose();
    const auto bank = csp_full(Ca, Cb);
    REQUIRE(bank.k() == 7);
    for (Eigen::Index i = 0; i < bank.k(); ++i) {
      const Vector s = bank.filters.col(i);
      CHECK(std::abs(s.dot((Ca + Cb) * s) - 1.0) <= 1e-8);
      CHECK(std::abs(s.dot(Ca * s) / s.dot(Cb * s) - bank.eigenvalues(i)) <= 1e-8 * bank.eigenvalues(i));
      CHECK(bank.eigenvalues(i) > 0);
      if (i > 0) CHECK(std::abs(std::log(bank.eigenvalues(i))) <= std::abs(std::log(bank.eigenvalues(i - 1))) + 1e-12);
    }
    // patterns are the inverse-transpose of the full filter matrix
    CHECK((bank.patterns.transpose() * bank.filters - Matrix::Identity(7, 7)).cwiseAbs().maxCoeff() <= 1e-8);

    // swapping classes inverts eigenvalues and keeps directions
    const auto swapped = csp_full(Cb, Ca);
    for (Eigen::Index i = 0; i < bank.k(); ++i) {
      double best = INFINITY;
      Eigen::Index match = -1;
      for (Eigen::Index j = 0; j < swapped.k(); ++j) {
        const double d = std::abs(swapped.eigenvalues(j) - 1.0 / bank.eigenvalues(i));
        if (d < best) best = d, match = j;
      }
      CHECK(best <= 1e-8 / bank.eigenvalues(i));
      const double cosine = std::abs(bank.filters.col(i).normalized().dot(swapped.filters.col(match).normalized()));
      CHECK(cosine == Catch::Approx(1.0).margin(1e-8));
    }
  }
}

TEST_CASE("csp_solve keeps both ends of the spectrum") {
  Rng rng(21);
  const Matrix A = gaussian_matrix(8, 20, rng), B = gaussian_matrix(8, 20, rng);
  const auto full = csp_full(A * A.transpose(), B * B.transpose());
  const auto bank = csp_solve(wrap(A * A.transpose()), wrap(B * B.transpose()), 4);
  std::vector<double> lam(full.eigenvalues.data(), full.eigenvalues.data() + full.k());
  std::sort(lam.begin(), lam.end());
  std::vector<double> expected{lam[0], lam[1], lam[6], lam[7]};
  std::vector<double> got(bank.eigenvalues.data(), bank.eigenvalues.data() + 4);
  std::sort(got.begin(), got.end());
  for (int i = 0; i < 4; ++i) CHECK(got[static_cast<std::size_t>(i)] == Catch::Approx(expected[static_cast<std::size_t>(i)]).epsilon(1e-10));
}

TEST_CASE("planted rotation is recovered") {
  const auto p = planted(22, 8, 60, true);
  const auto a = ledoit_wolf_shrink(p.ws, 0), b = ledoit_wolf_shrink(p.ws, 1);
  const auto bank = csp_solve(a, b, 2);
  const Vector top = bank.filters.col(0).normalized();
  const double c0 = std::abs(top.dot(p.mixing.col(0))), c1 = std::abs(top.dot(p.mixing.col(1)));
  CHECK(std::max(c0, c1) >= 0.95);

  // class-conditional feature means differ on the top component
  double m0 = 0, m1 = 0;
  int n0 = 0, n1 = 0;
  for (std::size_t i = 0; i < p.ws.size(); ++i) {
    const double f = apply_filters(p.ws.windows[i], bank)(0);
    (p.ws.labels[i] == 0 ? m0 : m1) += f;
    (p.ws.labels[i] == 0 ? n0 : n1)++;
  }
  CHECK(std::abs(m0 / n0 - m1 / n1) >= 1.0);
}

TEST_CASE("top filters span the planted subspace at 10 dB") {
  const auto p = planted(23, 8, 80, true, 10.0);
  const auto bank = csp_solve(ledoit_wolf_shrink(p.ws, 0), ledoit_wolf_shrink(p.ws, 1), 2);
  Eigen::HouseholderQR<Matrix> qf(bank.filters);
  const Matrix Qf = qf.householderQ() * Matrix::Identity(8, 2);
  const Matrix Qt = p.mixing.leftCols(2);
  Eigen::JacobiSVD<Matrix> svd(Qf.transpose() * Qt);
  const double smallest = std::clamp(svd.singularValues().minCoeff(), -1.0, 1.0);
  CHECK(std::acos(smallest) <= 0.2);
}

TEST_CASE("patterns recover a planted topography") {
  const auto p = planted(24, 8, 80, false, 20.0);
  const auto bank = csp_solve(ledoit_wolf_shrink(p.ws, 0), ledoit_wolf_shrink(p.ws, 1), 2);
  std::vector<std::string> names;
  for (int c = 0; c < 8; ++c) names.push_back("e" + std::to_string(c));
  const auto [pat, labels] = topography_export(bank, names);
  CHECK(pat.cols() == 2);
  CHECK(labels == names);
  auto corr = [](const Vector& a, const Vector& b) {
    return pearson(Series(a.data(), a.data() + a.size()), Series(b.data(), b.data() + b.size()));
  };
  const double r = std::max(std::abs(corr(pat.col(0), p.mixing.col(0))), std::abs(corr(pat.col(0), p.mixing.col(1))));
  CHECK(r >= 0.9);
}

TEST_CASE("feature map properties") {
  Rng rng(25);
  const auto p = planted(26, 6, 20, false);
  const auto bank = csp_solve(ledoit_wolf_shrink(p.ws, 0), ledoit_wolf_shrink(p.ws, 1), 4);
  const Matrix x = p.ws.windows[3];
  const Vector f = apply_filters(x, bank);
  CHECK(f.allFinite());
  CHECK((apply_filters(7.5 * x, bank) - f).cwiseAbs().maxCoeff() <= 1e-12);
  auto flipped = bank;
  flipped.filters.col(1) *= -1.0;
  flipped.filters.col(3) *= -1.0;
  CHECK((apply_filters(x, flipped) - f).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(apply_filters(x, bank, 1)(0) == 0.0);

  std::size_t floored = 0;
  const Vector z = apply_filters(Matrix::Zero(90, 6), bank, 0, &floored);
  CHECK(floored == 4);
  CHECK(z(0) == std::log(kFeatureEpsilon));
}

TEST_CASE("feature matrices and csv") {
  const auto p = planted(27, 5, 6, true);
  const auto bank = fit_bank(p.ws, 0, 1, 2, CspVariant::Rcsp);
  const auto fm = compute_features(p.ws, {bank});
  CHECK(fm.rows() == static_cast<Eigen::Index>(p.ws.size()));
  CHECK(fm.values.cols() == 2);
  CHECK(fm.values.allFinite());
  const auto text = features_to_csv(fm, LabelScheme::LeftRight);
  CHECK(text.rfind("window_id,parent_epoch,label,f1,f2\n", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == p.ws.size() + 1);
}

TEST_CASE("multiclass banks") {
  Rng rng(28);
  WindowSet ws;
  ws.scheme = LabelScheme::ThreeClass;
  ws.window_len_samples = 60;
  const Matrix A = gaussian_matrix(6, 6, rng);
  for (int label = 0; label < 3; ++label)
    for (int k = 0; k < 30; ++k) {
      Matrix s = gaussian_matrix(60, 6, rng);
      if (label < 2) s.col(label) *= 2.5;
      ws.windows.push_back(s * A.transpose());
      ws.labels.push_back(label);
      ws.parent_epoch_id.push_back(static_cast<int>(ws.windows.size()) - 1);
    }
  const auto banks = multiclass_banks(ws, 2);
  REQUIRE(banks.size() == 3);
  CHECK(banks[0].class_pair == std::pair{0, 2});
  CHECK(banks[1].class_pair == std::pair{1, 2});
  CHECK(banks[2].class_pair == std::pair{0, 1});
  CHECK(compute_features(ws, banks).values.cols() == 6);
  for (const auto& b : banks) CHECK_FALSE(b.no_discrimination);

  // collapse classes 0 and 1 into the same distribution
  WindowSet same = ws;
  for (std::size_t i = 0; i < same.size(); ++i)
    if (same.labels[i] == 1) same.windows[i] = ws.windows[i - 30];
  CHECK(multiclass_banks(same, 2)[2].no_discrimination);

  WindowSet missing = ws.subset([&] {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ws.size(); ++i)
      if (ws.labels[i] != 1) idx.push_back(i);
    return idx;
  }());
  CHECK_THROWS_AS(multiclass_banks(missing, 2), ValidationError);
}

TEST_CASE("bank csv layout") {
  const auto p = planted(29, 4, 8, true);
  const auto bank = fit_bank(p.ws, 0, 1, 2, CspVariant::Rcsp);
  const auto text = banks_to_csv({bank}, {"a", "b", "c", "d"}, LabelScheme::LeftRight, true);
  csv::LineReader r(text);
  std::string_view line;
  REQUIRE(r.next(line));
  CHECK(line == "channel,c0,c1");
  REQUIRE(r.next(line));
  CHECK(line.substr(0, 5) == "pair,");
  REQUIRE(r.next(line));
  CHECK(line == "component,0,1");
  REQUIRE(r.next(line));
  CHECK(line.substr(0, 11) == "eigenvalue,");
  int rows = 0;
  while (r.next(line)) ++rows;
  CHECK(rows == 4);
}
