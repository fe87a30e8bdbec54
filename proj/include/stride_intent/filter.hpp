#pragma once

#include "stride_intent/signal.hpp"

#include <cmath>
#include <complex>
#include <numbers>

namespace stride_intent {

struct FirDesign {
  double low_hz = 3.0;
  double high_hz = 45.0;
  double fs_hz = 250.0;
  int n_taps = 501;
};

/// Linear-phase FIR filter (odd length, symmetric taps).
struct FirFilter {
  Series taps;
  FirDesign design;
};

/// |H(f)| of a tap sequence evaluated by direct DTFT.
inline double magnitude_response(const Series& taps, double freq_hz, double fs_hz) {
  const double w = 2.0 * std::numbers::pi * freq_hz / fs_hz;
  std::complex<double> acc{0.0, 0.0};
  for (std::size_t n = 0; n < taps.size(); ++n)
    acc += taps[n] * std::polar(1.0, -w * static_cast<double>(n));
  return std::abs(acc);
}

/// Hamming-windowed sinc bandpass, normalised to unit gain at the geometric
/// band centre. Throws if the stopband probes at 1 Hz and 60 Hz are not at
/// least 20 dB down.
inline FirFilter design_bandpass(double low_hz = 3.0, double high_hz = 45.0, double fs_hz = 250.0,
                                 int n_taps = 501) {
  require(fs_hz > 0, "design_bandpass: fs must be positive");
  require(low_hz > 0 && low_hz < high_hz && high_hz < fs_hz / 2,
          "design_bandpass: need 0 < low < high < fs/2");
  require(n_taps >= 3 && n_taps % 2 == 1, "design_bandpass: n_taps must be odd and >= 3");
  const double pi = std::numbers::pi;
  const int M = (n_taps - 1) / 2;
  const double fl = low_hz / fs_hz, fh = high_hz / fs_hz;
  auto sinc_lp = [](double fc, int k) {
    if (k == 0) return 2.0 * fc;
    return std::sin(2.0 * std::numbers::pi * fc * k) / (std::numbers::pi * k);
  };
  FirFilter f;
  f.design = {low_hz, high_hz, fs_hz, n_taps};
  f.taps.resize(static_cast<std::size_t>(n_taps));
  for (int n = 0; n < n_taps; ++n) {
    const int k = n - M;
    const double window = 0.54 - 0.46 * std::cos(2.0 * pi * n / (n_taps - 1));
    f.taps[static_cast<std::size_t>(n)] = (sinc_lp(fh, k) - sinc_lp(fl, k)) * window;
  }
  // enforce exact symmetry
  for (int n = 0; n < M; ++n) f.taps[static_cast<std::size_t>(n_taps - 1 - n)] = f.taps[static_cast<std::size_t>(n)];
  const double centre = std::sqrt(low_hz * high_hz);
  const double g = magnitude_response(f.taps, centre, fs_hz);
  if (!(g > 0)) throw ComputeError("design_bandpass: insufficient order (zero passband gain)");
  for (double& t : f.taps) t /= g;
  for (double probe : {1.0, 60.0}) {
    const bool outside_band = probe < low_hz || probe > high_hz;
    if (!outside_band || probe >= fs_hz / 2) continue;
    if (magnitude_response(f.taps, probe, fs_hz) > 0.1)
      throw ComputeError("design_bandpass: insufficient order (" + csv::format(probe) +
                         " Hz probe above -20 dB); increase n_taps");
  }
  return f;
}

namespace detail {

/// Zero-phase filtering of one channel with reflect padding of 3 * n_taps.
/// Symmetric taps make the backward pass a plain correlation.
inline Series filtfilt_channel(const double* x, std::size_t n, const Series& h) {
  const std::size_t nt = h.size();
  const std::size_t pad = 3 * nt;
  const std::size_t total = n + 2 * pad;
  Series ext(total);
  for (std::size_t i = 0; i < pad; ++i) {
    // odd reflection about the edge samples keeps the signal continuous
    ext[pad - 1 - i] = 2.0 * x[0] - x[i + 1];
    ext[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];
  }
  std::copy(x, x + n, ext.begin() + static_cast<std::ptrdiff_t>(pad));
  using Map = Eigen::Map<const Eigen::VectorXd>;
  const Map taps(h.data(), static_cast<Eigen::Index>(nt));
  const auto ntl = static_cast<Eigen::Index>(nt);
  Series fwd(total, 0.0);
  // causal pass: y[i] = sum_k h[k] x[i - k]; symmetric taps turn it into a
  // forward dot product over x[i - nt + 1 .. i]
  for (std::size_t i = 0; i < total; ++i) {
    if (i + 1 >= nt) {
      fwd[i] = taps.dot(Map(ext.data() + i + 1 - nt, ntl));
    } else {
      double acc = 0.0;
      for (std::size_t k = 0; k <= i; ++k) acc += h[k] * ext[i - k];
      fwd[i] = acc;
    }
  }
  // anti-causal pass: z[i] = sum_k h[k] y[i + k]
  Series out(n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t i = j + pad;
    const std::size_t len = std::min(nt, total - i);
    out[j] = taps.head(static_cast<Eigen::Index>(len)).dot(Map(fwd.data() + i, static_cast<Eigen::Index>(len)));
  }
  return out;
}

}  // namespace detail

inline MultichannelSignal filtfilt(const MultichannelSignal& signal, const FirFilter& filter) {
  const std::size_t n = static_cast<std::size_t>(signal.n_samples());
  require(n > 3 * filter.taps.size(), "filtfilt: signal too short (need more than 3 x n_taps samples)");
  Matrix out(signal.n_samples(), signal.n_channels());
  parallel_for(static_cast<std::size_t>(signal.n_channels()), [&](std::size_t c) {
    const Vector col = signal.data().col(static_cast<Eigen::Index>(c));
    const Series y = detail::filtfilt_channel(col.data(), n, filter.taps);
    for (std::size_t i = 0; i < n; ++i) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = y[i];
  });
  return signal.with_data(std::move(out));
}

}  // namespace stride_intent
