#pragma once

#include "stride_intent/common.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>

namespace stride_intent {

struct PowerSpectrum {
  Series freqs_hz;
  Series power;  // one-sided, arbitrary units

  /// Fraction of total power inside the union of [centre - half_width, centre + half_width].
  double band_fraction(const Series& centres_hz, double half_width_hz) const {
    double in = 0.0, total = 0.0;
    for (std::size_t i = 0; i < power.size(); ++i) {
      total += power[i];
      for (double c : centres_hz) {
        if (std::abs(freqs_hz[i] - c) <= half_width_hz) {
          in += power[i];
          break;
        }
      }
    }
    return total > 0 ? in / total : 0.0;
  }
};

/// Welch estimate with a Hann window and 50% overlap. The segment length is
/// the largest power of two not exceeding min(len(x), max_segment).
inline PowerSpectrum welch(const Series& x, double fs_hz, std::size_t max_segment = 8192) {
  require(x.size() >= 8, "welch: series too short");
  std::size_t nseg = 1;
  while (nseg * 2 <= std::min(x.size(), max_segment)) nseg *= 2;
  const std::size_t step = nseg / 2;
  Series window(nseg);
  for (std::size_t i = 0; i < nseg; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(nseg));
  const double m = mean(x);
  Eigen::FFT<double> fft;
  std::vector<double> buf(nseg);
  std::vector<std::complex<double>> spec;
  PowerSpectrum out;
  out.power.assign(nseg / 2 + 1, 0.0);
  out.freqs_hz.resize(nseg / 2 + 1);
  for (std::size_t k = 0; k <= nseg / 2; ++k) out.freqs_hz[k] = fs_hz * static_cast<double>(k) / static_cast<double>(nseg);
  std::size_t segments = 0;
  for (std::size_t start = 0; start + nseg <= x.size(); start += step) {
    for (std::size_t i = 0; i < nseg; ++i) buf[i] = (x[start + i] - m) * window[i];
    fft.fwd(spec, buf);
    for (std::size_t k = 0; k <= nseg / 2; ++k) out.power[k] += std::norm(spec[k]);
    ++segments;
  }
  for (double& p : out.power) p /= static_cast<double>(segments);
  return out;
}

}  // namespace stride_intent
