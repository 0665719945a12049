#include <cmath>
#include <complex>
#include <vector>

#include "ainv/baselines.hpp"
#include "ainv/error.hpp"

namespace ainv {

namespace {

constexpr double kTwoPi = 6.28318530717958647692528676656;
constexpr double kLogFloor = 1e-12;

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 FFT, in place.
void fft(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -kTwoPi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t j = 0; j < len / 2; ++j) {
        const auto u = a[i + j];
        const auto v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

}  // namespace

std::vector<double> welch_psd(std::span<const double> x, double sample_rate,
                              int seg_len, int overlap, WelchWindow window) {
  if (sample_rate <= 0) throw ArgumentError("welch: sample rate must be > 0");
  if (!is_power_of_two(seg_len))
    throw ArgumentError("welch: segment length must be a power of two");
  if (overlap < 0 || overlap >= seg_len)
    throw ArgumentError("welch: overlap must be in [0, seg_len)");
  if (static_cast<int>(x.size()) < seg_len)
    throw ArgumentError("welch: signal shorter than one segment");

  const int hop = seg_len - overlap;
  const int n_segments = (static_cast<int>(x.size()) - seg_len) / hop + 1;
  const int n_bins = seg_len / 2 + 1;

  std::vector<double> win(static_cast<size_t>(seg_len), 1.0);
  if (window == WelchWindow::kHann) {
    for (int i = 0; i < seg_len; ++i)
      win[static_cast<size_t>(i)] =
          0.5 - 0.5 * std::cos(kTwoPi * i / static_cast<double>(seg_len));
  }
  double win_power = 0;
  for (const double w : win) win_power += w * w;
  const double norm = 1.0 / (sample_rate * win_power);

  std::vector<double> psd(static_cast<size_t>(n_bins), 0.0);
  std::vector<std::complex<double>> buf(static_cast<size_t>(seg_len));

  for (int s = 0; s < n_segments; ++s) {
    const double* seg = x.data() + static_cast<size_t>(s) * hop;
    double mean = 0;
    for (int i = 0; i < seg_len; ++i) mean += seg[i];
    mean /= seg_len;
    for (int i = 0; i < seg_len; ++i)
      buf[static_cast<size_t>(i)] = {(seg[i] - mean) * win[static_cast<size_t>(i)],
                                     0.0};
    fft(buf);
    for (int k = 0; k < n_bins; ++k) {
      const double p = std::norm(buf[static_cast<size_t>(k)]) * norm;
      // One-sided density: interior bins carry both halves of the spectrum.
      const bool interior = k != 0 && k != seg_len / 2;
      psd[static_cast<size_t>(k)] += interior ? 2.0 * p : p;
    }
  }
  for (auto& p : psd) p /= n_segments;
  return psd;
}

std::vector<BandDef> default_bands() {
  return {
      {"theta", 4, 8},    {"alpha", 8, 15},   {"beta1", 15, 20},
      {"beta2", 20, 25},  {"beta3", 25, 30},  {"gamma1", 30, 45},
      {"gamma2", 45, 60}, {"gamma3", 60, 75},
  };
}

std::vector<double> log_bandpowers(const Tensor& X, double sample_rate,
                                   std::span<const BandDef> bands, int seg_len,
                                   int overlap, WelchWindow window) {
  require_rank(X, 2, "log_bandpowers");
  const double nyquist = sample_rate / 2.0;
  for (const auto& b : bands) {
    if (!(b.low_hz >= 0 && b.low_hz < b.high_hz))
      throw ArgumentError("log_bandpowers: band '" + b.name + "' is empty");
    if (b.high_hz > nyquist)
      throw ArgumentError("log_bandpowers: band '" + b.name +
                          "' exceeds the Nyquist frequency");
  }

  const int64_t channels = X.dim(0), samples = X.dim(1);
  const double bin_hz = sample_rate / seg_len;
  std::vector<double> features;
  features.reserve(static_cast<size_t>(channels) * bands.size());
  std::vector<double> chan(static_cast<size_t>(samples));

  for (int64_t c = 0; c < channels; ++c) {
    for (int64_t t = 0; t < samples; ++t)
      chan[static_cast<size_t>(t)] =
          static_cast<double>(X.ptr()[c * samples + t]);
    const std::vector<double> psd =
        welch_psd(chan, sample_rate, seg_len, overlap, window);
    for (const auto& b : bands) {
      double power = 0;
      for (size_t k = 0; k < psd.size(); ++k) {
        const double f = static_cast<double>(k) * bin_hz;
        if (f >= b.low_hz && f < b.high_hz) power += psd[k];
      }
      features.push_back(std::log(power + kLogFloor));
    }
  }
  return features;
}

}  // namespace ainv
