#include "pestalk/mel.hpp"

#include <cmath>
#include <complex>

namespace pestalk::signal {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place iterative radix-2 FFT.
void fft(std::vector<std::complex<double>>& a) {
  const int n = static_cast<int>(a.size());
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / len;
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (int k = 0; k < len / 2; ++k) {
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// mel points spanning 0..nyquist: n_mels + 2 edge/center frequencies
std::vector<double> mel_points_hz(int n_mels, int sample_rate) {
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> pts(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i) {
    pts[i] = mel_to_hz(mel_max * i / (n_mels + 1));
  }
  return pts;
}

}  // namespace

std::vector<double> mel_band_centers_hz(int n_mels, int sample_rate) {
  const auto pts = mel_points_hz(n_mels, sample_rate);
  return {pts.begin() + 1, pts.end() - 1};
}

MelSpectrogram mel_spectrogram(const AudioClip& clip, int n_mels, int window, int hop) {
  if (hop <= 0 || window < hop) throw BadDims("require window >= hop > 0");
  if (n_mels < 1) throw BadDims("n_mels must be >= 1");
  if (static_cast<std::size_t>(window) > clip.samples.size()) {
    throw TooShort("window longer than waveform");
  }

  const int nfft = next_pow2(window);
  const int n_bins = nfft / 2 + 1;
  const int F = static_cast<int>((clip.samples.size() + hop - 1) / hop);

  // Hann window
  std::vector<double> hann(window);
  for (int i = 0; i < window; ++i) {
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (window - 1));
  }

  // triangular filters, unit peak
  const auto pts = mel_points_hz(n_mels, clip.sample_rate);
  Mat filters = Mat::Zero(n_mels, n_bins);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = pts[m], c = pts[m + 1], hi = pts[m + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * clip.sample_rate / nfft;
      if (f > lo && f < c) {
        filters(m, k) = (f - lo) / (c - lo);
      } else if (f >= c && f < hi) {
        filters(m, k) = (hi - f) / (hi - c);
      }
    }
  }

  MelSpectrogram mel;
  mel.hop = hop;
  mel.n_mels = n_mels;
  mel.window = window;
  mel.sample_rate = clip.sample_rate;
  mel.frames = Mat::Zero(F, n_mels);

  std::vector<std::complex<double>> buf(nfft);
  Vec power(n_bins);
  for (int f = 0; f < F; ++f) {
    const std::size_t start = static_cast<std::size_t>(f) * hop;
    for (int i = 0; i < nfft; ++i) {
      const std::size_t idx = start + i;
      const double s = (i < window && idx < clip.samples.size())
                           ? clip.samples[idx] * hann[i]
                           : 0.0;
      buf[i] = {s, 0.0};
    }
    fft(buf);
    for (int k = 0; k < n_bins; ++k) power(k) = std::norm(buf[k]);
    mel.frames.row(f) = (filters * power).array().log1p().transpose();
  }
  return mel;
}

}  // namespace pestalk::signal
