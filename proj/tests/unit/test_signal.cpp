#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "pestalk/audio.hpp"
#include "pestalk/mel.hpp"
#include "pestalk/rng.hpp"
#include "pestalk/smoothing.hpp"

using namespace pestalk;
using namespace pestalk::signal;

namespace {

AudioClip sine_clip(double freq, double seconds, int rate, double amp = 0.5) {
  AudioClip c;
  c.sample_rate = rate;
  const auto n = static_cast<std::size_t>(seconds * rate);
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.samples[i] = amp * std::sin(2.0 * M_PI * freq * i / rate);
  }
  return c;
}

}  // namespace

TEST_CASE("resample: equal rates return bit-identical samples") {
  auto clip = sine_clip(100.0, 0.5, 16000);
  auto out = resample_audio(clip, 16000);
  REQUIRE(out.samples.size() == clip.samples.size());
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    CHECK(out.samples[i] == clip.samples[i]);
  }
}

TEST_CASE("resample: 100 Hz sine 48 kHz -> 16 kHz tracks the analytic sine") {
  auto clip = sine_clip(100.0, 1.0, 48000);
  auto out = resample_audio(clip, 16000);
  REQUIRE(out.sample_rate == 16000);
  const std::size_t margin = 200;
  double worst = 0.0;
  for (std::size_t i = margin; i + margin < out.samples.size(); ++i) {
    const double expect = 0.5 * std::sin(2.0 * M_PI * 100.0 * i / 16000.0);
    worst = std::max(worst, std::abs(out.samples[i] - expect));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("resample: 1 s at 16 kHz -> 8 kHz gives 8000 samples within one") {
  auto clip = sine_clip(200.0, 1.0, 16000);
  auto out = resample_audio(clip, 8000);
  CHECK(std::abs(static_cast<long>(out.samples.size()) - 8000L) <= 1);
}

TEST_CASE("resample: empty waveform is rejected") {
  AudioClip clip;
  CHECK_THROWS_AS(resample_audio(clip, 16000), EmptyInput);
}

TEST_CASE("audio clip frame arithmetic") {
  AudioClip clip = sine_clip(100.0, 1.0, 16000);
  CHECK(clip.samples_per_frame() == 533);
  CHECK(clip.frame_count() == static_cast<int>((16000 + 532) / 533));
  // last frame zero-padded
  const auto last = clip.frame(clip.frame_count() - 1);
  CHECK(static_cast<int>(last.size()) == 533);
}

TEST_CASE("wav round trip") {
  auto clip = sine_clip(440.0, 0.25, 16000);
  const auto path = std::filesystem::temp_directory_path() / "pestalk_rt.wav";
  save_wav(clip, path.string());
  auto back = load_wav(path.string());
  REQUIRE(back.sample_rate == 16000);
  REQUIRE(back.samples.size() == clip.samples.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < back.samples.size(); ++i) {
    worst = std::max(worst, std::abs(back.samples[i] - clip.samples[i]));
  }
  CHECK(worst <= 1.0 / 32768.0 + 1e-9);
  std::filesystem::remove(path);
}

TEST_CASE("mel: silence maps to the zero matrix") {
  AudioClip clip;
  clip.samples.assign(16000, 0.0);
  auto mel = mel_spectrogram(clip, 80, 400, 160);
  CHECK(mel.frames.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mel: pure tone at a band center wins that band") {
  const int n_mels = 80;
  const auto centers = mel_band_centers_hz(n_mels, 16000);
  for (int k : {10, 30, 55}) {
    auto clip = sine_clip(centers[k], 1.0, 16000);
    auto mel = mel_spectrogram(clip, n_mels, 400, 160);
    Eigen::Index argmax = 0;
    Vec mean = mel.frames.colwise().mean();
    mean.maxCoeff(&argmax);
    CHECK(argmax == k);
  }
}

TEST_CASE("mel: frame count is ceil(len / hop)") {
  auto clip = sine_clip(100.0, 1.0, 16000);
  auto mel = mel_spectrogram(clip, 80, 400, 160);
  CHECK(mel.frames.rows() == 100);
  CHECK(mel.frames.allFinite());
}

TEST_CASE("mel: window longer than waveform is rejected") {
  AudioClip clip;
  clip.samples.assign(300, 0.1);
  CHECK_THROWS_AS(mel_spectrogram(clip, 80, 400, 160), TooShort);
}

TEST_CASE("align_frames: F == T is the identity") {
  Rng rng(7);
  Mat x(5, 3);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 3; ++c) x(r, c) = rng.normal();
  }
  CHECK((align_frames(x, 5) - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("align_frames: midpoint interpolation") {
  Mat x(2, 1);
  x << 0.0, 1.0;
  Mat y = align_frames(x, 3);
  CHECK(y(0, 0) == 0.0);
  CHECK(y(1, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(y(2, 0) == 1.0);
}

TEST_CASE("align_frames: round trip preserves endpoints exactly") {
  Rng rng(13);
  Mat x(7, 4);
  for (int r = 0; r < 7; ++r) {
    for (int c = 0; c < 4; ++c) x(r, c) = rng.uniform(-1.0, 1.0);
  }
  Mat up = align_frames(x, 30);
  Mat back = align_frames(up, 7);
  CHECK((back.row(0) - x.row(0)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.row(6) - x.row(6)).cwiseAbs().maxCoeff() == 0.0);
  // single row broadcasts
  Mat one = x.topRows(1);
  Mat br = align_frames(one, 4);
  CHECK(br.rows() == 4);
  CHECK((br.row(3) - one.row(0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("savgol: quadratics pass through unchanged on the interior") {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1), c = rng.uniform(-1, 1);
    Mat x(11, 1);
    for (int t = 0; t < 11; ++t) x(t, 0) = a * t * t + b * t + c;
    Mat y = savgol_smooth(x, 5, 2);
    for (int t = 2; t < 9; ++t) {
      CHECK(std::abs(y(t, 0) - x(t, 0)) < 1e-9);
    }
  }
}

TEST_CASE("savgol: constant track is unchanged everywhere") {
  Mat x = Mat::Constant(9, 2, 0.37);
  Mat y = savgol_smooth(x, 5, 2);
  CHECK((y - x).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("savgol: matches the per-window least-squares oracle") {
  // independent oracle: order-2 LS fit over each 5-sample window, evaluated
  // at the center
  auto ls_center = [](const Mat& x, int t) {
    Mat J(5, 3);
    Vec rhs(5);
    for (int j = -2; j <= 2; ++j) {
      J(j + 2, 0) = 1.0;
      J(j + 2, 1) = j;
      J(j + 2, 2) = j * j;
      rhs(j + 2) = x(t + j, 0);
    }
    Vec beta = (J.transpose() * J).ldlt().solve(J.transpose() * rhs);
    return beta(0);
  };

  const int T = 11;
  Mat cubic(T, 1), quartic(T, 1);
  for (int t = 0; t < T; ++t) {
    cubic(t, 0) = std::pow(t - 5.0, 3) / 50.0;
    quartic(t, 0) = std::pow(t - 5.0, 4) / 200.0;
  }
  Mat yc = savgol_smooth(cubic, 5, 2);
  Mat yq = savgol_smooth(quartic, 5, 2);

  bool quartic_diff = false;
  for (int t = 2; t < T - 2; ++t) {
    CHECK(std::abs(yc(t, 0) - ls_center(cubic, t)) < 1e-9);
    CHECK(std::abs(yq(t, 0) - ls_center(quartic, t)) < 1e-9);
    if (std::abs(yq(t, 0) - quartic(t, 0)) > 1e-6) quartic_diff = true;
  }
  // a symmetric order-2 window reproduces cubics on the interior (odd
  // moments cancel) but not quartics
  CHECK((yc - cubic).middleRows(2, T - 4).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(quartic_diff);
}

TEST_CASE("savgol: errors") {
  Mat x = Mat::Zero(3, 1);
  CHECK_THROWS_AS(savgol_smooth(x, 5, 2), TooShort);
  Mat y = Mat::Zero(10, 1);
  CHECK_THROWS_AS(savgol_smooth(y, 4, 2), BadDims);
  CHECK_THROWS_AS(savgol_smooth(y, 5, 5), BadDims);
}
