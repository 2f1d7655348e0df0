#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "pestalk/errors.hpp"
#include "pestalk/mel.hpp"
#include "pestalk/metrics.hpp"
#include "pestalk/rng.hpp"
#include "pestalk/synthdata.hpp"

using namespace pestalk;
using namespace pestalk::metrics;

namespace {

// audio with tone bursts placed so the detected onsets land exactly on the
// 0.1 s grid shared by the 10 ms mel hop and the 33.3 ms frame step
signal::AudioClip burst_audio(const std::vector<int>& mel_frames, double seconds) {
  signal::AudioClip clip;
  clip.samples.assign(static_cast<std::size_t>(seconds * 16000), 0.0);
  for (int f : mel_frames) {
    const int start = (f + 1) * 160;
    for (int i = 0; i < 400 && start + i < static_cast<int>(clip.samples.size()); ++i) {
      const double env = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / 399.0);
      clip.samples[start + i] = 0.8 * env * std::sin(2.0 * M_PI * 2000.0 * i / 16000.0);
    }
  }
  return clip;
}

bs::BlendshapeSequence flat_motion(int T, double level = 0.4) {
  bs::BlendshapeSequence seq;
  seq.coeffs = Mat::Constant(T, bs::kNumChannels, level);
  return seq;
}

void add_lip_dip(bs::BlendshapeSequence& seq, int frame, double depth = 0.25) {
  for (int c : bs::mouth_channels()) seq.coeffs(frame, c) -= depth;
}

// independent reimplementation of the BA pipeline for the dual oracle
double ba_oracle(const signal::AudioClip& clip, const bs::BlendshapeSequence& motion,
                 double sigma) {
  const auto mel = signal::mel_spectrogram(clip);
  std::vector<double> onset(mel.frames.rows(), 0.0);
  for (int f = 1; f < mel.frames.rows(); ++f) {
    double acc = 0.0;
    for (int m = 0; m < mel.frames.cols(); ++m) {
      const double d = mel.frames(f, m) - mel.frames(f - 1, m);
      if (d > 0) acc += d;
    }
    onset[f] = acc;
  }
  double peak = 0.0;
  for (double v : onset) peak = std::max(peak, v);
  std::vector<double> audio;
  for (std::size_t f = 1; f + 1 < onset.size(); ++f) {
    if (onset[f] > onset[f - 1] && onset[f] >= onset[f + 1] && onset[f] > 0.1 * peak) {
      audio.push_back(static_cast<double>(f) * mel.hop / clip.sample_rate);
    }
  }
  if (audio.empty()) return -1.0;

  const auto lips = bs::mouth_channels();
  const int T = motion.frames();
  std::vector<double> vel(T, 0.0);
  auto lip_diff = [&](int a, int b) {
    double acc = 0.0;
    for (int c : lips) {
      const double d = motion.coeffs(a, c) - motion.coeffs(b, c);
      acc += d * d;
    }
    return std::sqrt(acc);
  };
  for (int t = 1; t + 1 < T; ++t) vel[t] = 0.5 * lip_diff(t + 1, t - 1);
  vel[0] = lip_diff(1, 0);
  vel[T - 1] = lip_diff(T - 1, T - 2);
  std::vector<double> mbeat;
  for (int t = 1; t + 1 < T; ++t) {
    if (vel[t] < vel[t - 1] && vel[t] < vel[t + 1]) mbeat.push_back(t / 30.0);
  }
  double acc = 0.0;
  for (double ta : audio) {
    double best = std::numeric_limits<double>::infinity();
    for (double tm : mbeat) best = std::min(best, (ta - tm) * (ta - tm));
    acc += mbeat.empty() ? 0.0 : std::exp(-best / (2.0 * sigma * sigma));
  }
  return acc / static_cast<double>(audio.size());
}

}  // namespace

TEST_CASE("blendshape metrics: identical sequences give zeros") {
  Rng rng(3);
  bs::BlendshapeSequence a;
  a.coeffs.resize(6, bs::kNumChannels);
  for (int t = 0; t < 6; ++t) {
    for (int c = 0; c < bs::kNumChannels; ++c) a.coeffs(t, c) = rng.uniform();
  }
  auto m = blendshape_metrics(a, a, RegionConfig::defaults());
  CHECK(m.lbe == 0.0);
  CHECK(m.pbe == 0.0);
  CHECK(m.mbe == 0.0);
}

TEST_CASE("blendshape metrics: single-frame single-channel error") {
  bs::BlendshapeSequence pred = flat_motion(1, 0.5), gt = flat_motion(1, 0.5);
  const int lip = bs::channel_index("mouthFunnel");
  pred.coeffs(0, lip) += 0.3;
  auto m = blendshape_metrics(pred, gt, RegionConfig::defaults());
  CHECK(m.lbe == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(m.mbe == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("blendshape metrics: random pair matches the loop oracle") {
  Rng rng(11);
  bs::BlendshapeSequence pred, gt;
  pred.coeffs.resize(10, bs::kNumChannels);
  gt.coeffs.resize(10, bs::kNumChannels);
  for (int t = 0; t < 10; ++t) {
    for (int c = 0; c < bs::kNumChannels; ++c) {
      pred.coeffs(t, c) = rng.uniform();
      gt.coeffs(t, c) = rng.uniform();
    }
  }
  const auto regions = RegionConfig::defaults();
  auto m = blendshape_metrics(pred, gt, regions);

  double lbe = 0, pbe = 0, mbe = 0;
  for (int t = 0; t < 10; ++t) {
    double l2 = 0, p2 = 0, mx = 0;
    for (int c : regions.lip_channels) {
      l2 += std::pow(pred.coeffs(t, c) - gt.coeffs(t, c), 2);
    }
    for (int c : regions.pronunciation_channels) {
      p2 += std::pow(pred.coeffs(t, c) - gt.coeffs(t, c), 2);
    }
    for (int c = 0; c < bs::kNumChannels; ++c) {
      mx = std::max(mx, std::abs(pred.coeffs(t, c) - gt.coeffs(t, c)));
    }
    lbe += std::sqrt(l2);
    pbe += std::sqrt(p2);
    mbe += mx;
  }
  CHECK(std::abs(m.lbe - lbe / 10) < 1e-7);
  CHECK(std::abs(m.pbe - pbe / 10) < 1e-7);
  CHECK(std::abs(m.mbe - mbe / 10) < 1e-7);

  // MBE dominates every fixed channel's mean abs error
  for (int k = 0; k < bs::kNumChannels; ++k) {
    double channel_mean = 0;
    for (int t = 0; t < 10; ++t) channel_mean += std::abs(pred.coeffs(t, k) - gt.coeffs(t, k));
    CHECK(m.mbe >= channel_mean / 10 - 1e-12);
  }

  // linear scaling of the error field
  bs::BlendshapeSequence pred2 = gt;
  pred2.coeffs += 2.0 * (pred.coeffs - gt.coeffs);
  auto m2 = blendshape_metrics(pred2, gt, regions);
  CHECK(m2.lbe == doctest::Approx(2.0 * m.lbe).epsilon(1e-9));
  CHECK(m2.pbe == doctest::Approx(2.0 * m.pbe).epsilon(1e-9));
}

TEST_CASE("beat alignment: coincident beats give exactly 1") {
  auto clip = burst_audio({50, 100, 150}, 2.0);
  const auto beats = audio_beat_times(clip);
  REQUIRE(beats.size() == 3);  // construction check: exact 0.1 s grid
  CHECK(beats[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(beats[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(beats[2] == doctest::Approx(1.5).epsilon(1e-12));

  auto motion = flat_motion(60);
  add_lip_dip(motion, 15);
  add_lip_dip(motion, 30);
  add_lip_dip(motion, 45);
  const auto mb = motion_beat_times(motion, bs::mouth_channels());
  REQUIRE(mb.size() == 3);
  CHECK(mb[0] == doctest::Approx(0.5).epsilon(1e-12));

  auto ba = beat_alignment(clip, motion, RegionConfig::defaults());
  REQUIRE(ba.has_value());
  CHECK(std::abs(*ba - 1.0) < 1e-9);
}

TEST_CASE("beat alignment: distant or absent motion beats") {
  auto clip = burst_audio({50}, 2.0);

  // no motion beats at all
  auto flat = flat_motion(60);
  auto ba_flat = beat_alignment(clip, flat, RegionConfig::defaults());
  REQUIRE(ba_flat.has_value());
  CHECK(*ba_flat < 1e-20);

  // a single beat > 10 sigma away (sigma shrunk so the clip can host it)
  RegionConfig tight = RegionConfig::defaults();
  tight.ba_sigma = 0.01;
  auto far = flat_motion(60);
  add_lip_dip(far, 55);  // 1.833 s vs audio beat at 0.5 s
  auto ba_far = beat_alignment(clip, far, tight);
  REQUIRE(ba_far.has_value());
  CHECK(*ba_far < 1e-20);

  // silence: no audio beats -> absent value
  signal::AudioClip silence;
  silence.samples.assign(16000, 0.0);
  CHECK(!beat_alignment(silence, flat, RegionConfig::defaults()).has_value());
}

TEST_CASE("beat alignment: far extra motion beats leave the score unchanged") {
  auto clip = burst_audio({50, 100, 150}, 2.0);
  RegionConfig tight = RegionConfig::defaults();
  tight.ba_sigma = 0.01;

  auto motion = flat_motion(60);
  add_lip_dip(motion, 15);
  add_lip_dip(motion, 30);
  add_lip_dip(motion, 45);
  auto base = beat_alignment(clip, motion, tight);

  auto extra = motion;
  add_lip_dip(extra, 51);  // 1.7 s: > 10 sigma from every audio beat
  auto with_extra = beat_alignment(clip, extra, tight);
  REQUIRE(base.has_value());
  REQUIRE(with_extra.has_value());
  CHECK(*base == doctest::Approx(*with_extra).epsilon(1e-12));
}

TEST_CASE("beat alignment: dual implementation agrees on a corpus clip") {
  synthdata::CorpusSpec spec;
  spec.speakers = 1;
  spec.emotions = 2;
  spec.clips_per_emotion = 2;
  spec.min_frames = 30;
  spec.max_frames = 60;
  spec.seed = 21;
  const auto dir = std::filesystem::temp_directory_path() / "pestalk_ba_corpus";
  std::filesystem::remove_all(dir);
  auto manifest = synthdata::generate_corpus(spec, dir.string());

  const auto regions = RegionConfig::defaults();
  for (const auto& rec : manifest.records) {
    auto clip = signal::load_wav(manifest.wav_file(rec));
    auto track = bs::read_blendshape_csv(manifest.blendshape_file(rec));
    auto got = beat_alignment(clip, track, regions);
    const double oracle = ba_oracle(clip, track, regions.ba_sigma);
    if (!got.has_value()) {
      CHECK(oracle == -1.0);
      continue;
    }
    CHECK(std::abs(*got - oracle) < 1e-9);
    CHECK(*got > 0.0);
    CHECK(*got <= 1.0);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("vertex metrics: identical trajectories give zeros") {
  Rng rng(31);
  std::vector<Mat> traj;
  for (int t = 0; t < 5; ++t) {
    Mat v(10, 3);
    for (int i = 0; i < v.size(); ++i) v.data()[i] = rng.normal();
    traj.push_back(v);
  }
  RegionConfig r = RegionConfig::defaults();
  r.lip_vertices = {2, 3};
  r.eye_forehead_vertices = {5};
  r.upper_face_vertices = {7, 9};
  auto m = vertex_metrics(traj, traj, r);
  CHECK(m.lve == 0.0);
  CHECK(m.eve == 0.0);
  CHECK(m.fdd == 0.0);
}

TEST_CASE("vertex metrics: constant lip offset and linear scaling") {
  std::vector<Mat> gt(4, Mat::Zero(8, 3));
  std::vector<Mat> pred = gt;
  for (auto& f : pred) f(2, 0) += 0.003;

  RegionConfig r = RegionConfig::defaults();
  r.lip_vertices = {1, 2};
  r.eye_forehead_vertices = {4};
  r.upper_face_vertices = {6};
  auto m = vertex_metrics(pred, gt, r);
  CHECK(m.lve == doctest::Approx(0.003).epsilon(1e-12));
  CHECK(m.eve == 0.0);

  for (auto& f : pred) f(2, 0) += 0.003;  // double the error
  auto m2 = vertex_metrics(pred, gt, r);
  CHECK(m2.lve == doctest::Approx(0.006).epsilon(1e-9));
}

TEST_CASE("vertex metrics: FDD of a static prediction vs an oscillating truth") {
  const int T = 40;
  const double amp = 0.02;
  std::vector<Mat> gt, pred;
  for (int t = 0; t < T; ++t) {
    Mat f = Mat::Zero(6, 3);
    f(4, 1) = amp * std::sin(2.0 * M_PI * t / T);  // one upper-face vertex
    gt.push_back(f);
    pred.push_back(Mat::Zero(6, 3));
  }
  RegionConfig r = RegionConfig::defaults();
  r.lip_vertices = {0};
  r.eye_forehead_vertices = {1};
  r.upper_face_vertices = {4};
  auto m = vertex_metrics(pred, gt, r);

  // sampled-sine oracle: std over time of |a sin(w t) - mean|
  Vec mag(T);
  double mean_val = 0;
  for (int t = 0; t < T; ++t) mean_val += amp * std::sin(2.0 * M_PI * t / T);
  mean_val /= T;
  for (int t = 0; t < T; ++t) {
    mag(t) = std::abs(amp * std::sin(2.0 * M_PI * t / T) - mean_val);
  }
  const double mu = mag.mean();
  const double expect = std::sqrt((mag.array() - mu).square().mean());
  CHECK(m.fdd == doctest::Approx(-expect).epsilon(1e-9));
  CHECK(m.fdd_abs == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("vertex metrics: random trajectories match the loop oracle") {
  Rng rng(37);
  const int T = 10, V = 12;
  std::vector<Mat> pred, gt;
  for (int t = 0; t < T; ++t) {
    Mat p(V, 3), g(V, 3);
    for (int i = 0; i < p.size(); ++i) {
      p.data()[i] = rng.normal();
      g.data()[i] = rng.normal();
    }
    pred.push_back(p);
    gt.push_back(g);
  }
  RegionConfig r = RegionConfig::defaults();
  r.lip_vertices = {0, 1, 2};
  r.eye_forehead_vertices = {3, 4};
  r.upper_face_vertices = {5, 6, 7};
  auto m = vertex_metrics(pred, gt, r);

  double lve = 0, eve = 0;
  for (int t = 0; t < T; ++t) {
    double lmax = 0, emax = 0;
    for (int v : r.lip_vertices) lmax = std::max(lmax, (pred[t].row(v) - gt[t].row(v)).norm());
    for (int v : r.eye_forehead_vertices) {
      emax = std::max(emax, (pred[t].row(v) - gt[t].row(v)).norm());
    }
    lve += lmax;
    eve += emax;
  }
  CHECK(std::abs(m.lve - lve / T) < 1e-7);
  CHECK(std::abs(m.eve - eve / T) < 1e-7);

  double fdd = 0;
  for (int v : r.upper_face_vertices) {
    auto stddev = [&](const std::vector<Mat>& traj) {
      Eigen::RowVector3d mean = Eigen::RowVector3d::Zero();
      for (int t = 0; t < T; ++t) mean += traj[t].row(v);
      mean /= T;
      double m1 = 0, m2 = 0;
      for (int t = 0; t < T; ++t) {
        const double d = (traj[t].row(v) - mean).norm();
        m1 += d;
        m2 += d * d;
      }
      m1 /= T;
      return std::sqrt(m2 / T - m1 * m1);
    };
    fdd += stddev(pred) - stddev(gt);
  }
  CHECK(std::abs(m.fdd - fdd / 3) < 1e-7);
}

TEST_CASE("vertex metrics: bad masks are rejected") {
  std::vector<Mat> traj(3, Mat::Zero(4, 3));
  RegionConfig r = RegionConfig::defaults();
  r.lip_vertices = {9};  // out of range
  r.eye_forehead_vertices = {0};
  r.upper_face_vertices = {1};
  CHECK_THROWS_AS(vertex_metrics(traj, traj, r), BadMask);
  r.lip_vertices = {};
  CHECK_THROWS_AS(vertex_metrics(traj, traj, r), BadMask);
}

TEST_CASE("metric reports: json and csv summary") {
  std::vector<ClipReport> clips(2);
  clips[0].clip_id = "a";
  clips[0].blendshape = {0.1, 0.2, 0.3};
  clips[0].ba = 0.9;
  clips[1].clip_id = "b";
  clips[1].blendshape = {0.3, 0.4, 0.5};
  const auto dir = std::filesystem::temp_directory_path();
  const auto jp = (dir / "pestalk_report.json").string();
  const auto cp = (dir / "pestalk_report.csv").string();
  write_reports(clips, jp, cp);
  CHECK(std::filesystem::file_size(jp) > 0);
  CHECK(std::filesystem::file_size(cp) > 0);
  std::filesystem::remove(jp);
  std::filesystem::remove(cp);
}
