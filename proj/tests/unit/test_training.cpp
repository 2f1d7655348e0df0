#include <doctest.h>

#include <filesystem>

#include "pestalk/errors.hpp"
#include "pestalk/metrics.hpp"
#include "pestalk/model.hpp"
#include "pestalk/training.hpp"

using namespace pestalk;
using namespace pestalk::training;

namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

model::ModelConfig toy_model() {
  model::ModelConfig cfg;
  cfg.width = 24;
  cfg.heads = 2;
  cfg.temporal_blocks = 1;
  cfg.conformer_blocks = 1;
  cfg.content_blocks = 1;
  cfg.voice_blocks = 1;
  cfg.decoder_blocks = 1;
  cfg.tcn_channels = 16;
  cfg.n_mels = 40;
  cfg.style_dim = 64;
  cfg.emotion_classes = 2;
  cfg.init_seed = 5;
  return cfg;
}

TrainConfig toy_train() {
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.steps = 40;
  cfg.voice_pretrain_steps = 60;
  cfg.seed = 5;
  cfg.model = toy_model();
  return cfg;
}

synthdata::Manifest toy_corpus(const fs::path& dir, std::uint64_t seed = 42) {
  synthdata::CorpusSpec spec;
  spec.speakers = 2;
  spec.emotions = 2;
  spec.clips_per_emotion = 2;
  spec.min_frames = 18;
  spec.max_frames = 30;
  spec.seed = seed;
  return synthdata::generate_corpus(spec, dir.string());
}

}  // namespace

TEST_CASE("train: loss decreases, conv stays frozen, runs are deterministic") {
  const auto corpus_dir = temp_dir("pestalk_train_corpus");
  auto manifest = toy_corpus(corpus_dir);
  const auto cfg = toy_train();

  const auto out1 = temp_dir("pestalk_train_run1");
  model::Model m1(cfg.model);
  const Mat conv_before = m1.store.find("content.tcn.conv0.w")->value;
  auto r1 = train(manifest, cfg, out1.string(), m1);

  REQUIRE(r1.history.size() == 40);
  CHECK(r1.history.back().total < r1.history.front().total);
  CHECK((m1.store.find("content.tcn.conv0.w")->value - conv_before)
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK((m1.store.find("emotion.tcn.conv0.w")->grad).cwiseAbs().maxCoeff() == 0.0);
  CHECK(fs::exists(r1.checkpoint_path));
  CHECK(fs::exists(r1.library_path));
  CHECK(fs::exists(r1.log_path));

  // identical seed -> identical loss history
  const auto out2 = temp_dir("pestalk_train_run2");
  model::Model m2(cfg.model);
  auto r2 = train(manifest, cfg, out2.string(), m2);
  REQUIRE(r2.history.size() == r1.history.size());
  for (std::size_t i = 0; i < r1.history.size(); ++i) {
    CHECK(r1.history[i].total == r2.history[i].total);
  }

  // checkpoint round trip: save -> load -> infer is bit-identical
  auto library = esmm::load_library(r1.library_path);
  auto clip = signal::load_wav(manifest.wav_file(manifest.records[0]));
  auto direct = infer(clip, m1, library);
  auto loaded = model::Model::load(r1.checkpoint_path);
  auto from_disk = infer(clip, *loaded, library);
  CHECK((direct.sequence.coeffs - from_disk.sequence.coeffs).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK(direct.style_key == from_disk.style_key);

  // voiceprint separates the two synthetic speakers after the pretrain phase
  std::vector<Vec> vp;
  std::vector<std::string> speaker;
  for (const auto& rec : manifest.records) {
    auto c = signal::load_wav(manifest.wav_file(rec));
    vp.push_back(m1.voiceprint.extract(c).V);
    speaker.push_back(rec.speaker_id);
  }
  int good = 0, total = 0;
  for (std::size_t a = 0; a < vp.size(); ++a) {
    for (std::size_t p = 0; p < vp.size(); ++p) {
      for (std::size_t n = 0; n < vp.size(); ++n) {
        if (a == p || speaker[a] != speaker[p] || speaker[a] == speaker[n]) continue;
        ++total;
        if (vp[a].dot(vp[p]) > vp[a].dot(vp[n])) ++good;
      }
    }
  }
  REQUIRE(total > 0);
  CHECK(static_cast<double>(good) / total >= 0.9);

  fs::remove_all(corpus_dir);
  fs::remove_all(out1);
  fs::remove_all(out2);
}

TEST_CASE("infer: shape, determinism, smoothing flag") {
  const auto corpus_dir = temp_dir("pestalk_infer_corpus");
  auto manifest = toy_corpus(corpus_dir, 17);
  auto cfg = toy_train();
  cfg.steps = 6;
  cfg.voice_pretrain_steps = 10;

  const auto out = temp_dir("pestalk_infer_run");
  model::Model m(cfg.model);
  train(manifest, cfg, out.string(), m);
  auto library = esmm::load_library((out / "library.json").string());

  auto clip = signal::load_wav(manifest.wav_file(manifest.records[1]));
  auto a = infer(clip, m, library);
  CHECK(a.sequence.frames() == clip.frame_count());
  CHECK(a.sequence.coeffs.cols() == bs::kNumChannels);
  CHECK(a.sequence.coeffs.minCoeff() >= 0.0);
  CHECK(a.sequence.coeffs.maxCoeff() <= 1.0);

  auto b = infer(clip, m, library);
  CHECK((a.sequence.coeffs - b.sequence.coeffs).cwiseAbs().maxCoeff() == 0.0);

  InferOptions smooth;
  smooth.smooth = true;
  auto c = infer(clip, m, library, smooth);
  CHECK((c.sequence.coeffs - a.sequence.coeffs).cwiseAbs().maxCoeff() > 0.0);
  CHECK(c.sequence.coeffs.minCoeff() >= 0.0);
  CHECK(c.sequence.coeffs.maxCoeff() <= 1.0);

  // incompatible library: emotion set differs from the checkpoint
  esmm::StyleLibrary wrong = library;
  wrong.emotion_names.push_back("extra");
  CHECK_THROWS_AS(infer(clip, m, wrong), IncompatibleCheckpoint);

  fs::remove_all(corpus_dir);
  fs::remove_all(out);
}

TEST_CASE("train: config json round trip") {
  auto cfg = toy_train();
  cfg.weights.dis = 0.25;
  cfg.dis_orientation = losses::DisOrientation::literal;
  auto back = TrainConfig::from_json_string(cfg.to_json_string());
  CHECK(back.batch_size == cfg.batch_size);
  CHECK(back.steps == cfg.steps);
  CHECK(back.weights.dis == cfg.weights.dis);
  CHECK(back.dis_orientation == losses::DisOrientation::literal);
  CHECK(back.model == cfg.model);
}

TEST_CASE("train: non-finite loss aborts with a last-good checkpoint") {
  const auto corpus_dir = temp_dir("pestalk_nan_corpus");
  auto manifest = toy_corpus(corpus_dir, 29);
  auto cfg = toy_train();
  cfg.steps = 5;
  cfg.voice_pretrain_steps = 4;
  cfg.weights.pos = 1e308;  // overflows the weighted sum on the first step
  model::Model m(cfg.model);
  const auto out = temp_dir("pestalk_nan_run");
  CHECK_THROWS_AS(train(manifest, cfg, out.string(), m), NumericalError);
  CHECK(fs::exists(out / "checkpoint.bin"));
  CHECK(model::Model::load((out / "checkpoint.bin").string()) != nullptr);
  fs::remove_all(corpus_dir);
  fs::remove_all(out);
}

TEST_CASE("train: manifest without pairs is rejected") {
  const auto corpus_dir = temp_dir("pestalk_nopair_corpus");
  auto manifest = toy_corpus(corpus_dir, 23);
  // drop neutral clips
  synthdata::Manifest no_neutral = manifest;
  no_neutral.records.clear();
  for (const auto& r : manifest.records) {
    if (r.emotion_id != manifest.neutral_id()) no_neutral.records.push_back(r);
  }
  auto cfg = toy_train();
  model::Model m(cfg.model);
  const auto out = temp_dir("pestalk_nopair_run");
  CHECK_THROWS_AS(train(no_neutral, cfg, out.string(), m), BadPairing);
  fs::remove_all(corpus_dir);
  fs::remove_all(out);
}
