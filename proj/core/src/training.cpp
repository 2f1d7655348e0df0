#include "pestalk/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "pestalk/errors.hpp"
#include "pestalk/rng.hpp"
#include "pestalk/smoothing.hpp"

namespace pestalk::training {

namespace fs = std::filesystem;
using nlohmann::json;
using nn::Tape;
using nn::V;

std::string TrainConfig::to_json_string() const {
  json j;
  j["batch_size"] = batch_size;
  j["learning_rate"] = learning_rate;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["steps"] = steps;
  j["epochs"] = epochs;
  j["voice_pretrain_steps"] = voice_pretrain_steps;
  j["aux_margin_weight"] = aux_margin_weight;
  j["weights"] = {{"pos", weights.pos},
                  {"mot", weights.mot},
                  {"cls", weights.cls},
                  {"dis", weights.dis}};
  j["dis_orientation"] =
      dis_orientation == losses::DisOrientation::corrected ? "corrected" : "literal";
  j["seed"] = seed;
  j["model"] = json::parse(model.to_json_string());
  return j.dump(1);
}

TrainConfig TrainConfig::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError("train config: parse error at byte " + std::to_string(e.byte));
  }
  TrainConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.steps = j.value("steps", c.steps);
  c.epochs = j.value("epochs", c.epochs);
  c.voice_pretrain_steps = j.value("voice_pretrain_steps", c.voice_pretrain_steps);
  c.aux_margin_weight = j.value("aux_margin_weight", c.aux_margin_weight);
  if (j.contains("weights")) {
    const auto& w = j["weights"];
    c.weights.pos = w.value("pos", c.weights.pos);
    c.weights.mot = w.value("mot", c.weights.mot);
    c.weights.cls = w.value("cls", c.weights.cls);
    c.weights.dis = w.value("dis", c.weights.dis);
  }
  const std::string ori = j.value("dis_orientation", std::string("corrected"));
  if (ori != "corrected" && ori != "literal") {
    throw FormatError("dis_orientation must be corrected or literal");
  }
  c.dis_orientation = ori == "corrected" ? losses::DisOrientation::corrected
                                         : losses::DisOrientation::literal;
  c.seed = j.value("seed", c.seed);
  if (j.contains("model")) c.model = model::ModelConfig::from_json_string(j["model"].dump());
  if (c.batch_size < 1 || c.learning_rate <= 0) throw BadDims("bad train config");
  return c;
}

TrainConfig TrainConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_string(text);
}

namespace {

struct ClipData {
  signal::AudioClip clip;
  Mat gt_lower, gt_upper;
  encoders::FrozenAudioFeatures frozen;
  Vec voiceprint;  // filled after the voiceprint phase
  int speaker = 0;
  int emotion = 0;
  std::string speaker_id;
};

std::vector<ClipData> load_clips(const synthdata::Manifest& manifest,
                                 const model::Model& model,
                                 std::vector<std::string>& speakers) {
  const auto partition = bs::default_partition();
  std::vector<ClipData> out;
  out.reserve(manifest.records.size());
  for (const auto& rec : manifest.records) {
    ClipData cd;
    cd.clip = signal::load_wav(manifest.wav_file(rec));
    cd.clip.frame_rate = model.cfg.frame_rate;
    const auto gt = bs::read_blendshape_csv(manifest.blendshape_file(rec));
    if (gt.frames() != cd.clip.frame_count()) {
      throw BadDims("label frame count differs from audio for " + rec.clip_id);
    }
    auto [lo, up] = decoder::split(gt, partition);
    cd.gt_lower = std::move(lo);
    cd.gt_upper = std::move(up);
    cd.frozen.emo_tcn = model.emotion.frozen_tcn_values(cd.clip);
    cd.frozen.mel_aligned = model.emotion.mel_aligned_values(cd.clip);
    cd.frozen.content_tcn = model.content.frozen_tcn_values(cd.clip);
    cd.emotion = rec.emotion_id;
    cd.speaker_id = rec.speaker_id;
    if (std::find(speakers.begin(), speakers.end(), rec.speaker_id) == speakers.end()) {
      speakers.push_back(rec.speaker_id);
    }
    cd.speaker = static_cast<int>(
        std::find(speakers.begin(), speakers.end(), rec.speaker_id) - speakers.begin());
    out.push_back(std::move(cd));
  }
  return out;
}

Vec pooled_emotion_value(const model::Model& model, const ClipData& cd) {
  Tape t(Tape::Grad::off);
  const auto nodes = model.emotion.forward(t, cd.clip, &cd.frozen);
  return t.val(nodes.E).colwise().mean().transpose();
}

esmm::StyleLibrary rebuild_library(const synthdata::Manifest& manifest,
                                   const model::Model& model,
                                   const std::vector<ClipData>& clips,
                                   const std::map<std::string, Vec>& bases) {
  esmm::StyleLibrary lib;
  lib.emotion_names = manifest.emotion_names;
  for (const auto& [speaker, r] : bases) lib.set_base_style(speaker, r);
  for (const auto& cd : clips) {
    lib.add_sample(cd.speaker_id, cd.emotion, pooled_emotion_value(model, cd));
  }
  return lib;
}

void shuffle_indices(std::vector<int>& idx, Rng& rng) {
  for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
    std::swap(idx[i], idx[j]);
  }
}

std::vector<Mat> snapshot_params(nn::ParamStore& store) {
  std::vector<Mat> out;
  for (auto* p : store.all()) out.push_back(p->value);
  return out;
}

void restore_params(nn::ParamStore& store, const std::vector<Mat>& snap) {
  const auto all = store.all();
  for (std::size_t i = 0; i < all.size(); ++i) all[i]->value = snap[i];
}

}  // namespace

TrainResult train(const synthdata::Manifest& manifest, const TrainConfig& config,
                  const std::string& out_dir, model::Model& model) {
  if (static_cast<int>(manifest.emotion_names.size()) != model.cfg.emotion_classes) {
    throw IncompatibleCheckpoint("model emotion_classes differs from the manifest");
  }
  fs::create_directories(out_dir);
  Rng rng(mix_seed(config.seed, 0x7141));

  std::vector<std::string> speakers;
  auto clips = load_clips(manifest, model, speakers);
  const auto pair_set = synthdata::iterate_pairs(manifest);
  if (pair_set.pairs.empty()) throw BadPairing("manifest yields no content-matched pairs");

  // ---- voiceprint phase: speaker classification, then freeze -------------
  {
    nn::ParamStore head_store;
    Rng head_rng(mix_seed(config.seed, 0x7EAD));
    nn::Linear head(head_store, "voice_head", model::kVoiceDim,
                    static_cast<int>(speakers.size()), head_rng);
    auto params = model.voiceprint.trainable_params(model.store);
    for (auto* p : head_store.all()) params.push_back(p);
    nn::Adam opt(params, {1e-3, config.beta1, config.beta2, 1e-8});

    std::vector<int> order(clips.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::size_t cursor = order.size();  // trigger initial shuffle
    for (int step = 0; step < config.voice_pretrain_steps; ++step) {
      Tape t;
      std::vector<V> logits;
      std::vector<int> labels;
      for (int b = 0; b < 4; ++b) {
        if (cursor >= order.size()) {
          shuffle_indices(order, rng);
          cursor = 0;
        }
        const ClipData& cd = clips[order[cursor++]];
        V v = model.voiceprint.forward(t, cd.clip);
        logits.push_back(head(t, v));
        labels.push_back(cd.speaker);
      }
      for (auto* p : params) p->zero_grad();
      t.backward(losses::classification_loss(t, logits, labels));
      opt.step();
    }
    model.voiceprint.freeze(model.store);
  }

  // voiceprints and per-speaker base styles are fixed from here on
  std::map<std::string, std::vector<Vec>> by_speaker;
  for (auto& cd : clips) {
    cd.voiceprint = model.voiceprint.extract(cd.clip).V;
    by_speaker[cd.speaker_id].push_back(cd.voiceprint);
  }
  const auto bases = esmm::build_base_styles(by_speaker);

  auto library = rebuild_library(manifest, model, clips, bases);

  // ---- main loop ---------------------------------------------------------
  nn::Adam opt(model.store.trainable(),
               {config.learning_rate, config.beta1, config.beta2, 1e-8});
  const int pairs_per_epoch =
      static_cast<int>((pair_set.pairs.size() + config.batch_size - 1) / config.batch_size);
  const int total_steps =
      config.steps > 0 ? config.steps : config.epochs * pairs_per_epoch;

  std::ofstream log(fs::path(out_dir) / "train_log.jsonl");
  if (!log) throw IoError("cannot open train_log.jsonl in " + out_dir);

  TrainResult result;
  result.checkpoint_path = (fs::path(out_dir) / "checkpoint.bin").string();
  result.library_path = (fs::path(out_dir) / "library.json").string();
  result.log_path = (fs::path(out_dir) / "train_log.jsonl").string();

  std::vector<int> order(pair_set.pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::size_t cursor = order.size();

  auto last_good = snapshot_params(model.store);
  const auto partition_frames = [](const ClipData& cd) {
    return static_cast<double>(cd.gt_lower.rows());
  };
  (void)partition_frames;

  for (int step = 0; step < total_steps; ++step) {
    if (cursor >= order.size()) {
      shuffle_indices(order, rng);
      cursor = 0;
      if (step > 0) library = rebuild_library(manifest, model, clips, bases);
    }

    Tape t;
    std::vector<V> logits, pooled_c_a, pooled_c_b, pooled_e_a, pooled_e_b;
    std::vector<int> labels;
    V pos_acc, mot_acc;
    int n_clips = 0;

    for (int b = 0; b < config.batch_size; ++b) {
      const auto& pr = pair_set.pairs[order[(cursor + b) % order.size()]];
      V pair_pooled_c[2], pair_pooled_e[2];
      for (int arm = 0; arm < 2; ++arm) {
        ClipData& cd = clips[arm == 0 ? pr.neutral : pr.emotional];
        const auto emo = model.emotion.forward(t, cd.clip, &cd.frozen);
        V cont = model.content.forward(t, cd.clip, &cd.frozen);
        V pooled_e = t.mean_rows(emo.E);
        V pooled_c = t.mean_rows(cont);

        // running-feature update, then lookup (stop-gradient on the entry)
        library.add_sample(cd.speaker_id, cd.emotion,
                           t.val(pooled_e).row(0).transpose());
        const auto sv = esmm::retrieve_style(t.val(pooled_e).row(0).transpose(),
                                             cd.voiceprint, library);
        V style = model.style_proj(t, t.constant(sv.S.transpose()));
        style = t.repeat_row(style, cd.clip.frame_count());

        V lower = model.lower.forward(t, cont, style);
        V upper = model.upper.forward(t, emo.E, style);

        V pos = t.add(losses::position_loss(t, lower, t.constant(cd.gt_lower)),
                      losses::position_loss(t, upper, t.constant(cd.gt_upper)));
        V mot = t.add(losses::motion_loss(t, lower, t.constant(cd.gt_lower)),
                      losses::motion_loss(t, upper, t.constant(cd.gt_upper)));
        pos_acc = n_clips == 0 ? pos : t.add(pos_acc, pos);
        mot_acc = n_clips == 0 ? mot : t.add(mot_acc, mot);
        ++n_clips;

        logits.push_back(emo.logits);
        labels.push_back(cd.emotion);
        pair_pooled_c[arm] = pooled_c;
        pair_pooled_e[arm] = pooled_e;
      }
      pooled_c_a.push_back(pair_pooled_c[0]);
      pooled_c_b.push_back(pair_pooled_c[1]);
      pooled_e_a.push_back(pair_pooled_e[0]);
      pooled_e_b.push_back(pair_pooled_e[1]);
    }
    cursor += config.batch_size;

    V pos = t.scale(pos_acc, 1.0 / n_clips);
    V mot = t.scale(mot_acc, 1.0 / n_clips);
    V cls = losses::classification_loss(t, logits, labels);
    V dis = losses::disentanglement_loss(t, pooled_c_a, pooled_c_b, pooled_e_a,
                                         pooled_e_b, config.dis_orientation);
    V total = losses::total_loss(t, pos, mot, cls, dis, config.weights);
    if (config.aux_margin_weight > 0.0) {
      V margin = losses::pairwise_margin_loss(t, pooled_c_a, pooled_c_b, pooled_e_a,
                                              pooled_e_b, t.param(*model.delta));
      total = t.add(total, t.scale(margin, config.aux_margin_weight));
    }

    StepLog entry;
    entry.step = step;
    entry.pos = t.val(pos)(0, 0);
    entry.mot = t.val(mot)(0, 0);
    entry.cls = t.val(cls)(0, 0);
    entry.dis = t.val(dis)(0, 0);
    entry.total = t.val(total)(0, 0);
    entry.delta = model.delta->value(0, 0);

    if (!std::isfinite(entry.total)) {
      restore_params(model.store, last_good);
      model.save(result.checkpoint_path);
      esmm::persist_library(library, result.library_path);
      throw NumericalError("non-finite loss at step " + std::to_string(step) +
                           "; last-good checkpoint written to " +
                           result.checkpoint_path);
    }

    model.store.zero_grads();
    t.backward(total);
    opt.step();
    // margin stays a valid hinge threshold
    model.delta->value(0, 0) = std::max(0.0, model.delta->value(0, 0));
    model.delta->snap_f32();
    last_good = snapshot_params(model.store);

    json jl;
    jl["step"] = entry.step;
    jl["L_pos"] = entry.pos;
    jl["L_mot"] = entry.mot;
    jl["L_cls"] = entry.cls;
    jl["L_dis"] = entry.dis;
    jl["L_total"] = entry.total;
    jl["delta"] = entry.delta;
    log << jl.dump() << "\n";
    result.history.push_back(entry);
  }

  // final library from the trained encoders
  library = rebuild_library(manifest, model, clips, bases);
  model.save(result.checkpoint_path);
  esmm::persist_library(library, result.library_path);
  if (!log) throw IoError("short write to train_log.jsonl");
  return result;
}

esmm::StyleLibrary build_library(const synthdata::Manifest& manifest,
                                 const model::Model& model) {
  std::map<std::string, std::vector<Vec>> by_speaker;
  std::vector<std::pair<const synthdata::ManifestRecord*, Vec>> voiceprints;
  for (const auto& rec : manifest.records) {
    auto clip = signal::load_wav(manifest.wav_file(rec));
    clip.frame_rate = model.cfg.frame_rate;
    Vec v = model.voiceprint.extract(clip).V;
    by_speaker[rec.speaker_id].push_back(v);
  }
  const auto bases = esmm::build_base_styles(by_speaker);

  esmm::StyleLibrary lib;
  lib.emotion_names = manifest.emotion_names;
  for (const auto& [speaker, r] : bases) lib.set_base_style(speaker, r);
  for (const auto& rec : manifest.records) {
    auto clip = signal::load_wav(manifest.wav_file(rec));
    clip.frame_rate = model.cfg.frame_rate;
    const auto ef = model.emotion.extract(clip);
    lib.add_sample(rec.speaker_id, rec.emotion_id, ef.E.colwise().mean().transpose());
  }
  return lib;
}

InferResult infer(const signal::AudioClip& clip, const model::Model& model,
                  const esmm::StyleLibrary& library, const InferOptions& options) {
  if (static_cast<int>(library.emotion_names.size()) != model.cfg.emotion_classes) {
    throw IncompatibleCheckpoint("library emotion set differs from the checkpoint");
  }
  const auto ef = model.emotion.extract(clip);
  const auto vf = model.voiceprint.extract(clip);
  const auto sv = model.retrieve(ef.E.colwise().mean().transpose(), vf.V, library);
  const auto cf = model.content.extract(clip);

  const int T = clip.frame_count();
  Mat style(T, sv.projected.size());
  style.rowwise() = sv.projected.transpose();

  const Mat lower = model.lower.decode(cf.C, style);
  const Mat upper = model.upper.decode(ef.E, style);
  auto seq = decoder::assemble(lower, upper, bs::default_partition());
  if (options.smooth && seq.frames() >= 5) {
    seq.coeffs = signal::savgol_smooth(seq.coeffs, 5, 2).cwiseMax(0.0).cwiseMin(1.0);
  }
  InferResult out;
  out.sequence = std::move(seq);
  out.style_key = sv.key;
  out.style_distance = sv.distance;
  return out;
}

}  // namespace pestalk::training
