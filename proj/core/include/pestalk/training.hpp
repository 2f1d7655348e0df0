#pragma once

#include <string>
#include <vector>

#include "pestalk/losses.hpp"
#include "pestalk/model.hpp"
#include "pestalk/synthdata.hpp"

namespace pestalk::training {

struct TrainConfig {
  int batch_size = 2;  // content-matched pairs per optimizer step
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int steps = 0;    // optimizer steps; 0 derives from epochs
  int epochs = 10;  // used when steps == 0
  int voice_pretrain_steps = 300;
  double aux_margin_weight = 0.0;  // auxiliary pairwise margin term, off by default
  losses::LossWeights weights;
  losses::DisOrientation dis_orientation = losses::DisOrientation::corrected;
  std::uint64_t seed = 1;
  model::ModelConfig model;

  std::string to_json_string() const;
  static TrainConfig from_json_string(const std::string& text);
  static TrainConfig from_json_file(const std::string& path);
};

struct StepLog {
  int step = 0;
  double pos = 0, mot = 0, cls = 0, dis = 0, total = 0, delta = 0;
};

struct TrainResult {
  std::vector<StepLog> history;
  std::string checkpoint_path;
  std::string library_path;
  std::string log_path;
};

// End-to-end optimization: voiceprint pretraining (speaker classification,
// then frozen), per-step incremental style-library updates with epoch-level
// rebuilds, stop-gradient retrieval, Adam over all non-frozen parameters.
// Writes checkpoint.bin(+.json), library.json and train_log.jsonl to out_dir.
TrainResult train(const synthdata::Manifest& manifest, const TrainConfig& config,
                  const std::string& out_dir, model::Model& model);

// Library construction from a trained model over a manifest (the
// build-library command).
esmm::StyleLibrary build_library(const synthdata::Manifest& manifest,
                                 const model::Model& model);

struct InferOptions {
  bool smooth = false;  // output Savitzky-Golay(5,2)
};

struct InferResult {
  bs::BlendshapeSequence sequence;
  esmm::StyleKey style_key;
  double style_distance = 0.0;
};

InferResult infer(const signal::AudioClip& clip, const model::Model& model,
                  const esmm::StyleLibrary& library, const InferOptions& options = {});

}  // namespace pestalk::training
