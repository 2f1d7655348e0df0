#pragma once

#include <memory>
#include <string>

#include "pestalk/config.hpp"
#include "pestalk/decoder.hpp"
#include "pestalk/encoders.hpp"
#include "pestalk/style_library.hpp"

namespace pestalk::model {

// The complete network: three extractors, the style projection, the
// partitioned decoders, and the learnable disentanglement margin.
struct Model {
  ModelConfig cfg;
  Rng init_rng;
  nn::ParamStore store;
  encoders::EmotionExtractor emotion;
  encoders::ContentExtractor content;
  encoders::VoiceprintExtractor voiceprint;
  nn::Linear style_proj;       // 768 -> style_dim
  decoder::FaceDecoder lower;  // content || style -> 32 channels
  decoder::FaceDecoder upper;  // emotion || style -> 20 channels
  nn::Parameter* delta;        // pairwise margin threshold, clamped >= 0

  explicit Model(const ModelConfig& config);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  // float32 archive + JSON sidecar (path + ".json") with the model config
  void save(const std::string& path) const;
  static std::unique_ptr<Model> load(const std::string& path);

  // value-mode projection of a retrieved 768-dim style entry
  Vec project_style(const Vec& s768) const;

  // retrieval with the learned projection attached
  esmm::StyleVector retrieve(const Vec& e_pooled, const Vec& r,
                             const esmm::StyleLibrary& library) const;
};

}  // namespace pestalk::model
