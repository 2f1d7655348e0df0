#pragma once

#include <optional>
#include <vector>

#include "pestalk/audio.hpp"
#include "pestalk/blocks.hpp"
#include "pestalk/config.hpp"

namespace pestalk::encoders {

// Frozen-prefix activations that never change during training (the conv
// stacks are frozen and the mel front end has no parameters); the training
// loop caches them per clip and passes them back in.
struct FrozenAudioFeatures {
  Mat emo_tcn;      // F1 x tcn_channels
  Mat mel_aligned;  // T x n_mels
  Mat content_tcn;  // F1 x tcn_channels
};

struct EmotionFeatures {
  Mat E;        // T x 256
  Mat t_stream; // T x width
  Mat f_stream; // T x width
  Vec logits;   // emotion class scores from mean-pooled E
};

struct ContentFeatures {
  Mat C;  // T x 256
};

struct VoiceprintFeature {
  Vec V;  // 512, L2-normalized
};

struct EmotionNodes {
  nn::V E, t_stream, f_stream, logits;
};

// Dual-stream emotion extractor: frozen TCN -> transformer blocks for the
// time domain, mel -> KAN-Conformer blocks for the frequency domain,
// concatenated and projected to 256 per frame.
class EmotionExtractor {
public:
  EmotionExtractor(nn::ParamStore& store, const model::ModelConfig& cfg, Rng& rng);

  EmotionNodes forward(nn::Tape& t, const signal::AudioClip& clip,
                       const FrozenAudioFeatures* cache = nullptr) const;
  EmotionFeatures extract(const signal::AudioClip& clip) const;

  Mat frozen_tcn_values(const signal::AudioClip& clip) const;
  Mat mel_aligned_values(const signal::AudioClip& clip) const;

private:
  const model::ModelConfig& cfg_;
  nn::Tcn tcn_;  // frozen
  nn::Linear tcn_proj_;
  std::vector<nn::TransformerBlock> temporal_;
  nn::Linear mel_proj_;
  std::vector<nn::ConformerBlock> conformer_;
  nn::Linear proj_;  // 2*width -> 256
  nn::Linear cls_;   // 256 -> M
};

// Content extractor: frozen conv stack, transformer, projection to 256,
// then alignment to the 30 fps frame grid.
class ContentExtractor {
public:
  ContentExtractor(nn::ParamStore& store, const model::ModelConfig& cfg, Rng& rng);

  nn::V forward(nn::Tape& t, const signal::AudioClip& clip,
                const FrozenAudioFeatures* cache = nullptr) const;
  ContentFeatures extract(const signal::AudioClip& clip) const;

  Mat frozen_tcn_values(const signal::AudioClip& clip) const;

private:
  const model::ModelConfig& cfg_;
  nn::Tcn tcn_;  // frozen
  nn::Linear tcn_proj_;
  std::vector<nn::TransformerBlock> blocks_;
  nn::Linear proj_;  // width -> 256
};

// Voiceprint extractor: conv + transformer, temporal average pooling,
// projection to 512, L2 normalization. Stands in for a pretrained speaker
// model; train() fits it with a speaker-classification head and then
// freezes it.
class VoiceprintExtractor {
public:
  VoiceprintExtractor(nn::ParamStore& store, const model::ModelConfig& cfg, Rng& rng);

  nn::V forward(nn::Tape& t, const signal::AudioClip& clip) const;
  VoiceprintFeature extract(const signal::AudioClip& clip) const;

  // the non-conv parameters, for pretraining then freezing
  std::vector<nn::Parameter*> trainable_params(nn::ParamStore& store) const;
  void freeze(nn::ParamStore& store) const;

private:
  const model::ModelConfig& cfg_;
  nn::Tcn tcn_;  // frozen
  nn::Linear tcn_proj_;
  std::vector<nn::TransformerBlock> blocks_;
  nn::Linear proj_;  // width -> 512
};

// waveform as an L x 1 column for the conv front ends; throws TooShort for
// clips under one visual frame
Mat waveform_column(const signal::AudioClip& clip);

}  // namespace pestalk::encoders
