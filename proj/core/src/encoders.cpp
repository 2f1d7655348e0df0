#include "pestalk/encoders.hpp"

#include "pestalk/errors.hpp"
#include "pestalk/mel.hpp"
#include "pestalk/smoothing.hpp"

namespace pestalk::encoders {

using nn::Tape;
using nn::V;

Mat waveform_column(const signal::AudioClip& clip) {
  if (static_cast<int>(clip.samples.size()) < clip.samples_per_frame()) {
    throw TooShort("clip shorter than one visual frame");
  }
  Mat w(static_cast<int>(clip.samples.size()), 1);
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    w(static_cast<int>(i), 0) = clip.samples[i];
  }
  return w;
}

namespace {

nn::KanGrid kan_grid(const model::ModelConfig& cfg) {
  nn::KanGrid g;
  g.points = cfg.kan_grid;
  g.order = cfg.kan_order;
  return g;
}

}  // namespace

// ---------------------------------------------------------------------------
// EmotionExtractor

EmotionExtractor::EmotionExtractor(nn::ParamStore& store,
                                   const model::ModelConfig& cfg, Rng& rng)
    : cfg_(cfg),
      tcn_(store, "emotion.tcn", nn::default_tcn_spec(), cfg.tcn_channels, rng,
           /*frozen=*/true),
      tcn_proj_(store, "emotion.tcn_proj", cfg.tcn_channels, cfg.width, rng),
      mel_proj_(store, "emotion.mel_proj", cfg.n_mels, cfg.width, rng),
      proj_(store, "emotion.proj", 2 * cfg.width, model::kEmotionDim, rng),
      cls_(store, "emotion.cls", model::kEmotionDim, cfg.emotion_classes, rng) {
  for (int b = 0; b < cfg.temporal_blocks; ++b) {
    temporal_.emplace_back(store, "emotion.temporal" + std::to_string(b), cfg.width,
                           cfg.heads, 2 * cfg.width, rng);
  }
  for (int b = 0; b < cfg.conformer_blocks; ++b) {
    conformer_.emplace_back(store, "emotion.conformer" + std::to_string(b), cfg.width,
                            cfg.heads, cfg.kan_hidden_or_width(), kan_grid(cfg),
                            cfg.conformer_kernel, rng);
  }
}

Mat EmotionExtractor::frozen_tcn_values(const signal::AudioClip& clip) const {
  Tape t(Tape::Grad::off);
  return t.val(tcn_.forward(t, t.constant(waveform_column(clip))));
}

Mat EmotionExtractor::mel_aligned_values(const signal::AudioClip& clip) const {
  const auto mel =
      signal::mel_spectrogram(clip, cfg_.n_mels, cfg_.mel_window, cfg_.mel_hop);
  return signal::align_frames(mel.frames, clip.frame_count());
}

EmotionNodes EmotionExtractor::forward(Tape& t, const signal::AudioClip& clip,
                                       const FrozenAudioFeatures* cache) const {
  const int T = clip.frame_count();

  // time-domain stream
  V conv = cache ? t.constant(cache->emo_tcn)
                 : tcn_.forward(t, t.constant(waveform_column(clip)));
  V ts = tcn_proj_(t, conv);
  for (const auto& block : temporal_) ts = block.forward(t, ts);
  ts = t.interp_rows(ts, T);

  // frequency stream
  V mel = t.constant(cache ? cache->mel_aligned : mel_aligned_values(clip));
  V fs = mel_proj_(t, mel);
  const auto bias = nn::build_attention_bias(T, cfg_.heads);
  for (const auto& block : conformer_) fs = block.forward(t, fs, bias);

  EmotionNodes out;
  out.t_stream = ts;
  out.f_stream = fs;
  out.E = proj_(t, t.concat_cols(ts, fs));
  out.logits = cls_(t, t.mean_rows(out.E));
  return out;
}

EmotionFeatures EmotionExtractor::extract(const signal::AudioClip& clip) const {
  Tape t(Tape::Grad::off);
  const auto nodes = forward(t, clip);
  EmotionFeatures out;
  out.E = t.val(nodes.E);
  out.t_stream = t.val(nodes.t_stream);
  out.f_stream = t.val(nodes.f_stream);
  out.logits = t.val(nodes.logits).row(0).transpose();
  return out;
}

// ---------------------------------------------------------------------------
// ContentExtractor

ContentExtractor::ContentExtractor(nn::ParamStore& store,
                                   const model::ModelConfig& cfg, Rng& rng)
    : cfg_(cfg),
      tcn_(store, "content.tcn", nn::default_tcn_spec(), cfg.tcn_channels, rng,
           /*frozen=*/true),
      tcn_proj_(store, "content.tcn_proj", cfg.tcn_channels, cfg.width, rng),
      proj_(store, "content.proj", cfg.width, model::kContentDim, rng) {
  for (int b = 0; b < cfg.content_blocks; ++b) {
    blocks_.emplace_back(store, "content.block" + std::to_string(b), cfg.width,
                         cfg.heads, 2 * cfg.width, rng);
  }
}

Mat ContentExtractor::frozen_tcn_values(const signal::AudioClip& clip) const {
  Tape t(Tape::Grad::off);
  return t.val(tcn_.forward(t, t.constant(waveform_column(clip))));
}

V ContentExtractor::forward(Tape& t, const signal::AudioClip& clip,
                            const FrozenAudioFeatures* cache) const {
  V conv = cache ? t.constant(cache->content_tcn)
                 : tcn_.forward(t, t.constant(waveform_column(clip)));
  V x = tcn_proj_(t, conv);
  for (const auto& block : blocks_) x = block.forward(t, x);
  x = proj_(t, x);
  return t.interp_rows(x, clip.frame_count());
}

ContentFeatures ContentExtractor::extract(const signal::AudioClip& clip) const {
  Tape t(Tape::Grad::off);
  return ContentFeatures{t.val(forward(t, clip))};
}

// ---------------------------------------------------------------------------
// VoiceprintExtractor

VoiceprintExtractor::VoiceprintExtractor(nn::ParamStore& store,
                                         const model::ModelConfig& cfg, Rng& rng)
    : cfg_(cfg),
      tcn_(store, "voice.tcn", nn::default_tcn_spec(), cfg.tcn_channels, rng,
           /*frozen=*/true),
      tcn_proj_(store, "voice.tcn_proj", cfg.tcn_channels, cfg.width, rng),
      proj_(store, "voice.proj", cfg.width, model::kVoiceDim, rng) {
  for (int b = 0; b < cfg.voice_blocks; ++b) {
    blocks_.emplace_back(store, "voice.block" + std::to_string(b), cfg.width,
                         cfg.heads, 2 * cfg.width, rng);
  }
}

V VoiceprintExtractor::forward(Tape& t, const signal::AudioClip& clip) const {
  V x = tcn_.forward(t, t.constant(waveform_column(clip)));
  x = tcn_proj_(t, x);
  for (const auto& block : blocks_) x = block.forward(t, x);
  x = proj_(t, t.mean_rows(x));
  return t.l2_normalize_rows(x);
}

VoiceprintFeature VoiceprintExtractor::extract(const signal::AudioClip& clip) const {
  Tape t(Tape::Grad::off);
  return VoiceprintFeature{t.val(forward(t, clip)).row(0).transpose()};
}

std::vector<nn::Parameter*> VoiceprintExtractor::trainable_params(
    nn::ParamStore& store) const {
  std::vector<nn::Parameter*> out;
  for (auto* p : store.all()) {
    if (p->name.rfind("voice.", 0) == 0 && !p->frozen) out.push_back(p);
  }
  return out;
}

void VoiceprintExtractor::freeze(nn::ParamStore& store) const {
  for (auto* p : store.all()) {
    if (p->name.rfind("voice.", 0) == 0) p->frozen = true;
  }
}

}  // namespace pestalk::encoders
