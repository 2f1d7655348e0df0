#pragma once

#include <cstdint>
#include <string>

namespace pestalk::model {

// Feature widths pinned at the encoder projections regardless of the
// internal hyperparameters below.
inline constexpr int kEmotionDim = 256;
inline constexpr int kContentDim = 256;
inline constexpr int kVoiceDim = 512;

struct ModelConfig {
  // audio front end
  int sample_rate = 16000;
  int frame_rate = 30;
  int n_mels = 80;
  int mel_window = 400;
  int mel_hop = 160;

  // internal block geometry
  int width = 256;
  int heads = 4;
  int temporal_blocks = 2;   // emotion time-domain stream
  int conformer_blocks = 2;  // emotion frequency stream
  int content_blocks = 2;
  int voice_blocks = 1;
  int decoder_blocks = 2;
  int tcn_channels = 64;
  int kan_grid = 5;
  int kan_order = 3;
  int kan_hidden = 0;  // 0 = width
  int conformer_kernel = 7;
  int ppe_period = 30;
  int style_dim = 256;      // d_s after the style projection
  int emotion_classes = 8;  // M

  std::uint64_t init_seed = 1;

  int kan_hidden_or_width() const { return kan_hidden > 0 ? kan_hidden : width; }
  void validate() const;  // throws BadDims

  std::string to_json_string() const;
  static ModelConfig from_json_string(const std::string& text);

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace pestalk::model
