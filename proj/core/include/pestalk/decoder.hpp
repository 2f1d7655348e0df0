#pragma once

#include <vector>

#include "pestalk/blendshape.hpp"
#include "pestalk/blocks.hpp"
#include "pestalk/config.hpp"

namespace pestalk::decoder {

// One half of the partitioned decoder: fuse features with the retrieved
// style, add periodic positional encoding, run distance-biased attention
// blocks, and squash a linear head to [0,1]. The lower decoder sees content,
// the upper decoder sees emotion; neither sees the other's stream.
class FaceDecoder {
public:
  FaceDecoder(nn::ParamStore& store, const std::string& name,
              const model::ModelConfig& cfg, int feature_dim, int out_channels,
              Rng& rng);

  // features: T x feature_dim, style: T x style_dim -> T x out_channels
  nn::V forward(nn::Tape& t, nn::V features, nn::V style) const;
  Mat decode(const Mat& features, const Mat& style) const;

private:
  const model::ModelConfig& cfg_;
  int out_channels_;
  nn::Linear fuse_;
  std::vector<nn::TransformerBlock> blocks_;
  nn::LayerNorm ln_out_;
  nn::Linear head_;
};

// Scatter the lower/upper channel groups into their named positions.
bs::BlendshapeSequence assemble(const Mat& lower, const Mat& upper,
                                const bs::Partition& partition);

// Inverse of assemble.
std::pair<Mat, Mat> split(const bs::BlendshapeSequence& seq,
                          const bs::Partition& partition);

}  // namespace pestalk::decoder
