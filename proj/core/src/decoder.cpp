#include "pestalk/decoder.hpp"

#include "pestalk/errors.hpp"

namespace pestalk::decoder {

using nn::Tape;
using nn::V;

FaceDecoder::FaceDecoder(nn::ParamStore& store, const std::string& name,
                         const model::ModelConfig& cfg, int feature_dim,
                         int out_channels, Rng& rng)
    : cfg_(cfg),
      out_channels_(out_channels),
      fuse_(store, name + ".fuse", feature_dim + cfg.style_dim, cfg.width, rng),
      ln_out_(store, name + ".ln_out", cfg.width),
      head_(store, name + ".head", cfg.width, out_channels, rng) {
  for (int b = 0; b < cfg.decoder_blocks; ++b) {
    blocks_.emplace_back(store, name + ".block" + std::to_string(b), cfg.width,
                         cfg.heads, 2 * cfg.width, rng);
  }
}

V FaceDecoder::forward(Tape& t, V features, V style) const {
  if (t.val(features).rows() != t.val(style).rows()) {
    throw BadDims("decoder inputs must be frame-aligned");
  }
  const int T = static_cast<int>(t.val(features).rows());
  V x = fuse_(t, t.concat_cols(features, style));
  x = t.add_const(x, nn::periodic_positional_encoding(T, cfg_.width, cfg_.ppe_period));
  const auto bias = nn::build_attention_bias(T, cfg_.heads);
  for (const auto& block : blocks_) x = block.forward(t, x, &bias);
  x = ln_out_(t, x);
  return t.sigmoid(head_(t, x));
}

Mat FaceDecoder::decode(const Mat& features, const Mat& style) const {
  Tape t(Tape::Grad::off);
  return t.val(forward(t, t.constant(features), t.constant(style)));
}

bs::BlendshapeSequence assemble(const Mat& lower, const Mat& upper,
                                const bs::Partition& partition) {
  partition.validate();
  if (lower.rows() != upper.rows()) throw BadDims("lower/upper frame mismatch");
  if (lower.cols() != bs::kNumLower || upper.cols() != bs::kNumUpper) {
    throw BadDims("expected 32 lower and 20 upper channels");
  }
  bs::BlendshapeSequence seq;
  seq.coeffs = Mat::Zero(lower.rows(), bs::kNumChannels);
  for (int c = 0; c < bs::kNumLower; ++c) {
    seq.coeffs.col(partition.lower[c]) = lower.col(c);
  }
  for (int c = 0; c < bs::kNumUpper; ++c) {
    seq.coeffs.col(partition.upper[c]) = upper.col(c);
  }
  return seq;
}

std::pair<Mat, Mat> split(const bs::BlendshapeSequence& seq,
                          const bs::Partition& partition) {
  partition.validate();
  if (seq.coeffs.cols() != bs::kNumChannels) throw BadDims("expected 52 channels");
  Mat lower(seq.coeffs.rows(), bs::kNumLower);
  Mat upper(seq.coeffs.rows(), bs::kNumUpper);
  for (int c = 0; c < bs::kNumLower; ++c) lower.col(c) = seq.coeffs.col(partition.lower[c]);
  for (int c = 0; c < bs::kNumUpper; ++c) upper.col(c) = seq.coeffs.col(partition.upper[c]);
  return {std::move(lower), std::move(upper)};
}

}  // namespace pestalk::decoder
