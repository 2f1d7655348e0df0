#pragma once

#include <string>
#include <vector>

#include "pestalk/rng.hpp"
#include "pestalk/tape.hpp"

namespace pestalk::nn {

// Sinusoidal encoding evaluated at (t mod period); matches the usual
// transformer table but repeats every `period` frames.
Mat periodic_positional_encoding(int T, int d, int period);

// Additive attention bias decaying linearly with frame distance,
// bias_h(i, j) = -slope_h * |i - j|, slope_h = 2^(-8h/heads). Bidirectional:
// the decoders here are non-autoregressive.
struct AttentionBias {
  std::vector<double> slopes;
  std::vector<Mat> bias;  // per head, T x T
};
AttentionBias build_attention_bias(int T, int heads);

struct Linear {
  Parameter* w = nullptr;  // in x out
  Parameter* b = nullptr;  // 1 x out
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, int in, int out, Rng& rng,
         bool frozen = false);
  V operator()(Tape& t, V x) const;
};

struct LayerNorm {
  Parameter* gain = nullptr;
  Parameter* bias = nullptr;
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, int d);
  V operator()(Tape& t, V x) const;
};

struct Mhsa {
  Linear q, k, v, o;
  int heads = 1;
  Mhsa() = default;
  Mhsa(ParamStore& store, const std::string& name, int d, int heads, Rng& rng);
  // bias == nullptr runs unbiased attention
  V forward(Tape& t, V x, const AttentionBias* bias = nullptr) const;
};

struct FeedForward {  // linear -> silu -> linear
  Linear in, out;
  FeedForward() = default;
  FeedForward(ParamStore& store, const std::string& name, int d, int hidden, Rng& rng);
  V operator()(Tape& t, V x) const;
};

// Pre-norm residual transformer encoder block.
struct TransformerBlock {
  LayerNorm ln1, ln2;
  Mhsa attn;
  FeedForward ff;
  TransformerBlock() = default;
  TransformerBlock(ParamStore& store, const std::string& name, int d, int heads,
                   int ff_hidden, Rng& rng);
  V forward(Tape& t, V x, const AttentionBias* bias = nullptr) const;
};

// Layer whose edge functions are learnable B-splines plus a silu base branch.
struct KanLayer {
  Parameter* w_base = nullptr;    // out x in
  Parameter* w_spline = nullptr;  // out x in
  Parameter* coeff = nullptr;     // (in * n_basis) x out
  KanGrid grid;
  KanLayer() = default;
  KanLayer(ParamStore& store, const std::string& name, int in, int out,
           const KanGrid& grid, Rng& rng);
  V operator()(Tape& t, V x) const;
};

// Conformer block with KAN feed-forward halves:
// half FF -> biased self-attention -> depthwise conv sublayer -> half FF,
// pre-norm residuals, final layer norm.
struct ConformerBlock {
  LayerNorm ln_ff1, ln_attn, ln_conv, ln_ff2, ln_out;
  KanLayer ff1_in, ff1_out, ff2_in, ff2_out;
  Mhsa attn;
  Linear conv_in;   // d -> 2d, then GLU
  Parameter* dw_w = nullptr;  // k x d depthwise
  Parameter* dw_b = nullptr;  // 1 x d
  Linear conv_out;  // d -> d
  ConformerBlock() = default;
  ConformerBlock(ParamStore& store, const std::string& name, int d, int heads,
                 int kan_hidden, const KanGrid& grid, int conv_kernel, Rng& rng);
  V forward(Tape& t, V x, const AttentionBias& bias) const;
};

struct TcnLayerSpec {
  int kernel;
  int stride;
};

// Strided 1-D convolution stack over the raw waveform; one output column per
// overall_stride() samples.
struct Tcn {
  struct Layer {
    Parameter* w = nullptr;
    Parameter* b = nullptr;
    int kernel = 1, stride = 1;
  };
  std::vector<Layer> layers;
  Tcn() = default;
  Tcn(ParamStore& store, const std::string& name, const std::vector<TcnLayerSpec>& spec,
      int channels, Rng& rng, bool frozen = false);
  int receptive_field() const;
  int overall_stride() const;
  // waveform: L x 1 -> F x channels
  V forward(Tape& t, V waveform) const;
};

// Default stack: overall stride 160 (10 ms at 16 kHz), receptive field 425.
std::vector<TcnLayerSpec> default_tcn_spec();

}  // namespace pestalk::nn
