#include "pestalk/blocks.hpp"

#include <cmath>

#include "pestalk/errors.hpp"

namespace pestalk::nn {

Mat periodic_positional_encoding(int T, int d, int period) {
  if (d % 2 != 0) throw BadDims("encoding width must be even");
  if (period < 1) throw BadDims("period must be >= 1");
  Mat out(T, d);
  for (int t = 0; t < T; ++t) {
    const double tp = static_cast<double>(t % period);
    for (int i = 0; i < d / 2; ++i) {
      const double denom = std::pow(10000.0, 2.0 * i / d);
      out(t, 2 * i) = std::sin(tp / denom);
      out(t, 2 * i + 1) = std::cos(tp / denom);
    }
  }
  return out;
}

AttentionBias build_attention_bias(int T, int heads) {
  if (heads < 1) throw BadDims("heads must be >= 1");
  AttentionBias ab;
  ab.slopes.resize(heads);
  ab.bias.resize(heads);
  for (int h = 0; h < heads; ++h) {
    ab.slopes[h] = std::pow(2.0, -8.0 * (h + 1) / heads);
    Mat m(T, T);
    for (int i = 0; i < T; ++i) {
      for (int j = 0; j < T; ++j) {
        m(i, j) = -ab.slopes[h] * std::abs(i - j);
      }
    }
    ab.bias[h] = std::move(m);
  }
  return ab;
}

namespace {

Mat xavier(int rows, int cols, Rng& rng) {
  const double s = std::sqrt(6.0 / (rows + cols));
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(-s, s);
  }
  return m;
}

}  // namespace

Linear::Linear(ParamStore& store, const std::string& name, int in, int out,
               Rng& rng, bool frozen) {
  w = store.add(name + ".w", xavier(in, out, rng), frozen);
  b = store.add(name + ".b", Mat::Zero(1, out), frozen);
}

V Linear::operator()(Tape& t, V x) const {
  return t.add_rowvec(t.matmul(x, t.param(*w)), t.param(*b));
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, int d) {
  gain = store.add(name + ".gain", Mat::Ones(1, d));
  bias = store.add(name + ".bias", Mat::Zero(1, d));
}

V LayerNorm::operator()(Tape& t, V x) const {
  return t.layer_norm(x, t.param(*gain), t.param(*bias));
}

Mhsa::Mhsa(ParamStore& store, const std::string& name, int d, int heads_, Rng& rng)
    : q(store, name + ".q", d, d, rng),
      k(store, name + ".k", d, d, rng),
      v(store, name + ".v", d, d, rng),
      o(store, name + ".o", d, d, rng),
      heads(heads_) {
  if (d % heads_ != 0) throw BadDims("model width not divisible by heads");
}

V Mhsa::forward(Tape& t, V x, const AttentionBias* bias) const {
  const int d = static_cast<int>(t.val(x).cols());
  const int dk = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  V Q = q(t, x), K = k(t, x), Vv = v(t, x);
  V ctx;
  for (int h = 0; h < heads; ++h) {
    V qh = t.slice_cols(Q, h * dk, dk);
    V kh = t.slice_cols(K, h * dk, dk);
    V vh = t.slice_cols(Vv, h * dk, dk);
    V scores = t.scale(t.matmul(qh, t.transpose(kh)), inv_sqrt);
    if (bias) scores = t.add_const(scores, bias->bias[h]);
    V probs = t.softmax_rows(scores);
    V head = t.matmul(probs, vh);
    ctx = (h == 0) ? head : t.concat_cols(ctx, head);
  }
  return o(t, ctx);
}

FeedForward::FeedForward(ParamStore& store, const std::string& name, int d,
                         int hidden, Rng& rng)
    : in(store, name + ".in", d, hidden, rng),
      out(store, name + ".out", hidden, d, rng) {}

V FeedForward::operator()(Tape& t, V x) const { return out(t, t.silu(in(t, x))); }

TransformerBlock::TransformerBlock(ParamStore& store, const std::string& name,
                                   int d, int heads, int ff_hidden, Rng& rng)
    : ln1(store, name + ".ln1", d),
      ln2(store, name + ".ln2", d),
      attn(store, name + ".attn", d, heads, rng),
      ff(store, name + ".ff", d, ff_hidden, rng) {}

V TransformerBlock::forward(Tape& t, V x, const AttentionBias* bias) const {
  x = t.add(x, attn.forward(t, ln1(t, x), bias));
  x = t.add(x, ff(t, ln2(t, x)));
  return x;
}

KanLayer::KanLayer(ParamStore& store, const std::string& name, int in, int out,
                   const KanGrid& grid_, Rng& rng)
    : grid(grid_) {
  w_base = store.add(name + ".w_base", xavier(out, in, rng));
  w_spline = store.add(name + ".w_spline", Mat::Ones(out, in));
  const int nb = grid.n_basis();
  Mat c(in * nb, out);
  const double s = 0.1 / std::sqrt(static_cast<double>(in));
  for (int r = 0; r < c.rows(); ++r) {
    for (int j = 0; j < out; ++j) c(r, j) = s * rng.normal();
  }
  coeff = store.add(name + ".coeff", std::move(c));
}

V KanLayer::operator()(Tape& t, V x) const {
  return t.kan(x, t.param(*w_base), t.param(*w_spline), t.param(*coeff), grid);
}

ConformerBlock::ConformerBlock(ParamStore& store, const std::string& name, int d,
                               int heads, int kan_hidden, const KanGrid& grid,
                               int conv_kernel, Rng& rng)
    : ln_ff1(store, name + ".ln_ff1", d),
      ln_attn(store, name + ".ln_attn", d),
      ln_conv(store, name + ".ln_conv", d),
      ln_ff2(store, name + ".ln_ff2", d),
      ln_out(store, name + ".ln_out", d),
      ff1_in(store, name + ".ff1.in", d, kan_hidden, grid, rng),
      ff1_out(store, name + ".ff1.out", kan_hidden, d, grid, rng),
      ff2_in(store, name + ".ff2.in", d, kan_hidden, grid, rng),
      ff2_out(store, name + ".ff2.out", kan_hidden, d, grid, rng),
      attn(store, name + ".attn", d, heads, rng),
      conv_in(store, name + ".conv_in", d, 2 * d, rng),
      conv_out(store, name + ".conv_out", d, d, rng) {
  dw_w = store.add(name + ".dw.w", xavier(conv_kernel, d, rng));
  dw_b = store.add(name + ".dw.b", Mat::Zero(1, d));
}

V ConformerBlock::forward(Tape& t, V x, const AttentionBias& bias) const {
  x = t.add(x, t.scale(ff1_out(t, ff1_in(t, ln_ff1(t, x))), 0.5));
  x = t.add(x, attn.forward(t, ln_attn(t, x), &bias));
  {
    V c = t.glu(conv_in(t, ln_conv(t, x)));
    c = t.depthwise_conv1d(c, t.param(*dw_w), t.param(*dw_b));
    c = conv_out(t, t.silu(c));
    x = t.add(x, c);
  }
  x = t.add(x, t.scale(ff2_out(t, ff2_in(t, ln_ff2(t, x))), 0.5));
  return ln_out(t, x);
}

Tcn::Tcn(ParamStore& store, const std::string& name,
         const std::vector<TcnLayerSpec>& spec, int channels, Rng& rng,
         bool frozen) {
  int in_ch = 1;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    Layer layer;
    layer.kernel = spec[i].kernel;
    layer.stride = spec[i].stride;
    layer.w = store.add(name + ".conv" + std::to_string(i) + ".w",
                        xavier(in_ch * spec[i].kernel, channels, rng), frozen);
    layer.b = store.add(name + ".conv" + std::to_string(i) + ".b",
                        Mat::Zero(1, channels), frozen);
    layers.push_back(layer);
    in_ch = channels;
  }
}

int Tcn::receptive_field() const {
  int rf = 1;
  int stride = 1;
  for (const auto& l : layers) {
    rf += (l.kernel - 1) * stride;
    stride *= l.stride;
  }
  return rf;
}

int Tcn::overall_stride() const {
  int s = 1;
  for (const auto& l : layers) s *= l.stride;
  return s;
}

V Tcn::forward(Tape& t, V waveform) const {
  if (t.val(waveform).rows() < receptive_field()) {
    throw TooShort("waveform shorter than TCN receptive field");
  }
  V x = waveform;
  for (const auto& l : layers) {
    x = t.silu(t.conv1d(x, t.param(*l.w), t.param(*l.b), l.kernel, l.stride));
  }
  return x;
}

std::vector<TcnLayerSpec> default_tcn_spec() {
  return {{10, 5}, {8, 4}, {8, 4}, {4, 2}};
}

}  // namespace pestalk::nn
