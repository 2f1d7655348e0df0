#include <doctest.h>

#include "pestalk/decoder.hpp"
#include "pestalk/errors.hpp"
#include "pestalk/losses.hpp"
#include "support/fd_check.hpp"

using namespace pestalk;
using namespace pestalk::decoder;

namespace {

model::ModelConfig tiny_config() {
  model::ModelConfig cfg;
  cfg.width = 16;
  cfg.heads = 2;
  cfg.decoder_blocks = 1;
  cfg.style_dim = 8;
  cfg.init_seed = 7;
  return cfg;
}

Mat random_mat(int r, int c, Rng& rng, double s = 0.5) {
  Mat m(r, c);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = s * rng.normal();
  return m;
}

}  // namespace

TEST_CASE("decoder: shapes and [0,1] range") {
  auto cfg = tiny_config();
  nn::ParamStore store;
  Rng rng(3);
  FaceDecoder lower(store, "lower", cfg, model::kContentDim, bs::kNumLower, rng);
  FaceDecoder upper(store, "upper", cfg, model::kEmotionDim, bs::kNumUpper, rng);

  Rng data(5);
  Mat c = random_mat(30, 256, data, 2.0);
  Mat e = random_mat(30, 256, data, 2.0);
  Mat s = random_mat(30, cfg.style_dim, data, 2.0);
  Mat lo = lower.decode(c, s);
  Mat up = upper.decode(e, s);
  CHECK(lo.rows() == 30);
  CHECK(lo.cols() == 32);
  CHECK(up.rows() == 30);
  CHECK(up.cols() == 20);
  CHECK(lo.minCoeff() >= 0.0);
  CHECK(lo.maxCoeff() <= 1.0);
  CHECK(up.minCoeff() >= 0.0);
  CHECK(up.maxCoeff() <= 1.0);
}

TEST_CASE("decoder: partition contract holds bitwise through assembly") {
  auto cfg = tiny_config();
  nn::ParamStore store;
  Rng rng(7);
  FaceDecoder lower(store, "lower", cfg, model::kContentDim, bs::kNumLower, rng);
  FaceDecoder upper(store, "upper", cfg, model::kEmotionDim, bs::kNumUpper, rng);
  const auto partition = bs::default_partition();

  Rng data(11);
  Mat c = random_mat(12, 256, data);
  Mat e = random_mat(12, 256, data);
  Mat s = random_mat(12, cfg.style_dim, data);
  auto base = assemble(lower.decode(c, s), upper.decode(e, s), partition);

  // perturbing content leaves every upper-face channel bit-identical
  Mat c2 = c;
  c2.array() += 0.37;
  auto content_moved = assemble(lower.decode(c2, s), upper.decode(e, s), partition);
  for (int ch : partition.upper) {
    CHECK((content_moved.coeffs.col(ch) - base.coeffs.col(ch)).cwiseAbs().maxCoeff() ==
          0.0);
  }
  CHECK((content_moved.coeffs - base.coeffs).cwiseAbs().maxCoeff() > 0.0);

  // perturbing emotion leaves every lower-face channel bit-identical
  Mat e2 = e;
  e2.array() -= 0.41;
  auto emotion_moved = assemble(lower.decode(c, s), upper.decode(e2, s), partition);
  for (int ch : partition.lower) {
    CHECK((emotion_moved.coeffs.col(ch) - base.coeffs.col(ch)).cwiseAbs().maxCoeff() ==
          0.0);
  }
  CHECK((emotion_moved.coeffs - base.coeffs).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("decoder: zero head gives constant sigmoid(bias) rows") {
  auto cfg = tiny_config();
  nn::ParamStore store;
  Rng rng(13);
  FaceDecoder lower(store, "lower", cfg, model::kContentDim, bs::kNumLower, rng);
  store.find("lower.head.w")->value.setZero();
  auto* b = store.find("lower.head.b");
  for (int i = 0; i < b->value.cols(); ++i) b->value(0, i) = 0.1 * i - 1.0;
  b->snap_f32();

  Rng data(17);
  Mat c = random_mat(9, 256, data);
  Mat s = random_mat(9, cfg.style_dim, data);
  Mat out = lower.decode(c, s);
  for (int t = 0; t < 9; ++t) {
    for (int ch = 0; ch < 32; ++ch) {
      const double expect = 1.0 / (1.0 + std::exp(-b->value(0, ch)));
      CHECK(out(t, ch) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("assemble/split: round trip, zeros, and channel traceability") {
  const auto partition = bs::default_partition();
  Rng rng(19);
  Mat lower = random_mat(5, bs::kNumLower, rng);
  Mat upper = random_mat(5, bs::kNumUpper, rng);

  auto seq = assemble(lower, upper, partition);
  auto [lo, up] = split(seq, partition);
  CHECK((lo - lower).cwiseAbs().maxCoeff() == 0.0);
  CHECK((up - upper).cwiseAbs().maxCoeff() == 0.0);

  auto zeros = assemble(Mat::Zero(3, 32), Mat::Zero(3, 20), partition);
  CHECK(zeros.coeffs.cwiseAbs().maxCoeff() == 0.0);

  // every output channel comes from exactly one input column: tag each input
  // column with a distinct constant and find it exactly once
  Mat tag_lower(1, 32), tag_upper(1, 20);
  for (int i = 0; i < 32; ++i) tag_lower(0, i) = 100.0 + i;
  for (int i = 0; i < 20; ++i) tag_upper(0, i) = 200.0 + i;
  auto tagged = assemble(tag_lower, tag_upper, partition);
  std::vector<int> seen(251, 0);
  for (int ch = 0; ch < bs::kNumChannels; ++ch) {
    seen[static_cast<int>(tagged.coeffs(0, ch))] += 1;
  }
  for (int i = 0; i < 32; ++i) CHECK(seen[100 + i] == 1);
  for (int i = 0; i < 20; ++i) CHECK(seen[200 + i] == 1);
}

TEST_CASE("assemble: overlapping partition is rejected") {
  auto partition = bs::default_partition();
  partition.upper[0] = partition.lower[0];
  CHECK_THROWS_AS(assemble(Mat::Zero(2, 32), Mat::Zero(2, 20), partition), BadPartition);
}

TEST_CASE("decoder: frame mismatch is rejected") {
  auto cfg = tiny_config();
  nn::ParamStore store;
  Rng rng(23);
  FaceDecoder lower(store, "lower", cfg, model::kContentDim, bs::kNumLower, rng);
  Rng data(29);
  Mat c = random_mat(6, 256, data);
  Mat s = random_mat(5, cfg.style_dim, data);
  CHECK_THROWS_AS(lower.decode(c, s), BadDims);
}

TEST_CASE("decoder: gradients of a decode loss match finite differences") {
  auto cfg = tiny_config();
  cfg.width = 8;
  cfg.style_dim = 4;
  nn::ParamStore store;
  Rng rng(31);
  FaceDecoder upper(store, "upper", cfg, 6, 5, rng);  // tiny feature/channel dims

  Rng data(37);
  nn::Parameter* feat = store.add("x.feat", random_mat(4, 6, data));
  nn::Parameter* style = store.add("x.style", random_mat(4, 4, data));
  Mat gt = random_mat(4, 5, data, 0.3).cwiseAbs();

  auto build = [&](nn::Tape& t) {
    nn::V out = upper.forward(t, t.param(*feat), t.param(*style));
    nn::V pos = losses::position_loss(t, out, t.constant(gt));
    nn::V mot = losses::motion_loss(t, out, t.constant(gt));
    return t.add(pos, t.scale(mot, 0.5));
  };
  CHECK(testsupport::max_fd_rel_err(store.all(), build) < 1e-3);
}

TEST_CASE("decoder: near-equivariance to period-aligned shifts on padded input") {
  // The bias matrix itself is exactly Toeplitz and the PPE repeats exactly;
  // global softmax attention only approaches shift equivariance away from
  // the sequence edges, so the decoder-level check is approximate.
  auto cfg = tiny_config();
  cfg.ppe_period = 10;
  nn::ParamStore store;
  Rng rng(41);
  FaceDecoder lower(store, "lower", cfg, 6, 3, rng);

  const auto bias = nn::build_attention_bias(40, cfg.heads);
  for (int h = 0; h < cfg.heads; ++h) {
    for (int i = 0; i + 10 < 40; ++i) {
      for (int j = 0; j + 10 < 40; ++j) {
        CHECK(bias.bias[h](i + 10, j + 10) == bias.bias[h](i, j));
      }
    }
  }

  const int T = 90, k = 10;
  Rng data(43);
  Mat bump = random_mat(1, 6, data, 1.0);
  Mat style = Mat::Zero(T, cfg.style_dim);
  auto make_features = [&](int pos) {
    Mat f = Mat::Constant(T, 6, 0.2);
    f.row(pos) = bump;
    return f;
  };
  Mat a = lower.decode(make_features(40), style);
  Mat b = lower.decode(make_features(40 + k), style);
  // compare a window around the bump, shifted by k
  double worst = 0.0;
  for (int off = -5; off <= 5; ++off) {
    worst = std::max(worst, (a.row(40 + off) - b.row(40 + k + off)).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 5e-2);
}
