#include "pestalk/losses.hpp"

#include "pestalk/errors.hpp"

namespace pestalk::losses {

using nn::Tape;
using nn::V;

V position_loss(Tape& t, V pred, V gt) {
  if (t.val(pred).rows() != t.val(gt).rows() ||
      t.val(pred).cols() != t.val(gt).cols()) {
    throw BadDims("position_loss: shape mismatch");
  }
  const double frames = static_cast<double>(t.val(pred).rows());
  return t.scale(t.sum_all(t.square(t.sub(pred, gt))), 1.0 / frames);
}

V motion_loss(Tape& t, V pred, V gt) {
  const int T = static_cast<int>(t.val(pred).rows());
  if (T < 2) throw TooShort("motion_loss needs at least two frames");
  if (t.val(gt).rows() != T || t.val(gt).cols() != t.val(pred).cols()) {
    throw BadDims("motion_loss: shape mismatch");
  }
  V dp = t.sub(t.slice_rows(pred, 1, T - 1), t.slice_rows(pred, 0, T - 1));
  V dg = t.sub(t.slice_rows(gt, 1, T - 1), t.slice_rows(gt, 0, T - 1));
  return t.scale(t.sum_all(t.square(t.sub(dp, dg))), 1.0 / (T - 1));
}

V classification_loss(Tape& t, const std::vector<V>& logits,
                      const std::vector<int>& labels) {
  if (logits.empty() || logits.size() != labels.size()) {
    throw BadDims("classification_loss: batch mismatch");
  }
  V acc = t.cross_entropy(logits[0], labels[0]);
  for (std::size_t i = 1; i < logits.size(); ++i) {
    acc = t.add(acc, t.cross_entropy(logits[i], labels[i]));
  }
  return t.scale(acc, 1.0 / static_cast<double>(logits.size()));
}

namespace {

V row_norm(Tape& t, V a, V b) {  // |a - b|_2 of two 1 x d rows
  return t.sqrt_scalar(t.sum_all(t.square(t.sub(a, b))));
}

void check_pairs(const std::vector<V>& a, const std::vector<V>& b,
                 const std::vector<V>& c, const std::vector<V>& d) {
  if (a.empty() || a.size() != b.size() || a.size() != c.size() || a.size() != d.size()) {
    throw BadPairing("pair batch arms differ in length");
  }
}

}  // namespace

V pairwise_margin_loss(Tape& t, const std::vector<V>& content_a,
                       const std::vector<V>& content_b,
                       const std::vector<V>& emotion_a,
                       const std::vector<V>& emotion_b, V delta) {
  check_pairs(content_a, content_b, emotion_a, emotion_b);
  V acc;
  for (std::size_t i = 0; i < content_a.size(); ++i) {
    V pull = row_norm(t, content_a[i], content_b[i]);
    V push = t.maximum0(t.sub(delta, row_norm(t, emotion_a[i], emotion_b[i])));
    V term = t.add(pull, push);
    acc = (i == 0) ? term : t.add(acc, term);
  }
  return t.scale(acc, 1.0 / static_cast<double>(content_a.size()));
}

V disentanglement_loss(Tape& t, const std::vector<V>& content_a,
                       const std::vector<V>& content_b,
                       const std::vector<V>& emotion_a,
                       const std::vector<V>& emotion_b, DisOrientation orientation) {
  check_pairs(content_a, content_b, emotion_a, emotion_b);
  V acc;
  for (std::size_t i = 0; i < content_a.size(); ++i) {
    V cos_c = t.cosine_rows(content_a[i], content_b[i]);
    V cos_e = t.cosine_rows(emotion_a[i], emotion_b[i]);
    V term = orientation == DisOrientation::corrected ? t.sub(cos_c, cos_e)
                                                      : t.sub(cos_e, cos_c);
    acc = (i == 0) ? term : t.add(acc, term);
  }
  acc = t.scale(acc, -1.0 / static_cast<double>(content_a.size()));
  return t.add_scalar(acc, 1.0);
}

V total_loss(Tape& t, V pos, V mot, V cls, V dis, const LossWeights& w) {
  V acc = t.scale(pos, w.pos);
  acc = t.add(acc, t.scale(mot, w.mot));
  acc = t.add(acc, t.scale(cls, w.cls));
  acc = t.add(acc, t.scale(dis, w.dis));
  return acc;
}

// ---------------------------------------------------------------------------
// value-mode wrappers

double position_loss(const Mat& pred, const Mat& gt) {
  Tape t(Tape::Grad::off);
  return t.val(position_loss(t, t.constant(pred), t.constant(gt)))(0, 0);
}

double motion_loss(const Mat& pred, const Mat& gt) {
  Tape t(Tape::Grad::off);
  return t.val(motion_loss(t, t.constant(pred), t.constant(gt)))(0, 0);
}

double classification_loss(const std::vector<Vec>& logits, const std::vector<int>& labels) {
  Tape t(Tape::Grad::off);
  std::vector<V> nodes;
  nodes.reserve(logits.size());
  for (const auto& l : logits) nodes.push_back(t.constant(l.transpose()));
  return t.val(classification_loss(t, nodes, labels))(0, 0);
}

double disentanglement_loss(const std::vector<Vec>& content_a,
                            const std::vector<Vec>& content_b,
                            const std::vector<Vec>& emotion_a,
                            const std::vector<Vec>& emotion_b,
                            DisOrientation orientation) {
  Tape t(Tape::Grad::off);
  auto lift = [&t](const std::vector<Vec>& vs) {
    std::vector<V> out;
    out.reserve(vs.size());
    for (const auto& v : vs) out.push_back(t.constant(v.transpose()));
    return out;
  };
  return t.val(disentanglement_loss(t, lift(content_a), lift(content_b),
                                    lift(emotion_a), lift(emotion_b), orientation))(0, 0);
}

double total_loss(double pos, double mot, double cls, double dis, const LossWeights& w) {
  return w.pos * pos + w.mot * mot + w.cls * cls + w.dis * dis;
}

}  // namespace pestalk::losses
