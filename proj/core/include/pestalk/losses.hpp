#pragma once

#include <vector>

#include "pestalk/mat.hpp"
#include "pestalk/tape.hpp"

namespace pestalk::losses {

struct LossWeights {
  double pos = 1.0;   // lambda1
  double mot = 0.5;   // lambda2
  double cls = 0.1;   // lambda3
  double dis = 0.01;  // lambda4
};

// The literal pooled-cosine objective rewards emotion
// similarity; corrected flips the two cosine terms so content aligns and
// emotion separates. literal(x) = 2 - corrected(x).
enum class DisOrientation { corrected, literal };

// mean over frames of the squared L2 of the coefficient-row difference
// (unnormalized across channels); batch means are taken by the caller
nn::V position_loss(nn::Tape& t, nn::V pred, nn::V gt);

// mean over t of |diff(pred)_t - diff(gt)_t|^2, first-order differences
nn::V motion_loss(nn::Tape& t, nn::V pred, nn::V gt);

// mean softmax cross-entropy over a batch of (1 x M) logit rows
nn::V classification_loss(nn::Tape& t, const std::vector<nn::V>& logits,
                          const std::vector<int>& labels);

// Hinge-margin objective over pooled pair features: pull contents
// together (psi = 2 norm), push emotions apart with hinge margin delta.
// Provided as an optional auxiliary (weight 0 by default in training).
nn::V pairwise_margin_loss(nn::Tape& t, const std::vector<nn::V>& content_a,
                           const std::vector<nn::V>& content_b,
                           const std::vector<nn::V>& emotion_a,
                           const std::vector<nn::V>& emotion_b, nn::V delta);

// pooled-cosine disentanglement over pairs of (1 x d) pooled features
nn::V disentanglement_loss(nn::Tape& t, const std::vector<nn::V>& content_a,
                           const std::vector<nn::V>& content_b,
                           const std::vector<nn::V>& emotion_a,
                           const std::vector<nn::V>& emotion_b,
                           DisOrientation orientation = DisOrientation::corrected);

nn::V total_loss(nn::Tape& t, nn::V pos, nn::V mot, nn::V cls, nn::V dis,
                 const LossWeights& w);

// value-mode conveniences over plain matrices
double position_loss(const Mat& pred, const Mat& gt);
double motion_loss(const Mat& pred, const Mat& gt);
double classification_loss(const std::vector<Vec>& logits, const std::vector<int>& labels);
double disentanglement_loss(const std::vector<Vec>& content_a,
                            const std::vector<Vec>& content_b,
                            const std::vector<Vec>& emotion_a,
                            const std::vector<Vec>& emotion_b,
                            DisOrientation orientation = DisOrientation::corrected);
double total_loss(double pos, double mot, double cls, double dis, const LossWeights& w);

}  // namespace pestalk::losses
