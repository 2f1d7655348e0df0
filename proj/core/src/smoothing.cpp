#include "pestalk/smoothing.hpp"

#include <cmath>

#include "pestalk/errors.hpp"

namespace pestalk::signal {

Mat align_frames(const Mat& features, int T) {
  const int F = static_cast<int>(features.rows());
  if (F < 1 || T < 1) throw BadDims("align_frames needs F >= 1 and T >= 1");
  if (F == T) return features;

  Mat out(T, features.cols());
  if (F == 1) {
    out.rowwise() = features.row(0);
    return out;
  }
  for (int t = 0; t < T; ++t) {
    const double pos = (T == 1) ? 0.0
                                : static_cast<double>(t) * (F - 1) / (T - 1);
    const int i = std::min(F - 2, static_cast<int>(pos));
    const double w = pos - i;
    out.row(t) = (1.0 - w) * features.row(i) + w * features.row(i + 1);
  }
  return out;
}

Vec savgol_coefficients(int window, int order) {
  if (window % 2 == 0 || order >= window) {
    throw BadDims("window must be odd and order < window");
  }
  const int h = window / 2;
  // Vandermonde over offsets -h..h; smoothing weights are the first row of
  // (J^T J)^{-1} J^T.
  Mat J(window, order + 1);
  for (int r = 0; r < window; ++r) {
    double p = 1.0;
    for (int c = 0; c <= order; ++c) {
      J(r, c) = p;
      p *= (r - h);
    }
  }
  const Mat jtj = J.transpose() * J;
  Vec e0 = Vec::Zero(order + 1);
  e0(0) = 1.0;
  const Vec row = jtj.ldlt().solve(e0);
  return J * row;  // weight per window offset
}

Mat savgol_smooth(const Mat& track, int window, int order) {
  const int T = static_cast<int>(track.rows());
  if (T < window) throw TooShort("track shorter than filter window");
  const Vec w = savgol_coefficients(window, order);
  const int h = window / 2;

  Mat out = Mat::Zero(T, track.cols());
  for (int t = 0; t < T; ++t) {
    for (int j = -h; j <= h; ++j) {
      int idx = t + j;
      // mirror padding without repeating the edge sample
      if (idx < 0) idx = -idx;
      if (idx >= T) idx = 2 * (T - 1) - idx;
      out.row(t) += w(j + h) * track.row(idx);
    }
  }
  return out;
}

}  // namespace pestalk::signal
