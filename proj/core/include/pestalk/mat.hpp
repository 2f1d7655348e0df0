#pragma once

#include <Eigen/Dense>

namespace pestalk {

// Dense double-precision matrices everywhere. Feature sequences are T x d
// with one row per frame; vertex blocks are V x 3.
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace pestalk
