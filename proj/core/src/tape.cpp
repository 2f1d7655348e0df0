#include "pestalk/tape.hpp"

#include <cmath>

#include "pestalk/errors.hpp"

namespace pestalk::nn {

// ---------------------------------------------------------------------------
// KanGrid: uniform B-splines via the local (NURBS-book) basis algorithm.
// The test suite checks this against an independent naive Cox-de Boor
// recursion.

std::vector<double> KanGrid::extended_knots() const {
  const double h = (hi - lo) / (points - 1);
  std::vector<double> t(points + 2 * order);
  for (int i = 0; i < static_cast<int>(t.size()); ++i) {
    t[i] = lo + (i - order) * h;
  }
  return t;
}

namespace {

int find_span(const KanGrid& g, double x) {
  const double h = (g.hi - g.lo) / (g.points - 1);
  int j = g.order + static_cast<int>(std::floor((x - g.lo) / h));
  const int j_max = g.order + g.points - 2;  // last interval closed
  if (j < g.order) j = g.order;
  if (j > j_max) j = j_max;
  return j;
}

// nonzero basis functions N[0..degree] of the given degree at span j
void basis_funs(const std::vector<double>& t, int j, int degree, double x,
                double* N) {
  double left[8], right[8];
  N[0] = 1.0;
  for (int k = 1; k <= degree; ++k) {
    left[k] = x - t[j + 1 - k];
    right[k] = t[j + k] - x;
    double saved = 0.0;
    for (int r = 0; r < k; ++r) {
      const double tmp = N[r] / (right[r + 1] + left[k - r]);
      N[r] = saved + right[r + 1] * tmp;
      saved = left[k - r] * tmp;
    }
    N[k] = saved;
  }
}

}  // namespace

void KanGrid::basis(double x, double* out) const {
  if (order > 7) throw BadDims("spline order > 7 unsupported");
  const double xc = std::clamp(x, lo, hi);
  const auto t = extended_knots();
  const int j = find_span(*this, xc);
  double N[8];
  basis_funs(t, j, order, xc, N);
  for (int m = 0; m < n_basis(); ++m) out[m] = 0.0;
  for (int r = 0; r <= order; ++r) out[j - order + r] = N[r];
}

void KanGrid::basis_deriv(double x, double* out) const {
  const double xc = std::clamp(x, lo, hi);
  const auto t = extended_knots();
  const int j = find_span(*this, xc);
  // degree-(order-1) nonzeros are B_{j-order+1 .. j, order-1}
  double N[8];
  basis_funs(t, j, order - 1, xc, N);
  const int nb = n_basis();
  for (int m = 0; m < nb; ++m) out[m] = 0.0;
  auto lower = [&](int m) -> double {  // B_{m, order-1}(xc)
    const int r = m - (j - order + 1);
    return (r >= 0 && r <= order - 1) ? N[r] : 0.0;
  };
  for (int m = j - order; m <= j; ++m) {
    const double d1 = t[m + order] - t[m];
    const double d2 = t[m + order + 1] - t[m + 1];
    double v = 0.0;
    if (d1 > 0) v += lower(m) / d1;
    if (d2 > 0) v -= lower(m + 1) / d2;
    out[m] = order * v;
  }
}

// ---------------------------------------------------------------------------
// Tape

Tape::V Tape::make(Mat value, bool needs_grad, std::function<void(Tape&)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = grad_enabled_ && needs_grad;
  if (n.needs_grad) {
    n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.back = std::move(back);
  }
  nodes_.push_back(std::move(n));
  return V{static_cast<int>(nodes_.size()) - 1};
}

Tape::V Tape::constant(Mat m) { return make(std::move(m), false); }

Tape::V Tape::param(Parameter& p) {
  const bool track = grad_enabled_ && (!p.frozen || include_frozen_);
  if (!track) return make(p.value, false);
  const int i = static_cast<int>(nodes_.size());
  Parameter* pp = &p;
  V v = make(p.value, true, [i, pp](Tape& t) { pp->grad += t.nodes_[i].grad; });
  nodes_[i].leaf = pp;
  return v;
}

Tape::V Tape::add(V a, V b) {
  if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols()) {
    throw BadDims("add: shape mismatch");
  }
  const bool ng = needs(a) || needs(b);
  const int i = static_cast<int>(nodes_.size());
  return make(val(a) + val(b), ng, [i, a, b](Tape& t) {
    const Mat& gy = t.nodes_[i].grad;
    if (t.needs(a)) t.g(a) += gy;
    if (t.needs(b)) t.g(b) += gy;
  });
}

Tape::V Tape::sub(V a, V b) {
  if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols()) {
    throw BadDims("sub: shape mismatch");
  }
  const bool ng = needs(a) || needs(b);
  const int i = static_cast<int>(nodes_.size());
  return make(val(a) - val(b), ng, [i, a, b](Tape& t) {
    const Mat& gy = t.nodes_[i].grad;
    if (t.needs(a)) t.g(a) += gy;
    if (t.needs(b)) t.g(b) -= gy;
  });
}

Tape::V Tape::mul(V a, V b) {
  if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols()) {
    throw BadDims("mul: shape mismatch");
  }
  const bool ng = needs(a) || needs(b);
  const int i = static_cast<int>(nodes_.size());
  return make(val(a).cwiseProduct(val(b)), ng, [i, a, b](Tape& t) {
    const Mat& gy = t.nodes_[i].grad;
    if (t.needs(a)) t.g(a) += gy.cwiseProduct(t.val(b));
    if (t.needs(b)) t.g(b) += gy.cwiseProduct(t.val(a));
  });
}

Tape::V Tape::scale(V a, double s) {
  const int i = static_cast<int>(nodes_.size());
  return make(val(a) * s, needs(a), [i, a, s](Tape& t) {
    if (t.needs(a)) t.g(a) += t.nodes_[i].grad * s;
  });
}

Tape::V Tape::add_rowvec(V a, V row) {
  if (val(row).rows() != 1 || val(row).cols() != val(a).cols()) {
    throw BadDims("add_rowvec: expected 1 x cols(a)");
  }
  const bool ng = needs(a) || needs(row);
  const int i = static_cast<int>(nodes_.size());
  Mat out = val(a);
  out.rowwise() += val(row).row(0);
  return make(std::move(out), ng, [i, a, row](Tape& t) {
    const Mat& gy = t.nodes_[i].grad;
    if (t.needs(a)) t.g(a) += gy;
    if (t.needs(row)) t.g(row) += gy.colwise().sum();
  });
}

Tape::V Tape::add_const(V a, const Mat& c) {
  if (c.rows() != val(a).rows() || c.cols() != val(a).cols()) {
    throw BadDims("add_const: shape mismatch");
  }
  const int i = static_cast<int>(nodes_.size());
  return make(val(a) + c, needs(a), [i, a](Tape& t) {
    if (t.needs(a)) t.g(a) += t.nodes_[i].grad;
  });
}

Tape::V Tape::transpose(V a) {
  const int i = static_cast<int>(nodes_.size());
  return make(val(a).transpose(), needs(a), [i, a](Tape& t) {
    if (t.needs(a)) t.g(a) += t.nodes_[i].grad.transpose();
  });
}

Tape::V Tape::concat_cols(V a, V b) {
  if (val(a).rows() != val(b).rows()) throw BadDims("concat_cols: row mismatch");
  const int ca = static_cast<int>(val(a).cols());
  const int cb = static_cast<int>(val(b).cols());
  Mat out(val(a).rows(), ca + cb);
  out.leftCols(ca) = val(a);
  out.rightCols(cb) = val(b);
  const bool ng = needs(a) || needs(b);
  const int i = static_cast<int>(nodes_.size());
  return make(std::move(out), ng, [i, a, b, ca, cb](Tape& t) {
    const Mat& gy = t.nodes_[i].grad;
    if (t.needs(a)) t.g(a) += gy.leftCols(ca);
    if (t.needs(b)) t.g(b) += gy.rightCols(cb);
  });
}

Tape::V Tape::concat_rows(V a, V b) {
  if (val(a).cols() != val(b).cols()) throw BadDims("concat_rows: col mismatch");
  const int ra = static_cast<int>(val(a).rows());
  const int rb = static_cast<int>(val(b).rows());
  Mat out(ra + rb, val(a).cols());
  out.topRows(ra) = val(a);
  out.bottomRows(rb) = val(b);
  const bool ng = needs(a) || needs(b);
  const int i = static_cast<int>(nodes_.size());
  return make(std::move(out), ng, [i, a, b, ra, rb](Tape& t) {
    const Mat& gy = t.nodes_[i].grad;
    if (t.needs(a)) t.g(a) += gy.topRows(ra);
    if (t.needs(b)) t.g(b) += gy.bottomRows(rb);
  });
}

Tape::V Tape::slice_cols(V a, int c0, int n) {
  if (c0 < 0 || c0 + n > val(a).cols()) throw BadDims("slice_cols: out of range");
  const int i = static_cast<int>(nodes_.size());
  return make(val(a).middleCols(c0, n), needs(a), [i, a, c0, n](Tape& t) {
    if (t.needs(a)) t.g(a).middleCols(c0, n) += t.nodes_[i].grad;
  });
}

Tape::V Tape::slice_rows(V a, int r0, int n) {
  if (r0 < 0 || r0 + n > val(a).rows()) throw BadDims("slice_rows: out of range");
  const int i = static_cast<int>(nodes_.size());
  return make(val(a).middleRows(r0, n), needs(a), [i, a, r0, n](Tape& t) {
    if (t.needs(a)) t.g(a).middleRows(r0, n) += t.nodes_[i].grad;
  });
}

Tape::V Tape::repeat_row(V row, int t_rows) {
  if (val(row).rows() != 1) throw BadDims("repeat_row: expected a row vector");
  Mat out(t_rows, val(row).cols());
  out.rowwise() = val(row).row(0);
  const int i = static_cast<int>(nodes_.size());
  return make(std::move(out), needs(row), [i, row](Tape& t) {
    if (t.needs(row)) t.g(row) += t.nodes_[i].grad.colwise().sum();
  });
}

Tape::V Tape::square(V a) {
  const int i = static_cast<int>(nodes_.size());
  return make(val(a).cwiseProduct(val(a)), needs(a), [i, a](Tape& t) {
    if (t.needs(a)) t.g(a) += 2.0 * t.nodes_[i].grad.cwiseProduct(t.val(a));
  });
}

Tape::V Tape::sum_all(V a) {
  Mat out(1, 1);
  out(0, 0) = val(a).sum();
  const int i = static_cast<int>(nodes_.size());
  return make(std::move(out), needs(a), [i, a](Tape& t) {
    if (t.needs(a)) t.g(a).array() += t.nodes_[i].grad(0, 0);
  });
}

Tape::V Tape::mean_all(V a) {
  const double n = static_cast<double>(val(a).size());
  Mat out(1, 1);
  out(0, 0) = val(a).sum() / n;
  const int i = static_cast<int>(nodes_.size());
  return make(std::move(out), needs(a), [i, a, n](Tape& t) {
    if (t.needs(a)) t.g(a).array() += t.nodes_[i].grad(0, 0) / n;
  });
}

Tape::V Tape::mean_rows(V a) {
  const double rows = static_cast<double>(val(a).rows());
  Mat out = val(a).colwise().mean();
  const int i = static_cast<int>(nodes_.size());
  return make(std::move(out), needs(a), [i, a, rows](Tape& t) {
    if (t.needs(a)) t.g(a).rowwise() += (t.nodes_[i].grad.row(0) / rows);
  });
}

Tape::V Tape::div_scalar(V a, V s) {
  if (val(s).size() != 1) throw BadDims("div_scalar: divisor must be 1 x 1");
  const double sv = val(s)(0, 0);
  const bool ng = needs(a) || needs(s);
  const int i = static_cast<int>(nodes_.size());
  return make(val(a) / sv, ng, [i, a, s, sv](Tape& t) {
    const Mat& gy = t.nodes_[i].grad;
    if (t.needs(a)) t.g(a) += gy / sv;
    if (t.needs(s)) t.g(s)(0, 0) -= gy.cwiseProduct(t.val(a)).sum() / (sv * sv);
  });
}

Tape::V Tape::sqrt_scalar(V s) {
  if (val(s).size() != 1) throw BadDims("sqrt_scalar: expected 1 x 1");
  Mat out(1, 1);
  out(0, 0) = std::sqrt(val(s)(0, 0));
  const double y = out(0, 0);
  const int i = static_cast<int>(nodes_.size());
  return make(std::move(out), needs(s), [i, s, y](Tape& t) {
    if (t.needs(s)) t.g(s)(0, 0) += t.nodes_[i].grad(0, 0) * 0.5 / y;
  });
}

Tape::V Tape::add_scalar(V a, double c) {
  const int i = static_cast<int>(nodes_.size());
  return make(val(a).array() + c, needs(a), [i, a](Tape& t) {
    if (t.needs(a)) t.g(a) += t.nodes_[i].grad;
  });
}

Tape::V Tape::relu(V a) {
  const int i = static_cast<int>(nodes_.size());
  return make(val(a).cwiseMax(0.0), needs(a), [i, a](Tape& t) {
    if (!t.needs(a)) return;
    const Mat& gy = t.nodes_[i].grad;
    t.g(a) += gy.cwiseProduct(
        (t.val(a).array() > 0.0).cast<double>().matrix());
  });
}

Tape::V Tape::maximum0(V a) { return relu(a); }

Tape::V Tape::silu(V a) {
  Mat sig = (1.0 / (1.0 + (-val(a)).array().exp())).matrix();
  Mat out = val(a).cwiseProduct(sig);
  const int i = static_cast<int>(nodes_.size());
  return make(std::move(out), needs(a), [i, a, sig](Tape& t) {
    if (!t.needs(a)) return;
    const Mat& gy = t.nodes_[i].grad;
    // d/dx x*s(x) = s(x) (1 + x (1 - s(x)))
    Mat d = sig.array() * (1.0 + t.val(a).array() * (1.0 - sig.array()));
    t.g(a) += gy.cwiseProduct(d);
  });
}

Tape::V Tape::sigmoid(V a) {
  Mat out = (1.0 / (1.0 + (-val(a)).array().exp())).matrix();
  const int i = static_cast<int>(nodes_.size());
  return make(out, needs(a), [i, a](Tape& t) {
    if (!t.needs(a)) return;
    const Mat& y = t.nodes_[i].value;
    t.g(a) += t.nodes_[i].grad.cwiseProduct(
        y.cwiseProduct(Mat::Ones(y.rows(), y.cols()) - y));
  });
}

Tape::V Tape::glu(V a) {
  const int c = static_cast<int>(val(a).cols());
  if (c % 2 != 0) throw BadDims("glu: odd column count");
  const int h = c / 2;
  Mat lin = val(a).leftCols(h);
  Mat gate = (1.0 / (1.0 + (-val(a).rightCols(h)).array().exp())).matrix();
  const int i = static_cast<int>(nodes_.size());
  return make(lin.cwiseProduct(gate), needs(a), [i, a, h, gate](Tape& t) {
    if (!t.needs(a)) return;
    const Mat& gy = t.nodes_[i].grad;
    const Mat lin = t.val(a).leftCols(h);
    t.g(a).leftCols(h) += gy.cwiseProduct(gate);
    t.g(a).rightCols(h) += gy.cwiseProduct(lin).cwiseProduct(
        gate.cwiseProduct(Mat::Ones(gate.rows(), h) - gate));
  });
}

Tape::V Tape::softmax_rows(V a) {
  Mat out = val(a);
  for (int r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  const int i = static_cast<int>(nodes_.size());
  return make(std::move(out), needs(a), [i, a](Tape& t) {
    if (!t.needs(a)) return;
    const Mat& y = t.nodes_[i].value;
    const Mat& gy = t.nodes_[i].grad;
    for (int r = 0; r < y.rows(); ++r) {
      const double dot = gy.row(r).dot(y.row(r));
      t.g(a).row(r) += (gy.row(r).array() - dot).matrix().cwiseProduct(y.row(r));
    }
  });
}

Tape::V Tape::layer_norm(V x, V gain, V bias, double eps) {
  const int rows = static_cast<int>(val(x).rows());
  const int d = static_cast<int>(val(x).cols());
  if (val(gain).cols() != d || val(bias).cols() != d) {
    throw BadDims("layer_norm: gain/bias width mismatch");
  }
  Mat xhat(rows, d);
  Vec inv_s(rows);
  for (int r = 0; r < rows; ++r) {
    const double mu = val(x).row(r).mean();
    const double var = (val(x).row(r).array() - mu).square().mean();
    inv_s(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (val(x).row(r).array() - mu) * inv_s(r);
  }
  Mat out = xhat;
  out.array().rowwise() *= val(gain).row(0).array();
  out.rowwise() += val(bias).row(0);

  const bool ng = needs(x) || needs(gain) || needs(bias);
  const int i = static_cast<int>(nodes_.size());
  return make(std::move(out), ng, [i, x, gain, bias, xhat, inv_s](Tape& t) {
    const Mat& gy = t.nodes_[i].grad;
    if (t.needs(gain)) t.g(gain) += gy.cwiseProduct(xhat).colwise().sum();
    if (t.needs(bias)) t.g(bias) += gy.colwise().sum();
    if (!t.needs(x)) return;
    const int d = static_cast<int>(gy.cols());
    for (int r = 0; r < gy.rows(); ++r) {
      Eigen::RowVectorXd dxh =
          gy.row(r).cwiseProduct(t.val(gain).row(0));
      const double m1 = dxh.mean();
      const double m2 = dxh.cwiseProduct(xhat.row(r)).mean();
      t.g(x).row(r) +=
          inv_s(r) * (dxh.array() - m1 - xhat.row(r).array() * m2).matrix();
      (void)d;
    }
  });
}

Tape::V Tape::l2_normalize_rows(V a, double eps) {
  const int rows = static_cast<int>(val(a).rows());
  Vec norms(rows);
  Mat out = val(a);
  for (int r = 0; r < rows; ++r) {
    norms(r) = std::sqrt(val(a).row(r).squaredNorm() + eps);
    out.row(r) /= norms(r);
  }
  const int i = static_cast<int>(nodes_.size());
  return make(std::move(out), needs(a), [i, a, norms](Tape& t) {
    if (!t.needs(a)) return;
    const Mat& y = t.nodes_[i].value;
    const Mat& gy = t.nodes_[i].grad;
    for (int r = 0; r < y.rows(); ++r) {
      const double dot = gy.row(r).dot(y.row(r));
      t.g(a).row(r) += (gy.row(r) - dot * y.row(r)) / norms(r);
    }
  });
}

Tape::V Tape::matmul(V a, V b) {
  if (val(a).cols() != val(b).rows()) throw BadDims("matmul: inner dim mismatch");
  const bool ng = needs(a) || needs(b);
  const int i = static_cast<int>(nodes_.size());
  return make(val(a) * val(b), ng, [i, a, b](Tape& t) {
    const Mat& gy = t.nodes_[i].grad;
    if (t.needs(a)) t.g(a).noalias() += gy * t.val(b).transpose();
    if (t.needs(b)) t.g(b).noalias() += t.val(a).transpose() * gy;
  });
}

Tape::V Tape::interp_rows(V a, int t_rows) {
  const int F = static_cast<int>(val(a).rows());
  if (F < 1 || t_rows < 1) throw BadDims("interp_rows: empty input");
  std::vector<int> idx(t_rows);
  std::vector<double> w(t_rows);
  Mat out(t_rows, val(a).cols());
  for (int t = 0; t < t_rows; ++t) {
    if (F == 1) {
      idx[t] = 0;
      w[t] = 0.0;
      out.row(t) = val(a).row(0);
      continue;
    }
    const double pos = (t_rows == 1)
                           ? 0.0
                           : static_cast<double>(t) * (F - 1) / (t_rows - 1);
    const int i0 = std::min(F - 2, static_cast<int>(pos));
    idx[t] = i0;
    w[t] = pos - i0;
    out.row(t) = (1.0 - w[t]) * val(a).row(i0) + w[t] * val(a).row(i0 + 1);
  }
  const int i = static_cast<int>(nodes_.size());
  return make(std::move(out), needs(a), [i, a, idx, w, F](Tape& t) {
    if (!t.needs(a)) return;
    const Mat& gy = t.nodes_[i].grad;
    for (int r = 0; r < gy.rows(); ++r) {
      if (F == 1) {
        t.g(a).row(0) += gy.row(r);
      } else {
        t.g(a).row(idx[r]) += (1.0 - w[r]) * gy.row(r);
        t.g(a).row(idx[r] + 1) += w[r] * gy.row(r);
      }
    }
  });
}

Tape::V Tape::conv1d(V x, V weight, V bias, int kernel, int stride) {
  const int L = static_cast<int>(val(x).rows());
  const int cin = static_cast<int>(val(x).cols());
  if (L < kernel) throw TooShort("conv1d: input shorter than kernel");
  if (val(weight).rows() != cin * kernel) throw BadDims("conv1d: weight rows != cin*k");
  const int cout = static_cast<int>(val(weight).cols());
  if (val(bias).rows() != 1 || val(bias).cols() != cout) throw BadDims("conv1d: bad bias");

  const int F = (L - kernel) / stride + 1;
  Mat cols(F, cin * kernel);
  for (int t = 0; t < F; ++t) {
    for (int c = 0; c < cin; ++c) {
      for (int j = 0; j < kernel; ++j) {
        cols(t, c * kernel + j) = val(x)(t * stride + j, c);
      }
    }
  }
  Mat out = cols * val(weight);
  out.rowwise() += val(bias).row(0);

  const bool ng = needs(x) || needs(weight) || needs(bias);
  const int i = static_cast<int>(nodes_.size());
  return make(std::move(out), ng,
              [i, x, weight, bias, cols, kernel, stride, cin](Tape& t) {
                const Mat& gy = t.nodes_[i].grad;
                if (t.needs(weight)) t.g(weight).noalias() += cols.transpose() * gy;
                if (t.needs(bias)) t.g(bias) += gy.colwise().sum();
                if (!t.needs(x)) return;
                Mat gcols = gy * t.val(weight).transpose();
                for (int r = 0; r < gcols.rows(); ++r) {
                  for (int c = 0; c < cin; ++c) {
                    for (int j = 0; j < kernel; ++j) {
                      t.g(x)(r * stride + j, c) += gcols(r, c * kernel + j);
                    }
                  }
                }
              });
}

Tape::V Tape::depthwise_conv1d(V x, V weight, V bias) {
  const int L = static_cast<int>(val(x).rows());
  const int ch = static_cast<int>(val(x).cols());
  const int k = static_cast<int>(val(weight).rows());
  if (val(weight).cols() != ch) throw BadDims("depthwise: weight cols != channels");
  if (val(bias).rows() != 1 || val(bias).cols() != ch) throw BadDims("depthwise: bad bias");
  const int pad = k / 2;

  Mat out = Mat::Zero(L, ch);
  for (int t = 0; t < L; ++t) {
    for (int j = 0; j < k; ++j) {
      const int src = t + j - pad;
      if (src < 0 || src >= L) continue;
      out.row(t) += val(x).row(src).cwiseProduct(val(weight).row(j));
    }
  }
  out.rowwise() += val(bias).row(0);

  const bool ng = needs(x) || needs(weight) || needs(bias);
  const int i = static_cast<int>(nodes_.size());
  return make(std::move(out), ng, [i, x, weight, bias, k, pad](Tape& t) {
    const Mat& gy = t.nodes_[i].grad;
    const int L = static_cast<int>(gy.rows());
    if (t.needs(bias)) t.g(bias) += gy.colwise().sum();
    for (int r = 0; r < L; ++r) {
      for (int j = 0; j < k; ++j) {
        const int src = r + j - pad;
        if (src < 0 || src >= L) continue;
        if (t.needs(weight)) {
          t.g(weight).row(j) += gy.row(r).cwiseProduct(t.val(x).row(src));
        }
        if (t.needs(x)) {
          t.g(x).row(src) += gy.row(r).cwiseProduct(t.val(weight).row(j));
        }
      }
    }
  });
}

Tape::V Tape::kan(V x, V w_base, V w_spline, V coeff, const KanGrid& grid) {
  const int rows = static_cast<int>(val(x).rows());
  const int in = static_cast<int>(val(x).cols());
  const int out_dim = static_cast<int>(val(w_base).rows());
  const int nb = grid.n_basis();
  if (val(w_base).cols() != in || val(w_spline).rows() != out_dim ||
      val(w_spline).cols() != in || val(coeff).rows() != in * nb ||
      val(coeff).cols() != out_dim) {
    throw BadDims("kan: parameter shape mismatch");
  }

  // basis matrix B(t, i*nb + m) = B_m(x(t,i))
  Mat B(rows, in * nb);
  std::vector<double> buf(nb);
  for (int t = 0; t < rows; ++t) {
    for (int c = 0; c < in; ++c) {
      grid.basis(val(x)(t, c), buf.data());
      for (int m = 0; m < nb; ++m) B(t, c * nb + m) = buf[m];
    }
  }
  // effective spline weights: Ceff(i*nb+m, j) = w_spline(j,i) * coeff(i*nb+m, j)
  Mat ceff = val(coeff);
  for (int c = 0; c < in; ++c) {
    for (int j = 0; j < out_dim; ++j) {
      ceff.block(c * nb, j, nb, 1) *= val(w_spline)(j, c);
    }
  }
  Mat sig = (1.0 / (1.0 + (-val(x)).array().exp())).matrix();
  Mat silu_x = val(x).cwiseProduct(sig);
  Mat out = silu_x * val(w_base).transpose() + B * ceff;

  const bool ng = needs(x) || needs(w_base) || needs(w_spline) || needs(coeff);
  const int i = static_cast<int>(nodes_.size());
  KanGrid gr = grid;
  return make(std::move(out), ng,
              [i, x, w_base, w_spline, coeff, B, silu_x, sig, gr, nb, in,
               out_dim](Tape& t) {
                const Mat& gy = t.nodes_[i].grad;  // rows x out
                if (t.needs(w_base)) t.g(w_base).noalias() += gy.transpose() * silu_x;
                // dCeff = B^T gy  (in*nb x out)
                Mat dceff;
                if (t.needs(coeff) || t.needs(w_spline)) {
                  dceff.noalias() = B.transpose() * gy;
                }
                if (t.needs(coeff)) {
                  Mat dc = dceff;
                  for (int c = 0; c < in; ++c) {
                    for (int j = 0; j < out_dim; ++j) {
                      dc.block(c * nb, j, nb, 1) *= t.val(w_spline)(j, c);
                    }
                  }
                  t.g(coeff) += dc;
                }
                if (t.needs(w_spline)) {
                  for (int c = 0; c < in; ++c) {
                    for (int j = 0; j < out_dim; ++j) {
                      t.g(w_spline)(j, c) += dceff.block(c * nb, j, nb, 1)
                                                 .cwiseProduct(t.val(coeff).block(c * nb, j, nb, 1))
                                                 .sum();
                    }
                  }
                }
                if (t.needs(x)) {
                  const int rows = static_cast<int>(gy.rows());
                  std::vector<double> dbuf(nb);
                  // spline-path effective weights including w_spline
                  Mat ceff = t.val(coeff);
                  for (int c = 0; c < in; ++c) {
                    for (int j = 0; j < out_dim; ++j) {
                      ceff.block(c * nb, j, nb, 1) *= t.val(w_spline)(j, c);
                    }
                  }
                  for (int r = 0; r < rows; ++r) {
                    for (int c = 0; c < in; ++c) {
                      const double xv = t.val(x)(r, c);
                      gr.basis_deriv(xv, dbuf.data());
                      // clamp kills the spline gradient outside the grid
                      const bool inside = xv >= gr.lo && xv <= gr.hi;
                      double acc = 0.0;
                      for (int j = 0; j < out_dim; ++j) {
                        double spline_d = 0.0;
                        if (inside) {
                          for (int m = 0; m < nb; ++m) {
                            spline_d += ceff(c * nb + m, j) * dbuf[m];
                          }
                        }
                        const double s = sig(r, c);
                        const double silu_d = s * (1.0 + xv * (1.0 - s));
                        acc += gy(r, j) * (t.val(w_base)(j, c) * silu_d + spline_d);
                      }
                      t.g(x)(r, c) += acc;
                    }
                  }
                }
              });
}

Tape::V Tape::cross_entropy(V logits, int label) {
  if (val(logits).rows() != 1) throw BadDims("cross_entropy: expected 1 x M logits");
  const int m = static_cast<int>(val(logits).cols());
  if (label < 0 || label >= m) throw BadLabel("label " + std::to_string(label));
  const double mx = val(logits).maxCoeff();
  const double lse = mx + std::log((val(logits).array() - mx).exp().sum());
  Mat out(1, 1);
  out(0, 0) = lse - val(logits)(0, label);
  const int i = static_cast<int>(nodes_.size());
  return make(std::move(out), needs(logits), [i, logits, label, lse](Tape& t) {
    if (!t.needs(logits)) return;
    const double gy = t.nodes_[i].grad(0, 0);
    Mat p = (t.val(logits).array() - lse).exp();
    p(0, label) -= 1.0;
    t.g(logits) += gy * p;
  });
}

Tape::V Tape::cosine_rows(V a, V b) {
  if (val(a).rows() != 1 || val(b).rows() != 1 || val(a).cols() != val(b).cols()) {
    throw BadDims("cosine_rows: expected matching row vectors");
  }
  const double na = val(a).norm();
  const double nb = val(b).norm();
  if (na < 1e-300 || nb < 1e-300) throw ZeroVector("cosine of zero vector");
  Mat out(1, 1);
  out(0, 0) = val(a).row(0).dot(val(b).row(0)) / (na * nb);
  const bool ng = needs(a) || needs(b);
  const int i = static_cast<int>(nodes_.size());
  return make(std::move(out), ng, [i, a, b, na, nb](Tape& t) {
    const double gy = t.nodes_[i].grad(0, 0);
    const double c = t.nodes_[i].value(0, 0);
    if (t.needs(a)) {
      t.g(a) += gy * (t.val(b) / (na * nb) - c * t.val(a) / (na * na));
    }
    if (t.needs(b)) {
      t.g(b) += gy * (t.val(a) / (na * nb) - c * t.val(b) / (nb * nb));
    }
  });
}

void Tape::backward(V scalar) {
  if (!grad_enabled_) throw NumericalError("backward on a no-grad tape");
  if (val(scalar).size() != 1) throw BadDims("backward: loss must be scalar");
  if (!nodes_[scalar.i].needs_grad) return;  // no parameters involved
  nodes_[scalar.i].grad(0, 0) = 1.0;
  for (int i = scalar.i; i >= 0; --i) {
    if (nodes_[i].needs_grad && nodes_[i].back) nodes_[i].back(*this);
  }
}

}  // namespace pestalk::nn
