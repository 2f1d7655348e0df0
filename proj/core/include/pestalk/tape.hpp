#pragma once

#include <functional>
#include <vector>

#include "pestalk/mat.hpp"
#include "pestalk/params.hpp"

namespace pestalk::nn {

// Reverse-mode autodiff over dense matrices. A Tape owns the forward values
// and per-node gradients of one computation; parameters live outside in a
// ParamStore and receive accumulated gradients on backward().
//
// Two modes:
//   Tape(Grad::on)   - records backward closures; param() creates leaves.
//   Tape(Grad::off)  - pure evaluation; param() behaves like constant().
// Frozen parameters are treated as constants unless include_frozen is set
// (finite-difference tests use that), so they never accumulate gradient
// during training.
class Tape {
public:
  enum class Grad { on, off };

  struct V {
    int i = -1;
    bool valid() const { return i >= 0; }
  };

  explicit Tape(Grad mode = Grad::on, bool include_frozen = false)
      : grad_enabled_(mode == Grad::on), include_frozen_(include_frozen) {}

  const Mat& val(V v) const { return nodes_[v.i].value; }
  const Mat& grad(V v) const { return nodes_[v.i].grad; }

  V constant(Mat m);
  V param(Parameter& p);

  // elementwise / structural
  V add(V a, V b);
  V sub(V a, V b);
  V mul(V a, V b);
  V scale(V a, double s);
  V add_rowvec(V a, V row);       // broadcast 1 x d over rows
  V add_const(V a, const Mat& c); // constant offset (PPE, attention bias)
  V transpose(V a);
  V concat_cols(V a, V b);
  V concat_rows(V a, V b);
  V slice_cols(V a, int c0, int n);
  V slice_rows(V a, int r0, int n);
  V repeat_row(V row, int t);
  V square(V a);

  // reductions
  V sum_all(V a);    // 1 x 1
  V mean_all(V a);   // 1 x 1
  V mean_rows(V a);  // 1 x d

  // scalar (1 x 1) arithmetic
  V div_scalar(V a, V s);
  V sqrt_scalar(V s);
  V add_scalar(V a, double c);
  V maximum0(V a);  // elementwise max(0, x); also the scalar hinge

  // nonlinearities
  V silu(V a);
  V sigmoid(V a);
  V relu(V a);
  V glu(V a);  // split columns in half, a1 * sigmoid(a2)
  V softmax_rows(V a);
  V layer_norm(V x, V gain, V bias, double eps = 1e-5);
  V l2_normalize_rows(V a, double eps = 1e-12);

  // linear algebra
  V matmul(V a, V b);

  // sequence ops
  V interp_rows(V a, int t);  // linear time interpolation onto t rows

  // conv: x is L x Cin, weight is (Cin*k) x Cout laid out w((c*k)+j, o),
  // bias 1 x Cout. Valid padding, stride s.
  V conv1d(V x, V weight, V bias, int kernel, int stride);
  // depthwise, same padding: weight k x C, bias 1 x C
  V depthwise_conv1d(V x, V weight, V bias);

  // spline layer: x T x in. w_base/w_spline out x in,
  // coeff (in*n_basis) x out with coeff(i*n_basis+m, j) = c_{j,i,m}.
  V kan(V x, V w_base, V w_spline, V coeff, const struct KanGrid& grid);

  // losses
  V cross_entropy(V logits, int label);  // softmax CE, logits 1 x M
  V cosine_rows(V a, V b);               // 1 x 1 cosine of two 1 x d rows

  // Seeds d(scalar)/d(scalar) = 1 and runs the recorded closures in reverse,
  // accumulating into Parameter::grad for every non-frozen leaf.
  void backward(V scalar);

  std::size_t size() const { return nodes_.size(); }

private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(Tape&)> back;
    Parameter* leaf = nullptr;
    bool needs_grad = false;
  };

  V make(Mat value, bool needs_grad, std::function<void(Tape&)> back = {});
  bool needs(V v) const { return nodes_[v.i].needs_grad; }
  Mat& g(V v) { return nodes_[v.i].grad; }

  std::vector<Node> nodes_;
  bool grad_enabled_;
  bool include_frozen_;
};

using V = Tape::V;

// Uniform B-spline grid on [lo, hi] with `points` knots, extended by `order`
// on both sides. n_basis() = points + order - 1.
struct KanGrid {
  int points = 5;
  int order = 3;
  double lo = -1.0;
  double hi = 1.0;

  int n_basis() const { return points + order - 1; }
  std::vector<double> extended_knots() const;
  // B_m(x) for m = 0..n_basis-1, x clamped to [lo, hi]
  void basis(double x, double* out) const;
  // derivative d B_m / dx at clamped x
  void basis_deriv(double x, double* out) const;
};

}  // namespace pestalk::nn
