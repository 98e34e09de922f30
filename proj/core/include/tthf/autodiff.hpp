#pragma once

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tthf/common.hpp"

// Reverse-mode autodiff over dense matrices. Graphs are built dynamically per
// forward pass; parameters are long-lived leaf nodes shared across steps.
// Spatial feature maps are stored row-major by position: a (h, w, c) map is a
// (h*w) x c matrix with row index y*w + x. Scalars are 1x1 matrices.
namespace tthf::ad {

using Matrix = Eigen::MatrixXd;

class Node;
using Value = std::shared_ptr<Node>;

class Node {
public:
  Matrix val;
  Matrix grad;  // allocated lazily by ensure_grad()
  bool requires_grad = false;
  std::vector<Value> parents;
  std::function<void(Node&)> backprop;  // pulls this node's grad into parents

  explicit Node(Matrix v, bool rg = false) : val(std::move(v)), requires_grad(rg) {}

  void ensure_grad() {
    if (grad.rows() != val.rows() || grad.cols() != val.cols()) {
      grad.setZero(val.rows(), val.cols());
    }
  }
  void zero_grad() { grad.resize(0, 0); }
};

/// Leaf with no gradient.
Value constant(Matrix v);
/// Leaf that accumulates gradient (a trainable parameter or probed input).
Value param(Matrix v);

/// Backpropagate d(root)/d(leaf) for every reachable leaf. root must be 1x1.
void backward(const Value& root);

// ---- elementwise ----
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value neg(const Value& a);
Value scale(const Value& a, double s);
Value hadamard(const Value& a, const Value& b);
Value divide(const Value& a, const Value& b);
Value exp(const Value& a);
Value log(const Value& a);
Value sqrt(const Value& a);
Value relu(const Value& a);
Value gelu(const Value& a);  // exact erf form

// ---- shape / structure ----
Value transpose(const Value& a);
Value row(const Value& a, Eigen::Index i);
/// Stack 1-row values into an n x c matrix.
Value stack_rows(const std::vector<Value>& rows);
/// Concatenate values with equal row counts along columns.
Value concat_cols(const std::vector<Value>& parts);

// ---- broadcast ----
/// a: n x c, bias: 1 x c, added to every row.
Value add_rowvec(const Value& a, const Value& bias);
/// a: any shape, s: 1x1; elementwise a * s.
Value mul_scalar(const Value& a, const Value& s);

// ---- reductions ----
Value sum(const Value& a);        // 1x1
Value mean_rows(const Value& a);  // 1 x c, column means

// ---- linear algebra ----
Value matmul(const Value& a, const Value& b);

// ---- neural net ----
Value softmax_rows(const Value& a);

/// Scale every row to unit L2 norm. Throws NumericError on a zero row.
Value l2_normalize_rows(const Value& a);

/// 2-D convolution via im2col. x is (h*w) x c_in, weight is (k*k*c_in) x c_out,
/// bias is 1 x c_out. Output is (h_out*w_out) x c_out with the same row-major
/// position layout. Column order inside a patch is (ky, kx, c_in) nested.
Value conv2d(const Value& x, const Value& weight, const Value& bias, int h, int w,
             int kernel, int stride, int pad);

/// Mean over rows of -log softmax(logits)[i, target[i]]. logits: n x d.
Value cross_entropy_rows(const Value& logits, const std::vector<int>& targets);

/// Text-axis grouped InfoNCE. logits: d x n where logits(j, i) is the score of
/// sample i against class j; targets[i] in [0, d). For each class j that has at
/// least one positive: term_j = logsumexp_i(logits(j,:)) - logsumexp_{i: t_i=j}.
/// Returns the mean of term_j over represented classes only.
Value grouped_nce_text_axis(const Value& logits, const std::vector<int>& targets);

// ---- utilities ----
inline double scalar(const Value& v) { return v->val(0, 0); }
bool all_finite(const Matrix& m);

/// im2col used by conv2d; exposed for tests and the scalar conv oracle.
Matrix im2col(const Matrix& x, int h, int w, int kernel, int stride, int pad);

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  Eigen::Index worst_row = 0, worst_col = 0;
};

/// Central-difference check of d f / d p against p->grad. `f` must rebuild the
/// graph from current leaf values and return a fresh 1x1 root.
FiniteDiffReport check_gradient(const std::function<Value()>& f, const Value& p,
                                double step = 1e-5);

}  // namespace tthf::ad
