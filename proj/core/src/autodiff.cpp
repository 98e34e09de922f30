#include "tthf/autodiff.hpp"

#include <cmath>
#include <unordered_set>

namespace tthf::ad {

namespace {

Value make_node(Matrix v, std::vector<Value> parents, std::function<void(Node&)> fn) {
  auto n = std::make_shared<Node>(std::move(v));
  for (const auto& p : parents) {
    if (p->requires_grad) {
      n->requires_grad = true;
      break;
    }
  }
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backprop = std::move(fn);
  }
  return n;
}

void check_same_shape(const Value& a, const Value& b, const char* op) {
  if (a->val.rows() != b->val.rows() || a->val.cols() != b->val.cols()) {
    throw ValidationError(std::string(op) + ": shape mismatch " +
                          std::to_string(a->val.rows()) + "x" + std::to_string(a->val.cols()) +
                          " vs " + std::to_string(b->val.rows()) + "x" +
                          std::to_string(b->val.cols()));
  }
}

}  // namespace

Value constant(Matrix v) { return std::make_shared<Node>(std::move(v), false); }

Value param(Matrix v) { return std::make_shared<Node>(std::move(v), true); }

void backward(const Value& root) {
  if (root->val.rows() != 1 || root->val.cols() != 1) {
    throw NumericError("backward: root must be a scalar");
  }
  // Iterative post-order over parents.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

Value add(const Value& a, const Value& b) {
  check_same_shape(a, b, "add");
  return make_node(a->val + b->val, {a, b}, [a, b](Node& n) {
    if (a->requires_grad) { a->ensure_grad(); a->grad += n.grad; }
    if (b->requires_grad) { b->ensure_grad(); b->grad += n.grad; }
  });
}

Value sub(const Value& a, const Value& b) {
  check_same_shape(a, b, "sub");
  return make_node(a->val - b->val, {a, b}, [a, b](Node& n) {
    if (a->requires_grad) { a->ensure_grad(); a->grad += n.grad; }
    if (b->requires_grad) { b->ensure_grad(); b->grad -= n.grad; }
  });
}

Value neg(const Value& a) { return scale(a, -1.0); }

Value scale(const Value& a, double s) {
  return make_node(a->val * s, {a}, [a, s](Node& n) {
    a->ensure_grad();
    a->grad += n.grad * s;
  });
}

Value hadamard(const Value& a, const Value& b) {
  check_same_shape(a, b, "hadamard");
  return make_node(a->val.cwiseProduct(b->val), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) { a->ensure_grad(); a->grad += n.grad.cwiseProduct(b->val); }
    if (b->requires_grad) { b->ensure_grad(); b->grad += n.grad.cwiseProduct(a->val); }
  });
}

Value divide(const Value& a, const Value& b) {
  check_same_shape(a, b, "divide");
  return make_node(a->val.cwiseQuotient(b->val), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) { a->ensure_grad(); a->grad += n.grad.cwiseQuotient(b->val); }
    if (b->requires_grad) {
      b->ensure_grad();
      b->grad -= (n.grad.cwiseProduct(a->val)).cwiseQuotient(b->val.cwiseProduct(b->val));
    }
  });
}

Value exp(const Value& a) {
  Matrix y = a->val.array().exp().matrix();
  return make_node(y, {a}, [a, y](Node& n) {
    a->ensure_grad();
    a->grad += n.grad.cwiseProduct(y);
  });
}

Value log(const Value& a) {
  return make_node(a->val.array().log().matrix(), {a}, [a](Node& n) {
    a->ensure_grad();
    a->grad += n.grad.cwiseQuotient(a->val);
  });
}

Value sqrt(const Value& a) {
  Matrix y = a->val.array().sqrt().matrix();
  return make_node(y, {a}, [a, y](Node& n) {
    a->ensure_grad();
    a->grad += n.grad.cwiseQuotient(2.0 * y);
  });
}

Value relu(const Value& a) {
  return make_node(a->val.cwiseMax(0.0), {a}, [a](Node& n) {
    a->ensure_grad();
    a->grad += n.grad.cwiseProduct(
        (a->val.array() > 0.0).cast<double>().matrix());
  });
}

Value gelu(const Value& a) {
  const double inv_sqrt2 = 0.7071067811865475244;
  const double inv_sqrt2pi = 0.3989422804014326779;
  auto gauss_cdf = [inv_sqrt2](double x) { return 0.5 * (1.0 + std::erf(x * inv_sqrt2)); };
  Matrix y = a->val.unaryExpr([&](double x) { return x * gauss_cdf(x); });
  return make_node(y, {a}, [a, gauss_cdf, inv_sqrt2pi](Node& n) {
    a->ensure_grad();
    Matrix dydx = a->val.unaryExpr([&](double x) {
      return gauss_cdf(x) + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
    });
    a->grad += n.grad.cwiseProduct(dydx);
  });
}

Value transpose(const Value& a) {
  return make_node(a->val.transpose(), {a}, [a](Node& n) {
    a->ensure_grad();
    a->grad += n.grad.transpose();
  });
}

Value row(const Value& a, Eigen::Index i) {
  if (i < 0 || i >= a->val.rows()) throw ValidationError("row: index out of range");
  return make_node(a->val.row(i), {a}, [a, i](Node& n) {
    a->ensure_grad();
    a->grad.row(i) += n.grad.row(0);
  });
}

Value stack_rows(const std::vector<Value>& rows) {
  if (rows.empty()) throw ValidationError("stack_rows: empty input");
  Eigen::Index c = rows[0]->val.cols();
  Matrix out(static_cast<Eigen::Index>(rows.size()), c);
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i]->val.rows() != 1 || rows[i]->val.cols() != c) {
      throw ValidationError("stack_rows: all inputs must be 1-row with equal width");
    }
    out.row(static_cast<Eigen::Index>(i)) = rows[i]->val.row(0);
  }
  return make_node(std::move(out), rows, [rows](Node& n) {
    for (size_t i = 0; i < rows.size(); ++i) {
      if (!rows[i]->requires_grad) continue;
      rows[i]->ensure_grad();
      rows[i]->grad.row(0) += n.grad.row(static_cast<Eigen::Index>(i));
    }
  });
}

Value concat_cols(const std::vector<Value>& parts) {
  if (parts.empty()) throw ValidationError("concat_cols: empty input");
  Eigen::Index r = parts[0]->val.rows();
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    if (p->val.rows() != r) throw ValidationError("concat_cols: row count mismatch");
    total += p->val.cols();
  }
  Matrix out(r, total);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p->val.cols()) = p->val;
    off += p->val.cols();
  }
  return make_node(std::move(out), parts, [parts](Node& n) {
    Eigen::Index off = 0;
    for (const auto& p : parts) {
      if (p->requires_grad) {
        p->ensure_grad();
        p->grad += n.grad.middleCols(off, p->val.cols());
      }
      off += p->val.cols();
    }
  });
}

Value add_rowvec(const Value& a, const Value& bias) {
  if (bias->val.rows() != 1 || bias->val.cols() != a->val.cols()) {
    throw ValidationError("add_rowvec: bias must be 1 x cols(a)");
  }
  return make_node(a->val.rowwise() + bias->val.row(0), {a, bias}, [a, bias](Node& n) {
    if (a->requires_grad) { a->ensure_grad(); a->grad += n.grad; }
    if (bias->requires_grad) {
      bias->ensure_grad();
      bias->grad += n.grad.colwise().sum();
    }
  });
}

Value mul_scalar(const Value& a, const Value& s) {
  if (s->val.rows() != 1 || s->val.cols() != 1) throw ValidationError("mul_scalar: s must be 1x1");
  return make_node(a->val * s->val(0, 0), {a, s}, [a, s](Node& n) {
    if (a->requires_grad) { a->ensure_grad(); a->grad += n.grad * s->val(0, 0); }
    if (s->requires_grad) {
      s->ensure_grad();
      s->grad(0, 0) += n.grad.cwiseProduct(a->val).sum();
    }
  });
}

Value sum(const Value& a) {
  Matrix out(1, 1);
  out(0, 0) = a->val.sum();
  return make_node(std::move(out), {a}, [a](Node& n) {
    a->ensure_grad();
    a->grad.array() += n.grad(0, 0);
  });
}

Value mean_rows(const Value& a) {
  const double n_rows = static_cast<double>(a->val.rows());
  return make_node(a->val.colwise().mean(), {a}, [a, n_rows](Node& n) {
    a->ensure_grad();
    a->grad += (Matrix::Ones(a->val.rows(), 1) * n.grad.row(0)) / n_rows;
  });
}

Value matmul(const Value& a, const Value& b) {
  if (a->val.cols() != b->val.rows()) {
    throw ValidationError("matmul: inner dimensions differ (" + std::to_string(a->val.cols()) +
                          " vs " + std::to_string(b->val.rows()) + ")");
  }
  return make_node(a->val * b->val, {a, b}, [a, b](Node& n) {
    if (a->requires_grad) { a->ensure_grad(); a->grad.noalias() += n.grad * b->val.transpose(); }
    if (b->requires_grad) { b->ensure_grad(); b->grad.noalias() += a->val.transpose() * n.grad; }
  });
}

Value softmax_rows(const Value& a) {
  Matrix y(a->val.rows(), a->val.cols());
  for (Eigen::Index i = 0; i < a->val.rows(); ++i) {
    Eigen::ArrayXd z = a->val.row(i).transpose().array();
    double m = z.maxCoeff();
    Eigen::ArrayXd e = (z - m).exp();
    y.row(i) = (e / e.sum()).transpose();
  }
  return make_node(y, {a}, [a, y](Node& n) {
    a->ensure_grad();
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      double dot = n.grad.row(i).cwiseProduct(y.row(i)).sum();
      a->grad.row(i) +=
          y.row(i).cwiseProduct(n.grad.row(i) - Eigen::RowVectorXd::Constant(y.cols(), dot));
    }
  });
}

Value l2_normalize_rows(const Value& a) {
  Matrix y(a->val.rows(), a->val.cols());
  Eigen::VectorXd norms(a->val.rows());
  for (Eigen::Index i = 0; i < a->val.rows(); ++i) {
    const double n = a->val.row(i).norm();
    if (n == 0.0) throw NumericError("l2_normalize_rows: zero-norm row");
    norms(i) = n;
    y.row(i) = a->val.row(i) / n;
  }
  return make_node(y, {a}, [a, y, norms](Node& n) {
    a->ensure_grad();
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const double dot = n.grad.row(i).cwiseProduct(y.row(i)).sum();
      a->grad.row(i) += (n.grad.row(i) - dot * y.row(i)) / norms(i);
    }
  });
}

Matrix im2col(const Matrix& x, int h, int w, int kernel, int stride, int pad) {
  const int cin = static_cast<int>(x.cols());
  if (x.rows() != static_cast<Eigen::Index>(h) * w) {
    throw ValidationError("im2col: input rows != h*w");
  }
  const int ho = (h + 2 * pad - kernel) / stride + 1;
  const int wo = (w + 2 * pad - kernel) / stride + 1;
  if (ho <= 0 || wo <= 0) throw ValidationError("im2col: kernel larger than padded input");
  Matrix cols = Matrix::Zero(static_cast<Eigen::Index>(ho) * wo,
                             static_cast<Eigen::Index>(kernel) * kernel * cin);
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      const Eigen::Index out_row = static_cast<Eigen::Index>(oy) * wo + ox;
      for (int ky = 0; ky < kernel; ++ky) {
        const int iy = oy * stride + ky - pad;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < kernel; ++kx) {
          const int ix = ox * stride + kx - pad;
          if (ix < 0 || ix >= w) continue;
          cols.block(out_row, (static_cast<Eigen::Index>(ky) * kernel + kx) * cin, 1, cin) =
              x.row(static_cast<Eigen::Index>(iy) * w + ix);
        }
      }
    }
  }
  return cols;
}

namespace {
// Scatter-add counterpart of im2col, used for input gradients.
Matrix col2im(const Matrix& cols, int h, int w, int cin, int kernel, int stride, int pad) {
  const int ho = (h + 2 * pad - kernel) / stride + 1;
  const int wo = (w + 2 * pad - kernel) / stride + 1;
  Matrix x = Matrix::Zero(static_cast<Eigen::Index>(h) * w, cin);
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      const Eigen::Index out_row = static_cast<Eigen::Index>(oy) * wo + ox;
      for (int ky = 0; ky < kernel; ++ky) {
        const int iy = oy * stride + ky - pad;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < kernel; ++kx) {
          const int ix = ox * stride + kx - pad;
          if (ix < 0 || ix >= w) continue;
          x.row(static_cast<Eigen::Index>(iy) * w + ix) +=
              cols.block(out_row, (static_cast<Eigen::Index>(ky) * kernel + kx) * cin, 1, cin);
        }
      }
    }
  }
  return x;
}
}  // namespace

Value conv2d(const Value& x, const Value& weight, const Value& bias, int h, int w, int kernel,
             int stride, int pad) {
  const int cin = static_cast<int>(x->val.cols());
  if (weight->val.rows() != static_cast<Eigen::Index>(kernel) * kernel * cin) {
    throw ValidationError("conv2d: weight rows must be kernel*kernel*c_in");
  }
  if (bias->val.rows() != 1 || bias->val.cols() != weight->val.cols()) {
    throw ValidationError("conv2d: bias must be 1 x c_out");
  }
  Matrix cols = im2col(x->val, h, w, kernel, stride, pad);
  Matrix out = cols * weight->val;
  out.rowwise() += bias->val.row(0);
  // The im2col buffer is kept alive only when a backward pass can need it.
  auto n = std::make_shared<Node>(std::move(out));
  n->requires_grad = x->requires_grad || weight->requires_grad || bias->requires_grad;
  if (n->requires_grad) {
    auto cols_keep = std::make_shared<Matrix>(std::move(cols));
    n->parents = {x, weight, bias};
    n->backprop = [x, weight, bias, cols_keep, h, w, cin, kernel, stride, pad](Node& nn) {
      if (weight->requires_grad) {
        weight->ensure_grad();
        weight->grad.noalias() += cols_keep->transpose() * nn.grad;
      }
      if (bias->requires_grad) {
        bias->ensure_grad();
        bias->grad += nn.grad.colwise().sum();
      }
      if (x->requires_grad) {
        x->ensure_grad();
        Matrix gcols = nn.grad * weight->val.transpose();
        x->grad += col2im(gcols, h, w, cin, kernel, stride, pad);
      }
    };
  }
  return n;
}

Value cross_entropy_rows(const Value& logits, const std::vector<int>& targets) {
  const Eigen::Index n_rows = logits->val.rows();
  const Eigen::Index d = logits->val.cols();
  if (static_cast<Eigen::Index>(targets.size()) != n_rows) {
    throw ValidationError("cross_entropy_rows: one target per row required");
  }
  if (!all_finite(logits->val)) throw NumericError("cross_entropy_rows: non-finite logits");
  Matrix probs(n_rows, d);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n_rows; ++i) {
    if (targets[i] < 0 || targets[i] >= d) {
      throw ValidationError("cross_entropy_rows: target out of range");
    }
    Eigen::ArrayXd z = logits->val.row(i).transpose().array();
    double m = z.maxCoeff();
    Eigen::ArrayXd e = (z - m).exp();
    double denom = e.sum();
    probs.row(i) = (e / denom).transpose();
    // The row logsumexp is >= the target logit; clamp off rounding noise.
    loss += std::max(0.0, m + std::log(denom) - logits->val(i, targets[i]));
  }
  loss /= static_cast<double>(n_rows);
  Matrix out(1, 1);
  out(0, 0) = loss;
  return make_node(std::move(out), {logits}, [logits, probs, targets, n_rows](Node& n) {
    logits->ensure_grad();
    const double g = n.grad(0, 0) / static_cast<double>(n_rows);
    Matrix delta = probs;
    for (Eigen::Index i = 0; i < n_rows; ++i) delta(i, targets[i]) -= 1.0;
    logits->grad += g * delta;
  });
}

Value grouped_nce_text_axis(const Value& logits, const std::vector<int>& targets) {
  const Eigen::Index d = logits->val.rows();
  const Eigen::Index n_cols = logits->val.cols();
  if (static_cast<Eigen::Index>(targets.size()) != n_cols) {
    throw ValidationError("grouped_nce_text_axis: one target per column required");
  }
  if (!all_finite(logits->val)) throw NumericError("grouped_nce_text_axis: non-finite logits");
  std::vector<std::vector<int>> members(d);
  for (Eigen::Index i = 0; i < n_cols; ++i) {
    if (targets[i] < 0 || targets[i] >= d) {
      throw ValidationError("grouped_nce_text_axis: target out of range");
    }
    members[targets[i]].push_back(static_cast<int>(i));
  }
  std::vector<int> represented;
  for (int j = 0; j < d; ++j) {
    if (!members[j].empty()) represented.push_back(j);
  }
  if (represented.empty()) {
    throw ValidationError("grouped_nce_text_axis: batch has no represented classes");
  }

  // Per represented class: softmax over all samples and over positives only.
  Matrix soft_all = Matrix::Zero(d, n_cols);
  Matrix soft_pos = Matrix::Zero(d, n_cols);
  double loss = 0.0;
  for (int j : represented) {
    Eigen::ArrayXd z = logits->val.row(j).transpose().array();
    double m_all = z.maxCoeff();
    Eigen::ArrayXd e_all = (z - m_all).exp();
    double denom_all = e_all.sum();
    soft_all.row(j) = (e_all / denom_all).transpose();
    double lse_all = m_all + std::log(denom_all);

    double m_pos = -std::numeric_limits<double>::infinity();
    for (int i : members[j]) m_pos = std::max(m_pos, logits->val(j, i));
    double denom_pos = 0.0;
    for (int i : members[j]) denom_pos += std::exp(logits->val(j, i) - m_pos);
    for (int i : members[j]) {
      soft_pos(j, i) = std::exp(logits->val(j, i) - m_pos) / denom_pos;
    }
    double lse_pos = m_pos + std::log(denom_pos);
    // lse_all >= lse_pos exactly; keep rounding noise out of the sum.
    loss += std::max(0.0, lse_all - lse_pos);
  }
  const double n_classes = static_cast<double>(represented.size());
  loss /= n_classes;
  Matrix out(1, 1);
  out(0, 0) = loss;
  return make_node(std::move(out), {logits},
                   [logits, soft_all, soft_pos, represented, n_classes](Node& n) {
                     logits->ensure_grad();
                     const double g = n.grad(0, 0) / n_classes;
                     for (int j : represented) {
                       logits->grad.row(j) += g * (soft_all.row(j) - soft_pos.row(j));
                     }
                   });
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

FiniteDiffReport check_gradient(const std::function<Value()>& f, const Value& p, double step) {
  p->zero_grad();
  Value root = f();
  backward(root);
  FiniteDiffReport rep;
  Matrix analytic = p->grad;
  if (analytic.size() == 0) analytic = Matrix::Zero(p->val.rows(), p->val.cols());
  for (Eigen::Index r = 0; r < p->val.rows(); ++r) {
    for (Eigen::Index c = 0; c < p->val.cols(); ++c) {
      const double saved = p->val(r, c);
      p->val(r, c) = saved + step;
      const double fp = scalar(f());
      p->val(r, c) = saved - step;
      const double fm = scalar(f());
      p->val(r, c) = saved;
      const double fd = (fp - fm) / (2.0 * step);
      const double ad_g = analytic(r, c);
      const double denom = std::max({std::abs(ad_g), std::abs(fd), 1e-6});
      const double rel = std::abs(ad_g - fd) / denom;
      if (rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst_row = r;
        rep.worst_col = c;
      }
    }
  }
  return rep;
}

}  // namespace tthf::ad
