#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "test_helpers.hpp"
#include "tthf/aafm.hpp"

using namespace tthf;
using namespace tthf::aafm;
using tthf_test::random_matrix;

namespace {

CrossAttentionHead identity_head(int c) {
  CrossAttentionHead head;
  head.query_proj = ad::param(ad::Matrix::Identity(c, c));
  head.key_proj = ad::param(ad::Matrix::Identity(c, c));
  head.value_proj = ad::param(ad::Matrix::Identity(c, c));
  return head;
}

// Explicit-loop attention: logits, stable softmax, weighted sum.
Eigen::RowVectorXd attention_oracle(const Eigen::RowVectorXd& query, const Eigen::MatrixXd& fmap,
                                    const CrossAttentionHead& head) {
  const Eigen::Index c = query.cols();
  const Eigen::Index rows = fmap.rows();
  Eigen::RowVectorXd q = Eigen::RowVectorXd::Zero(c);
  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index i = 0; i < c; ++i) q(j) += query(i) * head.query_proj->val(i, j);
  }
  Eigen::VectorXd logits = Eigen::VectorXd::Zero(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index j = 0; j < c; ++j) {
      double k_rj = 0.0;
      for (Eigen::Index i = 0; i < c; ++i) k_rj += fmap(r, i) * head.key_proj->val(i, j);
      logits(r) += q(j) * k_rj;
    }
    logits(r) /= std::sqrt(static_cast<double>(c));
  }
  const double m = logits.maxCoeff();
  Eigen::VectorXd w(rows);
  double denom = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    w(r) = std::exp(logits(r) - m);
    denom += w(r);
  }
  w /= denom;
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(c);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index j = 0; j < c; ++j) {
      double v_rj = 0.0;
      for (Eigen::Index i = 0; i < c; ++i) v_rj += fmap(r, i) * head.value_proj->val(i, j);
      out(j) += w(r) * v_rj;
    }
  }
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("aafm");

TEST_CASE("single-row feature map collapses attention onto its value projection") {
  Rng rng(41);
  const int c = 5;
  CrossAttentionHead head = CrossAttentionHead::init(c, rng);
  auto p = ad::constant(random_matrix(1, c, rng));
  auto query = ad::constant(random_matrix(1, c, rng));
  AttendResult res = cross_attend(query, p, head);
  CHECK(res.weights(0) == doctest::Approx(1.0).epsilon(1e-12));
  ad::Matrix expected = p->val * head.value_proj->val;
  CHECK((res.output->val - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("orthogonal query over equal-norm keys averages the map") {
  const int c = 4;
  CrossAttentionHead head = identity_head(c);
  ad::Matrix p(3, c);
  p << 0, 0, 2, 0,
       0, 0, 0, 2,
       0, 0, 2, 0;
  ad::Matrix q(1, c);
  q << 1, 1, 0, 0;  // orthogonal to every key row
  AttendResult res = cross_attend(ad::constant(q), ad::constant(p), head);
  for (int r = 0; r < 3; ++r) CHECK(res.weights(r) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  ad::Matrix expected = p.colwise().mean();
  CHECK((res.output->val - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cross_attend matches the scalar attention oracle") {
  Rng rng(42);
  const int c = 3;
  CrossAttentionHead head = CrossAttentionHead::init(c, rng);
  ad::Matrix p = random_matrix(4, c, rng);
  ad::Matrix q = random_matrix(1, c, rng);
  AttendResult res = cross_attend(ad::constant(q), ad::constant(p), head);
  Eigen::RowVectorXd expected = attention_oracle(q.row(0), p, head);
  CHECK((res.output->val.row(0) - expected).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("cross_attend rejects an empty feature map") {
  Rng rng(43);
  CrossAttentionHead head = CrossAttentionHead::init(3, rng);
  auto p = ad::constant(ad::Matrix::Zero(0, 3));
  auto q = ad::constant(ad::Matrix::Zero(1, 3));
  CHECK_THROWS_AS(cross_attend(q, p, head), ValidationError);
}

TEST_CASE("attention weights form a simplex and ignore row order") {
  Rng rng(44);
  const int c = 6;
  for (int trial = 0; trial < 100; ++trial) {
    CrossAttentionHead head = CrossAttentionHead::init(c, rng);
    const int rows = 2 + static_cast<int>(rng.uniform_int(0, 6));
    ad::Matrix p = random_matrix(rows, c, rng);
    ad::Matrix q = random_matrix(1, c, rng);
    AttendResult res = cross_attend(ad::constant(q), ad::constant(p), head);
    CHECK(res.weights.minCoeff() >= 0.0);
    CHECK(std::abs(res.weights.sum() - 1.0) < 1e-6);

    // Permute rows; the weighted sum is order-free.
    std::vector<int> perm(rows);
    for (int i = 0; i < rows; ++i) perm[i] = i;
    for (int i = rows - 1; i > 0; --i) {
      std::swap(perm[i], perm[rng.uniform_int(0, i)]);
    }
    ad::Matrix shuffled(rows, c);
    for (int i = 0; i < rows; ++i) shuffled.row(i) = p.row(perm[i]);
    AttendResult res2 = cross_attend(ad::constant(q), ad::constant(shuffled), head);
    CHECK((res.output->val - res2.output->val).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("scaling the query preserves the argmax attention row") {
  Rng rng(45);
  const int c = 5;
  for (int trial = 0; trial < 100; ++trial) {
    CrossAttentionHead head = CrossAttentionHead::init(c, rng);
    ad::Matrix p = random_matrix(5, c, rng);
    ad::Matrix q = random_matrix(1, c, rng);
    const double alpha = std::exp(rng.uniform(-2.0, 2.0));
    AttendResult a = cross_attend(ad::constant(q), ad::constant(p), head);
    AttendResult b = cross_attend(ad::constant(ad::Matrix(alpha * q)), ad::constant(p), head);
    Eigen::Index argmax_a, argmax_b, dummy;
    a.weights.maxCoeff(&dummy, &argmax_a);
    b.weights.maxCoeff(&dummy, &argmax_b);
    CHECK(argmax_a == argmax_b);
  }
}

TEST_CASE("soft text representation fixed points") {
  const int c = 16;
  SUBCASE("aligned with one prompt, orthogonal to the rest") {
    ad::Matrix t = ad::Matrix::Zero(11, c);
    for (int m = 0; m < 11; ++m) t(m, m) = 2.0;  // mutually orthogonal rows
    ad::Matrix f = ad::Matrix::Zero(1, c);
    f(0, 0) = 3.0;  // parallel to prompt 1
    SoftTextResult res = soft_text_representation(ad::constant(f), ad::constant(t));
    CHECK(res.weights->val(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    for (int m = 1; m < 11; ++m) CHECK(res.weights->val(0, m) == doctest::Approx(0.0));
    CHECK((res.soft_text->val - t.row(0)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("equal cosines scale the prompt sum") {
    ad::Matrix t = ad::Matrix::Zero(11, c);
    for (int m = 0; m < 11; ++m) t(m, m) = 1.0;
    ad::Matrix f = ad::Matrix::Zero(1, c);
    for (int m = 0; m < 11; ++m) f(0, m) = 1.0;
    SoftTextResult res = soft_text_representation(ad::constant(f), ad::constant(t));
    const double s = 1.0 / std::sqrt(11.0);
    ad::Matrix expected = s * t.colwise().sum();
    CHECK((res.soft_text->val - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("soft text representation matches the scalar cosine oracle") {
  Rng rng(46);
  const int c = 5;
  ad::Matrix t = random_matrix(11, c, rng);
  ad::Matrix f = random_matrix(1, c, rng);
  SoftTextResult res = soft_text_representation(ad::constant(f), ad::constant(t));
  Eigen::RowVectorXd expected = Eigen::RowVectorXd::Zero(c);
  for (int m = 0; m < 11; ++m) {
    double dot = 0.0, fn = 0.0, tn = 0.0;
    for (int j = 0; j < c; ++j) {
      dot += f(0, j) * t(m, j);
      fn += f(0, j) * f(0, j);
      tn += t(m, j) * t(m, j);
    }
    const double cos = dot / (std::sqrt(fn) * std::sqrt(tn));
    CHECK(res.weights->val(0, m) == doctest::Approx(cos).epsilon(1e-9));
    expected += cos * t.row(m);
  }
  CHECK((res.soft_text->val.row(0) - expected).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("soft text weights are exactly invariant to positive rescaling") {
  Rng rng(47);
  const int c = 8;
  for (int trial = 0; trial < 100; ++trial) {
    ad::Matrix t = random_matrix(11, c, rng);
    ad::Matrix f = random_matrix(1, c, rng);
    const double alpha = std::exp(rng.uniform(-3.0, 3.0));
    SoftTextResult a = soft_text_representation(ad::constant(f), ad::constant(t));
    SoftTextResult b = soft_text_representation(ad::constant(ad::Matrix(alpha * f)),
                                                ad::constant(t));
    CHECK((a.weights->val - b.weights->val).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("soft text rejects zero-norm inputs") {
  Rng rng(48);
  ad::Matrix t = random_matrix(11, 4, rng);
  CHECK_THROWS_AS(soft_text_representation(ad::constant(ad::Matrix::Zero(1, 4)), ad::constant(t)),
                  NumericError);
  t.row(3).setZero();
  CHECK_THROWS_AS(
      soft_text_representation(ad::constant(random_matrix(1, 4, rng)), ad::constant(t)),
      NumericError);
}

TEST_CASE("fusion layer fixed points") {
  Rng rng(49);
  const int c = 4;
  SUBCASE("all-zero weights and biases give the zero output") {
    FusionLayer layer = FusionLayer::init(c, rng);
    layer.w1->val.setZero();
    layer.b1->val.setZero();
    layer.w2->val.setZero();
    layer.b2->val.setZero();
    auto out = fuse_enhanced(ad::constant(random_matrix(1, c, rng)),
                             ad::constant(random_matrix(1, c, rng)),
                             ad::constant(random_matrix(1, c, rng)), layer);
    CHECK(out->val.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("constructed projection returns the fused input") {
    FusionLayer layer = FusionLayer::init(c, rng);
    layer.activation = FusionLayer::Activation::identity;
    layer.w1->val.setZero();
    layer.w1->val.block(2 * c, 0, c, c) = ad::Matrix::Identity(c, c);
    layer.b1->val.setZero();
    layer.w2->val = ad::Matrix::Identity(c, c);
    layer.b2->val.setZero();
    ad::Matrix f = random_matrix(1, c, rng);
    auto out = fuse_enhanced(ad::constant(random_matrix(1, c, rng)),
                             ad::constant(random_matrix(1, c, rng)), ad::constant(f), layer);
    CHECK((out->val - f).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("fusion layer matches a scalar MLP oracle") {
  Rng rng(50);
  const int c = 4;
  FusionLayer layer = FusionLayer::init(c, rng);
  ad::Matrix vfr = random_matrix(1, c, rng), lfr = random_matrix(1, c, rng),
             f = random_matrix(1, c, rng);
  auto out = fuse_enhanced(ad::constant(vfr), ad::constant(lfr), ad::constant(f), layer);

  Eigen::RowVectorXd x(3 * c);
  x << vfr.row(0), lfr.row(0), f.row(0);
  Eigen::RowVectorXd hidden = Eigen::RowVectorXd::Zero(c);
  for (int j = 0; j < c; ++j) {
    double acc = layer.b1->val(0, j);
    for (int i = 0; i < 3 * c; ++i) acc += x(i) * layer.w1->val(i, j);
    hidden(j) = acc * 0.5 * (1.0 + std::erf(acc / std::sqrt(2.0)));  // gelu
  }
  Eigen::RowVectorXd expected = Eigen::RowVectorXd::Zero(c);
  for (int j = 0; j < c; ++j) {
    double acc = layer.b2->val(0, j);
    for (int i = 0; i < c; ++i) acc += hidden(i) * layer.w2->val(i, j);
    expected(j) = acc;
  }
  CHECK((out->val.row(0) - expected).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("fuse_enhanced validates input widths") {
  Rng rng(51);
  FusionLayer layer = FusionLayer::init(4, rng);
  CHECK_THROWS_AS(fuse_enhanced(ad::constant(ad::Matrix::Zero(1, 3)),
                                ad::constant(ad::Matrix::Zero(1, 4)),
                                ad::constant(ad::Matrix::Zero(1, 4)), layer),
                  ValidationError);
}

TEST_CASE("AAFM gradients match finite differences end to end") {
  Rng rng(52);
  const int c = 8;
  CrossAttentionHead vfs = CrossAttentionHead::init(c, rng);
  CrossAttentionHead lfs = CrossAttentionHead::init(c, rng);
  FusionLayer fusion = FusionLayer::init(c, rng);
  auto fmap = ad::param(random_matrix(4, c, rng));
  auto visual_ctx = ad::param(random_matrix(1, c, rng));
  auto fused = ad::param(random_matrix(1, c, rng));
  auto text = ad::param(random_matrix(11, c, rng));

  auto graph = [&]() {
    AttendResult vfr = visually_focused(visual_ctx, fmap, vfs);
    SoftTextResult soft = soft_text_representation(fused, text);
    AttendResult lfr = linguistically_focused(soft.soft_text, fmap, lfs);
    ad::Value enhanced = fuse_enhanced(vfr.output, lfr.output, fused, fusion);
    return ad::sum(ad::hadamard(enhanced, enhanced));
  };
  std::vector<ad::Value> probes = {vfs.query_proj, vfs.key_proj,  vfs.value_proj,
                                   lfs.query_proj, lfs.key_proj,  lfs.value_proj,
                                   fusion.w1,      fusion.b1,     fusion.w2,
                                   fusion.b2,      fmap,          visual_ctx,
                                   fused,          text};
  for (const auto& p : probes) {
    CHECK(ad::check_gradient(graph, p).max_rel_error < 1e-4);
  }
}

TEST_SUITE_END();
