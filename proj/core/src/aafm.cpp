#include "tthf/aafm.hpp"

#include <cmath>

namespace tthf::aafm {

namespace {
ad::Matrix xavier_init(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  ad::Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-limit, limit);
  }
  return m;
}
}  // namespace

CrossAttentionHead CrossAttentionHead::init(int embed_dim, Rng& rng, bool trainable) {
  CrossAttentionHead head;
  head.query_proj = ad::param(xavier_init(embed_dim, embed_dim, rng));
  head.key_proj = ad::param(xavier_init(embed_dim, embed_dim, rng));
  head.value_proj = ad::param(xavier_init(embed_dim, embed_dim, rng));
  head.set_trainable(trainable);
  return head;
}

void CrossAttentionHead::set_trainable(bool trainable) {
  query_proj->requires_grad = trainable;
  key_proj->requires_grad = trainable;
  value_proj->requires_grad = trainable;
}

void CrossAttentionHead::collect_parameters(
    const std::string& prefix, std::vector<std::pair<std::string, ad::Value>>& out) const {
  out.emplace_back(prefix + ".query_proj", query_proj);
  out.emplace_back(prefix + ".key_proj", key_proj);
  out.emplace_back(prefix + ".value_proj", value_proj);
}

FusionLayer FusionLayer::init(int embed_dim, Rng& rng, bool trainable) {
  FusionLayer layer;
  layer.w1 = ad::param(xavier_init(3 * embed_dim, embed_dim, rng));
  layer.b1 = ad::param(ad::Matrix::Zero(1, embed_dim));
  layer.w2 = ad::param(xavier_init(embed_dim, embed_dim, rng));
  layer.b2 = ad::param(ad::Matrix::Zero(1, embed_dim));
  layer.set_trainable(trainable);
  return layer;
}

void FusionLayer::set_trainable(bool trainable) {
  w1->requires_grad = trainable;
  b1->requires_grad = trainable;
  w2->requires_grad = trainable;
  b2->requires_grad = trainable;
}

void FusionLayer::collect_parameters(const std::string& prefix,
                                     std::vector<std::pair<std::string, ad::Value>>& out) const {
  out.emplace_back(prefix + ".w1", w1);
  out.emplace_back(prefix + ".b1", b1);
  out.emplace_back(prefix + ".w2", w2);
  out.emplace_back(prefix + ".b2", b2);
}

AttendResult cross_attend(const ad::Value& query, const ad::Value& feature_map,
                          const CrossAttentionHead& head) {
  const Eigen::Index c = head.query_proj->val.rows();
  if (query->val.rows() != 1 || query->val.cols() != c) {
    throw ValidationError("cross_attend: query must be 1 x C");
  }
  if (feature_map->val.rows() < 1) {
    throw ValidationError("cross_attend: empty feature map");
  }
  if (feature_map->val.cols() != c) {
    throw ValidationError("cross_attend: feature map width must equal C");
  }
  ad::Value q = ad::matmul(query, head.query_proj);
  ad::Value k = ad::matmul(feature_map, head.key_proj);
  ad::Value v = ad::matmul(feature_map, head.value_proj);
  ad::Value logits = ad::scale(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(double(c)));
  ad::Value attn = ad::softmax_rows(logits);
  AttendResult res;
  res.weights = attn->val.row(0);
  res.output = ad::matmul(attn, v);
  return res;
}

AttendResult visually_focused(const ad::Value& visual_ctx, const ad::Value& feature_map,
                              const CrossAttentionHead& head) {
  return cross_attend(visual_ctx, feature_map, head);
}

SoftTextResult soft_text_representation(const ad::Value& fused, const ad::Value& text_fine) {
  if (fused->val.rows() != 1) throw ValidationError("soft_text: fused must be 1 x C");
  if (text_fine->val.cols() != fused->val.cols()) {
    throw ValidationError("soft_text: prompt embedding width must equal C");
  }
  if (fused->val.row(0).norm() == 0.0) {
    throw NumericError("soft_text: zero-norm visual representation");
  }
  for (Eigen::Index m = 0; m < text_fine->val.rows(); ++m) {
    if (text_fine->val.row(m).norm() == 0.0) {
      throw NumericError("soft_text: zero-norm prompt embedding");
    }
  }
  // cos(F, T_m) for every prompt, assembled as a 1 x M row.
  ad::Value f_hat = ad::l2_normalize_rows(fused);
  ad::Value t_hat = ad::l2_normalize_rows(text_fine);
  SoftTextResult res;
  res.weights = ad::matmul(f_hat, ad::transpose(t_hat));
  res.soft_text = ad::matmul(res.weights, text_fine);
  return res;
}

AttendResult linguistically_focused(const ad::Value& soft_text, const ad::Value& feature_map,
                                    const CrossAttentionHead& head) {
  return cross_attend(soft_text, feature_map, head);
}

ad::Value fuse_enhanced(const ad::Value& visually_focused, const ad::Value& linguistically_focused,
                        const ad::Value& fused, const FusionLayer& layer) {
  const Eigen::Index c = layer.w2->val.rows();
  for (const auto& v : {visually_focused, linguistically_focused, fused}) {
    if (v->val.rows() != 1 || v->val.cols() != c) {
      throw ValidationError("fuse_enhanced: inputs must be 1 x C");
    }
  }
  ad::Value x = ad::concat_cols({visually_focused, linguistically_focused, fused});
  ad::Value hidden = ad::add_rowvec(ad::matmul(x, layer.w1), layer.b1);
  if (layer.activation == FusionLayer::Activation::gelu) {
    hidden = ad::gelu(hidden);
  }
  return ad::add_rowvec(ad::matmul(hidden, layer.w2), layer.b2);
}

}  // namespace tthf::aafm
