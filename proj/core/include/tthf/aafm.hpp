#pragma once

#include "tthf/autodiff.hpp"
#include "tthf/common.hpp"

// Attentive anomaly focusing: two single-head cross-attention strategies over
// the clip feature map (one queried by the visual context, one by the soft
// text representation) and an MLP that fuses their outputs with the fused
// visual representation.
namespace tthf::aafm {

/// Single-head cross-attention projections. Plain linear maps C -> C; the
/// softmax scale is fixed at sqrt(C).
struct CrossAttentionHead {
  ad::Value query_proj;  // C x C
  ad::Value key_proj;    // C x C
  ad::Value value_proj;  // C x C

  static CrossAttentionHead init(int embed_dim, Rng& rng, bool trainable = true);
  void set_trainable(bool trainable);
  void collect_parameters(const std::string& prefix,
                          std::vector<std::pair<std::string, ad::Value>>& out) const;
};

/// Two-layer MLP mapping concat[VFR, LFR, F] (1 x 3C) back to 1 x C. The
/// identity activation exists for tests that need a linear path.
struct FusionLayer {
  enum class Activation { gelu, identity };

  ad::Value w1;  // 3C x C
  ad::Value b1;  // 1 x C
  ad::Value w2;  // C x C
  ad::Value b2;  // 1 x C
  Activation activation = Activation::gelu;

  static FusionLayer init(int embed_dim, Rng& rng, bool trainable = true);
  void set_trainable(bool trainable);
  void collect_parameters(const std::string& prefix,
                          std::vector<std::pair<std::string, ad::Value>>& out) const;
};

struct AttendResult {
  ad::Value output;               // 1 x C
  Eigen::RowVectorXd weights;     // 1 x (h*w), the softmax row
};

/// softmax(Q(query) K(P)^T / sqrt(C)) V(P).
AttendResult cross_attend(const ad::Value& query, const ad::Value& feature_map,
                          const CrossAttentionHead& head);

/// VFS: cross-attention queried by the clip's visual context.
AttendResult visually_focused(const ad::Value& visual_ctx, const ad::Value& feature_map,
                              const CrossAttentionHead& head);

struct SoftTextResult {
  ad::Value weights;    // 1 x 11, raw cosine similarities
  ad::Value soft_text;  // 1 x C
};

/// Cosine-weighted sum of the fine-grained prompt embeddings; the weights are
/// raw cosines (no softmax) and may be negative.
SoftTextResult soft_text_representation(const ad::Value& fused, const ad::Value& text_fine);

/// LFS: cross-attention queried by the soft text representation.
AttendResult linguistically_focused(const ad::Value& soft_text, const ad::Value& feature_map,
                                    const CrossAttentionHead& head);

/// F' = MLP(concat[VFR, LFR, F]).
ad::Value fuse_enhanced(const ad::Value& visually_focused, const ad::Value& linguistically_focused,
                        const ad::Value& fused, const FusionLayer& layer);

}  // namespace tthf::aafm
