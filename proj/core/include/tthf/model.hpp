#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tthf/aafm.hpp"
#include "tthf/autodiff.hpp"
#include "tthf/dataset.hpp"
#include "tthf/encoders.hpp"
#include "tthf/objective.hpp"

namespace tthf {

struct ModelConfig {
  enc::BackboneKind backbone = enc::BackboneKind::toy_conv;
  int embed_dim = 32;
  int input_size = data::kInputSize;
  int vocab_buckets = 1024;
  bool train_text_encoder = true;
  bool share_ca_heads = false;
  bool disable_thfm = false;
  bool cosine_in_loss = false;
  double init_tau = 0.07;
  std::uint64_t seed = 42;
  data::PreprocessOptions preprocess = data::synthetic_preprocess();
  /// Overrides the kind-derived architecture; used by small test instances.
  std::optional<enc::BackboneSpec> custom_backbone;

  enc::BackboneSpec backbone_spec() const;
  /// Stable hash of every architecture-determining field. Checkpoints carry it
  /// and refuse to load into a different architecture.
  std::uint64_t fingerprint() const;
};

/// The full detector: frozen visual encoder, trainable high-frequency encoder
/// sharing its architecture, text encoder, the two cross-attention heads, the
/// fusion MLP and the learned temperature.
class TthfModel {
public:
  static TthfModel init(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  int embed_dim() const { return config_.embed_dim; }

  const enc::ConvBackbone& visual_encoder() const { return visual_; }
  const enc::ConvBackbone& high_freq_encoder() const { return high_freq_; }
  const enc::TextEncoder& text_encoder() const { return text_; }
  const aafm::CrossAttentionHead& vfs_head() const { return vfs_head_; }
  const aafm::CrossAttentionHead& lfs_head() const { return lfs_head_; }
  const aafm::FusionLayer& fusion_layer() const { return fusion_; }
  const objective::Temperature& temperature() const { return temperature_; }
  objective::Temperature& temperature() { return temperature_; }

  ad::Value encode_fine_prompts() const;     // 11 x C
  ad::Value encode_general_prompts() const;  // 2 x C

  struct ClipForward {
    ad::Value visual_ctx;   // V, 1 x C
    ad::Value feature_map;  // P, h*w x C
    ad::Value high_freq;    // H, 1 x C
    ad::Value fused;        // F, 1 x C
    ad::Value enhanced;     // F', 1 x C
    Eigen::RowVectorXd vfs_weights, lfs_weights, soft_weights;
  };

  /// Full forward for one clip. prev/cur are (input_size^2) x 3 nodes; pass
  /// ad::param leaves to probe input gradients.
  ClipForward forward_clip(const ad::Value& prev_frame, const ad::Value& cur_frame,
                           const ad::Value& text_fine) const;

  /// Pooled embedding and pre-pooling map of one frame under the frozen
  /// visual encoder; cacheable across epochs.
  struct VisualFrameFeatures {
    Eigen::RowVectorXd pooled;
    Eigen::MatrixXd map;
  };
  VisualFrameFeatures encode_frame_visual(const Eigen::MatrixXd& frame) const;

  /// Forward with precomputed visual features; diff is cur - prev.
  ClipForward forward_clip_cached(const VisualFrameFeatures& prev,
                                  const VisualFrameFeatures& cur, const ad::Value& diff,
                                  const ad::Value& text_fine) const;

  std::vector<std::pair<std::string, ad::Value>> parameters() const;
  std::vector<std::pair<std::string, ad::Value>> trainable_parameters() const;

  void save_checkpoint(const std::filesystem::path& path) const;
  /// Rebuilds the model from the checkpoint header. When `expected` is given,
  /// its fingerprint (plus embed_dim / backbone kind, reported separately)
  /// must match the stored one.
  static TthfModel load_checkpoint(const std::filesystem::path& path,
                                   const std::optional<ModelConfig>& expected = std::nullopt);

private:
  TthfModel() = default;

  ModelConfig config_;
  enc::ConvBackbone visual_;
  enc::ConvBackbone high_freq_;
  enc::TextEncoder text_;
  aafm::CrossAttentionHead vfs_head_;
  aafm::CrossAttentionHead lfs_head_;
  aafm::FusionLayer fusion_;
  objective::Temperature temperature_;
};

}  // namespace tthf
