#pragma once

#include <string>
#include <vector>

#include "tthf/autodiff.hpp"
#include "tthf/common.hpp"

namespace tthf::enc {

enum class BackboneKind { pretrained_clip, toy_conv };

std::string to_string(BackboneKind k);
BackboneKind backbone_from_string(const std::string& s);

struct ConvLayerSpec {
  int kernel = 1;
  int stride = 1;
  int pad = 0;
  int out_channels = 1;
};

/// Architecture of a convolutional encoder. The final layer maps to the
/// embedding dimension; activations sit between layers but not after the last.
struct BackboneSpec {
  BackboneKind kind = BackboneKind::toy_conv;
  int input_size = 224;
  int embed_dim = 32;
  std::vector<ConvLayerSpec> layers;

  /// 3 conv blocks, 224 -> 14 -> 2, C=32 by default. Runs everywhere without
  /// pretrained weights.
  static BackboneSpec toy(int embed_dim = 32, int input_size = 224);
  /// Wider stack in the shape of a CLIP-style image encoder: 224 -> 7x7 patch
  /// grid, C=1024. Weights are random unless a checkpoint provides them.
  static BackboneSpec clip_like(int embed_dim = 1024, int input_size = 224);

  /// (h, w) of the final feature map.
  std::pair<int, int> feature_dims() const;
  int feature_rows() const;
  void validate() const;
};

/// Convolutional encoder producing a spatial feature map (h*w x C) and, via
/// mean pooling over positions, a 1 x C embedding.
struct ConvBackbone {
  BackboneSpec spec;
  struct Layer {
    ad::Value weight;  // (k*k*c_in) x c_out
    ad::Value bias;    // 1 x c_out
  };
  std::vector<Layer> layers;

  static ConvBackbone init(const BackboneSpec& spec, Rng& rng, bool trainable);

  /// image: (input_size^2) x 3 -> final map (h*w) x C.
  ad::Value feature_map(const ad::Value& image) const;
  /// Global average pooling of a feature map.
  static ad::Value pooled(const ad::Value& feature_map);

  void set_trainable(bool trainable);
  void collect_parameters(const std::string& prefix,
                          std::vector<std::pair<std::string, ad::Value>>& out) const;
};

/// Trainable bag-of-tokens text encoder: hashed token embeddings, mean pooled,
/// then a linear projection. A stand-in with the same contract as a pretrained
/// text tower; prompts map to embeddings deterministically given parameters.
struct TextEncoder {
  int embed_dim = 32;
  int vocab_buckets = 1024;
  ad::Value token_table;  // vocab_buckets x C
  ad::Value proj_weight;  // C x C
  ad::Value proj_bias;    // 1 x C

  static TextEncoder init(int embed_dim, Rng& rng, bool trainable, int vocab_buckets = 1024);

  /// Lowercase, split on whitespace, strip edge punctuation (inner hyphens
  /// kept), hash into buckets.
  static std::vector<int> tokenize(const std::string& text, int vocab_buckets);

  /// One 1 x C embedding; throws on empty/whitespace-only input.
  ad::Value encode(const std::string& text) const;
  /// Stacked embeddings, one row per prompt.
  ad::Value encode_batch(const std::vector<std::string>& texts) const;

  void set_trainable(bool trainable);
  void collect_parameters(const std::string& prefix,
                          std::vector<std::pair<std::string, ad::Value>>& out) const;
};

// ---- THFM ----

/// Signed element-wise difference cur - prev of two normalized frames.
Eigen::MatrixXd extract_temporal_high_frequency(const Eigen::MatrixXd& prev_frame,
                                                const Eigen::MatrixXd& cur_frame);
ad::Value extract_temporal_high_frequency(const ad::Value& prev_frame,
                                          const ad::Value& cur_frame);

/// High-frequency embedding of a frame difference.
ad::Value encode_high_frequency(const ConvBackbone& encoder, const ad::Value& diff);

struct FrameEncoding {
  ad::Value pooled_prev;  // 1 x C
  ad::Value pooled_cur;   // 1 x C
  ad::Value feature_map;  // h*w x C, mean of the two frames' maps
};

/// Per-frame pooled embeddings plus the clip feature map.
FrameEncoding encode_frames(const ConvBackbone& visual, const ad::Value& prev_frame,
                            const ad::Value& cur_frame);

/// F = (I_prev + I_cur)/2 + H.
ad::Value fuse_visual(const ad::Value& pooled_prev, const ad::Value& pooled_cur,
                      const ad::Value& high_freq);
/// The averaged visual context (I_prev + I_cur)/2 on its own.
ad::Value visual_context(const ad::Value& pooled_prev, const ad::Value& pooled_cur);

}  // namespace tthf::enc
