#pragma once

#include <utility>
#include <vector>

#include "tthf/autodiff.hpp"
#include "tthf/common.hpp"

// Dual contrastive objective: fused representations against the 11
// fine-grained prompts, enhanced representations against the 2 general
// prompts, each along both the visual and the text axis.
namespace tthf::objective {

struct Batch {
  ad::Value fused;                   // N x C
  ad::Value enhanced;                // N x C
  std::vector<int> fine_targets;     // 1..11 per sample
  std::vector<int> general_targets;  // 1..2 per sample
  ad::Value text_fine;               // 11 x C
  ad::Value text_general;            // 2 x C

  void validate() const;
  int size() const { return static_cast<int>(fine_targets.size()); }
};

/// Learned temperature, stored as log(tau) so it stays positive. The inverse
/// temperature is clamped to <= 100 after optimizer steps.
struct Temperature {
  ad::Value log_tau;  // 1x1

  static Temperature init(double tau = 0.07);
  double tau() const;
  ad::Value inv_tau() const;  // exp(-log_tau) as a graph node
  void clamp();
};

struct LossOptions {
  /// Use cosine (CLIP-style) logits instead of the raw dot products the
  /// formulas are written with.
  bool cosine_in_loss = false;
};

/// Visual-axis fine-grained loss: mean cross-entropy of each sample's fused
/// representation over the 11 prompt logits.
ad::Value loss_visual_fine(const Batch& batch, const Temperature& temp,
                           const LossOptions& opt = {});

/// Text-axis fine-grained loss. Prompt classes with no positive sample in the
/// batch are skipped and the averaging denominator shrinks accordingly.
ad::Value loss_text_fine(const Batch& batch, const Temperature& temp, const LossOptions& opt = {});

/// The general-prompt pair of losses (visual axis, text axis) over the
/// enhanced representations.
std::pair<ad::Value, ad::Value> loss_general(const Batch& batch, const Temperature& temp,
                                             const LossOptions& opt = {});

struct TotalLoss {
  ad::Value total;
  ad::Value visual_fine, text_fine, visual_general, text_general;
};

/// ((L_vf + L_tf) + (L_vg + L_tg)) / 2.
TotalLoss total_loss(const Batch& batch, const Temperature& temp, const LossOptions& opt = {});

}  // namespace tthf::objective
