#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tthf/dataset.hpp"
#include "tthf/model.hpp"

namespace tthf::train {

struct TrainConfig {
  int batch_size = 128;
  double learning_rate = 5e-6;
  double weight_decay = 1e-4;
  int epochs = 10;
  enc::BackboneKind backbone = enc::BackboneKind::pretrained_clip;
  int embed_dim = 1024;
  std::uint64_t seed = 42;
  std::string dataset_root;
  bool train_text_encoder = true;
  bool share_ca_heads = false;
  bool cosine_in_loss = false;
  /// Open choice: whether out-of-interval clips of anomalous videos train as
  /// normals (default) or are dropped.
  bool use_normal_clips_from_anomalous_videos = true;
  bool disable_thfm = false;
  double init_tau = 0.07;
  data::PreprocessOptions preprocess = data::clip_preprocess();
  std::optional<enc::BackboneSpec> custom_backbone;

  void validate() const;
  ModelConfig model_config() const;
};

/// "toy": toy backbone, batch 32, lr 1e-3, 5 epochs, synthetic normalization.
/// "paper": the published full-scale settings (frozen CLIP-shaped encoder,
/// batch 128, lr 5e-6, weight decay 1e-4, 10 epochs).
TrainConfig profile_config(const std::string& profile);

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {});
void save_train_config(const TrainConfig& config, const std::filesystem::path& path);

/// Adam with L2-style weight decay added to the gradient. State is keyed by
/// parameter name; call order is deterministic.
class Adam {
public:
  Adam(double learning_rate, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
       double epsilon = 1e-8);

  void zero_grad(const std::vector<std::pair<std::string, ad::Value>>& params);
  void step(const std::vector<std::pair<std::string, ad::Value>>& params);

private:
  double lr_, wd_, beta1_, beta2_, eps_;
  long t_ = 0;
  struct State {
    ad::Matrix m, v;
  };
  std::map<std::string, State> state_;
};

struct MetricsRow {
  long step = 0;
  double loss_visual_fine = 0, loss_text_fine = 0;
  double loss_visual_general = 0, loss_text_general = 0;
  double total = 0;
  double tau = 0;
};

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path metrics_path;
  std::vector<MetricsRow> metrics;
};

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path);

/// Train on an already-loaded manifest. Writes checkpoint_epoch_NNN.ckpt per
/// epoch, checkpoint_final.ckpt (equal to the initialization when epochs=0)
/// and metrics.csv under out_dir.
TrainResult fit(const TrainConfig& config, const data::DatasetManifest& manifest,
                const std::filesystem::path& out_dir);

/// Load the train split from config.dataset_root, then fit.
TrainResult fit(const TrainConfig& config, const std::filesystem::path& out_dir);

}  // namespace tthf::train
