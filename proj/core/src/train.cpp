#include "tthf/train.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "tthf/objective.hpp"

namespace tthf::train {

using nlohmann::json;

void TrainConfig::validate() const {
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (learning_rate <= 0.0) throw UsageError("learning_rate must be positive");
  if (weight_decay < 0.0) throw UsageError("weight_decay must be >= 0");
  if (epochs < 0) throw UsageError("epochs must be >= 0");
  if (embed_dim < 1) throw UsageError("embed_dim must be >= 1");
  if (init_tau <= 0.0) throw UsageError("init_tau must be positive");
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig mc;
  mc.backbone = backbone;
  mc.embed_dim = embed_dim;
  mc.train_text_encoder = train_text_encoder;
  mc.share_ca_heads = share_ca_heads;
  mc.disable_thfm = disable_thfm;
  mc.cosine_in_loss = cosine_in_loss;
  mc.init_tau = init_tau;
  mc.seed = seed;
  mc.preprocess = preprocess;
  mc.custom_backbone = custom_backbone;
  if (custom_backbone) mc.input_size = custom_backbone->input_size;
  return mc;
}

TrainConfig profile_config(const std::string& profile) {
  TrainConfig c;
  if (profile == "paper") {
    // Published full-scale settings; weights are still random unless a
    // converted pretrained checkpoint is loaded.
    return c;
  }
  if (profile == "toy") {
    c.backbone = enc::BackboneKind::toy_conv;
    c.embed_dim = 32;
    c.batch_size = 32;
    c.learning_rate = 1e-3;
    c.epochs = 5;
    c.preprocess = data::synthetic_preprocess();
    return c;
  }
  throw UsageError("unknown profile: '" + profile + "' (expected toy|paper)");
}

namespace {

json config_to_json(const TrainConfig& c) {
  json j;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["weight_decay"] = c.weight_decay;
  j["epochs"] = c.epochs;
  j["backbone"] = enc::to_string(c.backbone);
  j["embed_dim"] = c.embed_dim;
  j["seed"] = c.seed;
  j["dataset_root"] = c.dataset_root;
  j["train_text_encoder"] = c.train_text_encoder;
  j["share_ca_heads"] = c.share_ca_heads;
  j["cosine_in_loss"] = c.cosine_in_loss;
  j["use_normal_clips_from_anomalous_videos"] = c.use_normal_clips_from_anomalous_videos;
  j["disable_thfm"] = c.disable_thfm;
  j["init_tau"] = c.init_tau;
  j["preprocess_mean"] = c.preprocess.mean;
  j["preprocess_std"] = c.preprocess.stddev;
  return j;
}

}  // namespace

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig c) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("config is not valid JSON: " + std::string(e.what()));
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("batch_size", c.batch_size);
  get("learning_rate", c.learning_rate);
  get("weight_decay", c.weight_decay);
  get("epochs", c.epochs);
  if (j.contains("backbone")) {
    c.backbone = enc::backbone_from_string(j.at("backbone").get<std::string>());
  }
  get("embed_dim", c.embed_dim);
  get("seed", c.seed);
  get("dataset_root", c.dataset_root);
  get("train_text_encoder", c.train_text_encoder);
  get("share_ca_heads", c.share_ca_heads);
  get("cosine_in_loss", c.cosine_in_loss);
  get("use_normal_clips_from_anomalous_videos", c.use_normal_clips_from_anomalous_videos);
  get("disable_thfm", c.disable_thfm);
  get("init_tau", c.init_tau);
  get("preprocess_mean", c.preprocess.mean);
  get("preprocess_std", c.preprocess.stddev);
  c.validate();
  return c;
}

void save_train_config(const TrainConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config: " + path.string());
  out << config_to_json(config).dump(2) << "\n";
}

Adam::Adam(double learning_rate, double weight_decay, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

void Adam::zero_grad(const std::vector<std::pair<std::string, ad::Value>>& params) {
  for (const auto& [name, p] : params) p->zero_grad();
}

void Adam::step(const std::vector<std::pair<std::string, ad::Value>>& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (const auto& [name, p] : params) {
    p->ensure_grad();
    ad::Matrix g = p->grad;
    if (wd_ != 0.0) g += wd_ * p->val;
    auto [it, inserted] = state_.try_emplace(name);
    if (inserted) {
      it->second.m = ad::Matrix::Zero(g.rows(), g.cols());
      it->second.v = ad::Matrix::Zero(g.rows(), g.cols());
    }
    State& s = it->second;
    s.m = beta1_ * s.m + (1.0 - beta1_) * g;
    s.v = beta2_ * s.v + (1.0 - beta2_) * g.cwiseProduct(g);
    const ad::Matrix m_hat = s.m / bc1;
    const ad::Matrix v_hat = s.v / bc2;
    const ad::Matrix denom = v_hat.cwiseSqrt() + ad::Matrix::Constant(g.rows(), g.cols(), eps_);
    p->val -= lr_ * m_hat.cwiseQuotient(denom);
  }
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics: " + path.string());
  out.precision(17);
  out << "step,loss_visual_fine,loss_text_fine,loss_visual_general,loss_text_general,total,tau\n";
  for (const auto& r : rows) {
    out << r.step << "," << r.loss_visual_fine << "," << r.loss_text_fine << ","
        << r.loss_visual_general << "," << r.loss_text_general << "," << r.total << "," << r.tau
        << "\n";
  }
}

namespace {

struct ClipRef {
  int record = 0;
  int t = 1;
};

}  // namespace

TrainResult fit(const TrainConfig& config, const data::DatasetManifest& manifest,
                const std::filesystem::path& out_dir) {
  config.validate();
  std::filesystem::create_directories(out_dir);

  TthfModel model = TthfModel::init(config.model_config());
  auto trainable = model.trainable_parameters();
  Adam optimizer(config.learning_rate, config.weight_decay);
  objective::LossOptions loss_opt{config.cosine_in_loss};

  // Materialize the clip index up front; frames stay lazy.
  std::vector<ClipRef> clips;
  for (size_t r = 0; r < manifest.records.size(); ++r) {
    const auto& rec = manifest.records[r];
    rec.validate();
    for (int t = 1; t < rec.frame_count(); ++t) {
      if (!config.use_normal_clips_from_anomalous_videos && rec.anomaly_interval &&
          rec.frame_label(t) == 0) {
        continue;
      }
      clips.push_back({static_cast<int>(r), t});
    }
  }
  if (clips.empty()) throw ValidationError("training set has no clips");

  // The visual encoder is frozen, so its per-frame outputs are constants of
  // the run; cache them across epochs.
  std::unordered_map<std::uint64_t, TthfModel::VisualFrameFeatures> visual_cache;
  auto visual_of = [&](int rec_idx, int frame,
                       const Eigen::MatrixXd& preprocessed) -> const TthfModel::VisualFrameFeatures& {
    const std::uint64_t key = (static_cast<std::uint64_t>(rec_idx) << 32) |
                              static_cast<std::uint32_t>(frame);
    auto it = visual_cache.find(key);
    if (it == visual_cache.end()) {
      it = visual_cache.emplace(key, model.encode_frame_visual(preprocessed)).first;
    }
    return it->second;
  };

  TrainResult result;
  Rng shuffle_rng = Rng(config.seed).fork(0xDA7A);
  long step = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates with our own RNG for cross-platform determinism.
    for (size_t i = clips.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<long>(i) - 1));
      std::swap(clips[i - 1], clips[j]);
    }

    for (size_t start = 0; start < clips.size(); start += config.batch_size) {
      const size_t end = std::min(clips.size(), start + config.batch_size);
      ad::Value text_fine = model.encode_fine_prompts();
      ad::Value text_general = model.encode_general_prompts();

      std::vector<ad::Value> fused_rows, enhanced_rows;
      objective::Batch batch;
      for (size_t i = start; i < end; ++i) {
        const auto& rec = manifest.records[clips[i].record];
        const int t = clips[i].t;
        const Eigen::MatrixXd prev = data::preprocess_frame(rec.frame(t - 1), config.preprocess);
        const Eigen::MatrixXd cur = data::preprocess_frame(rec.frame(t), config.preprocess);
        const auto& vis_prev = visual_of(clips[i].record, t - 1, prev);
        const auto& vis_cur = visual_of(clips[i].record, t, cur);
        ad::Value diff;
        if (!config.disable_thfm) {
          diff = ad::constant(enc::extract_temporal_high_frequency(prev, cur));
        }
        TthfModel::ClipForward fwd =
            model.forward_clip_cached(vis_prev, vis_cur, diff, text_fine);
        fused_rows.push_back(fwd.fused);
        enhanced_rows.push_back(fwd.enhanced);
        data::ClipSample meta = data::clip_metadata(rec, t);
        batch.fine_targets.push_back(meta.fine_prompt_index);
        batch.general_targets.push_back(meta.general_prompt_index);
      }
      batch.fused = ad::stack_rows(fused_rows);
      batch.enhanced = ad::stack_rows(enhanced_rows);
      batch.text_fine = text_fine;
      batch.text_general = text_general;

      objective::TotalLoss losses = objective::total_loss(batch, model.temperature(), loss_opt);
      const double total = ad::scalar(losses.total);
      if (!std::isfinite(total)) {
        throw NumericError("training diverged at step " + std::to_string(step + 1) +
                           " (total loss " + std::to_string(total) + ")");
      }
      ++step;
      result.metrics.push_back({step, ad::scalar(losses.visual_fine), ad::scalar(losses.text_fine),
                                ad::scalar(losses.visual_general), ad::scalar(losses.text_general),
                                total, model.temperature().tau()});

      optimizer.zero_grad(trainable);
      ad::backward(losses.total);
      optimizer.step(trainable);
      model.temperature().clamp();
    }

    char name[48];
    std::snprintf(name, sizeof(name), "checkpoint_epoch_%03d.ckpt", epoch + 1);
    model.save_checkpoint(out_dir / name);
  }

  result.final_checkpoint = out_dir / "checkpoint_final.ckpt";
  model.save_checkpoint(result.final_checkpoint);
  result.metrics_path = out_dir / "metrics.csv";
  write_metrics_csv(result.metrics, result.metrics_path);
  return result;
}

TrainResult fit(const TrainConfig& config, const std::filesystem::path& out_dir) {
  if (config.dataset_root.empty()) throw UsageError("dataset_root is required");
  data::DatasetManifest manifest = data::load_manifest(config.dataset_root, data::Split::train);
  return fit(config, manifest, out_dir);
}

}  // namespace tthf::train
