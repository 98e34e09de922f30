#include "tthf/model.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

#include "tthf/prompt_bank.hpp"

namespace tthf {

using nlohmann::json;

enc::BackboneSpec ModelConfig::backbone_spec() const {
  if (custom_backbone) return *custom_backbone;
  if (backbone == enc::BackboneKind::toy_conv) {
    return enc::BackboneSpec::toy(embed_dim, input_size);
  }
  return enc::BackboneSpec::clip_like(embed_dim, input_size);
}

namespace {

json spec_to_json(const enc::BackboneSpec& spec) {
  json layers = json::array();
  for (const auto& l : spec.layers) {
    layers.push_back({{"kernel", l.kernel},
                      {"stride", l.stride},
                      {"pad", l.pad},
                      {"out_channels", l.out_channels}});
  }
  return {{"kind", enc::to_string(spec.kind)},
          {"input_size", spec.input_size},
          {"embed_dim", spec.embed_dim},
          {"layers", layers}};
}

enc::BackboneSpec spec_from_json(const json& j) {
  enc::BackboneSpec spec;
  spec.kind = enc::backbone_from_string(j.at("kind").get<std::string>());
  spec.input_size = j.at("input_size").get<int>();
  spec.embed_dim = j.at("embed_dim").get<int>();
  for (const auto& l : j.at("layers")) {
    spec.layers.push_back({l.at("kernel").get<int>(), l.at("stride").get<int>(),
                           l.at("pad").get<int>(), l.at("out_channels").get<int>()});
  }
  spec.validate();
  return spec;
}

json config_to_json(const ModelConfig& c) {
  json j;
  j["backbone"] = enc::to_string(c.backbone);
  j["embed_dim"] = c.embed_dim;
  j["input_size"] = c.input_size;
  j["vocab_buckets"] = c.vocab_buckets;
  j["train_text_encoder"] = c.train_text_encoder;
  j["share_ca_heads"] = c.share_ca_heads;
  j["disable_thfm"] = c.disable_thfm;
  j["cosine_in_loss"] = c.cosine_in_loss;
  j["init_tau"] = c.init_tau;
  j["seed"] = c.seed;
  j["preprocess_mean"] = c.preprocess.mean;
  j["preprocess_std"] = c.preprocess.stddev;
  j["backbone_spec"] = spec_to_json(c.backbone_spec());
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.backbone = enc::backbone_from_string(j.at("backbone").get<std::string>());
  c.embed_dim = j.at("embed_dim").get<int>();
  c.input_size = j.at("input_size").get<int>();
  c.vocab_buckets = j.at("vocab_buckets").get<int>();
  c.train_text_encoder = j.at("train_text_encoder").get<bool>();
  c.share_ca_heads = j.at("share_ca_heads").get<bool>();
  c.disable_thfm = j.at("disable_thfm").get<bool>();
  c.cosine_in_loss = j.at("cosine_in_loss").get<bool>();
  c.init_tau = j.at("init_tau").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.preprocess.mean = j.at("preprocess_mean").get<std::array<double, 3>>();
  c.preprocess.stddev = j.at("preprocess_std").get<std::array<double, 3>>();
  enc::BackboneSpec spec = spec_from_json(j.at("backbone_spec"));
  // Only keep the explicit spec when it differs from the kind-derived one.
  ModelConfig probe = c;
  probe.custom_backbone.reset();
  json derived = spec_to_json(probe.backbone_spec());
  if (derived != j.at("backbone_spec")) c.custom_backbone = spec;
  return c;
}

}  // namespace

std::uint64_t ModelConfig::fingerprint() const {
  json j;
  j["spec"] = spec_to_json(backbone_spec());
  j["vocab_buckets"] = vocab_buckets;
  j["share_ca_heads"] = share_ca_heads;
  j["disable_thfm"] = disable_thfm;
  j["preprocess_mean"] = preprocess.mean;
  j["preprocess_std"] = preprocess.stddev;
  return fnv1a64(j.dump());
}

TthfModel TthfModel::init(const ModelConfig& config) {
  TthfModel m;
  m.config_ = config;
  enc::BackboneSpec spec = config.backbone_spec();
  Rng master(config.seed);
  Rng r_visual = master.fork(1);
  Rng r_hf = master.fork(2);
  Rng r_text = master.fork(3);
  Rng r_vfs = master.fork(4);
  Rng r_lfs = master.fork(5);
  Rng r_fusion = master.fork(6);

  m.visual_ = enc::ConvBackbone::init(spec, r_visual, /*trainable=*/false);
  m.high_freq_ = enc::ConvBackbone::init(spec, r_hf, /*trainable=*/!config.disable_thfm);
  m.text_ = enc::TextEncoder::init(config.embed_dim, r_text, config.train_text_encoder,
                                   config.vocab_buckets);
  m.vfs_head_ = aafm::CrossAttentionHead::init(config.embed_dim, r_vfs);
  m.lfs_head_ = config.share_ca_heads ? m.vfs_head_
                                      : aafm::CrossAttentionHead::init(config.embed_dim, r_lfs);
  m.fusion_ = aafm::FusionLayer::init(config.embed_dim, r_fusion);
  m.temperature_ = objective::Temperature::init(config.init_tau);
  return m;
}

ad::Value TthfModel::encode_fine_prompts() const {
  std::vector<std::string> texts;
  for (const auto& p : prompts::fine_grained_prompts()) texts.push_back(p.text);
  return text_.encode_batch(texts);
}

ad::Value TthfModel::encode_general_prompts() const {
  std::vector<std::string> texts;
  for (const auto& p : prompts::general_prompts()) texts.push_back(p.text);
  return text_.encode_batch(texts);
}

namespace {

TthfModel::ClipForward run_aafm(const ad::Value& visual_ctx, const ad::Value& feature_map,
                                const ad::Value& high_freq, const ad::Value& text_fine,
                                const aafm::CrossAttentionHead& vfs,
                                const aafm::CrossAttentionHead& lfs,
                                const aafm::FusionLayer& fusion) {
  TthfModel::ClipForward out;
  out.visual_ctx = visual_ctx;
  out.feature_map = feature_map;
  out.high_freq = high_freq;
  out.fused = ad::add(visual_ctx, high_freq);

  aafm::AttendResult vfr = aafm::visually_focused(visual_ctx, feature_map, vfs);
  aafm::SoftTextResult soft = aafm::soft_text_representation(out.fused, text_fine);
  aafm::AttendResult lfr = aafm::linguistically_focused(soft.soft_text, feature_map, lfs);
  out.enhanced = aafm::fuse_enhanced(vfr.output, lfr.output, out.fused, fusion);
  out.vfs_weights = vfr.weights;
  out.lfs_weights = lfr.weights;
  out.soft_weights = soft.weights->val.row(0);
  return out;
}

}  // namespace

TthfModel::ClipForward TthfModel::forward_clip(const ad::Value& prev_frame,
                                               const ad::Value& cur_frame,
                                               const ad::Value& text_fine) const {
  enc::FrameEncoding fe = enc::encode_frames(visual_, prev_frame, cur_frame);
  ad::Value v = enc::visual_context(fe.pooled_prev, fe.pooled_cur);
  ad::Value h;
  if (config_.disable_thfm) {
    h = ad::constant(ad::Matrix::Zero(1, config_.embed_dim));
  } else {
    ad::Value diff = enc::extract_temporal_high_frequency(prev_frame, cur_frame);
    h = enc::encode_high_frequency(high_freq_, diff);
  }
  return run_aafm(v, fe.feature_map, h, text_fine, vfs_head_, lfs_head_, fusion_);
}

TthfModel::VisualFrameFeatures TthfModel::encode_frame_visual(const Eigen::MatrixXd& frame) const {
  ad::Value map = visual_.feature_map(ad::constant(frame));
  VisualFrameFeatures out;
  out.map = map->val;
  out.pooled = map->val.colwise().mean();
  return out;
}

TthfModel::ClipForward TthfModel::forward_clip_cached(const VisualFrameFeatures& prev,
                                                      const VisualFrameFeatures& cur,
                                                      const ad::Value& diff,
                                                      const ad::Value& text_fine) const {
  ad::Value v = ad::constant(0.5 * (prev.pooled + cur.pooled));
  ad::Value p = ad::constant(0.5 * (prev.map + cur.map));
  ad::Value h;
  if (config_.disable_thfm) {
    h = ad::constant(ad::Matrix::Zero(1, config_.embed_dim));
  } else {
    h = enc::encode_high_frequency(high_freq_, diff);
  }
  return run_aafm(v, p, h, text_fine, vfs_head_, lfs_head_, fusion_);
}

std::vector<std::pair<std::string, ad::Value>> TthfModel::parameters() const {
  std::vector<std::pair<std::string, ad::Value>> out;
  visual_.collect_parameters("visual", out);
  high_freq_.collect_parameters("high_freq", out);
  text_.collect_parameters("text", out);
  vfs_head_.collect_parameters("aafm.vfs", out);
  if (!config_.share_ca_heads) lfs_head_.collect_parameters("aafm.lfs", out);
  fusion_.collect_parameters("aafm.fusion", out);
  out.emplace_back("temperature.log_tau", temperature_.log_tau);
  return out;
}

std::vector<std::pair<std::string, ad::Value>> TthfModel::trainable_parameters() const {
  std::vector<std::pair<std::string, ad::Value>> out;
  for (auto& [name, value] : parameters()) {
    if (value->requires_grad) out.emplace_back(name, value);
  }
  return out;
}

namespace {
constexpr char kMagic[9] = "TTHFCKPT";
constexpr std::uint32_t kVersion = 1;
}  // namespace

void TthfModel::save_checkpoint(const std::filesystem::path& path) const {
  auto params = parameters();
  json header;
  header["config"] = config_to_json(config_);
  header["fingerprint"] = config_.fingerprint();
  json tensors = json::array();
  for (const auto& [name, value] : params) {
    tensors.push_back({{"name", name}, {"rows", value->val.rows()}, {"cols", value->val.cols()}});
  }
  header["tensors"] = tensors;
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out.write(kMagic, 8);
  const std::uint32_t version = kVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t len = header_str.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_str.data(), static_cast<std::streamsize>(len));
  for (const auto& [name, value] : params) {
    out.write(reinterpret_cast<const char*>(value->val.data()),
              static_cast<std::streamsize>(sizeof(double) * value->val.size()));
  }
  if (!out) throw IoError("short write on checkpoint: " + path.string());
}

TthfModel TthfModel::load_checkpoint(const std::filesystem::path& path,
                                     const std::optional<ModelConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint not found: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != std::string(kMagic, 8)) {
    throw CheckpointError("not a checkpoint file: " + path.string());
  }
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_str(len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(len));
  if (!in) throw CheckpointError("truncated checkpoint header: " + path.string());
  json header = json::parse(header_str);

  ModelConfig config = config_from_json(header.at("config"));
  if (expected) {
    if (expected->embed_dim != config.embed_dim) {
      throw CheckpointError("checkpoint embed_dim " + std::to_string(config.embed_dim) +
                            " does not match expected " + std::to_string(expected->embed_dim));
    }
    if (expected->backbone != config.backbone) {
      throw CheckpointError("checkpoint backbone '" + enc::to_string(config.backbone) +
                            "' does not match expected '" + enc::to_string(expected->backbone) +
                            "'");
    }
    if (expected->fingerprint() != header.at("fingerprint").get<std::uint64_t>()) {
      throw CheckpointError("checkpoint config fingerprint mismatch");
    }
  }
  if (config.fingerprint() != header.at("fingerprint").get<std::uint64_t>()) {
    throw CheckpointError("checkpoint fingerprint does not match its own config");
  }

  TthfModel model = TthfModel::init(config);
  auto params = model.parameters();
  const auto& tensors = header.at("tensors");
  if (tensors.size() != params.size()) {
    throw CheckpointError("checkpoint tensor count mismatch");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& meta = tensors[i];
    auto& [name, value] = params[i];
    if (meta.at("name").get<std::string>() != name ||
        meta.at("rows").get<Eigen::Index>() != value->val.rows() ||
        meta.at("cols").get<Eigen::Index>() != value->val.cols()) {
      throw CheckpointError("checkpoint tensor layout mismatch at '" + name + "'");
    }
    in.read(reinterpret_cast<char*>(value->val.data()),
            static_cast<std::streamsize>(sizeof(double) * value->val.size()));
  }
  if (!in) throw CheckpointError("truncated checkpoint tensors: " + path.string());
  return model;
}

}  // namespace tthf
