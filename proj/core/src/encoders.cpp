#include "tthf/encoders.hpp"

#include <cctype>
#include <cmath>

namespace tthf::enc {

std::string to_string(BackboneKind k) {
  return k == BackboneKind::pretrained_clip ? "pretrained-clip" : "toy-conv";
}

BackboneKind backbone_from_string(const std::string& s) {
  if (s == "pretrained-clip") return BackboneKind::pretrained_clip;
  if (s == "toy-conv") return BackboneKind::toy_conv;
  throw UsageError("unknown backbone: '" + s + "' (expected pretrained-clip|toy-conv)");
}

BackboneSpec BackboneSpec::toy(int embed_dim, int input_size) {
  BackboneSpec spec;
  spec.kind = BackboneKind::toy_conv;
  spec.input_size = input_size;
  spec.embed_dim = embed_dim;
  spec.layers = {
      {16, 16, 0, 16},
      {7, 7, 0, 32},
      {1, 1, 0, embed_dim},
  };
  spec.validate();
  return spec;
}

BackboneSpec BackboneSpec::clip_like(int embed_dim, int input_size) {
  BackboneSpec spec;
  spec.kind = BackboneKind::pretrained_clip;
  spec.input_size = input_size;
  spec.embed_dim = embed_dim;
  spec.layers = {
      {32, 32, 0, 64},
      {3, 1, 1, 128},
      {3, 1, 1, 256},
      {1, 1, 0, embed_dim},
  };
  spec.validate();
  return spec;
}

std::pair<int, int> BackboneSpec::feature_dims() const {
  int h = input_size, w = input_size;
  for (const auto& l : layers) {
    h = (h + 2 * l.pad - l.kernel) / l.stride + 1;
    w = (w + 2 * l.pad - l.kernel) / l.stride + 1;
  }
  return {h, w};
}

int BackboneSpec::feature_rows() const {
  auto [h, w] = feature_dims();
  return h * w;
}

void BackboneSpec::validate() const {
  if (layers.empty()) throw ValidationError("backbone needs at least one layer");
  if (layers.back().out_channels != embed_dim) {
    throw ValidationError("final layer channels must equal embed_dim");
  }
  int h = input_size;
  for (const auto& l : layers) {
    if (l.kernel < 1 || l.stride < 1 || l.pad < 0 || l.out_channels < 1) {
      throw ValidationError("invalid conv layer spec");
    }
    h = (h + 2 * l.pad - l.kernel) / l.stride + 1;
    if (h < 1) throw ValidationError("backbone collapses the spatial dims below 1");
  }
}

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

ConvBackbone ConvBackbone::init(const BackboneSpec& spec, Rng& rng, bool trainable) {
  spec.validate();
  ConvBackbone bb;
  bb.spec = spec;
  int cin = 3;
  for (const auto& l : spec.layers) {
    Layer layer;
    layer.weight = ad::param(
        xavier_init(static_cast<Eigen::Index>(l.kernel) * l.kernel * cin, l.out_channels, rng));
    layer.bias = ad::param(ad::Matrix::Zero(1, l.out_channels));
    layer.weight->requires_grad = trainable;
    layer.bias->requires_grad = trainable;
    bb.layers.push_back(std::move(layer));
    cin = l.out_channels;
  }
  return bb;
}

ad::Value ConvBackbone::feature_map(const ad::Value& image) const {
  if (image->val.rows() != static_cast<Eigen::Index>(spec.input_size) * spec.input_size ||
      image->val.cols() != 3) {
    throw ValidationError("backbone input must be (input_size^2) x 3");
  }
  if (!ad::all_finite(image->val)) throw NumericError("backbone input is not finite");
  ad::Value x = image;
  int h = spec.input_size, w = spec.input_size;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    x = ad::conv2d(x, layers[i].weight, layers[i].bias, h, w, l.kernel, l.stride, l.pad);
    h = (h + 2 * l.pad - l.kernel) / l.stride + 1;
    w = (w + 2 * l.pad - l.kernel) / l.stride + 1;
    if (i + 1 < spec.layers.size()) x = ad::relu(x);
  }
  return x;
}

ad::Value ConvBackbone::pooled(const ad::Value& feature_map) { return ad::mean_rows(feature_map); }

void ConvBackbone::set_trainable(bool trainable) {
  for (auto& l : layers) {
    l.weight->requires_grad = trainable;
    l.bias->requires_grad = trainable;
  }
}

void ConvBackbone::collect_parameters(const std::string& prefix,
                                      std::vector<std::pair<std::string, ad::Value>>& out) const {
  for (size_t i = 0; i < layers.size(); ++i) {
    out.emplace_back(prefix + ".conv" + std::to_string(i) + ".weight", layers[i].weight);
    out.emplace_back(prefix + ".conv" + std::to_string(i) + ".bias", layers[i].bias);
  }
}

TextEncoder TextEncoder::init(int embed_dim, Rng& rng, bool trainable, int vocab_buckets) {
  TextEncoder te;
  te.embed_dim = embed_dim;
  te.vocab_buckets = vocab_buckets;
  ad::Matrix table(vocab_buckets, embed_dim);
  for (Eigen::Index r = 0; r < table.rows(); ++r) {
    for (Eigen::Index c = 0; c < table.cols(); ++c) table(r, c) = rng.normal(0.0, 0.02);
  }
  te.token_table = ad::param(std::move(table));
  te.proj_weight = ad::param(xavier_init(embed_dim, embed_dim, rng));
  te.proj_bias = ad::param(ad::Matrix::Zero(1, embed_dim));
  te.set_trainable(trainable);
  return te;
}

std::vector<int> TextEncoder::tokenize(const std::string& text, int vocab_buckets) {
  std::vector<int> ids;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) {
      std::string tok = text.substr(i, j - i);
      for (auto& ch : tok) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      auto is_word = [](char ch) {
        return std::isalnum(static_cast<unsigned char>(ch)) || ch == '-';
      };
      size_t b = 0, e = tok.size();
      while (b < e && !is_word(tok[b])) ++b;
      while (e > b && !is_word(tok[e - 1])) --e;
      if (e > b) {
        ids.push_back(static_cast<int>(fnv1a64(tok.substr(b, e - b)) %
                                       static_cast<std::uint64_t>(vocab_buckets)));
      }
    }
    i = j;
  }
  return ids;
}

ad::Value TextEncoder::encode(const std::string& text) const {
  std::vector<int> ids = tokenize(text, vocab_buckets);
  if (ids.empty()) throw ValidationError("encode_text: prompt has no tokens: '" + text + "'");
  std::vector<ad::Value> rows;
  rows.reserve(ids.size());
  for (int id : ids) rows.push_back(ad::row(token_table, id));
  ad::Value pooled = ad::mean_rows(ad::stack_rows(rows));
  return ad::add_rowvec(ad::matmul(pooled, proj_weight), proj_bias);
}

ad::Value TextEncoder::encode_batch(const std::vector<std::string>& texts) const {
  if (texts.empty()) throw ValidationError("encode_text: empty prompt list");
  std::vector<ad::Value> rows;
  rows.reserve(texts.size());
  for (const auto& t : texts) rows.push_back(encode(t));
  return ad::stack_rows(rows);
}

void TextEncoder::set_trainable(bool trainable) {
  token_table->requires_grad = trainable;
  proj_weight->requires_grad = trainable;
  proj_bias->requires_grad = trainable;
}

void TextEncoder::collect_parameters(const std::string& prefix,
                                     std::vector<std::pair<std::string, ad::Value>>& out) const {
  out.emplace_back(prefix + ".token_table", token_table);
  out.emplace_back(prefix + ".proj_weight", proj_weight);
  out.emplace_back(prefix + ".proj_bias", proj_bias);
}

Eigen::MatrixXd extract_temporal_high_frequency(const Eigen::MatrixXd& prev_frame,
                                                const Eigen::MatrixXd& cur_frame) {
  if (prev_frame.rows() != cur_frame.rows() || prev_frame.cols() != cur_frame.cols()) {
    throw ValidationError("high-frequency extraction: frame shapes differ");
  }
  return cur_frame - prev_frame;
}

ad::Value extract_temporal_high_frequency(const ad::Value& prev_frame,
                                          const ad::Value& cur_frame) {
  if (prev_frame->val.rows() != cur_frame->val.rows() ||
      prev_frame->val.cols() != cur_frame->val.cols()) {
    throw ValidationError("high-frequency extraction: frame shapes differ");
  }
  return ad::sub(cur_frame, prev_frame);
}

ad::Value encode_high_frequency(const ConvBackbone& encoder, const ad::Value& diff) {
  if (!ad::all_finite(diff->val)) throw NumericError("encode_high_frequency: non-finite input");
  return ConvBackbone::pooled(encoder.feature_map(diff));
}

FrameEncoding encode_frames(const ConvBackbone& visual, const ad::Value& prev_frame,
                            const ad::Value& cur_frame) {
  FrameEncoding out;
  ad::Value map_prev = visual.feature_map(prev_frame);
  ad::Value map_cur = visual.feature_map(cur_frame);
  out.pooled_prev = ConvBackbone::pooled(map_prev);
  out.pooled_cur = ConvBackbone::pooled(map_cur);
  out.feature_map = ad::scale(ad::add(map_prev, map_cur), 0.5);
  return out;
}

ad::Value visual_context(const ad::Value& pooled_prev, const ad::Value& pooled_cur) {
  return ad::scale(ad::add(pooled_prev, pooled_cur), 0.5);
}

ad::Value fuse_visual(const ad::Value& pooled_prev, const ad::Value& pooled_cur,
                      const ad::Value& high_freq) {
  if (pooled_prev->val.cols() != high_freq->val.cols()) {
    throw ValidationError("fuse_visual: embedding lengths differ");
  }
  return ad::add(visual_context(pooled_prev, pooled_cur), high_freq);
}

}  // namespace tthf::enc
