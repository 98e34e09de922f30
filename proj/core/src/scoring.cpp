#include "tthf/scoring.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

#include "tthf/prompt_bank.hpp"

namespace tthf::scoring {

Eigen::VectorXd similarity_softmax(const Eigen::RowVectorXd& query, const Eigen::MatrixXd& prompts,
                                   double tau) {
  if (tau <= 0.0) throw NumericError("similarity_softmax: tau must be positive");
  if (prompts.rows() < 1) throw ValidationError("similarity_softmax: no prompts");
  if (prompts.cols() != query.cols()) {
    throw ValidationError("similarity_softmax: width mismatch");
  }
  const double qn = query.norm();
  if (qn == 0.0) throw NumericError("similarity_softmax: zero-norm query");
  Eigen::VectorXd logits(prompts.rows());
  for (Eigen::Index i = 0; i < prompts.rows(); ++i) {
    const double pn = prompts.row(i).norm();
    if (pn == 0.0) throw NumericError("similarity_softmax: zero-norm prompt");
    logits(i) = query.dot(prompts.row(i)) / (qn * pn * tau);
  }
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

double anomaly_score(const Eigen::RowVectorXd& fused, const Eigen::RowVectorXd& enhanced,
                     const Eigen::MatrixXd& text_fine, const Eigen::MatrixXd& text_general,
                     double tau) {
  if (text_fine.rows() != prompts::kFineGrainedCount ||
      text_general.rows() != prompts::kGeneralCount) {
    throw ValidationError("anomaly_score: expected 11 fine-grained and 2 general prompt rows");
  }
  const Eigen::VectorXd p_fine = similarity_softmax(fused, text_fine, tau);
  const Eigen::VectorXd p_general = similarity_softmax(enhanced, text_general, tau);
  const double s_fine_normal = p_fine(prompts::kFineNormalIndex - 1);
  const double s_general_normal = p_general(prompts::kGeneralNormalIndex - 1);
  return 1.0 - (s_fine_normal + s_general_normal) / 2.0;
}

VideoScoreResult score_video(const data::VideoRecord& record, const TthfModel& model,
                             const ScoreOptions& options) {
  record.validate();
  const double tau = options.tau.value_or(model.temperature().tau());
  const auto& pre = model.config().preprocess;

  const Eigen::MatrixXd text_fine = model.encode_fine_prompts()->val;
  const Eigen::MatrixXd text_general = model.encode_general_prompts()->val;
  const ad::Value text_fine_node = ad::constant(text_fine);

  VideoScoreResult result;
  result.series.video_id = record.video_id;
  const int n = record.frame_count();
  result.series.scores.resize(n);
  result.series.labels.resize(n);

  // Each frame feeds two clips; encode it once.
  Eigen::MatrixXd prev_frame = data::preprocess_frame(record.frame(0), pre);
  TthfModel::VisualFrameFeatures prev_vis = model.encode_frame_visual(prev_frame);
  for (int t = 1; t < n; ++t) {
    Eigen::MatrixXd cur_frame = data::preprocess_frame(record.frame(t), pre);
    TthfModel::VisualFrameFeatures cur_vis = model.encode_frame_visual(cur_frame);
    ad::Value diff = ad::constant(enc::extract_temporal_high_frequency(prev_frame, cur_frame));
    TthfModel::ClipForward fwd = model.forward_clip_cached(prev_vis, cur_vis, diff, text_fine_node);
    result.series.scores[t] =
        anomaly_score(fwd.fused->val.row(0), fwd.enhanced->val.row(0), text_fine, text_general, tau);
    if (options.collect_attention) {
      result.attention.push_back({t, fwd.vfs_weights, fwd.lfs_weights, fwd.soft_weights});
    }
    prev_frame = std::move(cur_frame);
    prev_vis = std::move(cur_vis);
  }
  result.series.scores[0] = result.series.scores[1];
  for (int t = 0; t < n; ++t) result.series.labels[t] = record.frame_label(t);
  return result;
}

void write_score_csv(const ScoreSeries& series, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write score csv: " + path.string());
  out << "frame_index,score,label\n";
  out.precision(17);
  for (size_t i = 0; i < series.scores.size(); ++i) {
    out << i << "," << series.scores[i] << "," << series.labels[i] << "\n";
  }
}

ScoreSeries read_score_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read score csv: " + path.string());
  ScoreSeries series;
  series.video_id = path.stem().string();
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty score csv: " + path.string());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tok;
    std::getline(ss, tok, ',');
    std::getline(ss, tok, ',');
    series.scores.push_back(std::stod(tok));
    std::getline(ss, tok, ',');
    series.labels.push_back(std::stoi(tok));
  }
  return series;
}

void write_attention_json(const std::vector<ClipAttention>& attention,
                          const std::filesystem::path& path) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& a : attention) {
    auto row_to_vec = [](const Eigen::RowVectorXd& r) {
      return std::vector<double>(r.data(), r.data() + r.size());
    };
    doc.push_back({{"t", a.t},
                   {"vfs", row_to_vec(a.vfs_weights)},
                   {"lfs", row_to_vec(a.lfs_weights)},
                   {"soft_text", row_to_vec(a.soft_weights)}});
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write attention dump: " + path.string());
  out << doc.dump(2) << "\n";
}

}  // namespace tthf::scoring
