#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tthf/dataset.hpp"
#include "tthf/model.hpp"

namespace tthf::scoring {

/// Softmax over cosine similarities between the query and each prompt row,
/// scaled by 1/tau. Throws NumericError on zero-norm inputs.
Eigen::VectorXd similarity_softmax(const Eigen::RowVectorXd& query, const Eigen::MatrixXd& prompts,
                                   double tau);

/// 1 - (p_fine_normal + p_general_normal) / 2, where the two probabilities
/// come from the fused representation against the 11 fine-grained prompts and
/// the enhanced representation against the 2 general prompts.
double anomaly_score(const Eigen::RowVectorXd& fused, const Eigen::RowVectorXd& enhanced,
                     const Eigen::MatrixXd& text_fine, const Eigen::MatrixXd& text_general,
                     double tau);

/// Per-frame scores aligned with per-frame ground-truth labels. Frame 0 copies
/// the score of the first clip so the series length equals the frame count.
struct ScoreSeries {
  std::string video_id;
  std::vector<double> scores;
  std::vector<int> labels;
};

/// Attention rows of one clip, kept when dump_attention is requested.
struct ClipAttention {
  int t = 1;
  Eigen::RowVectorXd vfs_weights;
  Eigen::RowVectorXd lfs_weights;
  Eigen::RowVectorXd soft_weights;
};

struct ScoreOptions {
  bool collect_attention = false;
  /// Override the learned temperature at inference.
  std::optional<double> tau;
};

struct VideoScoreResult {
  ScoreSeries series;
  std::vector<ClipAttention> attention;  // empty unless requested
};

VideoScoreResult score_video(const data::VideoRecord& record, const TthfModel& model,
                             const ScoreOptions& options = {});

void write_score_csv(const ScoreSeries& series, const std::filesystem::path& path);
ScoreSeries read_score_csv(const std::filesystem::path& path);

void write_attention_json(const std::vector<ClipAttention>& attention,
                          const std::filesystem::path& path);

}  // namespace tthf::scoring
