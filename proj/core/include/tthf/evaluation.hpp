#pragma once

#include <filesystem>
#include <map>
#include <utility>
#include <vector>

#include "tthf/dataset.hpp"
#include "tthf/model.hpp"
#include "tthf/scoring.hpp"

namespace tthf::eval {

/// Rank-based AUC with tied pairs counted as 1/2; identical to the trapezoidal
/// area under the ROC. Throws NumericError unless both classes are present.
double compute_auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// ROC as (fpr, tpr) points starting at (0,0), one point per distinct score.
std::vector<std::pair<double, double>> roc_points(const std::vector<double>& scores,
                                                  const std::vector<int>& labels);

struct ClassKey {
  Category category = Category::NORMAL;
  bool ego_involved = false;
  auto operator<=>(const ClassKey&) const = default;
};

/// "ST" for ego-involved, "ST*" for non-ego.
std::string class_key_label(const ClassKey& key);

struct EvalReport {
  double overall_auc = 0.0;
  int n_frames = 0;
  std::map<ClassKey, double> per_class_auc;  // cells lacking a class are absent
  std::map<ClassKey, int> per_class_frames;
  std::vector<std::pair<double, double>> roc;
};

struct EvalOptions {
  /// Average per-video AUCs instead of concatenating frames across videos.
  bool per_video_average = false;
  scoring::ScoreOptions score;
};

/// Score every video of the manifest and aggregate frame-level AUC, overall
/// and per (category, ego) cell.
EvalReport evaluate(const data::DatasetManifest& manifest, const TthfModel& model,
                    const EvalOptions& options = {});

/// Same aggregation over precomputed series.
EvalReport aggregate(const std::vector<scoring::ScoreSeries>& series,
                     const std::vector<ClassKey>& keys, const EvalOptions& options = {});

void write_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport read_report(const std::filesystem::path& path);

/// Render the report as the per-class table layout used for result summaries.
std::string format_report_table(const EvalReport& report);

/// One score-curve image per series, ground-truth anomaly spans shaded.
void export_score_curves(const std::vector<scoring::ScoreSeries>& series,
                         const std::filesystem::path& out_dir);

/// One score-curve image per series (ground-truth anomaly spans shaded), plus
/// roc.png when any series exist, plus report.json. Directory is created.
void export_plots(const std::vector<scoring::ScoreSeries>& series, const EvalReport& report,
                  const std::filesystem::path& out_dir);

}  // namespace tthf::eval
