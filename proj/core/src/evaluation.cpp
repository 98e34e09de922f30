#include "tthf/evaluation.hpp"

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

namespace tthf::eval {

using nlohmann::json;

double compute_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ValidationError("compute_auc: length mismatch");
  const size_t n = scores.size();
  size_t n_pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw ValidationError("compute_auc: labels must be binary");
    n_pos += static_cast<size_t>(l);
  }
  const size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw NumericError("compute_auc: AUC undefined with a single class");
  }
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  // Midranks over tie groups; U statistic over positives.
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>((i + 1) + (j + 1));
    for (size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) rank_sum_pos += midrank;
    }
    i = j + 1;
  }
  const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<std::pair<double, double>> roc_points(const std::vector<double>& scores,
                                                  const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ValidationError("roc_points: length mismatch");
  size_t n_pos = 0;
  for (int l : labels) n_pos += static_cast<size_t>(l);
  const size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw NumericError("roc_points: ROC undefined with a single class");
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  std::vector<std::pair<double, double>> pts;
  pts.emplace_back(0.0, 0.0);
  size_t tp = 0, fp = 0, i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    for (size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) ++tp;
      else ++fp;
    }
    pts.emplace_back(static_cast<double>(fp) / static_cast<double>(n_neg),
                     static_cast<double>(tp) / static_cast<double>(n_pos));
    i = j + 1;
  }
  return pts;
}

std::string class_key_label(const ClassKey& key) {
  std::string label = tthf::to_string(key.category);
  if (!key.ego_involved) label += "*";
  return label;
}

EvalReport aggregate(const std::vector<scoring::ScoreSeries>& series,
                     const std::vector<ClassKey>& keys, const EvalOptions& options) {
  if (series.size() != keys.size()) throw ValidationError("aggregate: one key per series required");
  EvalReport report;
  std::vector<double> all_scores;
  std::vector<int> all_labels;
  std::map<ClassKey, std::pair<std::vector<double>, std::vector<int>>> cells;
  for (size_t v = 0; v < series.size(); ++v) {
    const auto& s = series[v];
    if (s.scores.size() != s.labels.size()) {
      throw ValidationError("aggregate: score/label length mismatch in video " + s.video_id);
    }
    all_scores.insert(all_scores.end(), s.scores.begin(), s.scores.end());
    all_labels.insert(all_labels.end(), s.labels.begin(), s.labels.end());
    if (is_anomalous(keys[v].category)) {
      auto& cell = cells[keys[v]];
      cell.first.insert(cell.first.end(), s.scores.begin(), s.scores.end());
      cell.second.insert(cell.second.end(), s.labels.begin(), s.labels.end());
    }
  }
  report.n_frames = static_cast<int>(all_scores.size());
  if (options.per_video_average) {
    double sum = 0.0;
    int counted = 0;
    for (size_t v = 0; v < series.size(); ++v) {
      const auto& s = series[v];
      const bool has_pos = std::find(s.labels.begin(), s.labels.end(), 1) != s.labels.end();
      const bool has_neg = std::find(s.labels.begin(), s.labels.end(), 0) != s.labels.end();
      if (has_pos && has_neg) {
        sum += compute_auc(s.scores, s.labels);
        ++counted;
      }
    }
    if (counted == 0) throw NumericError("aggregate: no video has both classes");
    report.overall_auc = sum / counted;
  } else {
    report.overall_auc = compute_auc(all_scores, all_labels);
  }
  report.roc = roc_points(all_scores, all_labels);
  for (const auto& [key, cell] : cells) {
    const auto& [cs, cl] = cell;
    const bool has_pos = std::find(cl.begin(), cl.end(), 1) != cl.end();
    const bool has_neg = std::find(cl.begin(), cl.end(), 0) != cl.end();
    report.per_class_frames[key] = static_cast<int>(cs.size());
    if (has_pos && has_neg) {
      report.per_class_auc[key] = compute_auc(cs, cl);
    }
    // Cells lacking a class stay absent from per_class_auc.
  }
  return report;
}

EvalReport evaluate(const data::DatasetManifest& manifest, const TthfModel& model,
                    const EvalOptions& options) {
  if (manifest.records.empty()) throw ValidationError("evaluate: empty manifest");
  std::vector<scoring::ScoreSeries> series;
  std::vector<ClassKey> keys;
  for (const auto& rec : manifest.records) {
    series.push_back(scoring::score_video(rec, model, options.score).series);
    keys.push_back({rec.category, rec.ego_involved});
  }
  return aggregate(series, keys, options);
}

namespace {
json report_to_json(const EvalReport& report) {
  json j;
  j["overall_auc"] = report.overall_auc;
  j["n_frames"] = report.n_frames;
  json per_class = json::object();
  for (const auto& [key, frames] : report.per_class_frames) {
    json cell;
    cell["n_frames"] = frames;
    auto it = report.per_class_auc.find(key);
    if (it != report.per_class_auc.end()) {
      cell["auc"] = it->second;
    } else {
      cell["auc"] = nullptr;
    }
    per_class[class_key_label(key)] = cell;
  }
  j["per_class"] = per_class;
  json roc = json::array();
  for (const auto& [fpr, tpr] : report.roc) roc.push_back({fpr, tpr});
  j["roc"] = roc;
  return j;
}
}  // namespace

void write_report(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report: " + path.string());
  out << report_to_json(report).dump(2) << "\n";
}

EvalReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read report: " + path.string());
  json j = json::parse(in);
  EvalReport report;
  report.overall_auc = j.at("overall_auc").get<double>();
  report.n_frames = j.at("n_frames").get<int>();
  for (const auto& [label, cell] : j.at("per_class").items()) {
    ClassKey key;
    std::string name = label;
    key.ego_involved = true;
    if (!name.empty() && name.back() == '*') {
      key.ego_involved = false;
      name.pop_back();
    }
    key.category = category_from_string(name);
    report.per_class_frames[key] = cell.at("n_frames").get<int>();
    if (!cell.at("auc").is_null()) {
      report.per_class_auc[key] = cell.at("auc").get<double>();
    }
  }
  for (const auto& p : j.at("roc")) {
    report.roc.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  }
  return report;
}

std::string format_report_table(const EvalReport& report) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  out << "overall_auc " << report.overall_auc << "  (" << report.n_frames << " frames)\n";
  out << "class      auc      frames\n";
  for (const auto& [key, frames] : report.per_class_frames) {
    std::string label = class_key_label(key);
    out << label << std::string(label.size() < 10 ? 10 - label.size() : 1, ' ');
    auto it = report.per_class_auc.find(key);
    if (it != report.per_class_auc.end()) {
      out << it->second;
    } else {
      out << "   N/A";
    }
    out << "   " << frames << "\n";
  }
  return out.str();
}

namespace {

void draw_score_curve(const scoring::ScoreSeries& series, const std::filesystem::path& path) {
  const int width = 640, height = 320, margin = 40;
  cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  const int plot_w = width - 2 * margin;
  const int plot_h = height - 2 * margin;
  const int n = static_cast<int>(series.scores.size());
  auto x_at = [&](int i) {
    return margin + (n > 1 ? i * plot_w / (n - 1) : plot_w / 2);
  };
  auto y_at = [&](double score) {
    return height - margin - static_cast<int>(score * plot_h);
  };
  // Shade ground-truth anomaly spans.
  int span_start = -1;
  for (int i = 0; i <= n; ++i) {
    const bool hot = i < n && series.labels[i] == 1;
    if (hot && span_start < 0) span_start = i;
    if (!hot && span_start >= 0) {
      cv::rectangle(canvas, cv::Point(x_at(span_start), margin), cv::Point(x_at(i - 1), height - margin),
                    cv::Scalar(210, 210, 255), cv::FILLED);
      span_start = -1;
    }
  }
  cv::rectangle(canvas, cv::Point(margin, margin), cv::Point(width - margin, height - margin),
                cv::Scalar(0, 0, 0));
  for (int i = 1; i < n; ++i) {
    cv::line(canvas, cv::Point(x_at(i - 1), y_at(series.scores[i - 1])),
             cv::Point(x_at(i), y_at(series.scores[i])), cv::Scalar(180, 60, 20), 2, cv::LINE_AA);
  }
  cv::putText(canvas, series.video_id, cv::Point(margin, margin - 12), cv::FONT_HERSHEY_SIMPLEX,
              0.5, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
  if (!cv::imwrite(path.string(), canvas)) {
    throw IoError("cannot write plot: " + path.string());
  }
}

void draw_roc(const std::vector<std::pair<double, double>>& roc,
              const std::filesystem::path& path) {
  const int size = 420, margin = 30;
  cv::Mat canvas(size, size, CV_8UC3, cv::Scalar(255, 255, 255));
  const int plot = size - 2 * margin;
  auto px = [&](double fpr) { return margin + static_cast<int>(fpr * plot); };
  auto py = [&](double tpr) { return size - margin - static_cast<int>(tpr * plot); };
  cv::rectangle(canvas, cv::Point(margin, margin), cv::Point(size - margin, size - margin),
                cv::Scalar(0, 0, 0));
  cv::line(canvas, cv::Point(px(0), py(0)), cv::Point(px(1), py(1)), cv::Scalar(190, 190, 190), 1,
           cv::LINE_AA);
  for (size_t i = 1; i < roc.size(); ++i) {
    cv::line(canvas, cv::Point(px(roc[i - 1].first), py(roc[i - 1].second)),
             cv::Point(px(roc[i].first), py(roc[i].second)), cv::Scalar(60, 100, 220), 2,
             cv::LINE_AA);
  }
  cv::putText(canvas, "ROC", cv::Point(margin, margin - 10), cv::FONT_HERSHEY_SIMPLEX, 0.5,
              cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
  if (!cv::imwrite(path.string(), canvas)) {
    throw IoError("cannot write plot: " + path.string());
  }
}

}  // namespace

void export_score_curves(const std::vector<scoring::ScoreSeries>& series,
                         const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (!std::filesystem::is_directory(out_dir)) {
    throw IoError("cannot create output directory: " + out_dir.string());
  }
  for (const auto& s : series) {
    draw_score_curve(s, out_dir / (s.video_id + "_scores.png"));
  }
}

void export_plots(const std::vector<scoring::ScoreSeries>& series, const EvalReport& report,
                  const std::filesystem::path& out_dir) {
  export_score_curves(series, out_dir);
  if (!series.empty()) {
    draw_roc(report.roc, out_dir / "roc.png");
  }
  write_report(report, out_dir / "report.json");
}

}  // namespace tthf::eval
