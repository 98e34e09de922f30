#include "tthf/dataset.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "tthf/prompt_bank.hpp"

namespace tthf::data {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw UsageError("unknown split: '" + s + "' (expected train|test)");
}

int VideoRecord::frame_count() const {
  return frames_in_memory.empty() ? static_cast<int>(frame_paths.size())
                                  : static_cast<int>(frames_in_memory.size());
}

Image VideoRecord::frame(int index) const {
  if (index < 0 || index >= frame_count()) {
    throw ValidationError("frame index " + std::to_string(index) + " out of range for video " +
                          video_id);
  }
  if (!frames_in_memory.empty()) return frames_in_memory[index];
  return load_image(frame_paths[index]);
}

void VideoRecord::validate() const {
  if (frame_count() < 2) {
    throw ValidationError("video " + video_id + " has fewer than 2 frames");
  }
  if (anomaly_interval) {
    const auto& iv = *anomaly_interval;
    if (iv.start > iv.end) {
      throw ValidationError("video " + video_id + " has malformed interval (start " +
                            std::to_string(iv.start) + " > end " + std::to_string(iv.end) + ")");
    }
    if (iv.start < 0 || iv.end >= frame_count()) {
      throw ValidationError("video " + video_id + " interval [" + std::to_string(iv.start) + "," +
                            std::to_string(iv.end) + "] exceeds frame range [0," +
                            std::to_string(frame_count() - 1) + "]");
    }
    if (category == Category::NORMAL) {
      throw ValidationError("video " + video_id + " is NORMAL but carries an anomaly interval");
    }
  } else if (category != Category::NORMAL) {
    throw ValidationError("video " + video_id + " has category " + tthf::to_string(category) +
                          " but no anomaly interval");
  }
}

int VideoRecord::frame_label(int t) const {
  if (!anomaly_interval) return 0;
  return (t >= anomaly_interval->start && t <= anomaly_interval->end) ? 1 : 0;
}

PreprocessOptions clip_preprocess() {
  return {{0.48145466, 0.4578275, 0.40821073}, {0.26862954, 0.26130258, 0.27577711}};
}

PreprocessOptions synthetic_preprocess() { return {{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}}; }

Eigen::MatrixXd preprocess_frame(const Image& img, const PreprocessOptions& opt) {
  if (img.width < 1 || img.height < 1) {
    throw ValidationError("preprocess_frame: image has no pixels");
  }
  Eigen::MatrixXd m = resize_bilinear(img, kInputSize, kInputSize);
  for (int c = 0; c < 3; ++c) {
    m.col(c) = ((m.col(c) / 255.0).array() - opt.mean[c]) / opt.stddev[c];
  }
  return m;
}

ClipSample clip_metadata(const VideoRecord& record, int t) {
  if (record.frame_count() < 2) {
    throw ValidationError("video " + record.video_id + " is too short to window");
  }
  if (t < 1 || t >= record.frame_count()) {
    throw ValidationError("clip index t=" + std::to_string(t) + " out of range for video " +
                          record.video_id);
  }
  ClipSample clip;
  clip.video_id = record.video_id;
  clip.t = t;
  clip.label = record.frame_label(t);
  if (clip.label == 1) {
    auto [fine, general] = prompts::map_category(record.category, record.ego_involved);
    clip.fine_prompt_index = fine;
    clip.general_prompt_index = general;
  } else {
    clip.fine_prompt_index = prompts::kFineNormalIndex;
    clip.general_prompt_index = prompts::kGeneralNormalIndex;
  }
  return clip;
}

ClipSample clip_sample(const VideoRecord& record, int t, const PreprocessOptions& opt) {
  ClipSample clip = clip_metadata(record, t);
  clip.prev_frame = preprocess_frame(record.frame(t - 1), opt);
  clip.cur_frame = preprocess_frame(record.frame(t), opt);
  return clip;
}

std::vector<ClipSample> window_clips(const VideoRecord& record, const PreprocessOptions& opt) {
  if (record.frame_count() < 2) {
    throw ValidationError("video " + record.video_id + " is too short to window");
  }
  std::vector<ClipSample> clips;
  clips.reserve(record.frame_count() - 1);
  for (int t = 1; t < record.frame_count(); ++t) {
    clips.push_back(clip_sample(record, t, opt));
  }
  return clips;
}

namespace {

std::vector<fs::path> list_frames(const fs::path& frames_dir, const std::string& video_id) {
  if (!fs::is_directory(frames_dir)) {
    throw IoError("video " + video_id + " has no frames directory: " + frames_dir.string());
  }
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(frames_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jpg") {
      paths.push_back(entry.path());
    }
  }
  std::sort(paths.begin(), paths.end());
  return paths;
}

}  // namespace

DatasetManifest load_manifest(const fs::path& root, Split split) {
  const fs::path split_dir = root / to_string(split);
  const fs::path ann_path = split_dir / "annotations.jsonl";
  if (!fs::is_directory(split_dir)) {
    throw IoError("split directory not found: " + split_dir.string());
  }
  if (!fs::exists(ann_path)) {
    // An entirely empty split is fine; videos without annotations are not.
    bool has_videos = false;
    for (const auto& entry : fs::directory_iterator(split_dir)) {
      if (entry.is_directory()) {
        has_videos = true;
        break;
      }
    }
    if (has_videos) {
      throw IoError("missing annotation file: " + ann_path.string());
    }
    DatasetManifest empty;
    empty.split = split;
    return empty;
  }

  std::ifstream in(ann_path);
  if (!in) throw IoError("cannot open " + ann_path.string());

  DatasetManifest manifest;
  manifest.split = split;
  std::set<std::string> seen_ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(ann_path.string() + ":" + std::to_string(line_no) +
                            ": invalid JSON: " + e.what());
    }
    VideoRecord rec;
    rec.video_id = obj.at("video_id").get<std::string>();
    if (!seen_ids.insert(rec.video_id).second) {
      throw ValidationError("duplicate annotation for video " + rec.video_id +
                            " (one interval per video)");
    }
    rec.category = category_from_string(obj.at("category").get<std::string>());
    if (obj.contains("ego_involved") && !obj["ego_involved"].is_null()) {
      rec.ego_involved = obj["ego_involved"].get<bool>();
    }
    const bool has_start = obj.contains("anomaly_start") && !obj["anomaly_start"].is_null();
    const bool has_end = obj.contains("anomaly_end") && !obj["anomaly_end"].is_null();
    if (has_start != has_end) {
      throw ValidationError("video " + rec.video_id + " has a half-open anomaly annotation");
    }
    if (has_start) {
      rec.anomaly_interval = AnomalyInterval{obj["anomaly_start"].get<int>(),
                                             obj["anomaly_end"].get<int>()};
    }
    rec.frame_paths = list_frames(split_dir / rec.video_id / "frames", rec.video_id);
    rec.validate();
    manifest.records.push_back(std::move(rec));
  }
  return manifest;
}

namespace {

// Smooth periodic texture: a base color plus a few low-frequency sinusoids.
// Being defined on all of R^2, it can be translated without wrap seams.
struct SinusoidField {
  struct Wave {
    double amp, fx, fy, phase;
  };
  std::array<double, 3> base;
  std::array<std::vector<Wave>, 3> waves;

  static SinusoidField random(Rng& rng, double base_lo, double base_hi, double amp,
                              double min_wavelength, double max_wavelength) {
    SinusoidField f;
    for (int c = 0; c < 3; ++c) {
      f.base[c] = rng.uniform(base_lo, base_hi);
      const int n_waves = 3;
      for (int k = 0; k < n_waves; ++k) {
        double wavelength = rng.uniform(min_wavelength, max_wavelength);
        double angle = rng.uniform(0.0, 2.0 * M_PI);
        f.waves[c].push_back({rng.uniform(0.5 * amp, amp), std::cos(angle) / wavelength,
                              std::sin(angle) / wavelength, rng.uniform(0.0, 2.0 * M_PI)});
      }
    }
    return f;
  }

  double sample(int c, double x, double y) const {
    double v = base[c];
    for (const auto& w : waves[c]) {
      v += w.amp * std::sin(2.0 * M_PI * (w.fx * x + w.fy * y) + w.phase);
    }
    return v;
  }
};

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0l, 255l));
}

}  // namespace

DatasetManifest generate_synthetic_dataset(std::uint64_t seed, int n_videos, int frames_per_video,
                                           int image_size) {
  if (n_videos < 2) throw UsageError("generate_synthetic_dataset: n_videos must be >= 2");
  if (frames_per_video < 4) {
    throw UsageError("generate_synthetic_dataset: frames_per_video must be >= 4");
  }
  if (image_size < 8) throw UsageError("generate_synthetic_dataset: image_size must be >= 8");

  static const Category kAnomalyCycle[] = {Category::ST, Category::AH, Category::LA, Category::OC,
                                           Category::TC, Category::VP, Category::VO, Category::OO,
                                           Category::UK};
  Rng master(seed);
  DatasetManifest manifest;
  manifest.source = Source::synthetic;

  const int f = frames_per_video;
  for (int vi = 0; vi < n_videos; ++vi) {
    Rng rng = master.fork(static_cast<std::uint64_t>(vi) + 1);
    VideoRecord rec;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "synth_%06d", vi);
    rec.video_id = buf;

    const bool anomalous = (vi % 2) == 1;
    if (anomalous) {
      rec.category = kAnomalyCycle[(vi / 2) % 9];
      rec.ego_involved = rng.uniform() < 0.5;
      int len = std::max(2, std::min(f / 2 - 1, 2 + f / 4));
      if (f < 6) len = 1;
      const int start = static_cast<int>(rng.uniform_int(1, std::max(1, f - 1 - len)));
      rec.anomaly_interval = AnomalyInterval{start, start + len - 1};
    }

    SinusoidField background = SinusoidField::random(
        rng, 80.0, 170.0, 28.0, 0.8 * image_size, 2.5 * image_size);
    SinusoidField patch_tex = SinusoidField::random(
        rng, 40.0, 215.0, 35.0, 0.2 * image_size, 0.6 * image_size);

    // Slow global drift, the "camera" moving forward.
    const double drift_angle = rng.uniform(0.0, 2.0 * M_PI);
    const double drift_speed = rng.uniform(0.3, 0.7);
    const double dx = drift_speed * std::cos(drift_angle);
    const double dy = drift_speed * std::sin(drift_angle);

    // Foreground patch present in every video so appearance alone carries no
    // label signal; only its motion (or the camera's) becomes anomalous.
    const int patch_size = std::max(4, image_size / 4);
    double px = rng.uniform(0.15 * image_size, 0.85 * image_size - patch_size);
    double py = rng.uniform(0.15 * image_size, 0.85 * image_size - patch_size);
    const double pvx = rng.uniform(-0.6, 0.6);
    const double pvy = rng.uniform(-0.6, 0.6);

    const double jitter_amp = std::max(3.0, 0.08 * image_size);
    const bool ego_disturbance = anomalous && rec.ego_involved;
    const bool patch_disturbance = anomalous && !rec.ego_involved;

    for (int t = 0; t < f; ++t) {
      bool in_interval = rec.anomaly_interval && t >= rec.anomaly_interval->start &&
                         t <= rec.anomaly_interval->end;
      // Disturbances return to zero on the last interval frame so that the
      // first out-of-interval temporal difference is quiet again.
      bool hot = in_interval && (t != rec.anomaly_interval->end ||
                                 rec.anomaly_interval->start == rec.anomaly_interval->end);

      double cam_jx = 0.0, cam_jy = 0.0;
      if (ego_disturbance && hot) {
        cam_jx = rng.uniform(-jitter_amp, jitter_amp);
        cam_jy = rng.uniform(-jitter_amp, jitter_amp);
      }
      double patch_jx = 0.0, patch_jy = 0.0;
      if (patch_disturbance && hot) {
        patch_jx = rng.uniform(-jitter_amp, jitter_amp);
        patch_jy = rng.uniform(-jitter_amp, jitter_amp);
      }

      Image frame(image_size, image_size);
      const double ox = dx * t + cam_jx;
      const double oy = dy * t + cam_jy;
      const double patch_x = px + pvx * t + patch_jx - cam_jx;
      const double patch_y = py + pvy * t + patch_jy - cam_jy;
      for (int y = 0; y < image_size; ++y) {
        for (int x = 0; x < image_size; ++x) {
          const bool in_patch = x >= patch_x && x < patch_x + patch_size && y >= patch_y &&
                                y < patch_y + patch_size;
          for (int c = 0; c < 3; ++c) {
            double v = in_patch ? patch_tex.sample(c, x - patch_x, y - patch_y)
                                : background.sample(c, x + ox, y + oy);
            frame.at(x, y, c) = quantize(v);
          }
        }
      }
      rec.frames_in_memory.push_back(std::move(frame));
    }
    rec.validate();
    manifest.records.push_back(std::move(rec));
  }
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& root) {
  const fs::path split_dir = root / to_string(manifest.split);
  fs::create_directories(split_dir);
  std::ofstream ann(split_dir / "annotations.jsonl");
  if (!ann) throw IoError("cannot write annotations under " + split_dir.string());
  for (const auto& rec : manifest.records) {
    const fs::path frames_dir = split_dir / rec.video_id / "frames";
    fs::create_directories(frames_dir);
    for (int t = 0; t < rec.frame_count(); ++t) {
      char name[16];
      std::snprintf(name, sizeof(name), "%06d.jpg", t);
      save_image_jpg(rec.frame(t), frames_dir / name);
    }
    json obj;
    obj["video_id"] = rec.video_id;
    if (rec.anomaly_interval) {
      obj["anomaly_start"] = rec.anomaly_interval->start;
      obj["anomaly_end"] = rec.anomaly_interval->end;
    } else {
      obj["anomaly_start"] = nullptr;
      obj["anomaly_end"] = nullptr;
    }
    obj["category"] = tthf::to_string(rec.category);
    obj["ego_involved"] = rec.ego_involved;
    ann << obj.dump() << "\n";
  }
}

}  // namespace tthf::data
