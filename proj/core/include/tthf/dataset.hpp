#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tthf/category.hpp"
#include "tthf/image.hpp"

namespace tthf::data {

/// All frames are resized to this square side before entering the model.
inline constexpr int kInputSize = 224;

enum class Split { train, test };
enum class Source { dota, synthetic };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

/// Inclusive frame-index interval.
struct AnomalyInterval {
  int start = 0;
  int end = 0;
};

struct VideoRecord {
  std::string video_id;
  Category category = Category::NORMAL;
  bool ego_involved = false;
  std::optional<AnomalyInterval> anomaly_interval;

  // Either lazily loadable paths or in-memory frames (synthetic data).
  std::vector<std::filesystem::path> frame_paths;
  std::vector<Image> frames_in_memory;

  int frame_count() const;
  Image frame(int index) const;

  /// Throws ValidationError on any violated invariant.
  void validate() const;

  /// 1 iff an anomaly interval is present and contains frame index t.
  int frame_label(int t) const;
};

struct DatasetManifest {
  std::vector<VideoRecord> records;
  Split split = Split::train;
  Source source = Source::dota;
};

/// Per-channel normalization applied after the resize.
struct PreprocessOptions {
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> stddev{0.5, 0.5, 0.5};
};

/// Published preprocessing constants of the pretrained CLIP encoders.
PreprocessOptions clip_preprocess();
/// Mean 0.5 / std 0.5 per channel, used for the synthetic pipeline.
PreprocessOptions synthetic_preprocess();

/// Resize to 224x224 (bilinear, half-pixel centers), scale to [0,1], then
/// normalize per channel. Output is (224*224) x 3 with row index y*224 + x.
Eigen::MatrixXd preprocess_frame(const Image& img, const PreprocessOptions& opt);

/// One two-frame unit. t indexes the later frame and carries the label.
struct ClipSample {
  std::string video_id;
  int t = 1;
  Eigen::MatrixXd prev_frame;  // (224*224) x 3, normalized
  Eigen::MatrixXd cur_frame;
  int label = 0;
  int fine_prompt_index = 11;    // 1..11
  int general_prompt_index = 2;  // 1..2
};

/// Label and prompt indices for the clip ending at frame t, without loading
/// pixel data. Normal clips map to the normal prompts even inside anomalous
/// videos.
ClipSample clip_metadata(const VideoRecord& record, int t);

/// Full clip with preprocessed frames.
ClipSample clip_sample(const VideoRecord& record, int t, const PreprocessOptions& opt);

/// All clips of a video, t in [1, frame_count-1].
std::vector<ClipSample> window_clips(const VideoRecord& record, const PreprocessOptions& opt);

/// Load `<root>/<split>/annotations.jsonl` and the per-video frame folders.
/// An existing split directory without videos yields an empty manifest; a
/// missing annotations file next to video folders is an error.
DatasetManifest load_manifest(const std::filesystem::path& root, Split split);

/// Deterministic synthetic driving-video stand-in: smooth translating
/// backgrounds with a moving foreground patch; odd-indexed videos carry an
/// injected anomaly (global jitter when ego-involved, erratic patch motion
/// otherwise) over a random interval.
DatasetManifest generate_synthetic_dataset(std::uint64_t seed, int n_videos, int frames_per_video,
                                           int image_size);

/// Write a manifest with in-memory frames to the on-disk layout
/// `<root>/<split>/<video_id>/frames/%06d.jpg` + annotations.jsonl.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& root);

}  // namespace tthf::data
