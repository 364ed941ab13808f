#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pcbear/dataset_io.hpp"

namespace pcbear {

enum class ScaleMode { kTorso, kBbox };

struct NormalizationParams {
  std::size_t root_left = coco::kLeftHip;
  std::size_t root_right = coco::kRightHip;
  ScaleMode scale_mode = ScaleMode::kTorso;
  double min_scale = 1e-6;
  // When false, a video-level scale below min_scale raises DegeneratePose
  // instead of being clamped.
  bool clamp_scale = true;
  // Keypoints below this confidence take the previous frame's coordinate.
  float min_confidence = 0.1f;
};

// Hip-midpoint centering per frame, then division by one video-level scale
// (mean torso length or mean bbox diagonal).
PoseSequence normalize(const PoseSequence& seq, const NormalizationParams& params = {});

struct PoseWindow {
  std::size_t frames = 0;  // T
  std::size_t joints = 0;
  std::vector<float> data;  // T x J x 2
  std::string video_id;
  std::size_t start_frame = 0;
};

// floor((L - T) / stride) + 1, or 0 when T > L.
std::size_t window_count(std::size_t frames, std::size_t window, std::size_t stride) noexcept;

// Windows starting at 0, stride, 2*stride, ... while start + T <= L.
// Errors: WindowTooLong (T > L), InvalidArgument (T or stride zero).
std::vector<PoseWindow> subsample(const PoseSequence& seq, std::size_t window,
                                  std::size_t stride, const std::string& video_id = {});

std::vector<float> flatten(const PoseWindow& window);
PoseWindow unflatten(std::span<const float> flat, std::size_t frames, std::size_t joints,
                     std::string video_id = {}, std::size_t start_frame = 0);

PoseSequence reverse(const PoseSequence& seq);

struct WindowRef {
  std::string video_id;
  std::size_t start_frame = 0;
};

// All windows of a dataset pooled into one n x (T*J*2) row-major matrix.
struct WindowCorpus {
  std::size_t window = 0;  // T
  std::size_t joints = 0;
  std::size_t stride = 1;
  bool normalized = true;
  ScaleMode scale_mode = ScaleMode::kTorso;
  std::vector<float> rows;
  std::vector<WindowRef> refs;

  std::size_t dim() const noexcept { return window * joints * 2; }
  std::size_t size() const noexcept { return refs.size(); }
  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(rows).subspan(i * dim(), dim());
  }
};

struct WindowOptions {
  std::size_t window = 8;
  std::size_t stride = 1;
  bool normalize = true;
  NormalizationParams normalization;
};

const char* to_string(ScaleMode mode) noexcept;
ScaleMode scale_mode_from_string(const std::string& s);

// Videos shorter than T contribute no windows.
WindowCorpus build_corpus(const DatasetBundle& bundle, const WindowOptions& options);

// Writes `path` (float32 matrix) and `path` + ".json" (shape and row index).
void write_corpus(const WindowCorpus& corpus, const std::filesystem::path& path);
WindowCorpus read_corpus(const std::filesystem::path& path);

}  // namespace pcbear
