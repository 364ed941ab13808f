#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace pcbear {

inline constexpr std::size_t kCocoJoints = 17;

// COCO-17 keypoint indices used by normalization and the synthetic generator.
namespace coco {
inline constexpr std::size_t kNose = 0, kLeftEye = 1, kRightEye = 2, kLeftEar = 3,
                             kRightEar = 4, kLeftShoulder = 5, kRightShoulder = 6,
                             kLeftElbow = 7, kRightElbow = 8, kLeftWrist = 9,
                             kRightWrist = 10, kLeftHip = 11, kRightHip = 12,
                             kLeftKnee = 13, kRightKnee = 14, kLeftAnkle = 15,
                             kRightAnkle = 16;
}

enum class Split { kTrain, kTest };

const char* to_string(Split split) noexcept;
Split split_from_string(const std::string& s);

struct VideoEntry {
  std::string id;
  int label = 0;
  std::size_t frame_count = 0;
  std::string pose_path;
  std::string feature_path;
  Split split = Split::kTrain;
};

struct DatasetManifest {
  std::vector<VideoEntry> videos;
  std::vector<std::string> class_names;
  std::size_t feature_dim = 0;
  std::size_t joint_count = kCocoJoints;

  std::size_t num_classes() const noexcept { return class_names.size(); }
  std::optional<std::size_t> find(const std::string& id) const;
  std::vector<std::size_t> indices(Split split) const;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
};

// L x J x 2 keypoints (pixels) plus an L x J confidence channel.
struct PoseSequence {
  std::size_t frames = 0;
  std::size_t joints = 0;
  std::vector<float> xy;
  std::vector<float> confidence;

  PoseSequence() = default;
  PoseSequence(std::size_t frames, std::size_t joints)
      : frames(frames), joints(joints), xy(frames * joints * 2, 0.0f),
        confidence(frames * joints, 1.0f) {}

  float& x(std::size_t t, std::size_t j) { return xy[(t * joints + j) * 2]; }
  float& y(std::size_t t, std::size_t j) { return xy[(t * joints + j) * 2 + 1]; }
  float x(std::size_t t, std::size_t j) const { return xy[(t * joints + j) * 2]; }
  float y(std::size_t t, std::size_t j) const { return xy[(t * joints + j) * 2 + 1]; }
  float conf(std::size_t t, std::size_t j) const { return confidence[t * joints + j]; }

  // Throws CorruptTensor on NaN/Inf or confidence outside [0,1].
  void validate(const std::string& what) const;
};

using FeatureVector = std::vector<float>;

// Fully materialized dataset; poses/features are parallel to manifest.videos.
struct DatasetBundle {
  DatasetManifest manifest;
  std::vector<PoseSequence> poses;
  std::vector<FeatureVector> features;
};

// A validated on-disk bundle. Tensors are read on demand; safe for concurrent
// readers.
class BundleReader {
 public:
  const DatasetManifest& manifest() const noexcept { return manifest_; }
  const std::filesystem::path& dir() const noexcept { return dir_; }

  PoseSequence pose(std::size_t video) const;
  FeatureVector feature(std::size_t video) const;
  DatasetBundle load_all() const;

  friend BundleReader load_bundle(const std::filesystem::path& dir);

 private:
  std::filesystem::path dir_;
  DatasetManifest manifest_;
};

// Loads manifest.json and validates every tensor referenced by it.
// Errors: MissingFile, ShapeMismatch, CorruptTensor, UnknownLabel, BadManifest.
BundleReader load_bundle(const std::filesystem::path& dir);

// Writes manifest.json, poses/, conf/ and features/. Errors: IoFailure.
std::filesystem::path write_bundle(const DatasetBundle& bundle,
                                   const std::filesystem::path& dir);

enum class MotionKind { kWave, kSquat, kJump, kWalk, kClap };

const char* to_string(MotionKind kind) noexcept;
MotionKind motion_kind_from_string(const std::string& s);

struct SyntheticConfig {
  std::vector<MotionKind> classes{MotionKind::kWave, MotionKind::kSquat, MotionKind::kJump,
                                  MotionKind::kWalk, MotionKind::kClap};
  std::size_t per_class = 20;
  std::size_t frames = 16;
  std::size_t feature_dim = 64;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;
  // Per class, the last round(test_fraction * per_class) videos go to test.
  double test_fraction = 0.2;
  // Window length and phase bins defining the ground-truth motifs behind the
  // feature map.
  std::size_t motif_window = 8;
  std::size_t motif_phases = 4;

  static SyntheticConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Parametric COCO-17 motions with features z = A h + eps, where h is the
// video's motif histogram and A a seeded d x m_true Gaussian matrix.
DatasetBundle generate_synthetic(const SyntheticConfig& config);

// Ground-truth motif histograms behind the generated features (motif id =
// class index * motif_phases + phase bin of the window start).
struct SyntheticTruth {
  std::size_t motif_count = 0;
  std::vector<std::vector<double>> histograms;  // per video, length motif_count
};
SyntheticTruth synthetic_truth(const SyntheticConfig& config);

}  // namespace pcbear
