#include "pcbear/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>

#include "pcbear/error.hpp"
#include "pcbear/tensor_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pcbear {

const char* to_string(Split split) noexcept { return split == Split::kTrain ? "train" : "test"; }

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  fail(ErrorCode::kInvalidArgument, "unknown split '" + s + "' (expected train|test)");
}

std::optional<std::size_t> DatasetManifest::find(const std::string& id) const {
  for (std::size_t i = 0; i < videos.size(); ++i) {
    if (videos[i].id == id) return i;
  }
  return std::nullopt;
}

std::vector<std::size_t> DatasetManifest::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    if (videos[i].split == split) out.push_back(i);
  }
  return out;
}

json DatasetManifest::to_json() const {
  json j;
  j["videos"] = json::array();
  json train = json::array(), test = json::array();
  for (const auto& v : videos) {
    j["videos"].push_back({{"id", v.id},
                           {"label", v.label},
                           {"frame_count", v.frame_count},
                           {"pose_path", v.pose_path},
                           {"feature_path", v.feature_path}});
    (v.split == Split::kTrain ? train : test).push_back(v.id);
  }
  j["class_names"] = class_names;
  j["feature_dim"] = feature_dim;
  j["joint_count"] = joint_count;
  j["splits"] = {{"train", train}, {"test", test}};
  return j;
}

DatasetManifest DatasetManifest::from_json(const json& j) {
  DatasetManifest m;
  try {
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.feature_dim = j.at("feature_dim").get<std::size_t>();
    m.joint_count = j.value("joint_count", kCocoJoints);
    for (const auto& v : j.at("videos")) {
      VideoEntry e;
      e.id = v.at("id").get<std::string>();
      e.label = v.at("label").get<int>();
      e.frame_count = v.at("frame_count").get<std::size_t>();
      e.pose_path = v.at("pose_path").get<std::string>();
      e.feature_path = v.at("feature_path").get<std::string>();
      m.videos.push_back(std::move(e));
    }
    std::unordered_map<std::string, Split> split_of;
    const auto& splits = j.at("splits");
    for (const char* name : {"train", "test"}) {
      if (!splits.contains(name)) continue;
      for (const auto& id : splits.at(name)) {
        auto [it, inserted] = split_of.emplace(id.get<std::string>(), split_from_string(name));
        if (!inserted) fail(ErrorCode::kBadManifest, "video '" + it->first + "' is in both splits");
      }
    }
    for (auto& e : m.videos) {
      auto it = split_of.find(e.id);
      if (it == split_of.end()) fail(ErrorCode::kBadManifest, "video '" + e.id + "' has no split");
      e.split = it->second;
      split_of.erase(it);
    }
    if (!split_of.empty()) {
      fail(ErrorCode::kBadManifest, "split lists unknown video '" + split_of.begin()->first + "'");
    }
  } catch (const json::exception& ex) {
    fail(ErrorCode::kBadManifest, std::string("manifest.json: ") + ex.what());
  }
  return m;
}

void PoseSequence::validate(const std::string& what) const {
  if (xy.size() != frames * joints * 2 || confidence.size() != frames * joints) {
    fail(ErrorCode::kShapeMismatch, what + ": tensor sizes disagree with L x J");
  }
  if (!all_finite(xy)) fail(ErrorCode::kCorruptTensor, what + ": NaN/Inf keypoint");
  for (float c : confidence) {
    if (!(c >= 0.0f && c <= 1.0f)) {
      fail(ErrorCode::kCorruptTensor, what + ": confidence outside [0,1]");
    }
  }
}

namespace {

// Rejects absolute paths and any path that climbs out of the bundle.
fs::path resolve_inside(const fs::path& dir, const std::string& rel) {
  fs::path p(rel);
  if (rel.empty() || p.is_absolute()) {
    fail(ErrorCode::kBadManifest, "path '" + rel + "' must be relative to the bundle");
  }
  for (const auto& part : p.lexically_normal()) {
    if (part == "..") fail(ErrorCode::kBadManifest, "path '" + rel + "' escapes the bundle");
  }
  return dir / p;
}

std::string conf_path(const VideoEntry& v) { return "conf/" + v.id + ".f32"; }

}  // namespace

PoseSequence BundleReader::pose(std::size_t video) const {
  const auto& v = manifest_.videos.at(video);
  const std::size_t joints = manifest_.joint_count;
  PoseSequence seq;
  seq.frames = v.frame_count;
  seq.joints = joints;
  seq.xy = read_f32_checked(resolve_inside(dir_, v.pose_path), v.frame_count * joints * 2,
                            "pose");
  const fs::path conf = dir_ / conf_path(v);
  if (fs::exists(conf)) {
    seq.confidence = read_f32_checked(conf, v.frame_count * joints, "confidence");
  } else {
    seq.confidence.assign(v.frame_count * joints, 1.0f);
  }
  seq.validate("video " + v.id);
  return seq;
}

FeatureVector BundleReader::feature(std::size_t video) const {
  const auto& v = manifest_.videos.at(video);
  const fs::path path = resolve_inside(dir_, v.feature_path);
  // An absent feature file is a zero-length tensor, i.e. a declared-vs-stored
  // dimension mismatch.
  if (!fs::exists(path)) {
    fail(ErrorCode::kShapeMismatch, "feature " + path.string() + ": expected " +
                                        std::to_string(manifest_.feature_dim) +
                                        " floats, file is missing");
  }
  return read_f32_checked(path, manifest_.feature_dim, "feature");
}

DatasetBundle BundleReader::load_all() const {
  DatasetBundle b;
  b.manifest = manifest_;
  for (std::size_t i = 0; i < manifest_.videos.size(); ++i) {
    b.poses.push_back(pose(i));
    b.features.push_back(feature(i));
  }
  return b;
}

BundleReader load_bundle(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) fail(ErrorCode::kMissingFile, "missing file: " + manifest_path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& ex) {
    fail(ErrorCode::kBadManifest, manifest_path.string() + ": " + ex.what());
  }

  BundleReader reader;
  reader.dir_ = dir;
  reader.manifest_ = DatasetManifest::from_json(j);
  const auto& m = reader.manifest_;

  if (m.joint_count == 0) fail(ErrorCode::kBadManifest, "joint_count must be positive");
  if (m.feature_dim == 0 && !m.videos.empty()) {
    fail(ErrorCode::kBadManifest, "feature_dim must be positive");
  }
  std::set<std::string> seen;
  for (const auto& v : m.videos) {
    if (!seen.insert(v.id).second) fail(ErrorCode::kBadManifest, "duplicate video id " + v.id);
    if (v.label < 0 || static_cast<std::size_t>(v.label) >= m.num_classes()) {
      fail(ErrorCode::kUnknownLabel, "video " + v.id + " has label " + std::to_string(v.label) +
                                         " but only " + std::to_string(m.num_classes()) +
                                         " classes are declared");
    }
    if (v.frame_count < 1) fail(ErrorCode::kBadManifest, "video " + v.id + " has no frames");
  }
  // Validate every tensor once; accessors re-read on demand.
  for (std::size_t i = 0; i < m.videos.size(); ++i) {
    (void)reader.pose(i);
    (void)reader.feature(i);
  }
  return reader;
}

fs::path write_bundle(const DatasetBundle& bundle, const fs::path& dir) {
  const auto& m = bundle.manifest;
  if (bundle.poses.size() != m.videos.size() || bundle.features.size() != m.videos.size()) {
    fail(ErrorCode::kShapeMismatch, "bundle tensors are not parallel to the manifest");
  }
  try {
    fs::create_directories(dir);
    for (std::size_t i = 0; i < m.videos.size(); ++i) {
      const auto& v = m.videos[i];
      const auto& pose = bundle.poses[i];
      if (pose.frames != v.frame_count || pose.joints != m.joint_count) {
        fail(ErrorCode::kShapeMismatch, "pose of " + v.id + " disagrees with manifest");
      }
      if (bundle.features[i].size() != m.feature_dim) {
        fail(ErrorCode::kShapeMismatch, "feature of " + v.id + " disagrees with feature_dim");
      }
      const fs::path pose_file = resolve_inside(dir, v.pose_path);
      const fs::path conf_file = dir / conf_path(v);
      const fs::path feature_file = resolve_inside(dir, v.feature_path);
      for (const auto& p : {pose_file, conf_file, feature_file}) {
        fs::create_directories(p.parent_path());
      }
      write_f32(pose_file, pose.xy);
      write_f32(conf_file, pose.confidence);
      write_f32(feature_file, bundle.features[i]);
    }
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) fail(ErrorCode::kIoFailure, "cannot write " + (dir / "manifest.json").string());
    out << m.to_json().dump(2) << '\n';
    if (!out) fail(ErrorCode::kIoFailure, "write failed for manifest.json");
  } catch (const fs::filesystem_error& ex) {
    fail(ErrorCode::kIoFailure, ex.what());
  }
  return dir;
}

}  // namespace pcbear
