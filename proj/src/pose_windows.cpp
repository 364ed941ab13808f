#include "pcbear/pose_windows.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "pcbear/error.hpp"
#include "pcbear/tensor_io.hpp"

using nlohmann::json;

namespace pcbear {

namespace {

struct Point {
  double x, y;
};

Point midpoint(const PoseSequence& s, std::size_t t, std::size_t a, std::size_t b) {
  return {0.5 * (static_cast<double>(s.x(t, a)) + s.x(t, b)),
          0.5 * (static_cast<double>(s.y(t, a)) + s.y(t, b))};
}

double video_scale(const PoseSequence& s, ScaleMode mode, const NormalizationParams& p) {
  double total = 0.0;
  for (std::size_t t = 0; t < s.frames; ++t) {
    if (mode == ScaleMode::kTorso) {
      const Point hip = midpoint(s, t, p.root_left, p.root_right);
      const Point sho = midpoint(s, t, coco::kLeftShoulder, coco::kRightShoulder);
      total += std::hypot(sho.x - hip.x, sho.y - hip.y);
    } else {
      double lo_x = std::numeric_limits<double>::infinity(), lo_y = lo_x;
      double hi_x = -lo_x, hi_y = -lo_x;
      for (std::size_t j = 0; j < s.joints; ++j) {
        lo_x = std::min<double>(lo_x, s.x(t, j));
        hi_x = std::max<double>(hi_x, s.x(t, j));
        lo_y = std::min<double>(lo_y, s.y(t, j));
        hi_y = std::max<double>(hi_y, s.y(t, j));
      }
      total += std::hypot(hi_x - lo_x, hi_y - lo_y);
    }
  }
  return total / static_cast<double>(s.frames);
}

}  // namespace

const char* to_string(ScaleMode mode) noexcept { return mode == ScaleMode::kTorso ? "torso" : "bbox"; }

ScaleMode scale_mode_from_string(const std::string& s) {
  if (s == "torso") return ScaleMode::kTorso;
  if (s == "bbox") return ScaleMode::kBbox;
  fail(ErrorCode::kInvalidArgument, "scale_mode must be torso|bbox");
}

PoseSequence normalize(const PoseSequence& seq, const NormalizationParams& params) {
  if (params.root_left >= seq.joints || params.root_right >= seq.joints) {
    fail(ErrorCode::kInvalidArgument, "root joint index out of range");
  }
  if (params.scale_mode == ScaleMode::kTorso &&
      std::max(coco::kLeftShoulder, coco::kRightShoulder) >= seq.joints) {
    fail(ErrorCode::kInvalidArgument, "torso scale needs COCO shoulder joints");
  }
  if (seq.frames == 0) fail(ErrorCode::kInvalidArgument, "empty pose sequence");

  PoseSequence filled = seq;
  for (std::size_t t = 1; t < filled.frames; ++t) {
    for (std::size_t j = 0; j < filled.joints; ++j) {
      if (filled.conf(t, j) < params.min_confidence) {
        filled.x(t, j) = filled.x(t - 1, j);
        filled.y(t, j) = filled.y(t - 1, j);
      }
    }
  }

  double scale = video_scale(filled, params.scale_mode, params);
  if (!(scale >= params.min_scale)) {
    if (!params.clamp_scale) {
      fail(ErrorCode::kDegeneratePose,
           "pose scale " + std::to_string(scale) + " below min_scale");
    }
    scale = params.min_scale;
  }

  PoseSequence out = filled;
  for (std::size_t t = 0; t < out.frames; ++t) {
    const Point root = midpoint(filled, t, params.root_left, params.root_right);
    for (std::size_t j = 0; j < out.joints; ++j) {
      out.x(t, j) = static_cast<float>((filled.x(t, j) - root.x) / scale);
      out.y(t, j) = static_cast<float>((filled.y(t, j) - root.y) / scale);
    }
  }
  return out;
}

std::size_t window_count(std::size_t frames, std::size_t window, std::size_t stride) noexcept {
  if (window == 0 || stride == 0 || window > frames) return 0;
  return (frames - window) / stride + 1;
}

std::vector<PoseWindow> subsample(const PoseSequence& seq, std::size_t window,
                                  std::size_t stride, const std::string& video_id) {
  if (window < 1 || stride < 1) fail(ErrorCode::kInvalidArgument, "T and stride must be >= 1");
  if (window > seq.frames) {
    fail(ErrorCode::kWindowTooLong, "window length " + std::to_string(window) +
                                        " exceeds sequence length " + std::to_string(seq.frames));
  }
  const std::size_t per_frame = seq.joints * 2;
  std::vector<PoseWindow> out;
  out.reserve(window_count(seq.frames, window, stride));
  for (std::size_t t = 0; t + window <= seq.frames; t += stride) {
    PoseWindow w;
    w.frames = window;
    w.joints = seq.joints;
    w.video_id = video_id;
    w.start_frame = t;
    const auto first = seq.xy.begin() + static_cast<std::ptrdiff_t>(t * per_frame);
    w.data.assign(first, first + static_cast<std::ptrdiff_t>(window * per_frame));
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<float> flatten(const PoseWindow& window) { return window.data; }

PoseWindow unflatten(std::span<const float> flat, std::size_t frames, std::size_t joints,
                     std::string video_id, std::size_t start_frame) {
  if (flat.size() != frames * joints * 2) {
    fail(ErrorCode::kShapeMismatch, "flat window length does not match T x J x 2");
  }
  return PoseWindow{frames, joints, std::vector<float>(flat.begin(), flat.end()),
                    std::move(video_id), start_frame};
}

PoseSequence reverse(const PoseSequence& seq) {
  PoseSequence out(seq.frames, seq.joints);
  const std::size_t per_frame = seq.joints;
  for (std::size_t t = 0; t < seq.frames; ++t) {
    const std::size_t src = seq.frames - 1 - t;
    std::copy_n(seq.xy.begin() + static_cast<std::ptrdiff_t>(src * per_frame * 2),
                per_frame * 2, out.xy.begin() + static_cast<std::ptrdiff_t>(t * per_frame * 2));
    std::copy_n(seq.confidence.begin() + static_cast<std::ptrdiff_t>(src * per_frame),
                per_frame, out.confidence.begin() + static_cast<std::ptrdiff_t>(t * per_frame));
  }
  return out;
}

WindowCorpus build_corpus(const DatasetBundle& bundle, const WindowOptions& options) {
  if (options.window < 1 || options.stride < 1) {
    fail(ErrorCode::kInvalidArgument, "T and stride must be >= 1");
  }
  WindowCorpus corpus;
  corpus.window = options.window;
  corpus.joints = bundle.manifest.joint_count;
  corpus.stride = options.stride;
  corpus.normalized = options.normalize;
  corpus.scale_mode = options.normalization.scale_mode;
  for (std::size_t v = 0; v < bundle.poses.size(); ++v) {
    const auto& pose = bundle.poses[v];
    if (pose.frames < options.window) continue;
    const PoseSequence source = options.normalize ? normalize(pose, options.normalization) : pose;
    const auto& id = bundle.manifest.videos[v].id;
    for (auto& w : subsample(source, options.window, options.stride, id)) {
      corpus.rows.insert(corpus.rows.end(), w.data.begin(), w.data.end());
      corpus.refs.push_back({id, w.start_frame});
    }
  }
  return corpus;
}

void write_corpus(const WindowCorpus& corpus, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  write_f32(path, corpus.rows);
  json index = json::array();
  for (const auto& r : corpus.refs) index.push_back({{"video_id", r.video_id}, {"t", r.start_frame}});
  json side = {{"T", corpus.window},   {"J", corpus.joints},         {"stride", corpus.stride},
               {"dim", corpus.dim()},  {"rows", corpus.size()},      {"normalized", corpus.normalized},
               {"scale_mode", to_string(corpus.scale_mode)}, {"index", index}};
  std::ofstream out(path.string() + ".json", std::ios::trunc);
  if (!out) fail(ErrorCode::kIoFailure, "cannot write " + path.string() + ".json");
  out << side.dump() << '\n';
}

WindowCorpus read_corpus(const std::filesystem::path& path) {
  const std::string side_path = path.string() + ".json";
  std::ifstream in(side_path);
  if (!in) fail(ErrorCode::kMissingFile, "missing file: " + side_path);
  WindowCorpus corpus;
  try {
    json side;
    in >> side;
    corpus.window = side.at("T").get<std::size_t>();
    corpus.joints = side.at("J").get<std::size_t>();
    corpus.stride = side.at("stride").get<std::size_t>();
    corpus.normalized = side.at("normalized").get<bool>();
    corpus.scale_mode = scale_mode_from_string(side.value("scale_mode", std::string("torso")));
    for (const auto& r : side.at("index")) {
      corpus.refs.push_back({r.at("video_id").get<std::string>(), r.at("t").get<std::size_t>()});
    }
  } catch (const json::exception& ex) {
    fail(ErrorCode::kBadManifest, side_path + ": " + ex.what());
  }
  corpus.rows = read_f32_checked(path, corpus.size() * corpus.dim(), "windows");
  return corpus;
}

}  // namespace pcbear
