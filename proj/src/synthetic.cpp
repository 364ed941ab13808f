#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <set>

#include "pcbear/dataset_io.hpp"
#include "pcbear/error.hpp"

using nlohmann::json;

namespace pcbear {

const char* to_string(MotionKind kind) noexcept {
  switch (kind) {
    case MotionKind::kWave: return "wave";
    case MotionKind::kSquat: return "squat";
    case MotionKind::kJump: return "jump";
    case MotionKind::kWalk: return "walk";
    case MotionKind::kClap: return "clap";
  }
  return "unknown";
}

MotionKind motion_kind_from_string(const std::string& s) {
  for (auto k : {MotionKind::kWave, MotionKind::kSquat, MotionKind::kJump, MotionKind::kWalk,
                 MotionKind::kClap}) {
    if (s == to_string(k)) return k;
  }
  fail(ErrorCode::kBadConfig, "unknown motion kind '" + s + "'");
}

SyntheticConfig SyntheticConfig::from_json(const json& j) {
  SyntheticConfig c;
  try {
    if (j.contains("classes")) {
      c.classes.clear();
      for (const auto& k : j.at("classes")) c.classes.push_back(motion_kind_from_string(k));
    }
    c.per_class = j.value("per_class", c.per_class);
    c.frames = j.value("L", j.value("frames", c.frames));
    c.feature_dim = j.value("d", j.value("feature_dim", c.feature_dim));
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.seed = j.value("seed", c.seed);
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    c.motif_window = j.value("motif_window", c.motif_window);
    c.motif_phases = j.value("motif_phases", c.motif_phases);
  } catch (const json::exception& ex) {
    fail(ErrorCode::kBadConfig, std::string("synthetic config: ") + ex.what());
  }
  return c;
}

json SyntheticConfig::to_json() const {
  json kinds = json::array();
  for (auto k : classes) kinds.push_back(to_string(k));
  return {{"classes", kinds},           {"per_class", per_class},
          {"L", frames},                {"d", feature_dim},
          {"noise_sigma", noise_sigma}, {"seed", seed},
          {"test_fraction", test_fraction}, {"motif_window", motif_window},
          {"motif_phases", motif_phases}};
}

namespace {

struct Vec2 {
  double x = 0, y = 0;
};

using Skeleton = std::array<Vec2, kCocoJoints>;

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kUpperArm = 0.55, kForearm = 0.5, kThigh = 0.8, kShin = 0.8;

// Angles are measured from straight down, positive towards the body's outer
// side. side = +1 for the left limb (image +x), -1 for the right.
void place_arm(Skeleton& s, double side, std::size_t shoulder, std::size_t elbow,
               std::size_t wrist, double upper_deg, double fore_deg) {
  const double a = upper_deg * kDeg, b = (upper_deg + fore_deg) * kDeg;
  s[elbow] = {s[shoulder].x + kUpperArm * side * std::sin(a), s[shoulder].y - kUpperArm * std::cos(a)};
  s[wrist] = {s[elbow].x + kForearm * side * std::sin(b), s[elbow].y - kForearm * std::cos(b)};
}

void place_leg(Skeleton& s, double side, std::size_t hip, std::size_t knee, std::size_t ankle,
               double thigh_deg, double shin_deg) {
  const double a = thigh_deg * kDeg, b = (thigh_deg + shin_deg) * kDeg;
  s[knee] = {s[hip].x + kThigh * side * std::sin(a), s[hip].y - kThigh * std::cos(a)};
  s[ankle] = {s[knee].x + kShin * side * std::sin(b), s[knee].y - kShin * std::cos(b)};
}

struct LimbAngles {
  double l_upper, l_fore, r_upper, r_fore;
  double l_thigh, l_shin, r_thigh, r_shin;
  double lift = 0.0;  // vertical body offset in torso units
};

LimbAngles motion_angles(MotionKind kind, double theta) {
  const double s = std::sin(theta);
  const double u = 0.5 * (1.0 + s);
  switch (kind) {
    case MotionKind::kWave:
      return {10, 5, 150, 20 + 30 * s, 5, 0, 5, 0};
    case MotionKind::kSquat: {
      const double t = 10 + 30 * u;
      return {90, 0, 90, 0, t, -2 * t, t, -2 * t};
    }
    case MotionKind::kJump:
      return {165 - 15 * u, 0, 165 - 15 * u, 0, 20 + 10 * u, 0, 20 + 10 * u, 0, 0.3 * u};
    case MotionKind::kWalk:
      return {10 + 8 * s, 10, 10 - 8 * s, 10, 5 + 6 * s, 0, 5 - 6 * s, 0};
    case MotionKind::kClap: {
      const double f = -(80 + 30 * u);
      return {70, f, 70, f, 5, 0, 5, 0};
    }
  }
  return {};
}

// Body units: hip midpoint at the origin, torso length 1, y up.
Skeleton body_pose(MotionKind kind, double theta) {
  using namespace coco;
  const LimbAngles a = motion_angles(kind, theta);
  Skeleton s{};
  s[kNose] = {0.0, 1.35};
  s[kLeftEye] = {0.07, 1.42};
  s[kRightEye] = {-0.07, 1.42};
  s[kLeftEar] = {0.15, 1.38};
  s[kRightEar] = {-0.15, 1.38};
  s[kLeftShoulder] = {0.35, 1.0};
  s[kRightShoulder] = {-0.35, 1.0};
  s[kLeftHip] = {0.2, 0.0};
  s[kRightHip] = {-0.2, 0.0};
  place_arm(s, +1, kLeftShoulder, kLeftElbow, kLeftWrist, a.l_upper, a.l_fore);
  place_arm(s, -1, kRightShoulder, kRightElbow, kRightWrist, a.r_upper, a.r_fore);
  place_leg(s, +1, kLeftHip, kLeftKnee, kLeftAnkle, a.l_thigh, a.l_shin);
  place_leg(s, -1, kRightHip, kRightKnee, kRightAnkle, a.r_thigh, a.r_shin);
  for (auto& p : s) p.y += a.lift;
  return s;
}

void check_config(const SyntheticConfig& c) {
  if (c.classes.empty()) fail(ErrorCode::kBadConfig, "at least one motion kind is required");
  std::set<MotionKind> unique(c.classes.begin(), c.classes.end());
  if (unique.size() != c.classes.size()) fail(ErrorCode::kBadConfig, "duplicate motion kind");
  if (c.per_class < 1) fail(ErrorCode::kBadConfig, "per_class must be >= 1");
  if (c.frames < 2) fail(ErrorCode::kBadConfig, "L must be >= 2");
  if (c.feature_dim < c.classes.size()) fail(ErrorCode::kBadConfig, "d must be >= number of classes");
  if (!(c.noise_sigma >= 0.0) || !std::isfinite(c.noise_sigma)) {
    fail(ErrorCode::kBadConfig, "noise_sigma must be finite and >= 0");
  }
  if (!(c.test_fraction >= 0.0 && c.test_fraction < 1.0)) {
    fail(ErrorCode::kBadConfig, "test_fraction must lie in [0,1)");
  }
  if (c.motif_window < 1 || c.motif_phases < 1) {
    fail(ErrorCode::kBadConfig, "motif_window and motif_phases must be >= 1");
  }
}

struct Generated {
  DatasetBundle bundle;
  SyntheticTruth truth;
};

Generated generate(const SyntheticConfig& c) {
  check_config(c);
  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto uniform = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };

  const std::size_t motifs = c.classes.size() * c.motif_phases;
  std::vector<double> mixing(c.feature_dim * motifs);  // d x m_true, row-major
  for (auto& v : mixing) v = normal(rng);

  Generated g;
  auto& m = g.bundle.manifest;
  m.feature_dim = c.feature_dim;
  m.joint_count = kCocoJoints;
  for (auto k : c.classes) m.class_names.emplace_back(to_string(k));
  g.truth.motif_count = motifs;

  const auto n_test = static_cast<std::size_t>(std::lround(c.test_fraction * c.per_class));
  const std::size_t window = std::min(c.motif_window, c.frames);
  const std::size_t n_windows = c.frames - window + 1;
  const double two_pi = 2.0 * std::numbers::pi;

  for (std::size_t cls = 0; cls < c.classes.size(); ++cls) {
    const MotionKind kind = c.classes[cls];
    for (std::size_t i = 0; i < c.per_class; ++i) {
      char id[64];
      std::snprintf(id, sizeof(id), "%s_%03zu", to_string(kind), i);
      VideoEntry e;
      e.id = id;
      e.label = static_cast<int>(cls);
      e.frame_count = c.frames;
      e.pose_path = std::string("poses/") + id + ".f32";
      e.feature_path = std::string("features/") + id + ".f32";
      e.split = i + n_test >= c.per_class ? Split::kTest : Split::kTrain;

      const double scale = uniform(60.0, 120.0);
      const double cx = uniform(200.0, 440.0);
      const double cy = uniform(160.0, 320.0);
      const double freq = uniform(1.0 / 12.0, 1.0 / 8.0);
      const double phase0 = uniform(0.0, two_pi);
      const double jitter = c.noise_sigma * 0.1 * scale;

      PoseSequence pose(c.frames, kCocoJoints);
      std::vector<double> phase(c.frames);
      for (std::size_t t = 0; t < c.frames; ++t) {
        phase[t] = std::fmod(two_pi * freq * static_cast<double>(t) + phase0, two_pi);
        const Skeleton body = body_pose(kind, phase[t]);
        for (std::size_t j = 0; j < kCocoJoints; ++j) {
          double px = cx + scale * body[j].x;
          double py = cy - scale * body[j].y;
          if (jitter > 0.0) {
            px += jitter * normal(rng);
            py += jitter * normal(rng);
          }
          pose.x(t, j) = static_cast<float>(px);
          pose.y(t, j) = static_cast<float>(py);
        }
      }

      std::vector<double> hist(motifs, 0.0);
      for (std::size_t t = 0; t < n_windows; ++t) {
        auto bin = static_cast<std::size_t>(phase[t] / two_pi * static_cast<double>(c.motif_phases));
        bin = std::min(bin, c.motif_phases - 1);
        hist[cls * c.motif_phases + bin] += 1.0 / static_cast<double>(n_windows);
      }

      FeatureVector z(c.feature_dim);
      for (std::size_t r = 0; r < c.feature_dim; ++r) {
        double acc = 0.0;
        for (std::size_t q = 0; q < motifs; ++q) acc += mixing[r * motifs + q] * hist[q];
        if (c.noise_sigma > 0.0) acc += c.noise_sigma * normal(rng);
        z[r] = static_cast<float>(acc);
      }

      m.videos.push_back(std::move(e));
      g.bundle.poses.push_back(std::move(pose));
      g.bundle.features.push_back(std::move(z));
      g.truth.histograms.push_back(std::move(hist));
    }
  }
  return g;
}

}  // namespace

DatasetBundle generate_synthetic(const SyntheticConfig& config) {
  return generate(config).bundle;
}

SyntheticTruth synthetic_truth(const SyntheticConfig& config) { return generate(config).truth; }

}  // namespace pcbear
