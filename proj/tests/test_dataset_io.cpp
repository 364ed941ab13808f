#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <json.hpp>

#include "pcbear/dataset_io.hpp"
#include "pcbear/pose_windows.hpp"
#include "pcbear/tensor_io.hpp"
#include "support.hpp"

using namespace pcbear;
using testing::code_of;
using testing::TempDir;

namespace {

SyntheticConfig small_config() {
  SyntheticConfig c;
  c.per_class = 3;
  c.frames = 12;
  c.feature_dim = 16;
  c.seed = 7;
  return c;
}

nlohmann::json read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  nlohmann::json j;
  in >> j;
  return j;
}

void write_manifest(const std::filesystem::path& dir, const nlohmann::json& j) {
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  out << j.dump();
}

}  // namespace

TEST_CASE("f32 round trip is exact") {
  TempDir dir("f32");
  std::vector<float> v{0.0f, -1.5f, 3.25e-7f, 1e30f, -0.0f};
  write_f32(dir / "a.f32", v);
  const auto back = read_f32(dir / "a.f32");
  REQUIRE(back.size() == v.size());
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::signbit(back[i]) == std::signbit(v[i]));
  CHECK(back == v);
  CHECK(std::filesystem::file_size(dir / "a.f32") == 4 * v.size());
}

TEST_CASE("f32 file is little-endian") {
  TempDir dir("le");
  const std::vector<float> one{1.0f};
  write_f32(dir / "one.f32", one);
  std::ifstream in(dir / "one.f32", std::ios::binary);
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  // 1.0f = 0x3f800000
  CHECK(b[0] == 0x00);
  CHECK(b[1] == 0x00);
  CHECK(b[2] == 0x80);
  CHECK(b[3] == 0x3f);
}

TEST_CASE("f32 reader errors") {
  TempDir dir("f32err");
  CHECK(code_of([&] { read_f32(dir / "absent.f32"); }) == ErrorCode::kMissingFile);
  {
    std::ofstream out(dir / "odd.f32", std::ios::binary);
    out << "abcde";
  }
  CHECK(code_of([&] { read_f32(dir / "odd.f32"); }) == ErrorCode::kShapeMismatch);
  const std::vector<float> three{1, 2, 3};
  write_f32(dir / "three.f32", three);
  CHECK(code_of([&] { read_f32_checked(dir / "three.f32", 4, "x"); }) == ErrorCode::kShapeMismatch);
  const std::vector<float> bad{1, std::numeric_limits<float>::quiet_NaN()};
  write_f32(dir / "nan.f32", bad);
  CHECK(code_of([&] { read_f32_checked(dir / "nan.f32", 2, "x"); }) == ErrorCode::kCorruptTensor);
  const std::vector<float> inf{std::numeric_limits<float>::infinity()};
  write_f32(dir / "inf.f32", inf);
  CHECK(code_of([&] { read_f32_checked(dir / "inf.f32", 1, "x"); }) == ErrorCode::kCorruptTensor);
}

TEST_CASE("write into a path under a regular file is IoFailure") {
  TempDir dir("io");
  { std::ofstream(dir / "file") << "x"; }
  const std::vector<float> v{1.0f};
  CHECK(code_of([&] { write_f32(dir / "file" / "a.f32", v); }) == ErrorCode::kIoFailure);
  const auto bundle = generate_synthetic(small_config());
  CHECK(code_of([&] { write_bundle(bundle, dir / "file" / "bundle"); }) == ErrorCode::kIoFailure);
}

TEST_CASE("bundle round trip") {
  TempDir dir("bundle");
  const auto bundle = generate_synthetic(small_config());
  write_bundle(bundle, dir.path());
  const auto back = load_bundle(dir.path()).load_all();
  REQUIRE(back.manifest.videos.size() == bundle.manifest.videos.size());
  CHECK(back.manifest.class_names == bundle.manifest.class_names);
  CHECK(back.manifest.feature_dim == 16);
  for (std::size_t i = 0; i < bundle.poses.size(); ++i) {
    CHECK(back.manifest.videos[i].id == bundle.manifest.videos[i].id);
    CHECK(back.manifest.videos[i].split == bundle.manifest.videos[i].split);
    CHECK(back.poses[i].xy == bundle.poses[i].xy);
    CHECK(back.poses[i].confidence == bundle.poses[i].confidence);
    CHECK(back.features[i] == bundle.features[i]);
  }
}

TEST_CASE("absent confidence file defaults to 1") {
  TempDir dir("conf");
  const auto bundle = generate_synthetic(small_config());
  write_bundle(bundle, dir.path());
  std::filesystem::remove_all(dir / "conf");
  const auto back = load_bundle(dir.path()).load_all();
  for (float c : back.poses[0].confidence) CHECK(c == 1.0f);
}

TEST_CASE("manifest validation") {
  TempDir dir("manifest");
  const auto bundle = generate_synthetic(small_config());
  write_bundle(bundle, dir.path());
  const auto good = read_manifest(dir.path());

  SUBCASE("missing manifest") {
    TempDir empty("empty");
    CHECK(code_of([&] { load_bundle(empty.path()); }) == ErrorCode::kMissingFile);
  }
  SUBCASE("label outside class list") {
    auto j = good;
    j["videos"][0]["label"] = 9;
    write_manifest(dir.path(), j);
    CHECK(code_of([&] { load_bundle(dir.path()); }) == ErrorCode::kUnknownLabel);
  }
  SUBCASE("duplicate id") {
    auto j = good;
    j["videos"][1]["id"] = j["videos"][0]["id"];
    write_manifest(dir.path(), j);
    CHECK(code_of([&] { load_bundle(dir.path()); }) == ErrorCode::kBadManifest);
  }
  SUBCASE("video missing from splits") {
    auto j = good;
    j["splits"]["train"].erase(0);
    write_manifest(dir.path(), j);
    CHECK(code_of([&] { load_bundle(dir.path()); }) == ErrorCode::kBadManifest);
  }
  SUBCASE("video in both splits") {
    auto j = good;
    j["splits"]["test"].push_back(j["splits"]["train"][0]);
    write_manifest(dir.path(), j);
    CHECK(code_of([&] { load_bundle(dir.path()); }) == ErrorCode::kBadManifest);
  }
  SUBCASE("path escaping the bundle") {
    auto j = good;
    j["videos"][0]["pose_path"] = "../elsewhere.f32";
    write_manifest(dir.path(), j);
    CHECK(code_of([&] { load_bundle(dir.path()); }) == ErrorCode::kBadManifest);
  }
  SUBCASE("malformed json") {
    std::ofstream(dir / "manifest.json", std::ios::trunc) << "{not json";
    CHECK(code_of([&] { load_bundle(dir.path()); }) == ErrorCode::kBadManifest);
  }
  SUBCASE("declared frame count differs from stored pose") {
    auto j = good;
    j["videos"][0]["frame_count"] = 13;
    write_manifest(dir.path(), j);
    CHECK(code_of([&] { load_bundle(dir.path()); }) == ErrorCode::kShapeMismatch);
  }
  SUBCASE("declared d differs from stored features") {
    auto j = good;
    j["feature_dim"] = 17;
    write_manifest(dir.path(), j);
    CHECK(code_of([&] { load_bundle(dir.path()); }) == ErrorCode::kShapeMismatch);
  }
}

TEST_CASE("missing feature file is a shape mismatch") {
  TempDir dir("nofeat");
  const auto bundle = generate_synthetic(small_config());
  write_bundle(bundle, dir.path());
  std::filesystem::remove(dir / bundle.manifest.videos[2].feature_path);
  CHECK(code_of([&] { load_bundle(dir.path()); }) == ErrorCode::kShapeMismatch);
}

TEST_CASE("missing pose file is MissingFile") {
  TempDir dir("nopose");
  const auto bundle = generate_synthetic(small_config());
  write_bundle(bundle, dir.path());
  std::filesystem::remove(dir / bundle.manifest.videos[0].pose_path);
  CHECK(code_of([&] { load_bundle(dir.path()); }) == ErrorCode::kMissingFile);
}

TEST_CASE("NaN keypoint is CorruptTensor") {
  TempDir dir("nanpose");
  auto bundle = generate_synthetic(small_config());
  bundle.poses[1].xy[5] = std::numeric_limits<float>::quiet_NaN();
  write_bundle(bundle, dir.path());
  CHECK(code_of([&] { load_bundle(dir.path()); }) == ErrorCode::kCorruptTensor);
}

TEST_CASE("synthetic generator shape and determinism") {
  const auto c = small_config();
  const auto a = generate_synthetic(c);
  const auto b = generate_synthetic(c);
  REQUIRE(a.manifest.videos.size() == 15);
  for (std::size_t i = 0; i < a.poses.size(); ++i) {
    CHECK(a.poses[i].xy == b.poses[i].xy);
    CHECK(a.features[i] == b.features[i]);
    CHECK(a.poses[i].frames == 12);
    CHECK(a.poses[i].joints == kCocoJoints);
  }
  auto c2 = c;
  c2.seed = 8;
  CHECK(generate_synthetic(c2).features[0] != a.features[0]);
  // round(0.2 * 3) = 1 test video per class.
  CHECK(a.manifest.indices(Split::kTest).size() == 5);
  CHECK(a.manifest.indices(Split::kTrain).size() == 10);
}

TEST_CASE("synthetic features equal A h when noise is zero") {
  auto c = small_config();
  c.noise_sigma = 0.0;
  const auto bundle = generate_synthetic(c);
  const auto truth = synthetic_truth(c);
  REQUIRE(truth.motif_count == 5 * c.motif_phases);
  // Histograms sum to 1 and sit in their class's motif block.
  for (std::size_t v = 0; v < truth.histograms.size(); ++v) {
    const auto& h = truth.histograms[v];
    double total = 0.0;
    const int label = bundle.manifest.videos[v].label;
    for (std::size_t q = 0; q < h.size(); ++q) {
      total += h[q];
      if (q / c.motif_phases != static_cast<std::size_t>(label)) CHECK(h[q] == 0.0);
    }
    CHECK(total == doctest::Approx(1.0));
  }
  // Nearest class centroid on noiseless features classifies every video.
  const std::size_t k = bundle.manifest.num_classes();
  std::vector<std::vector<double>> centroid(k, std::vector<double>(c.feature_dim, 0.0));
  std::vector<int> count(k, 0);
  for (std::size_t v = 0; v < bundle.features.size(); ++v) {
    const int y = bundle.manifest.videos[v].label;
    ++count[y];
    for (std::size_t r = 0; r < c.feature_dim; ++r) centroid[y][r] += bundle.features[v][r];
  }
  for (std::size_t j = 0; j < k; ++j)
    for (auto& x : centroid[j]) x /= count[j];
  for (std::size_t v = 0; v < bundle.features.size(); ++v) {
    int best = -1;
    double best_d = 1e300;
    for (std::size_t j = 0; j < k; ++j) {
      double d = 0.0;
      for (std::size_t r = 0; r < c.feature_dim; ++r) {
        const double e = bundle.features[v][r] - centroid[j][r];
        d += e * e;
      }
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(j);
      }
    }
    CHECK(best == bundle.manifest.videos[v].label);
  }
}

TEST_CASE("synthetic windows of one motion are closer than windows of different motions") {
  auto c = small_config();
  c.per_class = 4;
  c.frames = 16;
  c.noise_sigma = 0.0;
  const auto bundle = generate_synthetic(c);
  WindowOptions opt;
  opt.window = 8;
  const auto corpus = build_corpus(bundle, opt);
  std::map<std::string, int> label;
  for (const auto& v : bundle.manifest.videos) label[v.id] = v.label;
  double within = 0.0, between = 1e300;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    for (std::size_t j = i + 1; j < corpus.size(); ++j) {
      double d = 0.0;
      const auto a = corpus.row(i), b = corpus.row(j);
      for (std::size_t q = 0; q < a.size(); ++q) d += (a[q] - b[q]) * (a[q] - b[q]);
      d = std::sqrt(d);
      if (label[corpus.refs[i].video_id] == label[corpus.refs[j].video_id]) {
        within = std::max(within, d);
      } else {
        between = std::min(between, d);
      }
    }
  }
  CHECK(within < between);
}

TEST_CASE("synthetic config validation") {
  auto bad = [](auto edit) {
    auto c = small_config();
    edit(c);
    return code_of([&] { generate_synthetic(c); });
  };
  CHECK(bad([](SyntheticConfig& c) { c.classes.clear(); }) == ErrorCode::kBadConfig);
  CHECK(bad([](SyntheticConfig& c) { c.classes = {MotionKind::kWave, MotionKind::kWave}; }) ==
        ErrorCode::kBadConfig);
  CHECK(bad([](SyntheticConfig& c) { c.per_class = 0; }) == ErrorCode::kBadConfig);
  CHECK(bad([](SyntheticConfig& c) { c.frames = 1; }) == ErrorCode::kBadConfig);
  CHECK(bad([](SyntheticConfig& c) { c.feature_dim = 2; }) == ErrorCode::kBadConfig);
  CHECK(bad([](SyntheticConfig& c) { c.noise_sigma = -1; }) == ErrorCode::kBadConfig);
  CHECK(bad([](SyntheticConfig& c) { c.test_fraction = 1.0; }) == ErrorCode::kBadConfig);
  CHECK(code_of([] { SyntheticConfig::from_json({{"classes", {"dance"}}}); }) == ErrorCode::kBadConfig);
  CHECK(code_of([] { SyntheticConfig::from_json({{"per_class", "many"}}); }) == ErrorCode::kBadConfig);
}

TEST_CASE("synthetic config json round trip") {
  auto c = small_config();
  c.classes = {MotionKind::kJump, MotionKind::kClap};
  const auto back = SyntheticConfig::from_json(c.to_json());
  CHECK(back.classes == c.classes);
  CHECK(back.per_class == c.per_class);
  CHECK(back.frames == c.frames);
  CHECK(back.feature_dim == c.feature_dim);
  CHECK(back.seed == c.seed);
}
