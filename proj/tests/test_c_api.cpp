#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <thread>

#include <unistd.h>

#include "pcbear/pcbear.h"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Takes ownership of a library string.
json take(char* s) {
  REQUIRE(s != nullptr);
  json j = json::parse(s);
  pcbear_string_free(s);
  return j;
}

struct Workspace {
  fs::path root = fs::temp_directory_path() / ("pcbear_capi_" + std::to_string(::getpid()));
  Workspace() {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workspace() { fs::remove_all(root); }
  std::string operator/(const char* name) const { return (root / name).string(); }
};

const Workspace& workspace() {
  static const Workspace w;
  return w;
}

const char* kSmall = R"({"per_class": 6, "seed": 3})";
const char* kPipeline = R"({"cluster": {"partition": "min-m:10"}})";

// Generated data and a full run, built once.
const std::string& model_dir() {
  static const std::string dir = [] {
    const auto& w = workspace();
    REQUIRE(pcbear_generate((w / "data").c_str(), kSmall, nullptr) == PCBEAR_OK);
    REQUIRE(pcbear_run_pipeline((w / "data").c_str(), (w / "run").c_str(), kPipeline, nullptr) == PCBEAR_OK);
    return w / "run";
  }();
  return dir;
}

}  // namespace

TEST_CASE("status strings and version") {
  CHECK(std::strlen(pcbear_version()) > 0);
  CHECK(std::string(pcbear_status_string(PCBEAR_OK)) == "Ok");
  CHECK(std::string(pcbear_status_string(PCBEAR_SHAPE_MISMATCH)) == "ShapeMismatch");
  CHECK(std::string(pcbear_status_string(PCBEAR_UNKNOWN_VIDEO)) == "UnknownVideo");
  CHECK(std::string(pcbear_status_string(PCBEAR_INTERNAL)) == "Internal");
}

TEST_CASE("metric helpers") {
  double v = 0.0;
  REQUIRE(pcbear_cue(95.96, 30, &v) == PCBEAR_OK);
  CHECK(std::round(v * 100.0) / 100.0 == doctest::Approx(319.87));
  CHECK(pcbear_cue(50.0, 0, &v) == PCBEAR_INVALID_ARGUMENT);
  CHECK(std::strlen(pcbear_last_error()) > 0);
  CHECK(pcbear_cue(50.0, 3, nullptr) == PCBEAR_INVALID_ARGUMENT);

  const int a[] = {0, 0, 1, 1}, b[] = {5, 5, 2, 2}, c[] = {0, 1, 0, 1};
  REQUIRE(pcbear_nmi(a, b, 4, &v) == PCBEAR_OK);
  CHECK(v == doctest::Approx(1.0));
  REQUIRE(pcbear_nmi(a, c, 4, &v) == PCBEAR_OK);
  CHECK(v == doctest::Approx(0.0));
  CHECK(pcbear_nmi(nullptr, b, 4, &v) == PCBEAR_INVALID_ARGUMENT);
  // A successful call clears the previous error.
  REQUIRE(pcbear_nmi(a, b, 4, &v) == PCBEAR_OK);
  CHECK(std::string(pcbear_last_error()).empty());
}

TEST_CASE("null arguments") {
  char* out = nullptr;
  CHECK(pcbear_generate(nullptr, nullptr, &out) == PCBEAR_INVALID_ARGUMENT);
  CHECK(out == nullptr);
  CHECK(pcbear_run_pipeline(nullptr, "x", nullptr, nullptr) == PCBEAR_INVALID_ARGUMENT);
  pcbear_session* s = nullptr;
  CHECK(pcbear_session_open(nullptr, "x", &s) == PCBEAR_INVALID_ARGUMENT);
  CHECK(pcbear_session_videos(nullptr, &out) == PCBEAR_INVALID_ARGUMENT);
  pcbear_session_close(nullptr);
  pcbear_string_free(nullptr);
}

TEST_CASE("bad config json") {
  const auto& w = workspace();
  CHECK(pcbear_generate((w / "bad").c_str(), "{not json", nullptr) == PCBEAR_BAD_CONFIG);
  CHECK(pcbear_generate((w / "bad").c_str(), R"({"noise_sigma": -1})", nullptr) == PCBEAR_BAD_CONFIG);
}

TEST_CASE("stage errors report their stage") {
  const auto& w = workspace();
  model_dir();
  fs::create_directories(w.root / "broken");
  fs::copy(w.root / "data", w.root / "broken", fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  fs::remove(w.root / "broken" / "features" / "jump_000.f32");
  CHECK(pcbear_run_pipeline((w / "broken").c_str(), (w / "broken_out").c_str(), nullptr, nullptr) ==
        PCBEAR_SHAPE_MISMATCH);
  CHECK(std::string(pcbear_last_error_stage()) == "ingest");
  // Errors are per thread.
  std::string other = "unset";
  std::thread([&] { other = pcbear_last_error(); }).join();
  CHECK(other.empty());
}

TEST_CASE("stagewise calls reproduce the full run") {
  const auto& w = workspace();
  const std::string run = model_dir();
  const std::string data = w / "data", win = w / "s_windows.f32", hier = w / "s_hier.json",
                    con = w / "s_concepts.json", model = w / "s_model";
  char* out = nullptr;
  REQUIRE(pcbear_windows(data.c_str(), win.c_str(), kPipeline, &out) == PCBEAR_OK);
  CHECK(take(out).at("T") == 8);
  REQUIRE(pcbear_cluster(win.c_str(), hier.c_str(), kPipeline, nullptr) == PCBEAR_OK);
  REQUIRE(pcbear_annotate(data.c_str(), win.c_str(), hier.c_str(), con.c_str(), kPipeline, nullptr) ==
          PCBEAR_OK);
  REQUIRE(pcbear_train_concepts(data.c_str(), con.c_str(), model.c_str(), kPipeline, nullptr) == PCBEAR_OK);
  REQUIRE(pcbear_train_classifier(data.c_str(), model.c_str(), nullptr, nullptr) == PCBEAR_OK);

  pcbear_session *a = nullptr, *b = nullptr;
  REQUIRE(pcbear_session_open(run.c_str(), data.c_str(), &a) == PCBEAR_OK);
  REQUIRE(pcbear_session_open(model.c_str(), data.c_str(), &b) == PCBEAR_OK);
  REQUIRE(pcbear_session_evaluate(a, "test", &out) == PCBEAR_OK);
  const json ea = take(out);
  REQUIRE(pcbear_session_evaluate(b, "test", &out) == PCBEAR_OK);
  CHECK(take(out) == ea);
  pcbear_session_close(a);
  pcbear_session_close(b);
}

TEST_CASE("session lifecycle") {
  const auto& w = workspace();
  pcbear_session* s = nullptr;
  REQUIRE(pcbear_session_open(model_dir().c_str(), (w / "data").c_str(), &s) == PCBEAR_OK);
  REQUIRE(s != nullptr);
  char* out = nullptr;

  REQUIRE(pcbear_session_videos(s, &out) == PCBEAR_OK);
  CHECK(take(out).size() == 30);
  REQUIRE(pcbear_session_video(s, "walk_002", &out) == PCBEAR_OK);
  CHECK(take(out).at("label_name") == "walk");
  CHECK(pcbear_session_video(s, "nobody", &out) == PCBEAR_UNKNOWN_VIDEO);

  REQUIRE(pcbear_session_explain(s, "walk_002", "auto", 3, &out) == PCBEAR_OK);
  const json e = take(out);
  double total = e.at("bias");
  for (double c : e.at("contributions")) total += c;
  CHECK(std::abs(total - e.at("logit").get<double>()) < 1e-5);
  CHECK(pcbear_session_explain(s, "walk_002", "dance", 3, &out) == PCBEAR_BAD_CLASS);

  const int suppress[] = {1, 0};
  REQUIRE(pcbear_session_intervene(s, "walk_002", suppress, 2, &out) == PCBEAR_OK);
  const json r = take(out);
  for (std::size_t j = 0; j < r.at("delta").size(); ++j) {
    CHECK(std::abs(r["logits"][j].get<double>() - r["baseline_logits"][j].get<double>() -
                   r["delta"][j].get<double>()) < 1e-12);
  }
  REQUIRE(pcbear_session_intervene(s, "walk_002", nullptr, 0, &out) == PCBEAR_OK);
  const json none = take(out);
  CHECK(none.at("logits") == none.at("baseline_logits"));
  const int bad[] = {100000};
  CHECK(pcbear_session_intervene(s, "walk_002", bad, 1, &out) == PCBEAR_BAD_CONCEPT_ID);
  CHECK(pcbear_session_intervene(s, "walk_002", nullptr, 2, &out) == PCBEAR_INVALID_ARGUMENT);

  REQUIRE(pcbear_session_concepts(s, &out) == PCBEAR_OK);
  const json cs = take(out);
  REQUIRE(pcbear_session_concept(s, 0, &out) == PCBEAR_OK);
  CHECK(take(out).at("window").size() == cs.at("T"));
  CHECK(pcbear_session_concept(s, -1, &out) == PCBEAR_BAD_CONCEPT_ID);

  REQUIRE(pcbear_session_report(s, "summary", nullptr, nullptr, &out) == PCBEAR_OK);
  CHECK(take(out).contains("top1"));
  REQUIRE(pcbear_session_report(s, "task", nullptr, "test", &out) == PCBEAR_OK);
  CHECK(take(out).at("level") == "task");
  REQUIRE(pcbear_session_report(s, "class", "jump", "train", &out) == PCBEAR_OK);
  CHECK(take(out).at("level") == "class");
  CHECK(pcbear_session_report(s, "class", nullptr, "train", &out) == PCBEAR_BAD_CLASS);
  CHECK(pcbear_session_report(s, "galaxy", nullptr, nullptr, &out) == PCBEAR_INVALID_ARGUMENT);

  const int classes[] = {0, 4};
  REQUIRE(pcbear_session_weights(s, classes, 2, 3, &out) == PCBEAR_OK);
  CHECK(take(out).is_object());
  const int bad_class[] = {7};
  CHECK(pcbear_session_weights(s, bad_class, 1, 3, &out) == PCBEAR_BAD_CLASS);

  pcbear_session_close(s);
}

TEST_CASE("opening inconsistent bundles fails") {
  const auto& w = workspace();
  pcbear_session* s = reinterpret_cast<pcbear_session*>(0x1);
  CHECK(pcbear_session_open((w / "missing").c_str(), (w / "data").c_str(), &s) == PCBEAR_MISSING_FILE);
  CHECK(s == nullptr);
  REQUIRE(pcbear_generate((w / "other").c_str(), R"({"per_class": 2, "feature_dim": 32})", nullptr) ==
          PCBEAR_OK);
  CHECK(pcbear_session_open(model_dir().c_str(), (w / "other").c_str(), &s) == PCBEAR_SHAPE_MISMATCH);
}
