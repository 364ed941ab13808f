#include "pcbear/session.hpp"

#include <fstream>

#include <httplib.h>

#include "pcbear/error.hpp"
#include "pcbear/pipeline.hpp"
#include "pcbear/pose_windows.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pcbear {

namespace {

json to_json(const VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i) + 0.0);  // no -0
  return out;
}

Split parse_split(const std::string& s) { return s.empty() ? Split::kTest : split_from_string(s); }

}  // namespace

std::shared_ptr<const Session> Session::open(const fs::path& model_dir, const fs::path& bundle_dir) {
  BottleneckModel model = load_model(model_dir);
  DatasetBundle bundle = load_bundle(bundle_dir).load_all();
  json report = nullptr;
  if (fs::exists(model_dir / "report.json")) report = read_json(model_dir / "report.json");
  return std::make_shared<const Session>(std::move(model), std::move(bundle), std::move(report));
}

Session::Session(BottleneckModel model, DatasetBundle bundle, json report)
    : model_(std::move(model)), bundle_(std::move(bundle)), report_(std::move(report)) {
  if (!model_.has_classifier()) fail(ErrorCode::kInvalidArgument, "model has no trained classifier");
  const auto& m = bundle_.manifest;
  if (model_.concept_layer.feature_dim() != m.feature_dim) {
    fail(ErrorCode::kShapeMismatch, "model d=" + std::to_string(model_.concept_layer.feature_dim()) +
                                        " but dataset d=" + std::to_string(m.feature_dim));
  }
  if (model_.classes() != m.num_classes() ||
      static_cast<std::size_t>(model_.classifier.weights.cols()) != m.num_classes()) {
    fail(ErrorCode::kShapeMismatch, "model and dataset disagree on the number of classes");
  }
  if (static_cast<std::size_t>(model_.classifier.weights.rows()) != model_.concepts()) {
    fail(ErrorCode::kShapeMismatch, "classifier and concept layer disagree on m");
  }
  if (model_.concept_info.contains("m") &&
      model_.concept_info.at("m").get<std::size_t>() != model_.concepts()) {
    fail(ErrorCode::kShapeMismatch, "annotation m differs from the concept layer");
  }
  for (std::size_t v = 0; v < m.videos.size(); ++v) {
    index_.emplace(m.videos[v].id, v);
    activations_.push_back(concept_activations(model_.concept_layer, bundle_.features[v]));
    predictions_.push_back(predict_from_activations(model_.classifier, activations_.back()));
  }
}

std::size_t Session::video_index(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) fail(ErrorCode::kUnknownVideo, "unknown video '" + id + "'");
  return it->second;
}

int Session::parse_class(const std::string& s) const {
  if (s.empty() || s == "auto") return kAutoClass;
  for (std::size_t j = 0; j < model_.class_names.size(); ++j) {
    if (model_.class_names[j] == s) return static_cast<int>(j);
  }
  std::size_t used = 0;
  int j = -1;
  try {
    j = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || j < 0 || static_cast<std::size_t>(j) >= model_.classes()) {
    fail(ErrorCode::kBadClass, "unknown class '" + s + "'");
  }
  return j;
}

json Session::videos() const {
  json out = json::array();
  for (std::size_t v = 0; v < bundle_.manifest.videos.size(); ++v) {
    const auto& e = bundle_.manifest.videos[v];
    out.push_back({{"id", e.id},
                   {"label", e.label},
                   {"split", to_string(e.split)},
                   {"predicted_class", predictions_[v].label}});
  }
  return out;
}

json Session::video(const std::string& id) const {
  const std::size_t v = video_index(id);
  const auto& e = bundle_.manifest.videos[v];
  return {{"id", e.id},
          {"label", e.label},
          {"label_name", model_.class_names.at(static_cast<std::size_t>(e.label))},
          {"split", to_string(e.split)},
          {"frames", e.frame_count},
          {"predicted_class", predictions_[v].label},
          {"predicted_name", model_.class_names.at(static_cast<std::size_t>(predictions_[v].label))},
          {"logits", to_json(predictions_[v].logits)},
          {"activations", to_json(activations_[v])}};
}

json Session::medoid_ref(int concept_id) const {
  const auto& meds = model_.concept_info.value("medoids", json::array());
  if (concept_id < 0 || static_cast<std::size_t>(concept_id) >= model_.concepts()) {
    fail(ErrorCode::kBadConceptId, "concept id " + std::to_string(concept_id) + " outside [0, " +
                                       std::to_string(model_.concepts()) + ")");
  }
  if (static_cast<std::size_t>(concept_id) >= meds.size()) return nullptr;
  const auto& m = meds.at(static_cast<std::size_t>(concept_id));
  return {{"video_id", m.at("video_id")}, {"start_frame", m.at("start_frame")}, {"T", m.at("T")}};
}

json Session::contributions(const std::string& id, int target_class, std::size_t top_k) const {
  const std::size_t v = video_index(id);
  const Explanation e = explain(model_.classifier, activations_[v], target_class, top_k, id);
  json top = json::array();
  for (int c : e.top) {
    top.push_back({{"concept_id", c},
                   {"contribution", e.contributions(c)},
                   {"activation", activations_[v](c)},
                   {"weight", model_.classifier.weights(c, e.target_class)},
                   {"medoid", medoid_ref(c)}});
  }
  return {{"video_id", id},
          {"class", e.target_class},
          {"class_name", model_.class_names.at(static_cast<std::size_t>(e.target_class))},
          {"logit", e.logit},
          {"bias", e.bias_share},
          {"contributions", to_json(e.contributions)},
          {"top", top}};
}

json Session::intervene(const std::string& id, const std::vector<int>& suppress) const {
  const std::size_t v = video_index(id);
  const InterventionResult r = pcbear::intervene(model_.classifier, activations_[v], {suppress});
  return {{"video_id", id},
          {"suppress", suppress},
          {"baseline_logits", to_json(r.baseline_logits)},
          {"baseline_class", r.baseline_class},
          {"logits", to_json(r.logits)},
          {"predicted_class", r.label},
          {"delta", to_json(r.delta)}};
}

json Session::concepts() const {
  json list = json::array();
  for (std::size_t c = 0; c < model_.concepts(); ++c) {
    json entry = {{"concept_id", c}};
    entry["medoid"] = medoid_ref(static_cast<int>(c));
    list.push_back(entry);
  }
  const auto& info = model_.concept_info;
  return {{"m", model_.concepts()},
          {"T", info.value("T", json(nullptr))},
          {"normalized", info.value("normalized", json(nullptr))},
          {"partition", info.value("partition", json(nullptr))},
          {"nmi", info.value("nmi", json(nullptr))},
          {"concepts", list}};
}

json Session::concept_window(int concept_id) const {
  const json ref = medoid_ref(concept_id);
  if (ref.is_null()) fail(ErrorCode::kBadConceptId, "no medoid stored for concept " + std::to_string(concept_id));
  const std::size_t v = video_index(ref.at("video_id").get<std::string>());
  const std::size_t start = ref.at("start_frame").get<std::size_t>();
  const std::size_t window = ref.at("T").get<std::size_t>();
  const auto& info = model_.concept_info;
  const bool normalized = info.value("normalized", true);

  PoseSequence pose = bundle_.poses[v];
  if (normalized) {
    NormalizationParams params;
    params.scale_mode = scale_mode_from_string(info.value("scale_mode", std::string("torso")));
    pose = normalize(pose, params);
  }
  const auto windows = subsample(pose, window, 1, ref.at("video_id").get<std::string>());
  if (start >= windows.size()) fail(ErrorCode::kShapeMismatch, "medoid window lies outside its video");
  const auto& w = windows[start];
  json frames = json::array();
  for (std::size_t t = 0; t < w.frames; ++t) {
    json joints = json::array();
    for (std::size_t j = 0; j < w.joints; ++j) {
      joints.push_back({w.data[(t * w.joints + j) * 2], w.data[(t * w.joints + j) * 2 + 1]});
    }
    frames.push_back(std::move(joints));
  }
  json out = ref;
  out["concept_id"] = concept_id;
  out["J"] = w.joints;
  out["normalized"] = normalized;
  out["window"] = std::move(frames);
  return out;
}

json Session::evaluation(Split split) const {
  const Evaluation e = evaluate(model_, bundle_, split);
  return {{"split", to_string(split)}, {"top1", e.top1}, {"cue", e.cue},
          {"m", e.concepts},           {"samples", e.samples}};
}

json Session::report() const {
  if (!report_.is_null()) return report_;
  const Split split = bundle_.manifest.indices(Split::kTest).empty() ? Split::kTrain : Split::kTest;
  json out = evaluation(split);
  out["nmi"] = model_.concept_info.value("nmi", json(nullptr));
  return out;
}

json Session::class_report(int target_class, Split split) const {
  const GroupContribution g = class_level(model_, bundle_, split, target_class);
  return {{"level", "class"}, {"class", target_class},
          {"class_name", model_.class_names.at(static_cast<std::size_t>(target_class))},
          {"split", to_string(split)}, {"samples", g.samples},
          {"normalized", to_json(g.normalized)}, {"ranking", g.ranking}};
}

json Session::task_report(Split split) const {
  const GroupContribution g = task_level(model_, bundle_, split);
  return {{"level", "task"}, {"split", to_string(split)}, {"samples", g.samples},
          {"normalized", to_json(g.normalized)}, {"ranking", g.ranking}};
}

json Session::weights(const std::vector<int>& classes, std::size_t top_n) const {
  const WeightReport r = weight_report(model_.classifier, classes, top_n);
  json per_class = json::array();
  for (std::size_t i = 0; i < r.classes.size(); ++i) {
    json top = json::array();
    for (const auto& w : r.top[i]) top.push_back({{"concept_id", w.concept_id}, {"weight", w.weight}});
    per_class.push_back({{"class", r.classes[i]}, {"top", top}});
  }
  json shared = json::array();
  for (const auto& w : r.shared) shared.push_back({{"concept_id", w.concept_id}, {"weight", w.weight}});
  return {{"classes", per_class}, {"shared", shared}};
}

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kUnknownVideo:
    case ErrorCode::kBadConceptId:
      return 404;
    case ErrorCode::kBadClass:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kBadConfig:
    case ErrorCode::kEmptyClass:
    case ErrorCode::kEmptySplit:
      return 400;
    default:
      return 500;
  }
}

namespace {

void send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      send(res, 200, fn(req));
    } catch (const Error& e) {
      send(res, http_status(e.code()), {{"error", std::string(to_string(e.code()))}, {"message", e.what()}});
    } catch (const json::exception& e) {
      send(res, 400, {{"error", "InvalidArgument"}, {"message", e.what()}});
    } catch (const std::exception& e) {
      send(res, 500, {{"error", "Internal"}, {"message", e.what()}});
    }
  };
}

int concept_param(const std::string& s) {
  std::size_t used = 0;
  int id = -1;
  try {
    id = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size()) fail(ErrorCode::kBadConceptId, "bad concept id '" + s + "'");
  return id;
}

std::size_t size_param(const httplib::Request& req, const char* name, std::size_t fallback) {
  if (!req.has_param(name)) return fallback;
  try {
    return static_cast<std::size_t>(std::stoul(req.get_param_value(name)));
  } catch (const std::exception&) {
    fail(ErrorCode::kInvalidArgument, std::string("bad ") + name + " parameter");
  }
}

}  // namespace

void mount(httplib::Server& server, std::shared_ptr<const Session> session) {
  using Req = httplib::Request;
  auto s = std::move(session);

  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.Options(R"(/api/.*)", [](const Req&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  server.Get("/api/videos", guarded([s](const Req&) { return s->videos(); }));
  server.Get(R"(/api/videos/([^/]+))", guarded([s](const Req& req) { return s->video(req.matches[1]); }));
  server.Get(R"(/api/videos/([^/]+)/contributions)", guarded([s](const Req& req) {
               const int cls = s->parse_class(req.has_param("class") ? req.get_param_value("class") : "auto");
               return s->contributions(req.matches[1], cls, size_param(req, "top", 3));
             }));
  server.Post(R"(/api/videos/([^/]+)/intervene)", guarded([s](const Req& req) {
                const json body = req.body.empty() ? json::object() : json::parse(req.body);
                std::vector<int> suppress;
                if (body.contains("suppress")) suppress = body.at("suppress").get<std::vector<int>>();
                return s->intervene(req.matches[1], suppress);
              }));
  server.Get("/api/concepts", guarded([s](const Req&) { return s->concepts(); }));
  server.Get(R"(/api/concepts/([^/]+))", guarded([s](const Req& req) {
               return s->concept_window(concept_param(req.matches[1]));
             }));
  server.Get("/api/report", guarded([s](const Req&) { return s->report(); }));
  server.Get(R"(/api/report/class/([^/]+))", guarded([s](const Req& req) {
               const int cls = s->parse_class(req.matches[1]);
               if (cls == kAutoClass) fail(ErrorCode::kBadClass, "class report needs an explicit class");
               return s->class_report(cls, parse_split(req.get_param_value("split")));
             }));
  server.Get("/api/report/task", guarded([s](const Req& req) {
               return s->task_report(parse_split(req.get_param_value("split")));
             }));
}

void serve(std::shared_ptr<const Session> session, const std::string& host, int port) {
  httplib::Server server;
  // No SO_REUSEPORT: a port held by another server must fail to bind.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  mount(server, std::move(session));
  if (!server.bind_to_port(host, port)) {
    fail(ErrorCode::kIoFailure, "cannot bind " + host + ":" + std::to_string(port));
  }
  server.listen_after_bind();
}

}  // namespace pcbear
