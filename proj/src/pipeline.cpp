#include "pcbear/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "pcbear/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pcbear {

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  try {
    if (j.contains("windows")) {
      const auto& w = j.at("windows");
      c.windows.window = w.value("T", c.windows.window);
      c.windows.stride = w.value("stride", c.windows.stride);
      c.windows.normalize = w.value("normalize", c.windows.normalize);
      auto& n = c.windows.normalization;
      n.scale_mode = scale_mode_from_string(w.value("scale_mode", std::string("torso")));
      n.min_scale = w.value("min_scale", n.min_scale);
      n.clamp_scale = w.value("clamp_scale", n.clamp_scale);
    }
    if (j.contains("cluster")) {
      const auto& cl = j.at("cluster");
      if (cl.contains("metric")) c.metric = metric_from_string(cl.at("metric").get<std::string>());
      if (cl.contains("partition")) {
        c.partition = PartitionPolicy::parse(cl.at("partition").get<std::string>());
      }
    }
    if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
    if (j.contains("seed")) c.train.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& ex) {
    fail(ErrorCode::kBadConfig, std::string("pipeline config: ") + ex.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInvalidArgument) fail(ErrorCode::kBadConfig, e.what());
    throw;
  }
  if (c.windows.window < 1 || c.windows.stride < 1) fail(ErrorCode::kBadConfig, "T and stride must be >= 1");
  return c;
}

json PipelineConfig::to_json() const {
  return {{"seed", train.seed},
          {"windows",
           {{"T", windows.window},
            {"stride", windows.stride},
            {"normalize", windows.normalize},
            {"scale_mode", pcbear::to_string(windows.normalization.scale_mode)},
            {"min_scale", windows.normalization.min_scale},
            {"clamp_scale", windows.normalization.clamp_scale}}},
          {"cluster", {{"metric", pcbear::to_string(metric)}, {"partition", partition.to_string()}}},
          {"train", train.to_json()}};
}

json ConceptSet::to_json() const {
  json per_video = json::object();
  for (std::size_t v = 0; v < annotation.video_ids.size(); ++v) {
    per_video[annotation.video_ids[v]] = annotation.omega[v];
  }
  json meds = json::array();
  for (std::size_t c = 0; c < medoids.size(); ++c) {
    meds.push_back({{"concept_id", c},
                    {"video_id", medoids[c].video_id},
                    {"start_frame", medoids[c].start_frame},
                    {"T", window}});
  }
  return {{"m", annotation.concepts}, {"per_video", per_video}, {"medoids", meds},
          {"partition", partition_index}, {"policy", policy}, {"nmi", nmi},
          {"T", window}, {"stride", stride}, {"normalized", normalized},
          {"scale_mode", pcbear::to_string(scale_mode)},
          {"video_order", annotation.video_ids}};
}

ConceptSet ConceptSet::from_json(const json& j) {
  ConceptSet s;
  try {
    s.annotation.concepts = j.at("m").get<std::size_t>();
    s.partition_index = j.value("partition", std::size_t{0});
    s.policy = j.value("policy", std::string());
    s.nmi = j.value("nmi", 0.0);
    s.window = j.at("T").get<std::size_t>();
    s.stride = j.value("stride", std::size_t{1});
    s.normalized = j.value("normalized", true);
    s.scale_mode = scale_mode_from_string(j.value("scale_mode", std::string("torso")));
    const auto& per_video = j.at("per_video");
    std::vector<std::string> order;
    if (j.contains("video_order")) {
      order = j.at("video_order").get<std::vector<std::string>>();
    } else {
      for (const auto& [id, ids] : per_video.items()) order.push_back(id);
    }
    for (const auto& id : order) {
      s.annotation.video_ids.push_back(id);
      s.annotation.omega.push_back(per_video.at(id).get<std::vector<int>>());
    }
    for (const auto& m : j.at("medoids")) {
      s.medoids.push_back({m.at("video_id").get<std::string>(), m.at("start_frame").get<std::size_t>()});
    }
  } catch (const json::exception& ex) {
    fail(ErrorCode::kBadManifest, std::string("concepts.json: ") + ex.what());
  }
  for (const auto& ids : s.annotation.omega) {
    for (int id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= s.annotation.concepts) {
        fail(ErrorCode::kBadConceptId, "concepts.json lists concept " + std::to_string(id));
      }
    }
  }
  if (s.medoids.size() != s.annotation.concepts) {
    fail(ErrorCode::kBadManifest, "concepts.json: one medoid per concept expected");
  }
  return s;
}

MatrixXd ConceptSet::concept_matrix(const DatasetManifest& manifest,
                                    std::span<const std::size_t> videos) const {
  std::map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < annotation.video_ids.size(); ++i) slot.emplace(annotation.video_ids[i], i);
  MatrixXd c = MatrixXd::Zero(static_cast<Eigen::Index>(videos.size()),
                              static_cast<Eigen::Index>(annotation.concepts));
  for (std::size_t r = 0; r < videos.size(); ++r) {
    const auto& id = manifest.videos.at(videos[r]).id;
    auto it = slot.find(id);
    if (it == slot.end()) fail(ErrorCode::kUnknownVideo, "no concept annotation for video " + id);
    for (int k : annotation.omega[it->second]) c(static_cast<Eigen::Index>(r), k) = 1.0;
  }
  return c;
}

std::vector<int> window_labels(const WindowCorpus& corpus, const DatasetManifest& manifest) {
  std::map<std::string, int> label_of;
  for (const auto& v : manifest.videos) label_of.emplace(v.id, v.label);
  std::vector<int> labels;
  labels.reserve(corpus.size());
  for (const auto& r : corpus.refs) {
    auto it = label_of.find(r.video_id);
    if (it == label_of.end()) fail(ErrorCode::kUnknownVideo, "window of unknown video " + r.video_id);
    labels.push_back(it->second);
  }
  return labels;
}

std::vector<PartitionScore> score_partitions(const PartitionHierarchy& hierarchy,
                                             const WindowCorpus& corpus,
                                             const DatasetManifest& manifest) {
  const auto labels = window_labels(corpus, manifest);
  std::vector<PartitionScore> out;
  for (std::size_t i = 0; i < hierarchy.partitions.size(); ++i) {
    const auto& p = hierarchy.partitions[i];
    out.push_back({i, p.clusters, nmi(p.assignment, labels)});
  }
  return out;
}

ConceptSet annotate(const PartitionHierarchy& hierarchy, const WindowCorpus& corpus,
                    const DatasetManifest& manifest, const PartitionPolicy& policy) {
  ConceptSet s;
  s.policy = policy.to_string();
  if (hierarchy.partitions.empty() || hierarchy.partitions.front().assignment.size() != corpus.size()) {
    fail(ErrorCode::kLengthMismatch, "hierarchy and window corpus disagree on row count");
  }
  const Partition partition = resolve_partition(hierarchy, view_of(corpus), policy, &s.partition_index);
  s.nmi = nmi(partition.assignment, window_labels(corpus, manifest));
  s.window = corpus.window;
  s.stride = corpus.stride;
  s.normalized = corpus.normalized;
  s.scale_mode = corpus.scale_mode;
  std::vector<std::string> ids;
  for (const auto& v : manifest.videos) ids.push_back(v.id);
  s.annotation = assign_concepts(partition, corpus.refs, ids);
  for (std::size_t row : medoids(partition, view_of(corpus))) s.medoids.push_back(corpus.refs[row]);
  return s;
}

BottleneckModel train_concepts_stage(const DatasetBundle& bundle, const ConceptSet& concepts,
                                     const TrainConfig& config, ConceptStageInfo* info) {
  const auto train = bundle.manifest.indices(Split::kTrain);
  const MatrixXd z = feature_matrix(bundle, train);
  const MatrixXd c = concepts.concept_matrix(bundle.manifest, train);
  auto result = train_concept_layer(z, c, config);

  BottleneckModel model;
  model.concept_layer = std::move(result.layer);
  model.class_names = bundle.manifest.class_names;
  model.config = config;
  model.concept_info = concepts.to_json();
  model.concept_info.erase("per_video");
  model.concept_info.erase("video_order");
  round_to_float(model);
  if (info) {
    info->initial_loss = result.initial_loss;
    info->final_loss = result.final_loss;
    info->warnings = std::move(result.warnings);
  }
  return model;
}

std::vector<LambdaSweepPoint> train_classifier_stage(BottleneckModel& model,
                                                     const DatasetBundle& bundle) {
  if (model.concept_layer.feature_dim() != bundle.manifest.feature_dim) {
    fail(ErrorCode::kShapeMismatch, "model feature_dim differs from bundle feature_dim");
  }
  const auto train = bundle.manifest.indices(Split::kTrain);
  MatrixXd a(static_cast<Eigen::Index>(train.size()), static_cast<Eigen::Index>(model.concepts()));
  std::vector<int> y;
  for (std::size_t r = 0; r < train.size(); ++r) {
    a.row(static_cast<Eigen::Index>(r)) =
        concept_activations(model.concept_layer, bundle.features[train[r]]).transpose();
    y.push_back(bundle.manifest.videos[train[r]].label);
  }
  auto fit = fit_classifier(a, y, bundle.manifest.num_classes(), model.config);
  model.classifier = std::move(fit.classifier);
  model.class_names = bundle.manifest.class_names;
  round_to_float(model);
  return fit.sweep;
}

double mean_concept_cosine(const BottleneckModel& model, const DatasetBundle& bundle,
                           const ConceptSet& concepts, Split split) {
  const auto idx = bundle.manifest.indices(split);
  if (idx.empty()) fail(ErrorCode::kEmptySplit, std::string("split '") + to_string(split) + "' is empty");
  const MatrixXd c_std = standardize(concepts.concept_matrix(bundle.manifest, idx), model.concept_layer.label);
  double total = 0.0;
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const VectorXd a = concept_activations(model.concept_layer, bundle.features[idx[r]]);
    const VectorXd c = c_std.row(static_cast<Eigen::Index>(r)).transpose();
    const double denom = a.norm() * c.norm();
    total += denom > 0.0 ? a.dot(c) / denom : 0.0;
  }
  return total / static_cast<double>(idx.size());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kMissingFile, "missing file: " + path.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& ex) {
    fail(ErrorCode::kBadConfig, path.string() + ": " + ex.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::kIoFailure, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorCode::kIoFailure, "write failed for " + path.string());
}

namespace {

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw e.stage().empty() ? e.with_stage(name) : e;
  }
}

}  // namespace

json run_pipeline(const fs::path& bundle_dir, const PipelineConfig& config, const fs::path& out_dir) {
  const DatasetBundle bundle = stage("ingest", [&] { return load_bundle(bundle_dir).load_all(); });

  const WindowCorpus corpus = stage("windows", [&] {
    auto c = build_corpus(bundle, config.windows);
    write_corpus(c, out_dir / "windows.f32");
    return c;
  });

  const PartitionHierarchy hierarchy = stage("cluster", [&] {
    auto h = finch_cluster(view_of(corpus), config.metric);
    write_json(out_dir / "hierarchy.json", h.to_json());
    return h;
  });

  const auto scores = stage("annotate", [&] { return score_partitions(hierarchy, corpus, bundle.manifest); });
  const ConceptSet concepts = stage("annotate", [&] {
    auto s = annotate(hierarchy, corpus, bundle.manifest, config.partition);
    write_json(out_dir / "concepts.json", s.to_json());
    return s;
  });

  ConceptStageInfo concept_info;
  BottleneckModel model = stage("train-concepts", [&] {
    return train_concepts_stage(bundle, concepts, config.train, &concept_info);
  });

  const auto sweep = stage("train-classifier", [&] {
    auto s = train_classifier_stage(model, bundle);
    save_model(model, out_dir);
    return s;
  });

  return stage("evaluate", [&] {
    const bool has_test = !bundle.manifest.indices(Split::kTest).empty();
    const Split eval_split = has_test ? Split::kTest : Split::kTrain;
    const Evaluation eval = evaluate(model, bundle, eval_split);

    json partitions = json::array();
    for (const auto& s : scores) {
      partitions.push_back({{"partition", s.index}, {"m", s.clusters}, {"nmi", s.nmi}});
    }
    json lambda_sweep = json::array();
    for (const auto& p : sweep) {
      lambda_sweep.push_back({{"lambda", p.lambda}, {"val_accuracy", p.val_accuracy}, {"nnz", p.nonzeros}});
    }
    json report = {{"split", to_string(eval_split)},
                   {"top1", eval.top1},
                   {"cue", eval.cue},
                   {"m", eval.concepts},
                   {"samples", eval.samples},
                   {"nmi", concepts.nmi},
                   {"selected_partition", concepts.partition_index},
                   {"partitions", partitions},
                   {"lambda", model.classifier.lambda},
                   {"lambda_sweep", lambda_sweep},
                   {"nnz_W_F", nonzeros(model.classifier.weights)},
                   {"concept_loss", {{"initial", concept_info.initial_loss}, {"final", concept_info.final_loss}}},
                   {"warnings", concept_info.warnings},
                   {"config", config.to_json()}};
    report["heldout_concept_cosine"] =
        has_test ? json(mean_concept_cosine(model, bundle, concepts, Split::kTest)) : json(nullptr);
    report["train_concept_cosine"] = mean_concept_cosine(model, bundle, concepts, Split::kTrain);
    write_json(out_dir / "report.json", report);
    return report;
  });
}

}  // namespace pcbear
