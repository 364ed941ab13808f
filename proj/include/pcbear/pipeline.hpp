#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcbear/bottleneck.hpp"
#include "pcbear/concept_discovery.hpp"
#include "pcbear/pose_windows.hpp"

namespace pcbear {

struct PipelineConfig {
  WindowOptions windows;
  Metric metric = Metric::kEuclidean;
  PartitionPolicy partition = PartitionPolicy::parse("min-m:20");
  TrainConfig train;

  // Accepts {"seed", "windows": {...}, "cluster": {...}, "train": {...}};
  // a top-level seed overrides train.seed.
  static PipelineConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Output of annotation: per-video concept sets of the selected partition and
// each concept's medoid window.
struct ConceptSet {
  std::size_t partition_index = 0;
  std::string policy;
  double nmi = 0.0;
  std::size_t window = 0;  // T
  std::size_t stride = 1;
  bool normalized = true;
  ScaleMode scale_mode = ScaleMode::kTorso;
  ConceptAnnotation annotation;
  std::vector<WindowRef> medoids;

  nlohmann::json to_json() const;
  static ConceptSet from_json(const nlohmann::json& j);

  // Multi-hot rows for the given videos (by manifest id). Errors: UnknownVideo.
  MatrixXd concept_matrix(const DatasetManifest& manifest, std::span<const std::size_t> videos) const;
};

// Each window inherits its source video's label.
std::vector<int> window_labels(const WindowCorpus& corpus, const DatasetManifest& manifest);

struct PartitionScore {
  std::size_t index = 0;
  std::size_t clusters = 0;
  double nmi = 0.0;
};
std::vector<PartitionScore> score_partitions(const PartitionHierarchy& hierarchy,
                                             const WindowCorpus& corpus,
                                             const DatasetManifest& manifest);

ConceptSet annotate(const PartitionHierarchy& hierarchy, const WindowCorpus& corpus,
                    const DatasetManifest& manifest, const PartitionPolicy& policy);

struct ConceptStageInfo {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<std::string> warnings;
};

// Trains W_c on the train split; the model carries no classifier yet.
BottleneckModel train_concepts_stage(const DatasetBundle& bundle, const ConceptSet& concepts,
                                     const TrainConfig& config, ConceptStageInfo* info = nullptr);

// Fits the sparse classifier on standardized train activations, in place.
std::vector<LambdaSweepPoint> train_classifier_stage(BottleneckModel& model,
                                                     const DatasetBundle& bundle);

// Mean per-sample cos(a_bar, c_bar) over a split, c_bar standardized with
// the training label statistics.
double mean_concept_cosine(const BottleneckModel& model, const DatasetBundle& bundle,
                           const ConceptSet& concepts, Split split);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

// windows -> cluster -> annotate -> train-concepts -> train-classifier ->
// evaluate. Writes every intermediate plus report.json into out_dir and
// returns the report. Errors carry the failing stage name.
nlohmann::json run_pipeline(const std::filesystem::path& bundle_dir, const PipelineConfig& config,
                            const std::filesystem::path& out_dir);

}  // namespace pcbear
