#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pcbear/dataset_io.hpp"

namespace pcbear {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kEpsStd = 1e-6;

// Which vectors the cosine in the concept loss is taken over: per sample
// (rows of the batch) or per concept (columns).
enum class CosineAxis { kSample, kConcept };

struct TrainConfig {
  std::size_t concept_steps = 1000;
  std::size_t concept_batch = 256;
  double concept_lr = 1e-3;
  CosineAxis cosine_axis = CosineAxis::kSample;

  std::size_t clf_batch = 512;
  double clf_step = 0.05;
  double alpha = 0.99;
  // Unset: chosen on an 80/20 split of the training set from lambda_grid.
  std::optional<double> lambda;
  std::vector<double> lambda_grid{1e-4, 1e-3, 1e-2, 1e-1};
  std::size_t clf_max_iters = 5000;  // epochs when mini-batching
  double clf_tol = 1e-7;

  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// Per-column mean and population std; std clamped below at kEpsStd.
struct ColumnStats {
  VectorXd mean;
  VectorXd std;
};

ColumnStats column_stats(const MatrixXd& x, std::vector<std::size_t>* clamped = nullptr);
MatrixXd standardize(const MatrixXd& x, const ColumnStats& stats);

struct ConceptLayer {
  MatrixXd weights;  // W_c, d x m
  ColumnStats activation;  // frozen (mu_a, sigma_a) over the training set
  ColumnStats label;       // (mu_c, sigma_c) over training concept vectors

  std::size_t feature_dim() const noexcept { return static_cast<std::size_t>(weights.rows()); }
  std::size_t concepts() const noexcept { return static_cast<std::size_t>(weights.cols()); }
};

struct SparseClassifier {
  MatrixXd weights;  // W_F, m x k
  VectorXd bias;     // b_F, k
  double lambda = 0.0;
  double alpha = 0.99;
};

// -(1/|B|) sum cos(a_i, c_i)^3 over rows (sample axis) or -(1/m) sum over
// columns (concept axis). cos with a zero vector is 0. Errors: ShapeMismatch.
double cosine_cubed_loss(const MatrixXd& a_std, const MatrixXd& c_std,
                         CosineAxis axis = CosineAxis::kSample);

struct LossAndGradient {
  double loss = 0.0;
  MatrixXd gradient;
};

// Concept-layer training objective for one batch: a = Z W standardized with
// the batch's own column statistics, then cosine_cubed_loss against c_std.
// Gradient is with respect to W and flows through the batch statistics.
LossAndGradient concept_objective(const MatrixXd& weights, const MatrixXd& features,
                                  const MatrixXd& c_std, CosineAxis axis);

struct ConceptTrainResult {
  ConceptLayer layer;
  double initial_loss = 0.0;  // full training set, before the first step
  double final_loss = 0.0;    // full training set, after the last step
  std::vector<std::size_t> degenerate_concepts;
  std::vector<std::string> warnings;
};

// features: n x d, concepts: n x m multi-hot. Adam on W_c with seeded
// shuffling. Errors: InvalidArgument (n < 2 or shape), NonFinite.
ConceptTrainResult train_concept_layer(const MatrixXd& features, const MatrixXd& concepts,
                                       const TrainConfig& config);

// (W_c^T z - mu_a) / sigma_a. Errors: ShapeMismatch.
VectorXd concept_activations(const ConceptLayer& layer, std::span<const float> z);
VectorXd raw_concept_activations(const ConceptLayer& layer, std::span<const float> z);

struct ClassifierObjective {
  double cross_entropy = 0.0;  // mean over samples
  double penalty = 0.0;        // lambda * (alpha |W|_1 + (1 - alpha)/2 |W|_F^2)
  double total() const noexcept { return cross_entropy + penalty; }
};

ClassifierObjective classifier_objective(const SparseClassifier& clf, const MatrixXd& activations,
                                         std::span<const int> labels);

// Gradient of the smooth part (cross-entropy + ridge share) w.r.t. W and b.
void classifier_smooth_gradient(const SparseClassifier& clf, const MatrixXd& activations,
                                std::span<const int> labels, MatrixXd& grad_w, VectorXd& grad_b);

// Proximal gradient for a fixed lambda. Errors: MissingClass, NonFinite.
SparseClassifier train_classifier(const MatrixXd& activations, std::span<const int> labels,
                                  std::size_t classes, const TrainConfig& config, double lambda);

struct LambdaSweepPoint {
  double lambda = 0.0;
  double val_accuracy = 0.0;
  std::size_t nonzeros = 0;
};

struct ClassifierFit {
  SparseClassifier classifier;
  std::vector<LambdaSweepPoint> sweep;  // empty when lambda was given
};

// Uses config.lambda when set, otherwise sweeps config.lambda_grid.
ClassifierFit fit_classifier(const MatrixXd& activations, std::span<const int> labels,
                             std::size_t classes, const TrainConfig& config);

std::size_t nonzeros(const MatrixXd& m);

struct Prediction {
  VectorXd logits;
  int label = 0;
};

// Ties resolve to the lowest class index.
int argmax(const VectorXd& v);
Prediction predict_from_activations(const SparseClassifier& clf, const VectorXd& activations);
Prediction predict(const ConceptLayer& layer, const SparseClassifier& clf, std::span<const float> z);

// 100 * top1_percent / concepts.
double concept_utilization_efficiency(double top1_percent, std::size_t concepts);

struct BottleneckModel {
  ConceptLayer concept_layer;
  SparseClassifier classifier;
  std::vector<std::string> class_names;
  TrainConfig config;
  nlohmann::json concept_info;  // contents of concepts.json (medoids, partition, nmi)
  std::size_t threads = 1;

  bool has_classifier() const noexcept { return classifier.weights.size() > 0; }
  std::size_t concepts() const noexcept { return concept_layer.concepts(); }
  std::size_t classes() const noexcept { return class_names.size(); }
};

struct Evaluation {
  double top1 = 0.0;  // percent
  double cue = 0.0;
  std::size_t samples = 0;
  std::size_t concepts = 0;
};

// Errors: EmptySplit.
Evaluation evaluate(const BottleneckModel& model, const DatasetBundle& bundle, Split split);

// Rounds all parameters to float32 so in-memory and reloaded models agree.
void round_to_float(BottleneckModel& model);

void save_model(const BottleneckModel& model, const std::filesystem::path& dir);
BottleneckModel load_model(const std::filesystem::path& dir);

// Row-major (n x d) feature matrix for the given videos.
MatrixXd feature_matrix(const DatasetBundle& bundle, std::span<const std::size_t> videos);

}  // namespace pcbear
