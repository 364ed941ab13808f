#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pcbear/bottleneck.hpp"

namespace pcbear {

inline constexpr int kAutoClass = -1;

struct Explanation {
  std::string video_id;
  int target_class = 0;
  VectorXd contributions;  // W_F[i, j] * a_bar[i]
  double bias_share = 0.0;
  double logit = 0.0;
  std::vector<int> top;  // concept ids by decreasing contribution
};

// target_class == kAutoClass explains the predicted class.
// Errors: BadClass, ShapeMismatch.
Explanation explain(const SparseClassifier& clf, const VectorXd& activations, int target_class,
                    std::size_t top_k, std::string video_id = {});

struct InterventionMask {
  std::vector<int> suppressed;
};

struct InterventionResult {
  VectorXd baseline_logits;
  int baseline_class = 0;
  VectorXd logits;
  int label = 0;
  VectorXd delta;  // -sum over suppressed i of W_F[i, :] * a_bar[i]
};

// Zeroes the suppressed standardized activations. Errors: BadConceptId.
InterventionResult intervene(const SparseClassifier& clf, const VectorXd& activations,
                             const InterventionMask& mask);

// Divides by the sum of the positive entries (left unchanged if none).
VectorXd normalize_positive(const VectorXd& v);

// Concept ids ordered by decreasing value, lowest id first on ties.
std::vector<int> ranking(const VectorXd& v);

struct GroupContribution {
  int target_class = kAutoClass;  // kAutoClass for task level
  std::size_t samples = 0;
  VectorXd normalized;
  std::vector<int> ranking;
};

// Mean contribution towards class j over the given samples, normalized.
// Errors: EmptyClass, BadClass.
GroupContribution class_level(const SparseClassifier& clf, const std::vector<VectorXd>& activations,
                              int target_class);

// Sum over samples of contributions towards each sample's predicted class,
// normalized. Errors: EmptySplit.
GroupContribution task_level(const SparseClassifier& clf, const std::vector<VectorXd>& activations);

// Bundle-level variants: class_level uses the split's samples labelled j.
GroupContribution class_level(const BottleneckModel& model, const DatasetBundle& bundle, Split split,
                              int target_class);
GroupContribution task_level(const BottleneckModel& model, const DatasetBundle& bundle, Split split);

struct WeightEntry {
  int concept_id = 0;
  double weight = 0.0;
};

struct WeightReport {
  std::vector<int> classes;
  std::vector<std::vector<WeightEntry>> top;  // per requested class, positive weights only
  std::vector<WeightEntry> shared;            // weight = min over the classes sharing it
};

// Errors: BadClass.
WeightReport weight_report(const SparseClassifier& clf, const std::vector<int>& classes,
                           std::size_t top_n);

}  // namespace pcbear
