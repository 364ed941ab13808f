#include "pcbear/explain.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "pcbear/error.hpp"

namespace pcbear {

namespace {

void check_class(const SparseClassifier& clf, int j) {
  if (j < 0 || j >= clf.weights.cols()) {
    fail(ErrorCode::kBadClass, "class " + std::to_string(j) + " outside [0, " +
                                   std::to_string(clf.weights.cols()) + ")");
  }
}

void check_activations(const SparseClassifier& clf, const VectorXd& a) {
  if (a.size() != clf.weights.rows()) {
    fail(ErrorCode::kShapeMismatch, "activation length differs from concept count");
  }
}

VectorXd contribution_column(const SparseClassifier& clf, const VectorXd& a, int j) {
  return clf.weights.col(j).cwiseProduct(a);
}

}  // namespace

std::vector<int> ranking(const VectorXd& v) {
  std::vector<int> ids(static_cast<std::size_t>(v.size()));
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(), [&v](int a, int b) { return v(a) > v(b); });
  return ids;
}

Explanation explain(const SparseClassifier& clf, const VectorXd& activations, int target_class,
                    std::size_t top_k, std::string video_id) {
  check_activations(clf, activations);
  Explanation e;
  e.video_id = std::move(video_id);
  e.target_class = target_class == kAutoClass ? predict_from_activations(clf, activations).label
                                              : target_class;
  check_class(clf, e.target_class);
  e.contributions = contribution_column(clf, activations, e.target_class);
  e.bias_share = clf.bias(e.target_class);
  e.logit = clf.weights.col(e.target_class).dot(activations) + e.bias_share;
  e.top = ranking(e.contributions);
  if (e.top.size() > top_k) e.top.resize(top_k);
  return e;
}

InterventionResult intervene(const SparseClassifier& clf, const VectorXd& activations,
                             const InterventionMask& mask) {
  check_activations(clf, activations);
  std::vector<int> ids = mask.suppressed;
  for (int id : ids) {
    if (id < 0 || id >= activations.size()) {
      fail(ErrorCode::kBadConceptId, "concept id " + std::to_string(id) + " outside [0, " +
                                         std::to_string(activations.size()) + ")");
    }
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  InterventionResult r;
  const auto base = predict_from_activations(clf, activations);
  r.baseline_logits = base.logits;
  r.baseline_class = base.label;

  VectorXd edited = activations;
  r.delta = VectorXd::Zero(clf.weights.cols());
  for (int id : ids) {
    edited(id) = 0.0;
    r.delta -= clf.weights.row(id).transpose() * activations(id);
  }
  const auto after = predict_from_activations(clf, edited);
  r.logits = after.logits;
  r.label = after.label;
  return r;
}

VectorXd normalize_positive(const VectorXd& v) {
  const double positive = v.cwiseMax(0.0).sum();
  return positive > 0.0 ? VectorXd(v / positive) : v;
}

GroupContribution class_level(const SparseClassifier& clf, const std::vector<VectorXd>& activations,
                              int target_class) {
  check_class(clf, target_class);
  if (activations.empty()) {
    fail(ErrorCode::kEmptyClass, "class " + std::to_string(target_class) + " has no samples");
  }
  VectorXd sum = VectorXd::Zero(clf.weights.rows());
  for (const auto& a : activations) {
    check_activations(clf, a);
    sum += contribution_column(clf, a, target_class);
  }
  GroupContribution g;
  g.target_class = target_class;
  g.samples = activations.size();
  g.normalized = normalize_positive(sum / static_cast<double>(activations.size()));
  g.ranking = ranking(g.normalized);
  return g;
}

GroupContribution task_level(const SparseClassifier& clf, const std::vector<VectorXd>& activations) {
  if (activations.empty()) fail(ErrorCode::kEmptySplit, "no samples for task-level analysis");
  VectorXd sum = VectorXd::Zero(clf.weights.rows());
  for (const auto& a : activations) {
    check_activations(clf, a);
    sum += contribution_column(clf, a, predict_from_activations(clf, a).label);
  }
  GroupContribution g;
  g.samples = activations.size();
  g.normalized = normalize_positive(sum);
  g.ranking = ranking(g.normalized);
  return g;
}

GroupContribution class_level(const BottleneckModel& model, const DatasetBundle& bundle, Split split,
                              int target_class) {
  check_class(model.classifier, target_class);
  std::vector<VectorXd> acts;
  for (std::size_t v : bundle.manifest.indices(split)) {
    if (bundle.manifest.videos[v].label == target_class) {
      acts.push_back(concept_activations(model.concept_layer, bundle.features[v]));
    }
  }
  return class_level(model.classifier, acts, target_class);
}

GroupContribution task_level(const BottleneckModel& model, const DatasetBundle& bundle, Split split) {
  std::vector<VectorXd> acts;
  for (std::size_t v : bundle.manifest.indices(split)) {
    acts.push_back(concept_activations(model.concept_layer, bundle.features[v]));
  }
  return task_level(model.classifier, acts);
}

WeightReport weight_report(const SparseClassifier& clf, const std::vector<int>& classes,
                           std::size_t top_n) {
  WeightReport report;
  report.classes = classes;
  std::map<int, std::vector<double>> appearances;
  for (int j : classes) {
    check_class(clf, j);
    std::vector<WeightEntry> entries;
    for (int i : ranking(clf.weights.col(j))) {
      if (entries.size() == top_n || clf.weights(i, j) <= 0.0) break;
      entries.push_back({i, clf.weights(i, j)});
      appearances[i].push_back(clf.weights(i, j));
    }
    report.top.push_back(std::move(entries));
  }
  for (const auto& [id, weights] : appearances) {
    if (weights.size() >= 2) {
      report.shared.push_back({id, *std::min_element(weights.begin(), weights.end())});
    }
  }
  std::stable_sort(report.shared.begin(), report.shared.end(),
                   [](const WeightEntry& a, const WeightEntry& b) { return a.weight > b.weight; });
  return report;
}

}  // namespace pcbear
