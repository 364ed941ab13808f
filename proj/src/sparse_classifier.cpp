#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "pcbear/bottleneck.hpp"
#include "pcbear/error.hpp"
#include "pcbear/tensor_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pcbear {

namespace {

MatrixXd softmax_rows(const MatrixXd& logits) {
  MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - mx).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

void check_labels(std::span<const int> labels, Eigen::Index rows, std::size_t classes) {
  if (static_cast<Eigen::Index>(labels.size()) != rows) {
    fail(ErrorCode::kShapeMismatch, "label count differs from activation rows");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      fail(ErrorCode::kBadClass, "label " + std::to_string(y) + " outside [0, k)");
    }
  }
}

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

struct Batch {
  MatrixXd activations;
  std::vector<int> labels;
};

// One proximal gradient step; returns the largest parameter change.
double prox_step(SparseClassifier& clf, const MatrixXd& a, std::span<const int> y, double step) {
  MatrixXd gw;
  VectorXd gb;
  classifier_smooth_gradient(clf, a, y, gw, gb);
  const double threshold = step * clf.lambda * clf.alpha;
  double delta = 0.0;
  for (Eigen::Index i = 0; i < clf.weights.rows(); ++i) {
    for (Eigen::Index j = 0; j < clf.weights.cols(); ++j) {
      const double next = soft_threshold(clf.weights(i, j) - step * gw(i, j), threshold);
      delta = std::max(delta, std::abs(next - clf.weights(i, j)));
      clf.weights(i, j) = next;
    }
  }
  const VectorXd next_b = clf.bias - step * gb;
  delta = std::max(delta, (next_b - clf.bias).cwiseAbs().maxCoeff());
  clf.bias = next_b;
  return delta;
}

}  // namespace

ClassifierObjective classifier_objective(const SparseClassifier& clf, const MatrixXd& activations,
                                         std::span<const int> labels) {
  check_labels(labels, activations.rows(), static_cast<std::size_t>(clf.bias.size()));
  const MatrixXd logits = (activations * clf.weights).rowwise() + clf.bias.transpose();
  ClassifierObjective obj;
  double ce = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    ce += lse - logits(i, labels[static_cast<std::size_t>(i)]);
  }
  obj.cross_entropy = ce / static_cast<double>(logits.rows());
  obj.penalty = clf.lambda * (clf.alpha * clf.weights.cwiseAbs().sum() +
                              0.5 * (1.0 - clf.alpha) * clf.weights.squaredNorm());
  return obj;
}

void classifier_smooth_gradient(const SparseClassifier& clf, const MatrixXd& activations,
                                std::span<const int> labels, MatrixXd& grad_w, VectorXd& grad_b) {
  const MatrixXd logits = (activations * clf.weights).rowwise() + clf.bias.transpose();
  MatrixXd residual = softmax_rows(logits);
  for (Eigen::Index i = 0; i < residual.rows(); ++i) {
    residual(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  }
  residual /= static_cast<double>(activations.rows());
  grad_w = activations.transpose() * residual + clf.lambda * (1.0 - clf.alpha) * clf.weights;
  grad_b = residual.colwise().sum().transpose();
}

SparseClassifier train_classifier(const MatrixXd& activations, std::span<const int> labels,
                                  std::size_t classes, const TrainConfig& config, double lambda) {
  config.validate();
  check_labels(labels, activations.rows(), classes);
  if (!activations.allFinite()) fail(ErrorCode::kNonFinite, "non-finite concept activations");
  std::vector<std::size_t> counts(classes, 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  for (std::size_t c = 0; c < classes; ++c) {
    if (counts[c] == 0) fail(ErrorCode::kMissingClass, "class " + std::to_string(c) + " has no training sample");
  }

  SparseClassifier clf;
  clf.weights = MatrixXd::Zero(activations.cols(), static_cast<Eigen::Index>(classes));
  clf.bias = VectorXd::Zero(static_cast<Eigen::Index>(classes));
  clf.lambda = lambda;
  clf.alpha = config.alpha;

  const auto n = static_cast<std::size_t>(activations.rows());
  if (n <= config.clf_batch) {
    for (std::size_t it = 0; it < config.clf_max_iters; ++it) {
      if (prox_step(clf, activations, labels, config.clf_step) < config.clf_tol) break;
    }
  } else {
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < config.clf_max_iters; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      double delta = 0.0;
      for (std::size_t start = 0; start < n; start += config.clf_batch) {
        const std::size_t len = std::min(config.clf_batch, n - start);
        MatrixXd a(static_cast<Eigen::Index>(len), activations.cols());
        std::vector<int> y(len);
        for (std::size_t r = 0; r < len; ++r) {
          a.row(static_cast<Eigen::Index>(r)) = activations.row(static_cast<Eigen::Index>(order[start + r]));
          y[r] = labels[order[start + r]];
        }
        delta = std::max(delta, prox_step(clf, a, y, config.clf_step));
      }
      if (delta < config.clf_tol) break;
    }
  }
  if (!clf.weights.allFinite() || !clf.bias.allFinite()) {
    fail(ErrorCode::kNonFinite, "classifier diverged");
  }
  return clf;
}

std::size_t nonzeros(const MatrixXd& m) {
  return static_cast<std::size_t>((m.array() != 0.0).count());
}

int argmax(const VectorXd& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return static_cast<int>(best);
}

ClassifierFit fit_classifier(const MatrixXd& activations, std::span<const int> labels,
                             std::size_t classes, const TrainConfig& config) {
  ClassifierFit fit;
  if (config.lambda) {
    fit.classifier = train_classifier(activations, labels, classes, config, *config.lambda);
    return fit;
  }
  check_labels(labels, activations.rows(), classes);

  // Stratified 80/20 split; every class keeps at least one training sample.
  std::mt19937_64 rng(config.seed ^ 0x5eedULL);
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  std::vector<std::size_t> train_idx, val_idx;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    std::size_t n_val = members.size() / 5;
    if (n_val + 1 > members.size()) n_val = members.empty() ? 0 : members.size() - 1;
    val_idx.insert(val_idx.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_val));
    train_idx.insert(train_idx.end(), members.begin() + static_cast<std::ptrdiff_t>(n_val), members.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());
  if (val_idx.empty()) val_idx = train_idx;

  auto gather = [&](const std::vector<std::size_t>& idx, MatrixXd& a, std::vector<int>& y) {
    a.resize(static_cast<Eigen::Index>(idx.size()), activations.cols());
    y.resize(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      a.row(static_cast<Eigen::Index>(r)) = activations.row(static_cast<Eigen::Index>(idx[r]));
      y[r] = labels[idx[r]];
    }
  };
  MatrixXd a_train, a_val;
  std::vector<int> y_train, y_val;
  gather(train_idx, a_train, y_train);
  gather(val_idx, a_val, y_val);

  double best_lambda = config.lambda_grid.front();
  double best_acc = -1.0;
  for (double lambda : config.lambda_grid) {
    const auto clf = train_classifier(a_train, y_train, classes, config, lambda);
    std::size_t correct = 0;
    for (Eigen::Index r = 0; r < a_val.rows(); ++r) {
      const VectorXd logits = clf.weights.transpose() * a_val.row(r).transpose() + clf.bias;
      if (argmax(logits) == y_val[static_cast<std::size_t>(r)]) ++correct;
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(a_val.rows());
    fit.sweep.push_back({lambda, acc, nonzeros(clf.weights)});
    // Ties go to the sparser (larger lambda) model.
    if (acc > best_acc || (acc == best_acc && lambda > best_lambda)) {
      best_acc = acc;
      best_lambda = lambda;
    }
  }
  fit.classifier = train_classifier(activations, labels, classes, config, best_lambda);
  return fit;
}

Prediction predict_from_activations(const SparseClassifier& clf, const VectorXd& activations) {
  if (activations.size() != clf.weights.rows()) {
    fail(ErrorCode::kShapeMismatch, "activation length differs from classifier input size");
  }
  Prediction p;
  p.logits = clf.weights.transpose() * activations + clf.bias;
  p.label = argmax(p.logits);
  return p;
}

Prediction predict(const ConceptLayer& layer, const SparseClassifier& clf, std::span<const float> z) {
  return predict_from_activations(clf, concept_activations(layer, z));
}

double concept_utilization_efficiency(double top1_percent, std::size_t concepts) {
  if (concepts == 0) fail(ErrorCode::kInvalidArgument, "concept count must be positive");
  return 100.0 * top1_percent / static_cast<double>(concepts);
}

Evaluation evaluate(const BottleneckModel& model, const DatasetBundle& bundle, Split split) {
  if (!model.has_classifier()) fail(ErrorCode::kInvalidArgument, "model has no trained classifier");
  const auto idx = bundle.manifest.indices(split);
  if (idx.empty()) fail(ErrorCode::kEmptySplit, std::string("split '") + to_string(split) + "' is empty");
  std::size_t correct = 0;
  for (std::size_t v : idx) {
    const auto p = predict(model.concept_layer, model.classifier, bundle.features[v]);
    if (p.label == bundle.manifest.videos[v].label) ++correct;
  }
  Evaluation e;
  e.samples = idx.size();
  e.concepts = model.concepts();
  e.top1 = 100.0 * static_cast<double>(correct) / static_cast<double>(idx.size());
  e.cue = concept_utilization_efficiency(e.top1, e.concepts);
  return e;
}

MatrixXd feature_matrix(const DatasetBundle& bundle, std::span<const std::size_t> videos) {
  MatrixXd z(static_cast<Eigen::Index>(videos.size()),
             static_cast<Eigen::Index>(bundle.manifest.feature_dim));
  for (std::size_t r = 0; r < videos.size(); ++r) {
    const auto& f = bundle.features.at(videos[r]);
    if (f.size() != bundle.manifest.feature_dim) {
      fail(ErrorCode::kShapeMismatch, "feature length differs from feature_dim");
    }
    for (std::size_t c = 0; c < f.size(); ++c) {
      z(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = f[c];
    }
  }
  return z;
}

namespace {

template <typename Derived>
void round_float(Eigen::MatrixBase<Derived>& m) {
  m = m.template cast<float>().template cast<double>();
}

std::vector<float> row_major(const MatrixXd& m) {
  std::vector<float> out(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      out[static_cast<std::size_t>(i * m.cols() + j)] = static_cast<float>(m(i, j));
    }
  }
  return out;
}

MatrixXd from_row_major(const std::vector<float>& v, Eigen::Index rows, Eigen::Index cols) {
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = v[static_cast<std::size_t>(i * cols + j)];
  }
  return m;
}

VectorXd to_vector(const std::vector<float>& v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

}  // namespace

void round_to_float(BottleneckModel& model) {
  auto& cl = model.concept_layer;
  round_float(cl.weights);
  round_float(cl.activation.mean);
  round_float(cl.activation.std);
  round_float(cl.label.mean);
  round_float(cl.label.std);
  if (model.has_classifier()) {
    round_float(model.classifier.weights);
    round_float(model.classifier.bias);
  }
}

void save_model(const BottleneckModel& model, const fs::path& dir) {
  try {
    fs::create_directories(dir);
  } catch (const fs::filesystem_error& ex) {
    fail(ErrorCode::kIoFailure, ex.what());
  }
  const auto& cl = model.concept_layer;
  json j = {{"format", "pcbear-model/1"},
            {"feature_dim", cl.feature_dim()},
            {"concepts", cl.concepts()},
            {"classes", model.classes()},
            {"class_names", model.class_names},
            {"config", model.config.to_json()},
            {"seed", model.config.seed},
            {"threads", model.threads},
            {"has_classifier", model.has_classifier()},
            {"concept_info", model.concept_info}};
  if (model.has_classifier()) {
    j["lambda"] = model.classifier.lambda;
    j["alpha"] = model.classifier.alpha;
  }
  write_f32(dir / "W_c.f32", row_major(cl.weights));
  write_f32(dir / "mu_a.f32", row_major(cl.activation.mean));
  write_f32(dir / "sigma_a.f32", row_major(cl.activation.std));
  write_f32(dir / "mu_c.f32", row_major(cl.label.mean));
  write_f32(dir / "sigma_c.f32", row_major(cl.label.std));
  if (model.has_classifier()) {
    write_f32(dir / "W_F.f32", row_major(model.classifier.weights));
    write_f32(dir / "b_F.f32", row_major(model.classifier.bias));
  }
  std::ofstream out(dir / "model.json", std::ios::trunc);
  if (!out) fail(ErrorCode::kIoFailure, "cannot write " + (dir / "model.json").string());
  out << j.dump(2) << '\n';
}

BottleneckModel load_model(const fs::path& dir) {
  std::ifstream in(dir / "model.json");
  if (!in) fail(ErrorCode::kMissingFile, "missing file: " + (dir / "model.json").string());
  BottleneckModel model;
  std::size_t d = 0, m = 0, k = 0;
  bool has_clf = false;
  try {
    json j;
    in >> j;
    d = j.at("feature_dim").get<std::size_t>();
    m = j.at("concepts").get<std::size_t>();
    k = j.at("classes").get<std::size_t>();
    model.class_names = j.at("class_names").get<std::vector<std::string>>();
    model.config = TrainConfig::from_json(j.at("config"));
    model.threads = j.value("threads", std::size_t{1});
    model.concept_info = j.value("concept_info", json::object());
    has_clf = j.value("has_classifier", false);
    if (has_clf) {
      model.classifier.lambda = j.at("lambda").get<double>();
      model.classifier.alpha = j.at("alpha").get<double>();
    }
  } catch (const json::exception& ex) {
    fail(ErrorCode::kBadManifest, std::string("model.json: ") + ex.what());
  }
  if (model.class_names.size() != k) fail(ErrorCode::kShapeMismatch, "class_names length != classes");
  const auto rows = static_cast<Eigen::Index>(d), cols = static_cast<Eigen::Index>(m);
  auto& cl = model.concept_layer;
  cl.weights = from_row_major(read_f32_checked(dir / "W_c.f32", d * m, "W_c"), rows, cols);
  cl.activation.mean = to_vector(read_f32_checked(dir / "mu_a.f32", m, "mu_a"));
  cl.activation.std = to_vector(read_f32_checked(dir / "sigma_a.f32", m, "sigma_a"));
  cl.label.mean = to_vector(read_f32_checked(dir / "mu_c.f32", m, "mu_c"));
  cl.label.std = to_vector(read_f32_checked(dir / "sigma_c.f32", m, "sigma_c"));
  if (has_clf) {
    model.classifier.weights = from_row_major(read_f32_checked(dir / "W_F.f32", m * k, "W_F"), cols,
                                              static_cast<Eigen::Index>(k));
    model.classifier.bias = to_vector(read_f32_checked(dir / "b_F.f32", k, "b_F"));
  }
  return model;
}

}  // namespace pcbear
