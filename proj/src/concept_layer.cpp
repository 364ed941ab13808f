#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pcbear/bottleneck.hpp"
#include "pcbear/error.hpp"

using nlohmann::json;

namespace pcbear {

void TrainConfig::validate() const {
  if (concept_steps < 1 || concept_batch < 1 || clf_batch < 1 || clf_max_iters < 1) {
    fail(ErrorCode::kBadConfig, "step and batch counts must be positive");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorCode::kBadConfig, "alpha must lie in [0,1]");
  if (!(concept_lr > 0.0) || !(clf_step > 0.0)) {
    fail(ErrorCode::kBadConfig, "learning rate and step size must be positive");
  }
  if (lambda && !(*lambda >= 0.0)) fail(ErrorCode::kBadConfig, "lambda must be >= 0");
  if (!lambda && lambda_grid.empty()) fail(ErrorCode::kBadConfig, "empty lambda grid");
  for (double l : lambda_grid) {
    if (!(l >= 0.0)) fail(ErrorCode::kBadConfig, "lambda grid values must be >= 0");
  }
}

json TrainConfig::to_json() const {
  json j = {{"concept_steps", concept_steps},
            {"concept_batch", concept_batch},
            {"concept_lr", concept_lr},
            {"cosine_axis", cosine_axis == CosineAxis::kSample ? "sample" : "concept"},
            {"clf_batch", clf_batch},
            {"clf_step", clf_step},
            {"alpha", alpha},
            {"lambda_grid", lambda_grid},
            {"clf_max_iters", clf_max_iters},
            {"clf_tol", clf_tol},
            {"seed", seed}};
  j["lambda"] = lambda ? json(*lambda) : json(nullptr);
  return j;
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  try {
    c.concept_steps = j.value("concept_steps", c.concept_steps);
    c.concept_batch = j.value("concept_batch", c.concept_batch);
    c.concept_lr = j.value("concept_lr", c.concept_lr);
    if (j.contains("cosine_axis")) {
      const auto axis = j.at("cosine_axis").get<std::string>();
      if (axis == "sample") {
        c.cosine_axis = CosineAxis::kSample;
      } else if (axis == "concept") {
        c.cosine_axis = CosineAxis::kConcept;
      } else {
        fail(ErrorCode::kBadConfig, "cosine_axis must be sample|concept");
      }
    }
    c.clf_batch = j.value("clf_batch", c.clf_batch);
    c.clf_step = j.value("clf_step", c.clf_step);
    c.alpha = j.value("alpha", c.alpha);
    if (j.contains("lambda") && !j.at("lambda").is_null()) c.lambda = j.at("lambda").get<double>();
    c.lambda_grid = j.value("lambda_grid", c.lambda_grid);
    c.clf_max_iters = j.value("clf_max_iters", c.clf_max_iters);
    c.clf_tol = j.value("clf_tol", c.clf_tol);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& ex) {
    fail(ErrorCode::kBadConfig, std::string("train config: ") + ex.what());
  }
  c.validate();
  return c;
}

ColumnStats column_stats(const MatrixXd& x, std::vector<std::size_t>* clamped) {
  ColumnStats s;
  const double n = static_cast<double>(x.rows());
  s.mean = x.colwise().mean().transpose();
  s.std.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - s.mean(j)).square().sum() / n;
    const double sd = std::sqrt(var);
    if (sd < kEpsStd) {
      s.std(j) = kEpsStd;
      if (clamped) clamped->push_back(static_cast<std::size_t>(j));
    } else {
      s.std(j) = sd;
    }
  }
  return s;
}

MatrixXd standardize(const MatrixXd& x, const ColumnStats& stats) {
  return (x.rowwise() - stats.mean.transpose()).array().rowwise() / stats.std.transpose().array();
}

namespace {

// Cosines of matching rows; zero when either row is the zero vector.
VectorXd row_cosines(const MatrixXd& a, const MatrixXd& c, VectorXd* a_norm, VectorXd* c_norm) {
  *a_norm = a.rowwise().norm();
  *c_norm = c.rowwise().norm();
  VectorXd cosv = VectorXd::Zero(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double denom = (*a_norm)(i) * (*c_norm)(i);
    if (denom > 0.0) cosv(i) = a.row(i).dot(c.row(i)) / denom;
  }
  return cosv;
}

// d loss / d a for loss = -(1/count) sum cos_i^3 over rows.
MatrixXd row_loss_gradient(const MatrixXd& a, const MatrixXd& c, double count) {
  VectorXd an, cn;
  const VectorXd cosv = row_cosines(a, c, &an, &cn);
  MatrixXd g = MatrixXd::Zero(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (an(i) <= 0.0 || cn(i) <= 0.0) continue;
    const double scale = -3.0 * cosv(i) * cosv(i) / count;
    g.row(i) = scale * (c.row(i) / (an(i) * cn(i)) - cosv(i) * a.row(i) / (an(i) * an(i)));
  }
  return g;
}

void check_same_shape(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorCode::kShapeMismatch, "activation and concept matrices differ in shape");
  }
  if (a.rows() < 1) fail(ErrorCode::kShapeMismatch, "empty batch");
}

}  // namespace

double cosine_cubed_loss(const MatrixXd& a_std, const MatrixXd& c_std, CosineAxis axis) {
  check_same_shape(a_std, c_std);
  VectorXd an, cn;
  const VectorXd cosv = axis == CosineAxis::kSample
                            ? row_cosines(a_std, c_std, &an, &cn)
                            : row_cosines(a_std.transpose(), c_std.transpose(), &an, &cn);
  return -cosv.array().cube().mean();
}

LossAndGradient concept_objective(const MatrixXd& weights, const MatrixXd& features,
                                  const MatrixXd& c_std, CosineAxis axis) {
  const MatrixXd a = features * weights;
  check_same_shape(a, c_std);
  const double n = static_cast<double>(a.rows());

  ColumnStats stats;
  stats.mean = a.colwise().mean().transpose();
  stats.std.resize(a.cols());
  std::vector<bool> clamped(static_cast<std::size_t>(a.cols()), false);
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const double sd = std::sqrt((a.col(j).array() - stats.mean(j)).square().sum() / n);
    clamped[static_cast<std::size_t>(j)] = sd < kEpsStd;
    stats.std(j) = std::max(sd, kEpsStd);
  }
  const MatrixXd a_std = standardize(a, stats);

  LossAndGradient out;
  out.loss = cosine_cubed_loss(a_std, c_std, axis);
  const MatrixXd g_std =
      axis == CosineAxis::kSample
          ? row_loss_gradient(a_std, c_std, n)
          : MatrixXd(row_loss_gradient(a_std.transpose(), c_std.transpose(),
                                       static_cast<double>(a.cols()))
                         .transpose());

  // Backward through per-column standardization with batch statistics.
  MatrixXd g_raw(a.rows(), a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const double mean_g = g_std.col(j).mean();
    if (clamped[static_cast<std::size_t>(j)]) {
      g_raw.col(j) = (g_std.col(j).array() - mean_g) / stats.std(j);
    } else {
      const double mean_gx = g_std.col(j).dot(a_std.col(j)) / n;
      g_raw.col(j) =
          (g_std.col(j).array() - mean_g - a_std.col(j).array() * mean_gx) / stats.std(j);
    }
  }
  out.gradient = features.transpose() * g_raw;
  return out;
}

ConceptTrainResult train_concept_layer(const MatrixXd& features, const MatrixXd& concepts,
                                       const TrainConfig& config) {
  config.validate();
  const Eigen::Index n = features.rows(), d = features.cols(), m = concepts.cols();
  if (concepts.rows() != n) fail(ErrorCode::kShapeMismatch, "features and concepts differ in rows");
  if (n < 2) fail(ErrorCode::kInvalidArgument, "concept layer training needs n >= 2");
  if (m < 1 || d < 1) fail(ErrorCode::kInvalidArgument, "empty concept or feature dimension");
  if (!features.allFinite() || !concepts.allFinite()) {
    fail(ErrorCode::kNonFinite, "non-finite training data");
  }

  ConceptTrainResult result;
  auto& layer = result.layer;
  layer.label = column_stats(concepts, &result.degenerate_concepts);
  for (std::size_t j : result.degenerate_concepts) {
    result.warnings.push_back("DegenerateConcept: concept " + std::to_string(j) +
                              " is constant over the training set; sigma clamped to 1e-6");
  }
  const MatrixXd c_std = standardize(concepts, layer.label);

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
  MatrixXd w(d, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) w(i, j) = normal(rng);
  }

  result.initial_loss = concept_objective(w, features, c_std, config.cosine_axis).loss;

  const auto batch = static_cast<Eigen::Index>(std::min<std::size_t>(config.concept_batch,
                                                                     static_cast<std::size_t>(n)));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
  MatrixXd m1 = MatrixXd::Zero(d, m), m2 = MatrixXd::Zero(d, m);
  MatrixXd zb(batch, d), cb(batch, m);
  for (std::size_t step = 1; step <= config.concept_steps; ++step) {
    for (Eigen::Index r = 0; r < batch; ++r) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const Eigen::Index src = order[cursor++];
      zb.row(r) = features.row(src);
      cb.row(r) = c_std.row(src);
    }
    const auto lg = concept_objective(w, zb, cb, config.cosine_axis);
    m1 = kBeta1 * m1 + (1.0 - kBeta1) * lg.gradient;
    m2 = kBeta2 * m2 + (1.0 - kBeta2) * lg.gradient.cwiseProduct(lg.gradient);
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
    w.array() -= config.concept_lr * (m1.array() / bc1) / ((m2.array() / bc2).sqrt() + kAdamEps);
  }
  if (!w.allFinite()) fail(ErrorCode::kNonFinite, "concept layer diverged");

  result.final_loss = concept_objective(w, features, c_std, config.cosine_axis).loss;
  if (result.final_loss > result.initial_loss) {
    result.warnings.push_back("concept loss increased during training");
  }
  layer.weights = std::move(w);
  layer.activation = column_stats(features * layer.weights);
  return result;
}

VectorXd raw_concept_activations(const ConceptLayer& layer, std::span<const float> z) {
  if (z.size() != layer.feature_dim()) {
    fail(ErrorCode::kShapeMismatch, "feature length " + std::to_string(z.size()) +
                                        " != model feature_dim " +
                                        std::to_string(layer.feature_dim()));
  }
  VectorXd zd(static_cast<Eigen::Index>(z.size()));
  for (std::size_t i = 0; i < z.size(); ++i) zd(static_cast<Eigen::Index>(i)) = z[i];
  if (!zd.allFinite()) fail(ErrorCode::kNonFinite, "feature vector has NaN/Inf");
  return layer.weights.transpose() * zd;
}

VectorXd concept_activations(const ConceptLayer& layer, std::span<const float> z) {
  const VectorXd a = raw_concept_activations(layer, z);
  return ((a - layer.activation.mean).array() / layer.activation.std.array()).matrix();
}

}  // namespace pcbear
