#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "pcbear/explain.hpp"
#include "support.hpp"

using namespace pcbear;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using testing::code_of;
using testing::random_matrix;

namespace {

// Sparse random head: roughly half the weights are exactly zero.
SparseClassifier random_head(std::mt19937_64& rng, Eigen::Index m, Eigen::Index k) {
  SparseClassifier clf;
  clf.weights = random_matrix(rng, m, k);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      if (rng() % 2 == 0) clf.weights(i, j) = 0.0;
    }
  }
  clf.bias = random_matrix(rng, k, 1);
  return clf;
}

double positive_sum(const VectorXd& v) { return v.cwiseMax(0.0).sum(); }

}  // namespace

TEST_CASE("contribution hand case") {
  SparseClassifier clf;
  clf.weights = MatrixXd::Zero(2, 2);
  clf.weights.col(1) << 0.5, 3.0;
  clf.bias = VectorXd::Zero(2);
  clf.bias(1) = 1.0;
  VectorXd a(2);
  a << 2.0, -1.0;
  const auto e = explain(clf, a, 1, 3, "v");
  CHECK(e.contributions(0) == 1.0);
  CHECK(e.contributions(1) == -3.0);
  CHECK(e.logit == -1.0);
  CHECK(e.bias_share == 1.0);
  CHECK(e.top == std::vector<int>{0, 1});
  const auto zero = explain(clf, a, 0, 3);
  CHECK(zero.contributions.isZero(0.0));
  CHECK(zero.logit == clf.bias(0));
}

TEST_CASE("decomposition identity over random heads") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng() % 40), k = 2 + static_cast<Eigen::Index>(rng() % 6);
    const auto clf = random_head(rng, m, k);
    const VectorXd a = random_matrix(rng, m, 1, 2.0);
    const auto logits = predict_from_activations(clf, a).logits;
    for (int j = 0; j < k; ++j) {
      const auto e = explain(clf, a, j, 5);
      CHECK(std::abs(e.contributions.sum() + e.bias_share - logits(j)) < 1e-5);
      CHECK(std::abs(e.logit - logits(j)) < 1e-5);
    }
  }
}

TEST_CASE("auto class explains the prediction and wins the logit comparison") {
  std::mt19937_64 rng(12);
  const auto clf = random_head(rng, 10, 4);
  const VectorXd a = random_matrix(rng, 10, 1);
  const auto e = explain(clf, a, kAutoClass, 3);
  CHECK(e.target_class == predict_from_activations(clf, a).label);
  CHECK(e.top.size() == 3);
  for (int j = 0; j < 4; ++j) {
    const auto other = explain(clf, a, j, 3);
    CHECK(e.contributions.sum() + e.bias_share >= other.contributions.sum() + other.bias_share);
  }
  CHECK(e.contributions(e.top[0]) >= e.contributions(e.top[1]));
  CHECK(e.contributions(e.top[1]) >= e.contributions(e.top[2]));
}

TEST_CASE("explain errors") {
  std::mt19937_64 rng(13);
  const auto clf = random_head(rng, 4, 3);
  const VectorXd a = VectorXd::Ones(4);
  CHECK(code_of([&] { explain(clf, a, 3, 1); }) == ErrorCode::kBadClass);
  CHECK(code_of([&] { explain(clf, a, -2, 1); }) == ErrorCode::kBadClass);
  CHECK(code_of([&] { explain(clf, VectorXd::Ones(5), 0, 1); }) == ErrorCode::kShapeMismatch);
}

TEST_CASE("intervention identities") {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index m = 2 + static_cast<Eigen::Index>(rng() % 30), k = 2 + static_cast<Eigen::Index>(rng() % 5);
    const auto clf = random_head(rng, m, k);
    const VectorXd a = random_matrix(rng, m, 1, 2.0);

    const auto none = intervene(clf, a, {});
    CHECK(none.logits == none.baseline_logits);
    CHECK(none.delta.isZero(0.0));
    CHECK(none.label == none.baseline_class);

    std::vector<int> mask;
    for (int i = 0; i < m; ++i) {
      if (rng() % 3 == 0) mask.push_back(i);
    }
    std::shuffle(mask.begin(), mask.end(), rng);
    const auto joint = intervene(clf, a, {mask});

    std::vector<int> sorted = mask;
    std::sort(sorted.begin(), sorted.end());
    VectorXd sum = VectorXd::Zero(k);
    for (int i : sorted) {
      const auto single = intervene(clf, a, {{i}});
      // Singleton delta is exactly -W_F[i, :] * a[i].
      CHECK(single.delta == VectorXd(-(clf.weights.row(i).transpose() * a(i))));
      sum += single.delta;
    }
    CHECK(joint.delta == sum);
    CHECK((joint.logits - joint.baseline_logits - joint.delta).cwiseAbs().maxCoeff() < 1e-12);

    std::vector<int> all(static_cast<std::size_t>(m));
    std::iota(all.begin(), all.end(), 0);
    CHECK(intervene(clf, a, {all}).logits == clf.bias);
  }
}

TEST_CASE("intervention dedupes and validates ids") {
  std::mt19937_64 rng(15);
  const auto clf = random_head(rng, 5, 3);
  const VectorXd a = random_matrix(rng, 5, 1);
  CHECK(intervene(clf, a, {{2, 2, 4, 2}}).delta == intervene(clf, a, {{2, 4}}).delta);
  CHECK(code_of([&] { intervene(clf, a, {{5}}); }) == ErrorCode::kBadConceptId);
  CHECK(code_of([&] { intervene(clf, a, {{-1}}); }) == ErrorCode::kBadConceptId);
}

TEST_CASE("positive normalization") {
  VectorXd v(4);
  v << 2.0, -1.0, 6.0, 0.0;
  const VectorXd n = normalize_positive(v);
  CHECK(n(0) == doctest::Approx(0.25));
  CHECK(n(1) == doctest::Approx(-0.125));
  CHECK(n(2) == doctest::Approx(0.75));
  CHECK(positive_sum(n) == doctest::Approx(1.0));
  const VectorXd neg = -VectorXd::Ones(3);
  CHECK(normalize_positive(neg) == neg);
}

TEST_CASE("ranking breaks ties by lowest id") {
  VectorXd v(5);
  v << 1.0, 3.0, 1.0, 3.0, -2.0;
  CHECK(ranking(v) == std::vector<int>{1, 3, 0, 2, 4});
}

TEST_CASE("class level aggregates") {
  std::mt19937_64 rng(16);
  const auto clf = random_head(rng, 8, 3);
  std::vector<VectorXd> acts;
  for (int i = 0; i < 6; ++i) acts.push_back(random_matrix(rng, 8, 1).cwiseAbs());

  const auto one = class_level(clf, {acts[0]}, 1);
  CHECK(one.samples == 1);
  CHECK((one.normalized - normalize_positive(explain(clf, acts[0], 1, 8).contributions)).norm() < 1e-12);

  const auto g = class_level(clf, acts, 2);
  if (g.normalized.maxCoeff() > 0) CHECK(std::abs(positive_sum(g.normalized) - 1.0) < 1e-6);
  CHECK(g.ranking == ranking(g.normalized));
  auto doubled = acts;
  doubled.insert(doubled.end(), acts.begin(), acts.end());
  CHECK((class_level(clf, doubled, 2).normalized - g.normalized).norm() < 1e-12);

  CHECK(code_of([&] { class_level(clf, {}, 0); }) == ErrorCode::kEmptyClass);
  CHECK(code_of([&] { class_level(clf, acts, 3); }) == ErrorCode::kBadClass);
}

TEST_CASE("task level aggregates") {
  std::mt19937_64 rng(17);
  const auto clf = random_head(rng, 8, 3);
  const VectorXd a = random_matrix(rng, 8, 1);
  const auto single = task_level(clf, {a});
  CHECK((single.normalized - normalize_positive(explain(clf, a, kAutoClass, 8).contributions)).norm() < 1e-12);
  CHECK(single.target_class == kAutoClass);

  std::vector<VectorXd> acts;
  for (int i = 0; i < 20; ++i) acts.push_back(random_matrix(rng, 8, 1).cwiseAbs());
  SparseClassifier uniform;
  uniform.weights = MatrixXd::Zero(8, 3);
  uniform.weights.col(0).setConstant(1.0);
  uniform.bias = VectorXd::Zero(3);
  // Activations that are a permutation-symmetric sum produce a flat ranking.
  std::vector<VectorXd> symmetric;
  for (int s = 0; s < 8; ++s) {
    VectorXd v = VectorXd::Zero(8);
    v(s) = 1.0;
    symmetric.push_back(v);
  }
  const auto flat = task_level(uniform, symmetric);
  CHECK((flat.normalized.array() - 1.0 / 8.0).abs().maxCoeff() < 1e-12);

  const auto t = task_level(clf, acts);
  CHECK(std::abs(positive_sum(t.normalized) - 1.0) < 1e-6);
  CHECK(t.samples == 20);
  CHECK(code_of([&] { task_level(clf, std::vector<VectorXd>{}); }) == ErrorCode::kEmptySplit);
}

TEST_CASE("weight report") {
  SparseClassifier clf;
  clf.weights = MatrixXd::Zero(5, 3);
  clf.bias = VectorXd::Zero(3);
  clf.weights.col(0) << 0.9, 0.0, 0.4, -2.0, 0.0;
  clf.weights.col(1) << 0.0, 0.7, 0.0, 0.0, 0.1;
  clf.weights.col(2) << 0.3, 0.8, 0.0, 0.0, 0.0;

  const auto disjoint = weight_report(clf, {0, 1}, 3);
  CHECK(disjoint.shared.empty());
  REQUIRE(disjoint.top.size() == 2);
  REQUIRE(disjoint.top[0].size() == 2);  // negative weights are not reported
  CHECK(disjoint.top[0][0].concept_id == 0);
  CHECK(disjoint.top[0][1].concept_id == 2);

  const auto both = weight_report(clf, {0, 1, 2}, 2);
  REQUIRE(both.shared.size() == 2);
  CHECK(both.shared[0].concept_id == 1);
  CHECK(both.shared[0].weight == 0.7);
  CHECK(both.shared[1].concept_id == 0);
  CHECK(both.shared[1].weight == 0.3);

  CHECK(weight_report(clf, {2}, 1).top[0].front().concept_id == 1);
  CHECK(code_of([&] { weight_report(clf, {3}, 2); }) == ErrorCode::kBadClass);
}
