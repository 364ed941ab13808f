#include "pcbear/concept_discovery.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "pcbear/error.hpp"
#include "pcbear/tensor_io.hpp"

using nlohmann::json;

namespace pcbear {

const char* to_string(Metric metric) noexcept {
  return metric == Metric::kEuclidean ? "euclidean" : "cosine";
}

Metric metric_from_string(const std::string& s) {
  if (s == "euclidean") return Metric::kEuclidean;
  if (s == "cosine") return Metric::kCosine;
  fail(ErrorCode::kInvalidArgument, "unknown metric '" + s + "'");
}

namespace {

struct DenseRows {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;
  const double* row(std::size_t i) const { return data.data() + i * cols; }
};

DenseRows to_dense(const RowsView& v) {
  DenseRows d{v.rows, v.cols, std::vector<double>(v.data.begin(), v.data.end())};
  return d;
}

double squared_distance(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::vector<std::size_t> nearest(const DenseRows& pts, Metric metric) {
  const std::size_t n = pts.rows;
  std::vector<double> inv_norm;
  if (metric == Metric::kCosine) {
    inv_norm.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double norm = std::sqrt(std::inner_product(pts.row(i), pts.row(i) + pts.cols,
                                                       pts.row(i), 0.0));
      inv_norm[i] = norm > 0.0 ? 1.0 / norm : 0.0;
    }
  }
  std::vector<std::size_t> nn(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = i == 0 ? 1 : 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double d;
      if (metric == Metric::kEuclidean) {
        d = squared_distance(pts.row(i), pts.row(j), pts.cols);
      } else {
        const double dot = std::inner_product(pts.row(i), pts.row(i) + pts.cols, pts.row(j), 0.0);
        d = 1.0 - dot * inv_norm[i] * inv_norm[j];
      }
      if (d < best) {
        best = d;
        best_j = j;
      }
    }
    nn[i] = best_j;
  }
  return nn;
}

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
};

// Components of the first-neighbor graph, labelled in order of their lowest
// member. Linking i to nn(i) also covers the nn(i) == nn(j) rule.
std::vector<int> first_neighbor_components(const std::vector<std::size_t>& nn, std::size_t* count) {
  DisjointSets sets(nn.size());
  for (std::size_t i = 0; i < nn.size(); ++i) sets.unite(i, nn[i]);
  std::vector<int> label(nn.size(), -1);
  std::map<std::size_t, int> root_label;
  int next = 0;
  for (std::size_t i = 0; i < nn.size(); ++i) {
    auto [it, inserted] = root_label.emplace(sets.find(i), next);
    if (inserted) ++next;
    label[i] = it->second;
  }
  *count = static_cast<std::size_t>(next);
  return label;
}

DenseRows cluster_means(const DenseRows& pts, const std::vector<int>& assignment,
                        std::size_t clusters) {
  DenseRows means{clusters, pts.cols, std::vector<double>(clusters * pts.cols, 0.0)};
  std::vector<std::size_t> sizes(clusters, 0);
  for (std::size_t i = 0; i < pts.rows; ++i) {
    const auto c = static_cast<std::size_t>(assignment[i]);
    ++sizes[c];
    for (std::size_t k = 0; k < pts.cols; ++k) means.data[c * pts.cols + k] += pts.row(i)[k];
  }
  for (std::size_t c = 0; c < clusters; ++c) {
    for (std::size_t k = 0; k < pts.cols; ++k) {
      means.data[c * pts.cols + k] /= static_cast<double>(sizes[c]);
    }
  }
  return means;
}

}  // namespace

std::vector<std::size_t> first_neighbors(const RowsView& points, Metric metric) {
  if (points.rows < 2) fail(ErrorCode::kTooFewWindows, "need at least 2 rows");
  return nearest(to_dense(points), metric);
}

PartitionHierarchy finch_cluster(const RowsView& points, Metric metric) {
  if (points.rows < 2) {
    fail(ErrorCode::kTooFewWindows,
         "first-neighbor clustering needs at least 2 windows, got " + std::to_string(points.rows));
  }
  if (points.data.size() != points.rows * points.cols) {
    fail(ErrorCode::kShapeMismatch, "row view size disagrees with rows x cols");
  }
  if (!all_finite(points.data)) fail(ErrorCode::kNonFinite, "clustering input has NaN/Inf");

  const DenseRows original = to_dense(points);
  PartitionHierarchy h;
  h.metric = metric;

  std::size_t count = 0;
  auto labels = first_neighbor_components(nearest(original, metric), &count);
  h.partitions.push_back({count, labels, {}});

  while (count > 1) {
    const auto& prev = h.partitions.back();
    const DenseRows means = cluster_means(original, prev.assignment, prev.clusters);
    std::size_t next_count = 0;
    auto merge = first_neighbor_components(nearest(means, metric), &next_count);
    if (next_count >= prev.clusters) break;
    Partition next;
    next.clusters = next_count;
    next.assignment.resize(original.rows);
    for (std::size_t i = 0; i < original.rows; ++i) {
      next.assignment[i] = merge[static_cast<std::size_t>(prev.assignment[i])];
    }
    h.partitions.back().parent = std::move(merge);
    h.partitions.push_back(std::move(next));
    count = next_count;
  }
  return h;
}

Partition refine_partition(const Partition& start, const RowsView& points, std::size_t target,
                           Metric metric) {
  if (start.assignment.size() != points.rows) {
    fail(ErrorCode::kLengthMismatch, "partition and window matrix disagree on row count");
  }
  if (target < 1 || target > start.clusters) {
    fail(ErrorCode::kNoSuchPartition, "cannot refine " + std::to_string(start.clusters) +
                                          " clusters down to " + std::to_string(target));
  }
  const DenseRows original = to_dense(points);
  Partition p{start.clusters, start.assignment, {}};
  while (p.clusters > target) {
    const DenseRows means = cluster_means(original, p.assignment, p.clusters);
    const auto nn = nearest(means, metric);
    // The single closest first-neighbour pair; lowest index on ties.
    std::size_t a = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nn.size(); ++i) {
      double d;
      if (metric == Metric::kEuclidean) {
        d = squared_distance(means.row(i), means.row(nn[i]), means.cols);
      } else {
        const double* x = means.row(i);
        const double* y = means.row(nn[i]);
        const double dot = std::inner_product(x, x + means.cols, y, 0.0);
        const double nx = std::sqrt(std::inner_product(x, x + means.cols, x, 0.0));
        const double ny = std::sqrt(std::inner_product(y, y + means.cols, y, 0.0));
        d = nx > 0.0 && ny > 0.0 ? 1.0 - dot / (nx * ny) : 1.0;
      }
      if (d < best) {
        best = d;
        a = i;
      }
    }
    std::vector<std::size_t> link(p.clusters);
    std::iota(link.begin(), link.end(), 0);
    link[a] = nn[a];
    std::size_t count = 0;
    const auto merge = first_neighbor_components(link, &count);
    for (auto& c : p.assignment) c = merge[static_cast<std::size_t>(c)];
    p.clusters = count;
  }
  return p;
}

json PartitionHierarchy::to_json() const {
  json parts = json::array();
  for (const auto& p : partitions) {
    parts.push_back({{"m", p.clusters}, {"assignment", p.assignment}, {"parent", p.parent}});
  }
  const std::size_t n = partitions.empty() ? 0 : partitions.front().assignment.size();
  return {{"metric", pcbear::to_string(metric)}, {"n", n}, {"partitions", parts}};
}

PartitionHierarchy PartitionHierarchy::from_json(const json& j) {
  PartitionHierarchy h;
  try {
    h.metric = metric_from_string(j.at("metric").get<std::string>());
    for (const auto& p : j.at("partitions")) {
      h.partitions.push_back({p.at("m").get<std::size_t>(), p.at("assignment").get<std::vector<int>>(),
                              p.value("parent", std::vector<int>{})});
    }
  } catch (const json::exception& ex) {
    fail(ErrorCode::kBadManifest, std::string("hierarchy: ") + ex.what());
  }
  return h;
}

std::vector<std::size_t> medoids(const Partition& partition, const RowsView& points,
                                 std::size_t exact_cap, std::uint64_t seed) {
  if (partition.assignment.size() != points.rows) {
    fail(ErrorCode::kLengthMismatch, "partition and window matrix disagree on row count");
  }
  std::vector<std::vector<std::size_t>> members(partition.clusters);
  for (std::size_t i = 0; i < points.rows; ++i) {
    members.at(static_cast<std::size_t>(partition.assignment[i])).push_back(i);
  }
  std::vector<std::size_t> out(partition.clusters);
  for (std::size_t c = 0; c < partition.clusters; ++c) {
    auto candidates = members[c];
    if (candidates.empty()) fail(ErrorCode::kInvalidArgument, "empty cluster " + std::to_string(c));
    if (candidates.size() > exact_cap) {
      std::vector<std::size_t> sample;
      std::mt19937_64 rng(seed + c);
      std::sample(members[c].begin(), members[c].end(), std::back_inserter(sample), exact_cap, rng);
      candidates = std::move(sample);
    }
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_idx = candidates.front();
    for (std::size_t a : candidates) {
      const auto ra = points.row(a);
      double cost = 0.0;
      for (std::size_t b : candidates) {
        const auto rb = points.row(b);
        double s = 0.0;
        for (std::size_t k = 0; k < points.cols; ++k) {
          const double d = static_cast<double>(ra[k]) - rb[k];
          s += d * d;
        }
        cost += std::sqrt(s);
      }
      if (cost < best) {
        best = cost;
        best_idx = a;
      }
    }
    out[c] = best_idx;
  }
  return out;
}

std::vector<float> ConceptAnnotation::multi_hot(std::size_t video) const {
  std::vector<float> c(concepts, 0.0f);
  for (int id : omega.at(video)) c[static_cast<std::size_t>(id)] = 1.0f;
  return c;
}

ConceptAnnotation assign_concepts(const Partition& partition, std::span<const WindowRef> refs,
                                  const std::vector<std::string>& video_ids) {
  if (refs.size() != partition.assignment.size()) {
    fail(ErrorCode::kLengthMismatch, "window index and partition disagree on row count");
  }
  std::map<std::string, std::size_t> slot;
  for (std::size_t v = 0; v < video_ids.size(); ++v) slot.emplace(video_ids[v], v);
  ConceptAnnotation a;
  a.concepts = partition.clusters;
  a.video_ids = video_ids;
  a.omega.assign(video_ids.size(), {});
  for (std::size_t w = 0; w < refs.size(); ++w) {
    auto it = slot.find(refs[w].video_id);
    if (it == slot.end()) fail(ErrorCode::kUnknownVideo, "window of unknown video " + refs[w].video_id);
    a.omega[it->second].push_back(partition.assignment[w]);
  }
  for (auto& ids : a.omega) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  }
  return a;
}

double nmi(std::span<const int> assignment, std::span<const int> labels) {
  if (assignment.size() != labels.size()) {
    fail(ErrorCode::kLengthMismatch, "nmi inputs differ in length");
  }
  if (assignment.empty()) fail(ErrorCode::kLengthMismatch, "nmi needs at least one element");
  const double n = static_cast<double>(assignment.size());
  std::map<int, double> ca, cb;
  std::map<std::pair<int, int>, double> joint;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    ca[assignment[i]] += 1.0;
    cb[labels[i]] += 1.0;
    joint[{assignment[i], labels[i]}] += 1.0;
  }
  auto entropy = [n](const std::map<int, double>& counts) {
    double h = 0.0;
    for (const auto& [key, c] : counts) h -= (c / n) * std::log(c / n);
    return h;
  };
  const double ha = entropy(ca), hb = entropy(cb);
  if (ha <= 0.0 && hb <= 0.0) return 1.0;
  if (ha <= 0.0 || hb <= 0.0) return 0.0;
  double mi = 0.0;
  for (const auto& [key, c] : joint) {
    mi += (c / n) * std::log(c * n / (ca[key.first] * cb[key.second]));
  }
  return std::clamp(mi / std::sqrt(ha * hb), 0.0, 1.0);
}

PartitionPolicy PartitionPolicy::parse(const std::string& text) {
  PartitionPolicy p;
  std::string value = text;
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    const std::string kind = text.substr(0, colon);
    value = text.substr(colon + 1);
    if (kind == "exact-m" || kind == "exact") {
      p.kind = Kind::kExact;
    } else if (kind == "min-m" || kind == "min") {
      p.kind = Kind::kMin;
    } else if (kind == "index") {
      p.kind = Kind::kIndex;
    } else if (kind == "target-m" || kind == "target") {
      p.kind = Kind::kTarget;
    } else {
      fail(ErrorCode::kInvalidArgument, "unknown partition policy '" + kind + "'");
    }
  }
  try {
    std::size_t used = 0;
    p.value = std::stoul(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
  } catch (const std::exception&) {
    fail(ErrorCode::kInvalidArgument, "bad partition policy value '" + text + "'");
  }
  return p;
}

std::string PartitionPolicy::to_string() const {
  const char* name = kind == Kind::kExact    ? "exact-m"
                     : kind == Kind::kMin    ? "min-m"
                     : kind == Kind::kTarget ? "target-m"
                                             : "index";
  return std::string(name) + ":" + std::to_string(value);
}

std::size_t select_partition(const PartitionHierarchy& hierarchy, const PartitionPolicy& policy) {
  const auto& parts = hierarchy.partitions;
  if (parts.empty()) fail(ErrorCode::kNoSuchPartition, "empty hierarchy");
  switch (policy.kind) {
    case PartitionPolicy::Kind::kIndex:
      if (policy.value < parts.size()) return policy.value;
      break;
    case PartitionPolicy::Kind::kExact:
      for (std::size_t i = 0; i < parts.size(); ++i) {
        if (parts[i].clusters == policy.value) return i;
      }
      break;
    case PartitionPolicy::Kind::kMin:
    case PartitionPolicy::Kind::kTarget:
      for (std::size_t i = parts.size(); i-- > 0;) {
        if (parts[i].clusters >= policy.value) return i;
      }
      break;
  }
  fail(ErrorCode::kNoSuchPartition, "no partition satisfies " + policy.to_string());
}

Partition resolve_partition(const PartitionHierarchy& hierarchy, const RowsView& points,
                            const PartitionPolicy& policy, std::size_t* source) {
  const std::size_t index = select_partition(hierarchy, policy);
  if (source) *source = index;
  const auto& p = hierarchy.partitions[index];
  if (policy.kind != PartitionPolicy::Kind::kTarget || p.clusters == policy.value) {
    return {p.clusters, p.assignment, {}};
  }
  return refine_partition(p, points, policy.value, hierarchy.metric);
}

}  // namespace pcbear
