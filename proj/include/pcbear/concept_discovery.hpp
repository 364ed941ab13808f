#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcbear/pose_windows.hpp"

namespace pcbear {

// Read-only view of an n x dim row-major float matrix.
struct RowsView {
  std::span<const float> data;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::span<const float> row(std::size_t i) const { return data.subspan(i * cols, cols); }
};

inline RowsView view_of(const WindowCorpus& corpus) {
  return {corpus.rows, corpus.size(), corpus.dim()};
}

enum class Metric { kEuclidean, kCosine };

const char* to_string(Metric metric) noexcept;
Metric metric_from_string(const std::string& s);

struct Partition {
  std::size_t clusters = 0;         // m
  std::vector<int> assignment;      // window -> cluster id in [0, m)
  std::vector<int> parent;          // cluster -> id in the next coarser partition
};

// partitions[0] is the finest; cluster counts strictly decrease.
struct PartitionHierarchy {
  Metric metric = Metric::kEuclidean;
  std::vector<Partition> partitions;

  nlohmann::json to_json() const;
  static PartitionHierarchy from_json(const nlohmann::json& j);
};

// First-neighbor clustering. Each round links every item to its nearest
// neighbour (lowest index wins ties), takes connected components, and
// recurses on component means until one cluster remains or the count stops
// shrinking. Errors: TooFewWindows (n < 2), NonFinite.
PartitionHierarchy finch_cluster(const RowsView& points, Metric metric = Metric::kEuclidean);

// Merges the closest pair of cluster means (first-neighbour distance, lowest
// index on ties) one pair at a time until `target` clusters remain. Used when
// the hierarchy skips a requested count. Errors: NoSuchPartition when target
// is 0 or above the starting count.
Partition refine_partition(const Partition& start, const RowsView& points, std::size_t target,
                           Metric metric = Metric::kEuclidean);

// Index of the nearest other row for every row. Exposed for tests.
std::vector<std::size_t> first_neighbors(const RowsView& points, Metric metric);

inline constexpr std::size_t kMedoidExactCap = 2048;

// Per cluster, the member minimizing summed Euclidean distance to the other
// members (lowest index on ties). Clusters above `exact_cap` are scored on a
// seeded sample of `exact_cap` members.
std::vector<std::size_t> medoids(const Partition& partition, const RowsView& points,
                                 std::size_t exact_cap = kMedoidExactCap,
                                 std::uint64_t seed = 0);

struct ConceptAnnotation {
  std::size_t concepts = 0;  // m
  std::vector<std::string> video_ids;
  std::vector<std::vector<int>> omega;  // sorted unique concept ids per video

  std::vector<float> multi_hot(std::size_t video) const;
};

ConceptAnnotation assign_concepts(const Partition& partition, std::span<const WindowRef> refs,
                                  const std::vector<std::string>& video_ids);

// I(A;B) / sqrt(H(A) H(B)); 1 when both entropies vanish. Errors: LengthMismatch.
double nmi(std::span<const int> assignment, std::span<const int> labels);

struct PartitionPolicy {
  // target-m selects like min-m, then refines down to exactly m clusters.
  enum class Kind { kExact, kMin, kIndex, kTarget };
  Kind kind = Kind::kIndex;
  std::size_t value = 0;

  // "exact-m:30", "min-m:15", "target-m:3", "index:2" or a bare index "2".
  static PartitionPolicy parse(const std::string& text);
  std::string to_string() const;
};

// Errors: NoSuchPartition.
std::size_t select_partition(const PartitionHierarchy& hierarchy, const PartitionPolicy& policy);

// The selected partition, refined when the policy is target-m. `source`
// receives the hierarchy level it came from. Parent links are not kept.
Partition resolve_partition(const PartitionHierarchy& hierarchy, const RowsView& points,
                            const PartitionPolicy& policy, std::size_t* source = nullptr);

}  // namespace pcbear
