#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace ctrecon {

/// Row-major integer matrix: one row per series, one column per time slot.
using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
/// Row-major real matrix with the same layout as CountMatrix.
using SeriesMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class HierarchyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NodeRecord {
  std::string id;
  std::string parent;  // empty for a root
  std::string level;
};

/// Cross-sectional tree as loaded from disk: (node, parent, level) triples.
struct HierarchySpec {
  std::vector<NodeRecord> records;

  /// Reads `node_id,parent_id,level` records; the header row is mandatory.
  static HierarchySpec load_csv(const std::filesystem::path& path);
  static HierarchySpec parse_csv(const std::string& text);
  std::string to_csv() const;

  /// Convenience builder: one root plus `groups` of leaves, optionally with an
  /// intermediate level. Used for synthetic markets and tests.
  static HierarchySpec two_level(const std::string& root, const std::vector<std::string>& leaves,
                                 const std::string& root_level = "market",
                                 const std::string& leaf_level = "area");
};

enum class IssueKind { kDuplicateId, kEmptyId, kOrphan, kCycle, kChildlessAggregate, kMixedDepth };

struct ValidationIssue {
  IssueKind kind;
  std::string node;
  std::string message;
  bool is_error;  // mixed depth is reported but tolerated
};

struct ValidationReport {
  bool ok = false;
  std::vector<ValidationIssue> issues;
  std::size_t n = 0;
  std::size_t n_aggregate = 0;
  std::size_t n_bottom = 0;
  std::size_t roots = 0;

  bool has(IssueKind kind) const;
  std::string summary() const;
};

ValidationReport validate_hierarchy(const HierarchySpec& spec);

/// Validated, ordered cross-sectional hierarchy.
///
/// Nodes are ordered aggregates first, then leaves; within each block by
/// (depth, id). Leaf b therefore lives at node index `aggregate_count() + b`.
class Hierarchy {
 public:
  static Hierarchy build(const HierarchySpec& spec);

  std::size_t size() const { return ids_.size(); }
  std::size_t bottom_count() const { return bottom_; }
  std::size_t aggregate_count() const { return ids_.size() - bottom_; }
  bool is_bottom(std::size_t node) const { return node >= aggregate_count(); }

  const std::vector<std::string>& node_ids() const { return ids_; }
  const std::string& id(std::size_t node) const { return ids_.at(node); }
  const std::string& level(std::size_t node) const { return levels_.at(node); }
  int depth(std::size_t node) const { return depths_.at(node); }
  std::optional<std::size_t> index_of(const std::string& id) const;

  /// Bottom ids in column order of the summing matrix.
  std::vector<std::string> bottom_ids() const;
  /// Bottom positions (0..n_b-1) below or equal to `node`.
  std::span<const std::size_t> leaves_under(std::size_t node) const { return leaves_under_.at(node); }

  /// n x n_b binary matrix.
  const Eigen::MatrixXd& summing_matrix() const { return summing_; }

  /// Distinct level labels ordered bottom level first, then upwards.
  std::vector<std::string> levels_bottom_up() const;
  std::vector<std::size_t> members_of_level(const std::string& level) const;

  const HierarchySpec& spec() const { return spec_; }

 private:
  HierarchySpec spec_;
  std::vector<std::string> ids_;
  std::vector<std::string> levels_;
  std::vector<int> depths_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::size_t>> leaves_under_;
  std::size_t bottom_ = 0;
  Eigen::MatrixXd summing_;
};

Eigen::MatrixXd build_summing_matrix(const HierarchySpec& spec);

/// Temporal aggregation orders K with m base periods per top-level period.
class TemporalScheme {
 public:
  TemporalScheme(int m, std::vector<int> orders);

  int m() const { return m_; }
  const std::vector<int>& orders() const { return orders_; }
  std::size_t p() const { return orders_.size(); }
  int steps(int order) const { return m_ / order; }
  std::size_t order_index(int order) const;
  bool has_order(int order) const;
  /// Sum over K of m/k: the length of one period's stacked temporal vector.
  int positions_per_period() const;
  /// Offset of order `k` within the stacked vector, which lists orders from
  /// the coarsest (k = m) down to k = 1.
  int position_offset(int order) const;
  /// (sum_k m/k) x m matrix mapping one period's base slots to every order.
  Eigen::MatrixXd summing_matrix() const;

  std::string describe() const;

  bool operator==(const TemporalScheme&) const = default;

 private:
  int m_;
  std::vector<int> orders_;
};

/// Non-overlapping block sums of length k.
template <typename T>
std::vector<T> temporal_aggregate(std::span<const T> series, int k) {
  if (k <= 0) throw std::invalid_argument("temporal_aggregate: order must be positive");
  if (series.size() % static_cast<std::size_t>(k) != 0) {
    throw std::invalid_argument("temporal_aggregate: length " + std::to_string(series.size()) +
                                " is not divisible by order " + std::to_string(k));
  }
  std::vector<T> out(series.size() / static_cast<std::size_t>(k), T{});
  for (std::size_t j = 0; j < out.size(); ++j) {
    T acc{};
    for (int t = 0; t < k; ++t) acc += series[j * static_cast<std::size_t>(k) + static_cast<std::size_t>(t)];
    out[j] = acc;
  }
  return out;
}

template <typename T>
std::vector<T> temporal_aggregate(const std::vector<T>& series, int k) {
  return temporal_aggregate(std::span<const T>(series), k);
}

/// Rows of `bottom` follow `hierarchy.bottom_ids()`; result has one row per node.
CountMatrix cross_sectional_aggregate(const CountMatrix& bottom, const Hierarchy& hierarchy);
SeriesMatrix cross_sectional_aggregate(const SeriesMatrix& bottom, const Hierarchy& hierarchy);

}  // namespace ctrecon
