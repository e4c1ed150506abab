#include "ctrecon/hierarchy.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "ctrecon/csv.hpp"

namespace ctrecon {

HierarchySpec HierarchySpec::parse_csv(const std::string& text) {
  const auto lines = csv::split_lines(text);
  if (lines.empty()) throw HierarchyError("hierarchy file is empty (header row required)");
  const auto header = csv::split(lines.front());
  const int c_node = csv::column(header, "node_id");
  const int c_parent = csv::column(header, "parent_id");
  const int c_level = csv::column(header, "level");
  if (c_node < 0 || c_parent < 0 || c_level < 0) {
    throw HierarchyError("hierarchy header must contain node_id,parent_id,level");
  }
  const auto width = static_cast<std::size_t>(std::max({c_node, c_parent, c_level}));
  HierarchySpec spec;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto fields = csv::split(lines[i]);
    if (fields.size() <= width) {
      throw HierarchyError("hierarchy line " + std::to_string(i + 1) + " has too few fields");
    }
    spec.records.push_back({csv::trim(fields[c_node]), csv::trim(fields[c_parent]), csv::trim(fields[c_level])});
  }
  return spec;
}

HierarchySpec HierarchySpec::load_csv(const std::filesystem::path& path) {
  return parse_csv(csv::read_file(path));
}

std::string HierarchySpec::to_csv() const {
  std::ostringstream out;
  out << "node_id,parent_id,level\n";
  for (const auto& r : records) out << r.id << ',' << r.parent << ',' << r.level << '\n';
  return out.str();
}

HierarchySpec HierarchySpec::two_level(const std::string& root, const std::vector<std::string>& leaves,
                                       const std::string& root_level, const std::string& leaf_level) {
  HierarchySpec spec;
  spec.records.push_back({root, "", root_level});
  for (const auto& leaf : leaves) spec.records.push_back({leaf, root, leaf_level});
  return spec;
}

bool ValidationReport::has(IssueKind kind) const {
  return std::any_of(issues.begin(), issues.end(), [kind](const auto& i) { return i.kind == kind; });
}

std::string ValidationReport::summary() const {
  std::ostringstream out;
  out << (ok ? "ok" : "invalid") << ": n=" << n << " n_a=" << n_aggregate << " n_b=" << n_bottom
      << " roots=" << roots;
  for (const auto& issue : issues) {
    out << "\n  " << (issue.is_error ? "error" : "warning") << " [" << issue.node << "] " << issue.message;
  }
  return out.str();
}

ValidationReport validate_hierarchy(const HierarchySpec& spec) {
  ValidationReport report;
  auto add = [&report](IssueKind kind, std::string node, std::string msg, bool error = true) {
    report.issues.push_back({kind, std::move(node), std::move(msg), error});
  };

  std::map<std::string, const NodeRecord*> by_id;
  for (const auto& r : spec.records) {
    if (r.id.empty()) {
      add(IssueKind::kEmptyId, "", "node with empty id");
      continue;
    }
    if (!by_id.emplace(r.id, &r).second) add(IssueKind::kDuplicateId, r.id, "duplicate node id");
  }

  std::map<std::string, std::size_t> child_count;
  for (const auto& [id, rec] : by_id) {
    if (rec->parent.empty()) {
      ++report.roots;
      continue;
    }
    if (!by_id.contains(rec->parent)) {
      add(IssueKind::kOrphan, id, "parent '" + rec->parent + "' does not exist");
      continue;
    }
    ++child_count[rec->parent];
  }

  std::map<std::string, int> depth;
  for (const auto& [id, rec] : by_id) {
    std::set<std::string> seen{id};
    std::string cur = rec->parent;
    int d = 0;
    bool cyclic = false;
    while (!cur.empty()) {
      if (!seen.insert(cur).second) {
        cyclic = true;
        break;
      }
      auto it = by_id.find(cur);
      if (it == by_id.end()) break;
      ++d;
      cur = it->second->parent;
    }
    if (cyclic) {
      add(IssueKind::kCycle, id, "parent chain contains a cycle");
    } else {
      depth[id] = d;
    }
  }
  if (report.roots == 0 && !by_id.empty()) add(IssueKind::kCycle, "", "no root node");

  std::set<std::string> aggregate_levels;
  for (const auto& [id, rec] : by_id) {
    if (child_count[id] > 0) aggregate_levels.insert(rec->level);
  }
  std::set<int> leaf_depths;
  for (const auto& [id, rec] : by_id) {
    if (child_count[id] > 0) {
      ++report.n_aggregate;
    } else {
      ++report.n_bottom;
      if (aggregate_levels.contains(rec->level)) {
        add(IssueKind::kChildlessAggregate, id, "node at aggregate level '" + rec->level + "' has no children");
      }
      if (auto it = depth.find(id); it != depth.end()) leaf_depths.insert(it->second);
    }
  }
  if (leaf_depths.size() > 1) {
    add(IssueKind::kMixedDepth, "", "leaves sit at " + std::to_string(leaf_depths.size()) + " different depths",
        false);
  }
  report.n = report.n_aggregate + report.n_bottom;
  report.ok = std::none_of(report.issues.begin(), report.issues.end(), [](const auto& i) { return i.is_error; });
  return report;
}

Hierarchy Hierarchy::build(const HierarchySpec& spec) {
  const auto report = validate_hierarchy(spec);
  if (!report.ok) throw HierarchyError("invalid hierarchy: " + report.summary());

  std::map<std::string, const NodeRecord*> by_id;
  std::map<std::string, std::vector<std::string>> children;
  for (const auto& r : spec.records) {
    by_id[r.id] = &r;
    if (!r.parent.empty()) children[r.parent].push_back(r.id);
  }
  auto depth_of = [&](const std::string& id) {
    int d = 0;
    for (auto cur = by_id.at(id)->parent; !cur.empty(); cur = by_id.at(cur)->parent) ++d;
    return d;
  };

  struct Key {
    int depth;
    std::string id;
    auto operator<=>(const Key&) const = default;
  };
  std::vector<Key> aggregates, leaves;
  for (const auto& [id, rec] : by_id) {
    (children.contains(id) ? aggregates : leaves).push_back({depth_of(id), id});
  }
  std::sort(aggregates.begin(), aggregates.end());
  std::sort(leaves.begin(), leaves.end());

  Hierarchy h;
  h.spec_ = spec;
  h.bottom_ = leaves.size();
  for (const auto* block : {&aggregates, &leaves}) {
    for (const auto& k : *block) {
      h.index_[k.id] = h.ids_.size();
      h.ids_.push_back(k.id);
      h.levels_.push_back(by_id.at(k.id)->level);
      h.depths_.push_back(k.depth);
    }
  }

  const std::size_t n = h.ids_.size();
  const std::size_t n_a = n - h.bottom_;
  h.leaves_under_.assign(n, {});
  for (std::size_t b = 0; b < h.bottom_; ++b) {
    // walk from the leaf to its root, registering b under every ancestor
    std::string cur = h.ids_[n_a + b];
    while (!cur.empty()) {
      h.leaves_under_[h.index_.at(cur)].push_back(b);
      cur = by_id.at(cur)->parent;
    }
  }
  h.summing_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(h.bottom_));
  for (std::size_t i = 0; i < n; ++i) {
    std::sort(h.leaves_under_[i].begin(), h.leaves_under_[i].end());
    for (auto b : h.leaves_under_[i]) h.summing_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b)) = 1.0;
  }
  return h;
}

std::optional<std::size_t> Hierarchy::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> Hierarchy::bottom_ids() const {
  return {ids_.begin() + static_cast<std::ptrdiff_t>(aggregate_count()), ids_.end()};
}

std::vector<std::string> Hierarchy::levels_bottom_up() const {
  // order labels by the deepest depth at which they occur, deepest first
  std::map<std::string, int> deepest;
  for (std::size_t i = 0; i < size(); ++i) {
    auto [it, inserted] = deepest.emplace(levels_[i], depths_[i]);
    if (!inserted) it->second = std::max(it->second, depths_[i]);
  }
  std::vector<std::pair<int, std::string>> order;
  for (const auto& [label, d] : deepest) order.emplace_back(-d, label);
  std::sort(order.begin(), order.end());
  std::vector<std::string> out;
  for (auto& [d, label] : order) out.push_back(label);
  return out;
}

std::vector<std::size_t> Hierarchy::members_of_level(const std::string& level) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (levels_[i] == level) out.push_back(i);
  }
  return out;
}

Eigen::MatrixXd build_summing_matrix(const HierarchySpec& spec) {
  return Hierarchy::build(spec).summing_matrix();
}

TemporalScheme::TemporalScheme(int m, std::vector<int> orders) : m_(m), orders_(std::move(orders)) {
  if (m_ <= 0) throw std::invalid_argument("temporal scheme: m must be positive");
  std::sort(orders_.begin(), orders_.end());
  orders_.erase(std::unique(orders_.begin(), orders_.end()), orders_.end());
  if (orders_.size() < 2 && m_ > 1) throw std::invalid_argument("temporal scheme: need at least two orders");
  if (orders_.empty() || orders_.front() != 1 || orders_.back() != m_) {
    throw std::invalid_argument("temporal scheme: orders must include 1 and m=" + std::to_string(m_));
  }
  for (int k : orders_) {
    if (k <= 0 || m_ % k != 0) {
      throw std::invalid_argument("temporal scheme: order " + std::to_string(k) + " does not divide m=" +
                                  std::to_string(m_));
    }
  }
}

std::size_t TemporalScheme::order_index(int order) const {
  auto it = std::find(orders_.begin(), orders_.end(), order);
  if (it == orders_.end()) throw std::out_of_range("order " + std::to_string(order) + " not in scheme");
  return static_cast<std::size_t>(it - orders_.begin());
}

bool TemporalScheme::has_order(int order) const {
  return std::find(orders_.begin(), orders_.end(), order) != orders_.end();
}

int TemporalScheme::positions_per_period() const {
  int total = 0;
  for (int k : orders_) total += m_ / k;
  return total;
}

int TemporalScheme::position_offset(int order) const {
  int offset = 0;
  for (auto it = orders_.rbegin(); it != orders_.rend(); ++it) {
    if (*it == order) return offset;
    offset += m_ / *it;
  }
  throw std::out_of_range("order " + std::to_string(order) + " not in scheme");
}

Eigen::MatrixXd TemporalScheme::summing_matrix() const {
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(positions_per_period(), m_);
  for (int k : orders_) {
    const int off = position_offset(k);
    for (int j = 0; j < m_ / k; ++j) s.block(off + j, j * k, 1, k).setOnes();
  }
  return s;
}

std::string TemporalScheme::describe() const {
  std::ostringstream out;
  out << "m=" << m_ << " K={";
  for (std::size_t i = 0; i < orders_.size(); ++i) out << (i ? "," : "") << orders_[i];
  out << "}";
  return out.str();
}

namespace {

template <typename Matrix>
Matrix aggregate_rows(const Matrix& bottom, const Hierarchy& h) {
  if (static_cast<std::size_t>(bottom.rows()) != h.bottom_count()) {
    throw std::invalid_argument("cross_sectional_aggregate: panel has " + std::to_string(bottom.rows()) +
                                " rows but hierarchy has " + std::to_string(h.bottom_count()) + " leaves");
  }
  Matrix full = Matrix::Zero(static_cast<Eigen::Index>(h.size()), bottom.cols());
  for (std::size_t i = 0; i < h.size(); ++i) {
    for (auto b : h.leaves_under(i)) full.row(static_cast<Eigen::Index>(i)) += bottom.row(static_cast<Eigen::Index>(b));
  }
  return full;
}

}  // namespace

CountMatrix cross_sectional_aggregate(const CountMatrix& bottom, const Hierarchy& hierarchy) {
  return aggregate_rows(bottom, hierarchy);
}

SeriesMatrix cross_sectional_aggregate(const SeriesMatrix& bottom, const Hierarchy& hierarchy) {
  return aggregate_rows(bottom, hierarchy);
}

}  // namespace ctrecon
