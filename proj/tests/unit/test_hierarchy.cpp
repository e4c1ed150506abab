#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "ctrecon/hierarchy.hpp"

using namespace ctrecon;

namespace {

HierarchySpec london_like() {
  HierarchySpec spec;
  spec.records.push_back({"M", "", "market"});
  for (int z = 0; z < 18; ++z) spec.records.push_back({"Z" + std::to_string(z), "M", "zone"});
  for (int a = 0; a < 117; ++a) spec.records.push_back({"A" + std::to_string(a), "Z" + std::to_string(a % 18), "area"});
  return spec;
}

}  // namespace

TEST(Validate, SmallestTree) {
  const auto rep = validate_hierarchy(HierarchySpec::two_level("M", {"a", "b"}));
  EXPECT_TRUE(rep.ok);
  EXPECT_EQ(rep.n, 3u);
  EXPECT_EQ(rep.n_bottom, 2u);
  EXPECT_EQ(rep.n_aggregate, 1u);
}

TEST(Validate, SelfParentIsCycle) {
  HierarchySpec spec;
  spec.records = {{"M", "", "market"}, {"a", "M", "area"}, {"x", "x", "area"}};
  const auto rep = validate_hierarchy(spec);
  EXPECT_FALSE(rep.ok);
  EXPECT_TRUE(rep.has(IssueKind::kCycle));
}

TEST(Validate, OrphanAndDuplicate) {
  HierarchySpec spec;
  spec.records = {{"M", "", "market"}, {"a", "M", "area"}, {"a", "M", "area"}, {"b", "nowhere", "area"}};
  const auto rep = validate_hierarchy(spec);
  EXPECT_FALSE(rep.ok);
  EXPECT_TRUE(rep.has(IssueKind::kDuplicateId));
  EXPECT_TRUE(rep.has(IssueKind::kOrphan));
}

TEST(Validate, ChildlessAggregate) {
  HierarchySpec spec;
  spec.records = {{"M", "", "market"}, {"Z1", "M", "zone"}, {"Z2", "M", "zone"}, {"a", "Z1", "area"}};
  const auto rep = validate_hierarchy(spec);
  EXPECT_FALSE(rep.ok);
  EXPECT_TRUE(rep.has(IssueKind::kChildlessAggregate));
}

TEST(Validate, MixedDepthIsWarningOnly) {
  HierarchySpec spec;
  spec.records = {{"M", "", "market"}, {"Z", "M", "zone"}, {"a", "Z", "area"}, {"b", "M", "area"}};
  const auto rep = validate_hierarchy(spec);
  EXPECT_TRUE(rep.ok);
  EXPECT_TRUE(rep.has(IssueKind::kMixedDepth));
}

TEST(Validate, LondonShape) {
  const auto rep = validate_hierarchy(london_like());
  EXPECT_TRUE(rep.ok) << rep.summary();
  EXPECT_EQ(rep.n, 136u);
  EXPECT_EQ(rep.n_bottom, 117u);
  EXPECT_EQ(rep.n_aggregate, 19u);
}

TEST(SummingMatrix, ParentTwoChildren) {
  const auto S = build_summing_matrix(HierarchySpec::two_level("M", {"a", "b"}));
  Eigen::MatrixXd expected(3, 2);
  expected << 1, 1, 1, 0, 0, 1;
  EXPECT_EQ(S, expected);
}

TEST(SummingMatrix, LeafOnlyIsIdentity) {
  HierarchySpec spec;
  spec.records = {{"c", "", "area"}, {"a", "", "area"}, {"b", "", "area"}};
  const auto S = build_summing_matrix(spec);
  EXPECT_EQ(S, Eigen::MatrixXd::Identity(3, 3));
}

TEST(SummingMatrix, ChainIsOnesColumn) {
  HierarchySpec spec;
  spec.records = {{"M", "", "market"}, {"Z", "M", "zone"}, {"A", "Z", "area"}};
  const auto S = build_summing_matrix(spec);
  ASSERT_EQ(S.rows(), 3);
  ASSERT_EQ(S.cols(), 1);
  EXPECT_EQ(S, Eigen::MatrixXd::Ones(3, 1));
}

TEST(SummingMatrix, RowSumsCountDescendants) {
  const auto h = Hierarchy::build(london_like());
  const auto& S = h.summing_matrix();
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double expected = static_cast<double>(h.leaves_under(i).size());
    EXPECT_EQ(S.row(static_cast<Eigen::Index>(i)).sum(), expected) << h.id(i);
  }
  EXPECT_EQ(S.bottomRows(117), Eigen::MatrixXd::Identity(117, 117));
  EXPECT_EQ(S.row(0).sum(), 117.0);
}

TEST(SummingMatrix, OrderingIsDeterministic) {
  auto spec = london_like();
  const auto h1 = Hierarchy::build(spec);
  std::mt19937 rng(7);
  std::shuffle(spec.records.begin(), spec.records.end(), rng);
  const auto h2 = Hierarchy::build(spec);
  EXPECT_EQ(h1.node_ids(), h2.node_ids());
  EXPECT_EQ(h1.summing_matrix(), h2.summing_matrix());
}

TEST(SpecCsv, RoundTrip) {
  const auto spec = london_like();
  const auto back = HierarchySpec::parse_csv(spec.to_csv());
  EXPECT_EQ(Hierarchy::build(back).node_ids(), Hierarchy::build(spec).node_ids());
  EXPECT_THROW(HierarchySpec::parse_csv("a,b,c\nx,,y\n"), HierarchyError);
}

TEST(TemporalScheme, Invariants) {
  EXPECT_THROW(TemporalScheme(34, {2, 34}), std::invalid_argument);
  EXPECT_THROW(TemporalScheme(34, {1, 3, 34}), std::invalid_argument);
  EXPECT_THROW(TemporalScheme(34, {1, 2}), std::invalid_argument);
  const TemporalScheme citi(48, {48, 1, 2, 3, 4, 6, 8, 12, 16, 24});
  EXPECT_EQ(citi.p(), 10u);
  EXPECT_EQ(citi.orders().front(), 1);
  EXPECT_EQ(citi.positions_per_period(), 48 + 24 + 16 + 12 + 8 + 6 + 4 + 3 + 2 + 1);
  EXPECT_EQ(citi.position_offset(48), 0);
  EXPECT_EQ(citi.position_offset(1), citi.positions_per_period() - 48);
}

TEST(TemporalScheme, SummingMatrixAggregatesOnePeriod) {
  const TemporalScheme s(4, {1, 2, 4});
  const auto St = s.summing_matrix();
  Eigen::MatrixXd expected(7, 4);
  expected << 1, 1, 1, 1,  //
      1, 1, 0, 0,          //
      0, 0, 1, 1,          //
      Eigen::MatrixXd::Identity(4, 4);
  EXPECT_EQ(St, expected);
}

TEST(TemporalAggregate, HandSum) {
  EXPECT_EQ(temporal_aggregate(std::vector<int>{1, 2, 3, 4}, 2), (std::vector<int>{3, 7}));
  const std::vector<double> x{1.5, -2.0, 7.25};
  EXPECT_EQ(temporal_aggregate(x, 1), x);
  EXPECT_THROW(temporal_aggregate(x, 2), std::invalid_argument);
}

TEST(TemporalAggregate, LondonDayCount) {
  std::vector<std::int64_t> series(13090, 1);
  const auto daily = temporal_aggregate(series, 34);
  EXPECT_EQ(daily.size(), 385u);
  EXPECT_EQ(std::accumulate(daily.begin(), daily.end(), std::int64_t{0}), 13090);
}

TEST(TemporalAggregate, NestingConsistency) {
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> draw(0, 50);
  std::vector<std::int64_t> s(48 * 5);
  for (auto& v : s) v = draw(rng);
  const TemporalScheme citi(48, {1, 2, 3, 4, 6, 8, 12, 16, 24, 48});
  for (int k1 : citi.orders()) {
    for (int k2 : citi.orders()) {
      if (!citi.has_order(k1 * k2)) continue;
      EXPECT_EQ(temporal_aggregate(temporal_aggregate(s, k1), k2), temporal_aggregate(s, k1 * k2)) << k1 << "x" << k2;
    }
  }
  const auto top = temporal_aggregate(s, 48);
  for (std::size_t d = 0; d < top.size(); ++d) {
    EXPECT_EQ(top[d], std::accumulate(s.begin() + static_cast<long>(48 * d), s.begin() + static_cast<long>(48 * (d + 1)),
                                      std::int64_t{0}));
  }
}

TEST(CrossSectional, ConstantLeaves) {
  const auto h = Hierarchy::build(HierarchySpec::two_level("M", {"a", "b"}));
  CountMatrix bottom(2, 5);
  bottom.row(0).setConstant(1);
  bottom.row(1).setConstant(2);
  const auto full = cross_sectional_aggregate(bottom, h);
  EXPECT_TRUE((full.row(0).array() == 3).all());
  EXPECT_EQ(full.bottomRows(2), bottom);
  EXPECT_TRUE((cross_sectional_aggregate(CountMatrix::Zero(2, 5).eval(), h).array() == 0).all());
}

TEST(CrossSectional, MatchesDenseProduct) {
  HierarchySpec spec;
  spec.records = {{"M", "", "market"}, {"Z", "M", "zone"}, {"a", "Z", "area"}, {"b", "Z", "area"}, {"c", "M", "area"}};
  const auto h = Hierarchy::build(spec);
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> draw(0, 9);
  CountMatrix bottom(3, 20);
  for (Eigen::Index i = 0; i < bottom.size(); ++i) bottom.data()[i] = draw(rng);
  const auto full = cross_sectional_aggregate(bottom, h);
  const Eigen::MatrixXd oracle = h.summing_matrix() * bottom.cast<double>();
  EXPECT_EQ(full.cast<double>().eval(), oracle);
}

TEST(CrossSectional, CommutesWithTemporal) {
  const auto h = Hierarchy::build(london_like());
  std::mt19937 rng(5);
  std::uniform_int_distribution<int> draw(0, 6);
  CountMatrix bottom(117, 34 * 3);
  for (Eigen::Index i = 0; i < bottom.size(); ++i) bottom.data()[i] = draw(rng);
  const auto full = cross_sectional_aggregate(bottom, h);
  CountMatrix bottom_daily(117, 3);
  for (Eigen::Index b = 0; b < 117; ++b) {
    std::vector<std::int64_t> row(bottom.row(b).begin(), bottom.row(b).end());
    const auto d = temporal_aggregate(row, 34);
    for (Eigen::Index t = 0; t < 3; ++t) bottom_daily(b, t) = d[static_cast<std::size_t>(t)];
  }
  const auto full_daily = cross_sectional_aggregate(bottom_daily, h);
  for (Eigen::Index i = 0; i < full.rows(); ++i) {
    std::vector<std::int64_t> row(full.row(i).begin(), full.row(i).end());
    const auto d = temporal_aggregate(row, 34);
    for (Eigen::Index t = 0; t < 3; ++t) ASSERT_EQ(full_daily(i, t), d[static_cast<std::size_t>(t)]);
  }
}
