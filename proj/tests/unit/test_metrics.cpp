#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "navfeat/metrics.hpp"

using namespace navfeat;

namespace {

// 1 / rank via an explicit stable descending sort.
double SortedAp(const std::vector<double>& s, std::size_t positive) {
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return s[a] > s[b]; });
  const auto it = std::find(order.begin(), order.end(), positive);
  return 1.0 / static_cast<double>(it - order.begin() + 1);
}

Feature F(double x, double y, Eigen::VectorXf d) {
  Feature f;
  f.x = x;
  f.y = y;
  f.descriptor = std::move(d);
  return f;
}

PairResult Result(Difficulty d, bool failed, double err, double m) {
  PairResult r;
  r.difficulty = d;
  r.pose.failed = failed;
  r.pose.orientation_error_deg = failed ? kNaN : err;
  r.metrics.valid = !std::isnan(m);
  r.metrics.m_score = m;
  return r;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

TEST(Ap, HandCases) {
  EXPECT_DOUBLE_EQ(ApExact({0.9, 0.5, 0.1}, 0), 1.0);
  EXPECT_DOUBLE_EQ(ApExact({0.9, 0.5, 0.1}, 2), 1.0 / 3);
  EXPECT_DOUBLE_EQ(ApExact({0.5, 0.5, 0.5}, 1), 0.5);  // ties keep input order
  EXPECT_DOUBLE_EQ(ApExact({0.5, 0.5, 0.5}, 0), 1.0);
  EXPECT_THROW(ApExact({0.5}, 1), Error);
}

TEST(Ap, AgreesWithStableSort) {
  std::mt19937 rng(4);
  std::uniform_int_distribution<int> level(0, 5);
  for (int t = 0; t < 2000; ++t) {
    std::vector<double> s(1 + t % 17);
    for (auto& v : s) v = level(rng) * 0.1;
    const std::size_t pos = t % s.size();
    ASSERT_DOUBLE_EQ(ApExact(s, pos), SortedAp(s, pos));
  }
}

TEST(Ap, MeanAndEmpty) {
  EXPECT_DOUBLE_EQ(MeanAp({{{1, 2}, 1}, {{1, 2}, 0}}), 0.75);
  EXPECT_THROW(MeanAp({}), Error);
}

TEST(PairMetricsTest, Ratios) {
  MatchSet m;
  m.matches.resize(4);
  m.matches[0].correct = m.matches[1].correct = true;
  m.matches[0].error_px = 1.0;
  m.matches[1].error_px = 3.0;
  m.proposed = 4;
  m.possible = 5;
  m.correct = 2;
  const auto p = ComputePairMetrics(m);
  EXPECT_TRUE(p.valid);
  EXPECT_DOUBLE_EQ(p.m_score, 0.4);
  EXPECT_DOUBLE_EQ(p.mma, 0.5);
  EXPECT_DOUBLE_EQ(p.le_px, 2.0);
  EXPECT_TRUE(std::isnan(p.map));
}

TEST(PairMetricsTest, NothingPossibleIsInvalid) {
  MatchSet m;
  m.proposed = 3;
  const auto p = ComputePairMetrics(m);
  EXPECT_FALSE(p.valid);
  EXPECT_TRUE(std::isnan(p.m_score));
  m.possible = 2;
  const auto q = ComputePairMetrics(m);
  EXPECT_DOUBLE_EQ(q.m_score, 0.0);
  EXPECT_DOUBLE_EQ(q.mma, 0.0);
  EXPECT_TRUE(std::isnan(q.le_px));
}

TEST(PairMetricsTest, QueriesFromFeatures) {
  const Eigen::Vector2f u(1, 0), v(0, 1), w = Eigen::Vector2f(1, 1).normalized();
  SparseFeatures fa{F(0, 0, u), F(5, 5, v)};
  SparseFeatures fb{F(10, 0, w), F(12, 0, u), F(50, 50, v)};
  MatchSet m;
  Match a;
  a.a = 0;
  a.b = 1;
  a.possible = a.correct = true;
  a.ground_truth = {10.5, 0};  // nearest b-feature is index 0
  a.error_px = 1.5;
  Match b;
  b.a = 1;
  b.b = 2;
  b.possible = true;
  b.ground_truth = {30, 30};  // no b-feature within 5 px
  m.matches = {a, b};
  m.proposed = 2;
  m.possible = 2;
  m.correct = 1;
  const auto q = BuildApQueries(m, fa, fb, 5.0);
  ASSERT_EQ(q.size(), 1u);
  EXPECT_EQ(q[0].positive, 0u);
  // u ranks b1 (distance 0) ahead of b0.
  EXPECT_DOUBLE_EQ(ComputePairMetrics(m, fa, fb).map, 0.5);
}

TEST(Percentile, NearestRank) {
  EXPECT_DOUBLE_EQ(NearestRankPercentile({5, 1, 3, 2, 4}, 50), 3);
  EXPECT_DOUBLE_EQ(NearestRankPercentile({5, 1, 3, 2, 4}, 85), 5);
  EXPECT_DOUBLE_EQ(NearestRankPercentile({1, 2, 3, 4}, 50), 2);
  EXPECT_DOUBLE_EQ(NearestRankPercentile({1, 2, 3, 4}, 0), 1);
  EXPECT_EQ(NearestRankPercentile({1, kInf, kInf}, 50), kInf);
  EXPECT_TRUE(std::isnan(NearestRankPercentile({}, 50)));
}

TEST(Report, Subsets) {
  std::vector<PairResult> rs{
      Result(Difficulty::kEasy, false, 1.0, 0.5), Result(Difficulty::kEasy, false, 3.0, 0.7),
      Result(Difficulty::kEasy, true, 0, 0.1),    Result(Difficulty::kHard, true, 0, kNaN),
      Result(Difficulty::kHard, false, 2.0, 0.2)};
  const auto r = AggregateReport(rs);
  EXPECT_EQ(r.easy.n, 3u);
  EXPECT_NEAR(r.easy.mean_m_score, 1.3 / 3, 1e-12);
  EXPECT_NEAR(r.easy.fail_pct, 100.0 / 3, 1e-12);
  EXPECT_DOUBLE_EQ(r.easy.p50, 3.0);
  EXPECT_EQ(r.easy.p85, kInf);
  EXPECT_EQ(r.hard.n, 2u);
  EXPECT_DOUBLE_EQ(r.hard.mean_m_score, 0.2);  // invalid metrics skipped
  EXPECT_DOUBLE_EQ(r.hard.fail_pct, 50.0);
  EXPECT_DOUBLE_EQ(r.hard.p50, 2.0);
  EXPECT_EQ(r.all.n, 5u);
  EXPECT_DOUBLE_EQ(r.all.fail_pct, 40.0);
  EXPECT_DOUBLE_EQ(r.all.p50, 3.0);
  EXPECT_EQ(r.all.subset, "all");
  const auto empty = AggregateReport({});
  EXPECT_EQ(empty.all.n, 0u);
  EXPECT_TRUE(std::isnan(empty.all.p50));
}
