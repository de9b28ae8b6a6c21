#include "navfeat/metrics.hpp"

#include <algorithm>
#include <limits>

namespace navfeat {

double ApExact(const std::vector<double>& similarities, std::size_t positive) {
  Check(positive < similarities.size(), ErrorCode::kInvalidArgument, "positive index out of range");
  const double s = similarities[positive];
  std::size_t rank = 1;
  for (std::size_t i = 0; i < similarities.size(); ++i) {
    if (i == positive) continue;
    if (similarities[i] > s || (similarities[i] == s && i < positive)) ++rank;
  }
  return 1.0 / static_cast<double>(rank);
}

double MeanAp(const std::vector<ApQuery>& queries) {
  Check(!queries.empty(), ErrorCode::kInvalidArgument, "mean AP over an empty query set");
  double sum = 0.0;
  for (const auto& q : queries) sum += ApExact(q.similarities, q.positive);
  return sum / static_cast<double>(queries.size());
}

std::vector<ApQuery> BuildApQueries(const MatchSet& m, const SparseFeatures& fa,
                                    const SparseFeatures& fb, double tol_px) {
  std::vector<ApQuery> queries;
  for (const auto& match : m.matches) {
    if (!match.possible) continue;
    std::size_t positive = fb.size();
    double nearest = tol_px;
    for (std::size_t j = 0; j < fb.size(); ++j) {
      const double d = (Eigen::Vector2d(fb[j].x, fb[j].y) - match.ground_truth).norm();
      if (d <= nearest && (positive == fb.size() || d < nearest)) {
        nearest = d;
        positive = j;
      }
    }
    if (positive == fb.size()) continue;
    ApQuery q;
    q.positive = positive;
    q.similarities.reserve(fb.size());
    for (const auto& f : fb)
      q.similarities.push_back(-DescriptorDistance(fa[match.a].descriptor, f.descriptor));
    queries.push_back(std::move(q));
  }
  return queries;
}

PairMetrics ComputePairMetrics(const MatchSet& m, const std::vector<ApQuery>& queries) {
  PairMetrics p;
  p.proposed = m.proposed;
  p.possible = m.possible;
  p.correct = m.correct;
  if (m.possible == 0) return p;
  p.valid = true;
  p.m_score = static_cast<double>(m.correct) / static_cast<double>(m.possible);
  p.mma = m.proposed > 0 ? static_cast<double>(m.correct) / static_cast<double>(m.proposed) : 0.0;
  if (m.correct > 0) {
    double sum = 0.0;
    for (const auto& match : m.matches)
      if (match.correct) sum += match.error_px;
    p.le_px = sum / static_cast<double>(m.correct);
  }
  if (!queries.empty()) p.map = MeanAp(queries);
  return p;
}

PairMetrics ComputePairMetrics(const MatchSet& m, const SparseFeatures& fa,
                               const SparseFeatures& fb, double tol_px) {
  return ComputePairMetrics(m, BuildApQueries(m, fa, fb, tol_px));
}

double NearestRankPercentile(std::vector<double> values, double percent) {
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(std::clamp(percent, 0.0, 100.0) / 100.0 * n));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

namespace {

SubsetReport Summarize(const std::string& name, const std::vector<const PairResult*>& rs) {
  SubsetReport s;
  s.subset = name;
  s.n = rs.size();
  if (rs.empty()) return s;
  double m_sum = 0.0;
  std::size_t m_n = 0;
  std::size_t failed = 0;
  std::vector<double> errors;
  for (const auto* r : rs) {
    if (r->metrics.valid) {
      m_sum += r->metrics.m_score;
      ++m_n;
    }
    if (r->pose.failed) {
      ++failed;
      errors.push_back(std::numeric_limits<double>::infinity());
    } else {
      errors.push_back(r->pose.orientation_error_deg);
    }
  }
  s.mean_m_score = m_n > 0 ? m_sum / static_cast<double>(m_n) : kNaN;
  s.fail_pct = 100.0 * static_cast<double>(failed) / static_cast<double>(rs.size());
  s.p50 = NearestRankPercentile(errors, 50.0);
  s.p85 = NearestRankPercentile(errors, 85.0);
  return s;
}

}  // namespace

DatasetReport AggregateReport(const std::vector<PairResult>& results) {
  std::vector<const PairResult*> easy, hard, all;
  for (const auto& r : results) {
    all.push_back(&r);
    (r.difficulty == Difficulty::kEasy ? easy : hard).push_back(&r);
  }
  return {Summarize("easy", easy), Summarize("hard", hard), Summarize("all", all)};
}

}  // namespace navfeat
