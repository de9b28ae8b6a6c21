#pragma once

#include <string>
#include <vector>

#include "navfeat/common.hpp"
#include "navfeat/features.hpp"
#include "navfeat/pairing.hpp"
#include "navfeat/pose.hpp"

namespace navfeat {

struct PairMetrics {
  double m_score = kNaN;
  double mma = kNaN;
  double map = kNaN;
  double le_px = kNaN;
  std::size_t proposed = 0;
  std::size_t possible = 0;
  std::size_t correct = 0;
  bool valid = false;  // false when no match was possible
};

struct ApQuery {
  std::vector<double> similarities;
  std::size_t positive = 0;
};

// AP with a single positive: 1 / rank after a descending stable sort, where
// equal similarities keep their input order.
double ApExact(const std::vector<double>& similarities, std::size_t positive);

// Throws Error(kInvalidArgument) on an empty query set.
double MeanAp(const std::vector<ApQuery>& queries);

// Queries for mAP: every possible proposed match ranks all b-features by
// descriptor similarity; the positive is the b-feature nearest the ground
// truth location within `tol_px`.
std::vector<ApQuery> BuildApQueries(const MatchSet& m, const SparseFeatures& fa,
                                    const SparseFeatures& fb, double tol_px = 5.0);

PairMetrics ComputePairMetrics(const MatchSet& m, const std::vector<ApQuery>& queries = {});
PairMetrics ComputePairMetrics(const MatchSet& m, const SparseFeatures& fa,
                               const SparseFeatures& fb, double tol_px = 5.0);

struct PairResult {
  PairMetrics metrics;
  PoseOutcome pose;
  Difficulty difficulty = Difficulty::kEasy;
};

struct SubsetReport {
  std::string subset;
  std::size_t n = 0;
  double mean_m_score = kNaN;
  double fail_pct = kNaN;
  double p50 = kNaN;  // +inf when the percentile falls on a failure
  double p85 = kNaN;
};

struct DatasetReport {
  SubsetReport easy;
  SubsetReport hard;
  SubsetReport all;
};

// Nearest-rank percentile (rank = ceil(p/100 * n)); values may be +inf.
double NearestRankPercentile(std::vector<double> values, double percent);

DatasetReport AggregateReport(const std::vector<PairResult>& results);

}  // namespace navfeat
