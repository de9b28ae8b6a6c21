#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "navfeat/common.hpp"
#include "navfeat/geometry.hpp"
#include "navfeat/pairing.hpp"

namespace navfeat {

struct Correspondence2D3D {
  Eigen::Vector3d point;  // body frame
  Eigen::Vector2d pixel;
};

// All camera poses consistent with three bearing/point pairs.
std::vector<Pose> SolveP3P(const std::vector<Eigen::Vector3d>& bearings,
                           const std::vector<Eigen::Vector3d>& points);

double ReprojectionError(const Pose& pose, const Intrinsics& K, const Correspondence2D3D& m);

struct RansacOptions {
  double max_reproj_px = 5.0;
  double confidence = 0.999;
  int max_iterations = 10000;
  int min_iterations = 1;
  int min_inliers = 4;
};

struct RansacResult {
  Pose pose;
  std::vector<char> inliers;
  std::size_t inlier_count = 0;
  int iterations = 0;
};

// Throws Error(kEstimationFailed) with fewer than 4 matches or when no model
// reaches `min_inliers`.
RansacResult EstimatePoseRansac(const std::vector<Correspondence2D3D>& matches,
                                const Intrinsics& K, const RansacOptions& options,
                                std::uint64_t seed);

struct RefineOptions {
  double huber_delta = 1.0;
  double cost_tolerance = 1e-10;
  int max_iterations = 100;
};

struct RefineResult {
  Pose pose;
  bool converged = false;
  int iterations = 0;
  std::vector<double> accepted_costs;  // cost after each accepted step, starting with the initial cost
};

// Pseudo-Huber cost of one residual norm.
double PseudoHuber(double r, double delta);
double RobustCost(const Pose& pose, const Intrinsics& K,
                  const std::vector<Correspondence2D3D>& matches, double delta);

// Pose-only Levenberg-Marquardt on the pseudo-Huber reprojection cost.
RefineResult RefinePose(const Pose& initial, const std::vector<Correspondence2D3D>& matches,
                        const Intrinsics& K, const RefineOptions& options = {});

std::size_t CountInliers(const Pose& pose, const Intrinsics& K,
                         const std::vector<Correspondence2D3D>& matches, double max_reproj_px);

// Keeps every k-th entry (k = floor(n / target)) once n exceeds twice the target.
template <typename T>
std::vector<T> SubsampleCorrespondences(const std::vector<T>& items, std::size_t target = 10000) {
  if (items.size() <= 2 * target) return items;
  const std::size_t k = items.size() / target;
  std::vector<T> out;
  out.reserve(items.size() / k + 1);
  for (std::size_t i = 0; i < items.size(); i += k) out.push_back(items[i]);
  return out;
}

// 2-D/3-D matches from the dense field: A's coordinates against B's pixels,
// in row-major order of A.
std::vector<Correspondence2D3D> DenseMatches(const ImagePair& pair);

struct GroundTruthOptions {
  double max_reproj_px = 0.75;
  std::size_t subsample_target = 10000;
  RefineOptions refine;
};

// Pose of camera B in the body frame. Returns nullopt when the dense field
// does not support an estimate.
std::optional<Pose> GroundTruthPose(const ImagePair& pair, std::uint64_t seed,
                                    const GroundTruthOptions& options = {});

double OrientationErrorDeg(const Pose& a, const Pose& b);

struct PoseOutcome {
  std::optional<Pose> pose;
  std::size_t inlier_count = 0;
  double orientation_error_deg = kNaN;
  bool failed = true;
};

struct OutcomeRules {
  std::size_t min_inliers = 12;
  double max_orientation_error_deg = 20.0;
};

PoseOutcome ClassifyOutcome(const std::optional<Pose>& estimate, const Pose& ground_truth,
                            std::size_t inliers_within_gate, const OutcomeRules& rules = {});

struct FeaturePoseOptions {
  RansacOptions ransac;  // 5 px gate
  RefineOptions refine;
  OutcomeRules rules;
};

// RANSAC, pose-only refinement, inlier recount at the RANSAC gate, then
// classification against the ground truth.
PoseOutcome EstimateFeaturePose(const std::vector<Correspondence2D3D>& matches,
                                const Intrinsics& K, const Pose& ground_truth,
                                std::uint64_t seed, const FeaturePoseOptions& options = {});

}  // namespace navfeat
