#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "navfeat/common.hpp"
#include "navfeat/image_ops.hpp"

namespace navfeat {

// Per-pixel descriptors plus one or two detection maps at a pyramid scale.
struct DenseFeatureMap {
  int width = 0;
  int height = 0;
  int dim = 0;
  std::vector<float> descriptors;  // row-major, dim floats per pixel
  ImageF detection;
  std::optional<ImageF> reliability;
  float scale = 1.0f;

  DenseFeatureMap() = default;
  DenseFeatureMap(int w, int h, int d);

  const float* descriptor(int x, int y) const {
    return descriptors.data() + (static_cast<std::size_t>(y) * width + x) * dim;
  }
  float* descriptor(int x, int y) {
    return descriptors.data() + (static_cast<std::size_t>(y) * width + x) * dim;
  }
  // Throws Error(kInvalidArgument) on shape mismatch, unnormalized
  // descriptors (beyond `norm_tol`) or detection values outside [0, 1].
  void Validate(double norm_tol = 1e-4) const;
};

struct Feature {
  double x = 0.0;  // original image frame
  double y = 0.0;
  double scale = 1.0;
  double score = 0.0;
  Eigen::VectorXf descriptor;
};

using SparseFeatures = std::vector<Feature>;

struct PyramidLevel {
  ImageF image;
  double scale = 1.0;
};

// Scales 1, k^-1, k^-2, ... (k = 2^(1/s)) while the short edge stays >= min_side.
std::vector<PyramidLevel> BuildPyramid(const ImageF& img, int scales_per_octave = 4,
                                       int min_side = 128);

struct ExtractParams {
  double feat_ratio = 0.001;
  double det_threshold = 0.5;
  int nms_radius = 1;  // 1 = 3x3 neighborhood
};

struct Keypoint {
  int px = 0;  // pixel in the map
  int py = 0;
  double score = 0.0;
};

// Local maxima of the 3x3-blurred detection map. A pixel survives when its
// (blurred, raw) pair is lexicographically greater than every neighbor's, so
// flat plateaus yield nothing while a lone peak still beats the box it
// spreads into. Keeps the top round(feat_ratio * w * h) by score.
std::vector<Keypoint> DetectKeypoints(const ImageF& detection, const ImageF* reliability,
                                      const ExtractParams& params);

SparseFeatures ExtractSparse(const DenseFeatureMap& map, const ExtractParams& params = {});

// Harris response, normalized to the image maximum, in [0, 1].
ImageF HarrisResponse(const ImageF& img);

constexpr int kBaselineDim = 128;

// Gradient-orientation histogram (4x4 cells x 8 bins over a 16x16 window),
// Gaussian weighted and L2 normalized.
Eigen::VectorXf BaselineDescriptor(const ImageF& img, int x, int y);

DenseFeatureMap BaselineDenseExtract(const ImageF& img);
DenseFeatureMap BaselineDenseExtract(const Image8& img);

// Sparse extraction with the baseline without materializing dense descriptors.
SparseFeatures BaselineExtractSparse(const ImageF& img, double scale,
                                     const ExtractParams& params = {});

struct Match {
  std::size_t a = 0;
  std::size_t b = 0;
  double distance = 0.0;
  bool possible = false;
  bool correct = false;
  double error_px = kNaN;  // distance to the ground-truth location when possible
  Eigen::Vector2d ground_truth = Eigen::Vector2d::Constant(kNaN);
};

struct MatchSet {
  std::vector<Match> matches;
  std::size_t proposed = 0;
  std::size_t possible = 0;  // a-features with a correspondence, matched or not
  std::size_t correct = 0;
};

double DescriptorDistance(const Eigen::VectorXf& a, const Eigen::VectorXf& b);

// Mutual nearest neighbors under Euclidean descriptor distance. Ties resolve
// to the lowest index on either side. `allowed`, when given, restricts the
// candidate pairs.
MatchSet MatchMutualNN(const SparseFeatures& fa, const SparseFeatures& fb,
                       const std::function<bool(std::size_t, std::size_t)>& allowed = nullptr);

struct MultiscaleResult {
  MatchSet matches;
  double scale_ratio = kNaN;  // intrinsic scale of B relative to A
};

// Unconstrained matching, then re-matching restricted to pairs whose scale
// ratio lies within one pyramid step of the median ratio.
MultiscaleResult MatchMultiscale(const SparseFeatures& fa, const SparseFeatures& fb,
                                 int scales_per_octave = 4);

// Marks matches possible/correct against the correspondence field.
void LabelMatches(MatchSet* m, const SparseFeatures& fa, const SparseFeatures& fb,
                  const CorrespondenceField& corr, double tol_px = 5.0);

}  // namespace navfeat
