#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "navfeat/common.hpp"
#include "navfeat/geometry.hpp"
#include "navfeat/image_ops.hpp"

namespace navfeat {

using CoordGrid = Grid<Eigen::Vector3f>;

inline bool IsFinite(const Eigen::Vector3f& p) { return p.allFinite(); }

// Grayscale image with optional per-pixel body-fixed coordinates and the
// viewing geometry it was captured under.
struct GeoImage {
  std::string id;
  Image8 image;
  CoordGrid coords;  // empty when not georeferenced; NaN = background
  Intrinsics intrinsics;
  Eigen::Vector3d boresight = Eigen::Vector3d::UnitZ();
  double cam_distance = 1.0;
  std::optional<double> pixel_extent_p90;
  std::optional<Grid<float>> pixel_extent;
  std::optional<Eigen::Vector3d> light_dir;
  std::optional<Eigen::Quaterniond> camera_rotation;  // body -> camera

  bool georeferenced() const { return !coords.empty(); }
  void Validate() const;
};

enum class PairSource { kReal, kSyntheticHomography, kSyntheticRendered };

const char* PairSourceName(PairSource s);
PairSource ParsePairSource(const std::string& s);

struct ImagePair {
  GeoImage a;
  GeoImage b;
  CorrespondenceField corr_ab;
  std::optional<double> view_angle_change_deg;  // phi
  std::optional<double> light_alpha_deg;
  std::optional<double> light_beta_deg;
  PairSource source = PairSource::kReal;
  std::optional<Homography> homography;  // synthetic-homography pairs only
};

struct CandidatePair {
  std::size_t first = 0;
  std::size_t second = 0;
  bool operator==(const CandidatePair&) const = default;
};

struct PairingParams {
  int clusters_per_image = 4;
  int kmeans_iterations = 20;
  int kmeans_max_points = 20000;  // stride-subsampled input to k-means
  double min_angle_deg = 10.0;
  double max_angle_deg = 30.0;
  double max_distance_ratio = 1.5;
  int max_pairs_per_image = 3;
  int max_correspondences = 90000;
  int neighbors = 8;
  double distance_sigmas = 3.0;
  int morph_kernel = 3;
  int morph_iterations = 1;
};

// k-means++ seeded Lloyd iterations over finite coordinates.
std::vector<Eigen::Vector3d> KMeans(const std::vector<Eigen::Vector3d>& points, int k,
                                    int iterations, std::uint64_t seed);

// Cross-image pair candidates from clustered pixel coordinates, shuffled with
// `seed`. Images without finite coordinates are skipped and reported through
// `skipped` when given.
std::vector<CandidatePair> BuildPairCandidates(const std::vector<GeoImage>& images,
                                               const PairingParams& params, std::uint64_t seed,
                                               std::vector<std::size_t>* skipped = nullptr);

double BoresightAngleDeg(const GeoImage& a, const GeoImage& b);

// Serialized bookkeeping for pair acceptance.
class PairingBook {
 public:
  explicit PairingBook(PairingParams params = {}) : params_(params) {}

  // Geometry-only criteria (symmetric in a, b).
  bool GeometryAcceptable(const GeoImage& a, const GeoImage& b) const;
  // Full decision; records the pair when accepted.
  bool Accept(const GeoImage& a, const GeoImage& b);
  int PairCount(const std::string& id) const;
  std::size_t accepted() const { return accepted_.size(); }

 private:
  PairingParams params_;
  std::map<std::string, int> counts_;
  std::set<std::pair<std::string, std::string>> accepted_;
};

int OtsuThreshold(const Image8& img);

// 1 = usable, 0 = shadowed. Dark pixels (<= Otsu threshold) form a shadow
// mask that is cleaned with erode, dilate, erode.
Mask ShadowMask(const Image8& img, const PairingParams& params = {});

Mask Erode(const Mask& m, int kernel);
Mask Dilate(const Mask& m, int kernel);

// 90th percentile ground footprint of one pixel; estimated from range and
// pixel angular size when the image carries no extents.
double PixelExtentP90(const GeoImage& img);

struct CorrespondenceResult {
  CorrespondenceField field;
  std::size_t count = 0;
  double sigma = 0.0;
};

// Throws Error(kEmptyInput) when no correspondence survives.
CorrespondenceResult ComputeCorrespondences(const GeoImage& a, const GeoImage& b,
                                            const Mask& mask_a, const Mask& mask_b,
                                            const PairingParams& params = {});

// Camera orientation used for rotation normalization: the stored one, or a
// PnP estimate from the pixel coordinates.
Eigen::Quaterniond CameraRotation(const GeoImage& img);

struct RotationNormalization {
  ImagePair pair;
  Homography transform_a = Homography::Identity();
  Homography transform_b = Homography::Identity();
  bool a_flagged = false;  // z axis along the optical axis; left unrotated
  bool b_flagged = false;
};

// Image-plane angle (radians) that turns the projected body z axis upright.
// Returns nullopt when the axis is parallel to the optical axis.
std::optional<double> UprightAngle(const Eigen::Quaterniond& camera_rotation,
                                   const Intrinsics& intrinsics);

// Rotates one image by `angle` about its center onto an enlarged canvas.
GeoImage RotateGeoImage(const GeoImage& img, double angle, Homography* transform);

RotationNormalization NormalizeRotation(const ImagePair& pair);

// Pairs an 8-bit image with a copy warped by a random homography.
ImagePair MakeSyntheticPair(const Image8& img, double lambda_r_deg, double lambda_p,
                            std::uint64_t seed);

// Gives a synthetic-homography pair a consistent planar scene: A looks at the
// plane z = depth from the origin, B is the rotating camera that reproduces H.
void AttachPlanarGeometry(ImagePair* pair, double focal_px, double depth);

enum class Difficulty { kEasy, kHard };
const char* DifficultyName(Difficulty d);

Difficulty ClassifyDifficulty(const ImagePair& pair);
Difficulty ClassifyDifficulty(PairSource source, std::optional<double> phi,
                              std::optional<double> alpha, std::optional<double> beta);

struct LightPerturbation {
  double alpha_deg = 0.0;
  double beta_deg = 0.0;
};

// Resamples alpha while `alpha_ok` rejects it (phase-angle validity hook).
LightPerturbation SampleLightPerturbation(
    double alpha_max_deg, double beta_max_deg, std::uint64_t seed,
    const std::function<bool(double)>& alpha_ok = nullptr, int max_attempts = 1000);

}  // namespace navfeat
