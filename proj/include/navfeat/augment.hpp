#pragma once

#include "navfeat/common.hpp"
#include "navfeat/geometry.hpp"
#include "navfeat/image_ops.hpp"
#include "navfeat/pairing.hpp"

namespace navfeat {

struct AugmentParams {
  double noise_amplitude = 0.0;  // lambda_n, fraction of full scale
  double max_gain = 1.0;         // lambda_g >= 1
  double max_rotation_deg = 0.0; // lambda_r
  double max_projection = 0.0;   // lambda_p
  int scales_per_octave = 4;     // s
  int short_edge_min = 256;
  int short_edge_max = 1024;
  int crop_size = 0;  // 0 = square crop of the scaled short edge
  bool random_scale = true;
  bool random_flip = true;
  int max_crop_attempts = 10;
  double student_max_gain = 1.0;   // lambda_g^st
  double student_noise_sd = 0.0;   // lambda_sigma^st

  void Validate() const;
};

// Pyramid step k = 2^(1/s).
double PyramidFactor(int scales_per_octave);

struct HomographySample {
  Homography H = Homography::Identity();
  double phi_deg = 0.0;
  double p1 = 0.0;
  double p2 = 0.0;
};

// Random rotation composed with a projective row [p1/w, p2/h, 1]; phi, p1, p2
// are drawn with piece-wise uniform squares.
HomographySample SampleHomographyDetailed(int width, int height, double lambda_r_deg,
                                          double lambda_p, std::uint64_t seed);
Homography SampleHomography(int width, int height, double lambda_r_deg, double lambda_p,
                            std::uint64_t seed);

// Augmented training pair in [0, 1] float intensities.
struct TrainingPair {
  ImageF a;
  ImageF b;
  CorrespondenceField corr_ab;
  Homography transform_a = Homography::Identity();  // original A -> output A
  Homography transform_b = Homography::Identity();  // original B -> output B
  bool flipped = false;
  double gain = 1.0;
  double relative_scale = 1.0;  // k_md after step 2
};

// Median local scale of B relative to A implied by the correspondences.
double EstimateRelativeScale(const CorrespondenceField& corr);

// Paired pipeline: scale A, scale B, weighted crop A, max-coverage crop B,
// joint flip, pixel noise, gain on B. Throws Error(kEmptyInput) when every
// crop attempt leaves no correspondences.
TrainingPair AugmentPair(const ImagePair& pair, const AugmentParams& params, std::uint64_t seed);

// Deterministic validation variant: clamp short edges into range and pick
// both crops to maximize surviving correspondences.
TrainingPair PrepareValidationPair(const ImagePair& pair, const AugmentParams& params);

struct AugmentedImage {
  ImageF image;
  Homography transform = Homography::Identity();  // source -> output
};

AugmentedImage AugmentSingle(const Image8& img, const AugmentParams& params, std::uint64_t seed);

// Validation variant for single images: clamp short edge, central crop.
AugmentedImage PrepareValidationSingle(const Image8& img, const AugmentParams& params);

// Random exposure then Gaussian noise, clipped to [0, 1].
ImageF StudentPerturb(const ImageF& img, double max_gain, double noise_sd, std::uint64_t seed);

// ln(g) ~ U(-ln max_gain, ln max_gain).
double SampleGain(Rng& rng, double max_gain);

}  // namespace navfeat
