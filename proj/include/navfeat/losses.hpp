#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "navfeat/common.hpp"
#include "navfeat/features.hpp"
#include "navfeat/image_ops.hpp"

namespace navfeat {

// softplus(x) / (softplus(x) + 1)
double DetectionActivation(double x);
double Softplus(double x);

// Cosine similarity of repeatability patches across the pair. `stride` 0
// means n_rep / 2. Missing correspondences read the bottom-right value of
// rep_b. Patches with zero norm on either side are skipped.
double R2D2CosimLoss(const ImageF& rep_a, const ImageF& rep_b, const CorrespondenceField& corr,
                     int n_rep, int stride = 0);

// -mean(max - mean) over every n_rep x n_rep window (stride 1) of every grid.
double R2D2PeakyLoss(const std::vector<ImageF>& reps, int n_rep);

// Quantized AP with triangular bins over similarities in [-1, 1].
double ApQuantized(const std::vector<double>& similarities, std::size_t positive, int bins);

struct R2D2LossParams {
  double alpha = 1.0;
  double beta = 0.5;
  double kappa = 0.5;
  int kappa_warmup_steps = 1500;
  int n_rep = 16;
  double r_pos = 3.0;
  double r_neg = 8.0;
  int ap_bins = 25;
  int query_stride = 64;  // one query per 64 descriptors

  double a() const { return 2.0 * (1.0 - beta) * alpha; }
  double b() const { return 2.0 * beta * alpha; }
  void Validate() const;
};

// kappa ramps linearly from 0 at step 0 to kappa at the end of the warm-up.
double EffectiveKappa(const R2D2LossParams& params, int step);

// Descriptor maps are read per pixel; `rel_a` is the reliability of A.
double R2D2ApLoss(const DenseFeatureMap& desc_a, const DenseFeatureMap& desc_b,
                  const ImageF& rel_a, const CorrespondenceField& corr,
                  const R2D2LossParams& params, int step, std::uint64_t seed);

struct R2D2Loss {
  double ap = 0.0;
  double cosim = 0.0;
  double peaky = 0.0;
  double total = 0.0;
};

double R2D2TotalLoss(double ap, double cosim, double peaky, double alpha, double beta);

struct DiskLossParams {
  double rho_tp = 1.0;
  double rho_fp = -0.25;
  double epsilon = 1.5;
  double theta_m = 50.0;
  int cell = 8;
  double lambda_kp = 0.001;

  void Validate() const;
};

struct DiskSample {
  int x = 0;
  int y = 0;
  double prob = 0.0;  // softmax within the cell times K at the pixel
};

// One proposal per h x h cell (edge cells may be partial) drawn from the
// in-cell softmax of `logits` (K itself when null), accepted with
// probability K at the proposed pixel.
std::vector<DiskSample> DiskSampleFeatures(const ImageF& K, const ImageF* logits, int cell,
                                           std::uint64_t seed);

// Probability that a given pixel is proposed and accepted.
ImageF DiskAcceptanceProbability(const ImageF& K, const ImageF* logits, int cell);

struct DiskFeature {
  Eigen::Vector2d position;
  double prob = 1.0;  // P(i | K)
  Eigen::VectorXf descriptor;
};

std::vector<DiskFeature> AttachDescriptors(const std::vector<DiskSample>& samples,
                                           const DenseFeatureMap& map);

// Row softmax of -theta D times column softmax of -theta D.
Eigen::MatrixXd DiskMatchProbability(const std::vector<Eigen::VectorXf>& desc_a,
                                     const std::vector<Eigen::VectorXf>& desc_b, double theta_m);

struct DiskLoss {
  double reinforce = 0.0;  // L_RE
  double keypoint = 0.0;   // L_KP
  double total = 0.0;
};

DiskLoss ComputeDiskLoss(const std::vector<DiskFeature>& fa, const std::vector<DiskFeature>& fb,
                         const CorrespondenceField& corr, const DiskLossParams& params);

struct LafeLossInputs {
  const DenseFeatureMap* student = nullptr;
  const DenseFeatureMap* teacher = nullptr;
  double w1 = 0.0;
  double w2 = 0.0;
};

double BinaryCrossEntropy(double prediction, double target, double clamp = 1e-7);

double LafeDistillLoss(const LafeLossInputs& inputs);

}  // namespace navfeat
