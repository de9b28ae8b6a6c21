#pragma once

#include <string>

#include "navfeat/common.hpp"

namespace navfeat {

// Radiance grid as read from mission rasters; values finite and >= 0.
using RawImage = Grid<float>;

struct PreprocessParams {
  double p_lo = 0.05;        // percent
  double p_hi = 99.99;       // percent
  double gamma = 1.8;
  double sat_p_lo = 99.8;    // percent
  double sat_p_hi = 99.99;   // percent
  double sat_min_spread = 5.0;
  double bg_percentile = 4.0;  // percent
  double target_radius = 100.0;  // pixels, per dataset
  double min_target_contrast = 50.0;
  int min_side = 256;
  double max_black_row_fraction = 0.01;
  double highlight_margin = 1.2;

  void Validate() const;
};

enum class FilterReason {
  kAccepted,
  kTooSmall,
  kBlackRows,
  kDegenerate,
  kSaturated,
  kTargetTooSmall,
};

const char* FilterReasonName(FilterReason reason);

struct FilterResult {
  FilterReason reason = FilterReason::kAccepted;
  bool accepted() const { return reason == FilterReason::kAccepted; }
  Image8 image;  // 8-bit rescaled image when it could be computed
};

// Percentile (in percent) with linear interpolation between order statistics.
double Percentile(std::vector<double> values, double percent);

// Percentile rank that leaves a half disc of radius r above it in a w x h image:
// 1 - (pi r^2 / 2) / (w h), clamped to [0, 1]. Returned as a fraction.
double ForegroundPercentile(int width, int height, double radius);

// Single-pixel form of the rescale; `v_lo`/`v_hi` are the image percentiles.
std::uint8_t RescaleValue(double v, double v_lo, double v_hi, double gamma,
                          double highlight_margin = 1.2);

// Throws Error(kDegenerate) when v_hi <= v_lo.
Image8 RescaleTo8Bit(const RawImage& img, const PreprocessParams& params);

FilterResult FilterImage(const RawImage& img, const PreprocessParams& params);

}  // namespace navfeat
