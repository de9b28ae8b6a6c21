#include "navfeat/preprocess.hpp"

#include <algorithm>

namespace navfeat {

void PreprocessParams::Validate() const {
  Check(p_lo >= 0 && p_lo < p_hi && p_hi <= 100, ErrorCode::kInvalidArgument,
        "percentiles must satisfy 0 <= p_lo < p_hi <= 100");
  Check(gamma > 0, ErrorCode::kInvalidArgument, "gamma must be positive");
  Check(target_radius > 0, ErrorCode::kInvalidArgument, "target radius must be positive");
  Check(min_side >= 1, ErrorCode::kInvalidArgument, "min_side must be positive");
}

const char* FilterReasonName(FilterReason reason) {
  switch (reason) {
    case FilterReason::kAccepted: return "accepted";
    case FilterReason::kTooSmall: return "too_small";
    case FilterReason::kBlackRows: return "black_rows";
    case FilterReason::kDegenerate: return "degenerate";
    case FilterReason::kSaturated: return "saturated";
    case FilterReason::kTargetTooSmall: return "target_too_small";
  }
  return "unknown";
}

double Percentile(std::vector<double> values, double percent) {
  Check(!values.empty(), ErrorCode::kInvalidArgument, "percentile of empty set");
  const double pos = std::clamp(percent, 0.0, 100.0) / 100.0 * (values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - lo;
  std::nth_element(values.begin(), values.begin() + lo, values.end());
  const double v_lo = values[lo];
  if (frac == 0.0 || lo + 1 >= values.size()) return v_lo;
  const double v_hi = *std::min_element(values.begin() + lo + 1, values.end());
  return v_lo + frac * (v_hi - v_lo);
}

double ForegroundPercentile(int width, int height, double radius) {
  const double half_disc = 0.5 * kPi * radius * radius;
  return std::clamp(1.0 - half_disc / (static_cast<double>(width) * height), 0.0, 1.0);
}

std::uint8_t RescaleValue(double v, double v_lo, double v_hi, double gamma,
                          double highlight_margin) {
  const double ratio = std::clamp((v - v_lo) / (highlight_margin * v_hi - v_lo), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::round(255.0 * std::pow(ratio, 1.0 / gamma)));
}

namespace {

std::vector<double> AsDoubles(const RawImage& img) {
  return {img.data().begin(), img.data().end()};
}

std::vector<double> AsDoubles(const Image8& img) {
  return {img.data().begin(), img.data().end()};
}

template <typename T>
double BlackRowFraction(const Grid<T>& img) {
  int black = 0;
  for (int y = 0; y < img.height(); ++y) {
    bool all_zero = true;
    for (int x = 0; x < img.width() && all_zero; ++x) all_zero = img(x, y) == T{0};
    if (all_zero) ++black;
  }
  return static_cast<double>(black) / img.height();
}

}  // namespace

Image8 RescaleTo8Bit(const RawImage& img, const PreprocessParams& params) {
  params.Validate();
  Check(!img.empty(), ErrorCode::kInvalidArgument, "empty image");
  const auto values = AsDoubles(img);
  const double v_lo = Percentile(values, params.p_lo);
  const double v_hi = Percentile(values, params.p_hi);
  Check(v_hi > v_lo && params.highlight_margin * v_hi > v_lo, ErrorCode::kDegenerate,
        "degenerate image: high percentile does not exceed low percentile");
  Image8 out(img.width(), img.height());
  for (std::size_t i = 0; i < img.size(); ++i)
    out.data()[i] =
        RescaleValue(img.data()[i], v_lo, v_hi, params.gamma, params.highlight_margin);
  return out;
}

FilterResult FilterImage(const RawImage& img, const PreprocessParams& params) {
  params.Validate();
  FilterResult result;
  if (std::min(img.width(), img.height()) < params.min_side) {
    result.reason = FilterReason::kTooSmall;
    return result;
  }
  try {
    result.image = RescaleTo8Bit(img, params);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kDegenerate) throw;
    // A constant raster quantizes to all zeros; report missing rows first.
    result.reason = BlackRowFraction(img) > params.max_black_row_fraction
                        ? FilterReason::kBlackRows
                        : FilterReason::kDegenerate;
    return result;
  }
  if (BlackRowFraction(result.image) > params.max_black_row_fraction) {
    result.reason = FilterReason::kBlackRows;
    return result;
  }
  const auto values = AsDoubles(result.image);
  if (Percentile(values, params.sat_p_hi) - Percentile(values, params.sat_p_lo) <=
      params.sat_min_spread) {
    result.reason = FilterReason::kSaturated;
    return result;
  }
  const double p_fg =
      100.0 * ForegroundPercentile(img.width(), img.height(), params.target_radius);
  if (Percentile(values, p_fg) - Percentile(values, params.bg_percentile) <
      params.min_target_contrast) {
    result.reason = FilterReason::kTargetTooSmall;
    return result;
  }
  return result;
}

}  // namespace navfeat
