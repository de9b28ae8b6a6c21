#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "navfeat/preprocess.hpp"

using namespace navfeat;

namespace {

// A bright half-disc target of the given radius on a dark background.
// The background carries a little noise, so it does not quantize to whole black rows.
RawImage TargetImage(int w, int h, double radius, float bg = 5.0f, float fg = 900.0f) {
  RawImage img(w, h);
  std::mt19937 gen(static_cast<unsigned>(w * 131 + h));
  std::uniform_real_distribution<float> noise(0.0f, 2.0f);
  std::exponential_distribution<float> albedo(1.0f);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img(x, y) = bg + noise(gen);
      const double dx = x - w / 2.0, dy = y - h / 2.0;
      // Albedo with a bright tail, like a real surface; keeps the top percentiles apart.
      if (dx * dx + dy * dy <= radius * radius) img(x, y) = fg * (0.6f + 0.1f * albedo(gen));
    }
  return img;
}

}  // namespace

TEST(Rescale, EndpointsAndMidpoint) {
  EXPECT_EQ(RescaleValue(10, 10, 110, 1.8), 0);
  EXPECT_EQ(RescaleValue(132, 10, 110, 1.8), 255);
  EXPECT_EQ(RescaleValue(500, 10, 110, 1.8), 255);  // clipped
  EXPECT_EQ(RescaleValue(0, 10, 110, 1.8), 0);
  // (71 - 10) / (132 - 10) = 0.5 exactly; 255 * 0.5^(1/1.8) = 173.5007
  EXPECT_EQ(RescaleValue(71, 10, 110, 1.8), 174);
}

TEST(Rescale, MarginIsOnTheHighPercentileOnly) {
  // Without the margin v_hi itself maps to 255.
  EXPECT_EQ(RescaleValue(110, 10, 110, 1.8, 1.0), 255);
  const double ratio = 100.0 / 122.0;
  EXPECT_EQ(RescaleValue(110, 10, 110, 1.8),
            static_cast<int>(std::floor(255.0 * std::pow(ratio, 1 / 1.8) + 0.5)));
}

TEST(Percentile, LinearBetweenOrderStatistics) {
  EXPECT_DOUBLE_EQ(Percentile({4, 1, 3, 2}, 0), 1.0);
  EXPECT_DOUBLE_EQ(Percentile({4, 1, 3, 2}, 100), 4.0);
  EXPECT_DOUBLE_EQ(Percentile({4, 1, 3, 2}, 50), 2.5);
  EXPECT_DOUBLE_EQ(Percentile({10, 20}, 25), 12.5);
  EXPECT_THROW(Percentile({}, 50), Error);
}

TEST(ForegroundPercentile, DirectEvaluation) {
  EXPECT_NEAR(ForegroundPercentile(1024, 1024, 185), 0.9487, 1e-4);
  EXPECT_DOUBLE_EQ(ForegroundPercentile(100, 100, 1000), 0.0);
  EXPECT_DOUBLE_EQ(ForegroundPercentile(100, 50, 0), 1.0);
}

TEST(Rescale, OutputRangeAndMonotone) {
  std::mt19937 gen(1);
  std::exponential_distribution<float> e(0.01f);
  PreprocessParams p;
  for (int k = 0; k < 200; ++k) {
    RawImage img(16, 8);
    for (auto& v : img.data()) v = e(gen);
    const Image8 out = RescaleTo8Bit(img, p);
    for (std::size_t i = 0; i < img.size(); ++i)
      for (std::size_t j = 0; j < img.size(); ++j)
        if (img.data()[i] <= img.data()[j]) {
          ASSERT_LE(out.data()[i], out.data()[j]);
        }
  }
}

TEST(Rescale, InvariantToPositiveScaling) {
  std::mt19937 gen(2);
  std::uniform_real_distribution<float> u(0.0f, 1000.0f);
  RawImage img(32, 32);
  for (auto& v : img.data()) v = u(gen);
  RawImage scaled = img;
  for (auto& v : scaled.data()) v *= 8.0f;  // exact in binary floating point
  EXPECT_EQ(RescaleTo8Bit(img, {}), RescaleTo8Bit(scaled, {}));
}

TEST(Rescale, DegenerateImageThrows) {
  try {
    RescaleTo8Bit(RawImage(8, 8, 3.0f), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerate);
  }
}

TEST(Filter, TooSmall) {
  EXPECT_EQ(FilterImage(TargetImage(255, 400, 100), {}).reason, FilterReason::kTooSmall);
}

TEST(Filter, AllBlackIsBlackRows) {
  EXPECT_EQ(FilterImage(RawImage(300, 300, 0.0f), {}).reason, FilterReason::kBlackRows);
}

TEST(Filter, MissingRowsAboveOnePercent) {
  RawImage img = TargetImage(300, 300, 100);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 300; ++x) img(x, y) = 0.0f;
  // The background of 5 stays above the low percentile only where rows exist.
  PreprocessParams p;
  p.p_lo = 0.0;
  EXPECT_EQ(FilterImage(img, p).reason, FilterReason::kBlackRows);
  for (int x = 0; x < 300; ++x) img(x, 0) = img(x, 1) = img(x, 2) = 5.0f;
  EXPECT_NE(FilterImage(img, p).reason, FilterReason::kBlackRows);  // 1 row of 300 < 1%
}

TEST(Filter, Saturated) {
  // 8-bit values: everything above the 99.8th percentile sits within 5 levels.
  RawImage img(300, 300);
  for (int y = 0; y < 300; ++y)
    for (int x = 0; x < 300; ++x) img(x, y) = static_cast<float>(10 + (x + y) % 200);
  for (int x = 0; x < 300; ++x)
    for (int y = 0; y < 30; ++y) img(x, y) = 1000.0f;  // 10% clipped highlight
  EXPECT_EQ(FilterImage(img, {}).reason, FilterReason::kSaturated);
}

TEST(Filter, TargetTooSmallAndAccepted) {
  PreprocessParams p;
  p.target_radius = 100;
  EXPECT_EQ(FilterImage(TargetImage(400, 400, 30), p).reason, FilterReason::kTargetTooSmall);
  const auto ok = FilterImage(TargetImage(400, 400, 150), p);
  EXPECT_TRUE(ok.accepted()) << FilterReasonName(ok.reason);
  EXPECT_EQ(ok.image.width(), 400);
}

TEST(Filter, Deterministic) {
  const RawImage img = TargetImage(300, 280, 120);
  const auto a = FilterImage(img, {});
  const auto b = FilterImage(img, {});
  EXPECT_EQ(a.reason, b.reason);
  EXPECT_EQ(a.image, b.image);
}

TEST(Params, Validation) {
  PreprocessParams p;
  p.p_lo = 50;
  p.p_hi = 40;
  EXPECT_THROW(p.Validate(), Error);
  p = {};
  p.gamma = 0;
  EXPECT_THROW(p.Validate(), Error);
  p = {};
  p.target_radius = -1;
  EXPECT_THROW(p.Validate(), Error);
}
