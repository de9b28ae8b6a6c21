#pragma once

#include <optional>

#include "navfeat/common.hpp"
#include "navfeat/geometry.hpp"

namespace navfeat {

ImageF ToFloat(const Image8& img);  // values scaled to [0, 1]
Image8 ToU8(const ImageF& img);     // clamps to [0, 1], rounds half away from zero

// Bilinear sample with border replication.
float SampleBilinear(const ImageF& img, double x, double y);

// Output pixel p takes the source value at H^-1 p (H maps source -> output).
ImageF WarpHomography(const ImageF& src, const Homography& H, int out_width, int out_height);

// Resizes with the pixel-center convention x_src = x_dst / scale, so that
// coordinates map back by dividing by the scale.
ImageF ResizeByScale(const ImageF& src, double scale, int out_width, int out_height);

// 3x3 mean filter; border pixels average over their in-bounds neighbors.
ImageF BoxBlur3(const ImageF& src);

ImageF Crop(const ImageF& src, int x0, int y0, int width, int height);

// Dense map from image A pixels to sub-pixel coordinates in image B.
// NaN marks a missing correspondence.
class CorrespondenceField {
 public:
  CorrespondenceField() = default;
  CorrespondenceField(int width, int height)
      : x_(width, height, kNaNf), y_(width, height, kNaNf) {}

  int width() const { return x_.width(); }
  int height() const { return x_.height(); }

  bool Valid(int x, int y) const { return !std::isnan(x_(x, y)) && !std::isnan(y_(x, y)); }
  Eigen::Vector2d At(int x, int y) const { return {x_(x, y), y_(x, y)}; }
  void Set(int x, int y, const Eigen::Vector2d& v) {
    x_(x, y) = static_cast<float>(v.x());
    y_(x, y) = static_cast<float>(v.y());
  }
  void SetRaw(int x, int y, float vx, float vy) {
    x_(x, y) = vx;
    y_(x, y) = vy;
  }
  void Invalidate(int x, int y) { SetRaw(x, y, kNaNf, kNaNf); }

  // Sub-pixel lookup: exact pixel when (x, y) is within 1e-9 of a pixel
  // center, bilinear when all four neighbors are valid, otherwise the
  // nearest pixel if it is valid.
  std::optional<Eigen::Vector2d> Lookup(double x, double y) const;

  std::size_t CountValid() const;

  const Grid<float>& xs() const { return x_; }
  const Grid<float>& ys() const { return y_; }
  Grid<float>& xs() { return x_; }
  Grid<float>& ys() { return y_; }

 private:
  Grid<float> x_;
  Grid<float> y_;
};

// Field produced by a homography: entries that land outside a
// partner_width x partner_height image (with 0.5 px tolerance) are NaN.
CorrespondenceField HomographyField(const Homography& H, int width, int height,
                                    int partner_width, int partner_height);

// Remaps a field through output-side transforms: the new field at pixel p of
// the transformed A image is Tb(field(Ta^-1 p)), invalidated when it leaves
// the new B bounds.
CorrespondenceField TransformField(const CorrespondenceField& field, const Homography& Ta,
                                   const Homography& Tb, int new_width, int new_height,
                                   int new_partner_width, int new_partner_height);

}  // namespace navfeat
