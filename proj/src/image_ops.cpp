#include "navfeat/image_ops.hpp"

#include <algorithm>

namespace navfeat {

ImageF ToFloat(const Image8& img) {
  ImageF out(img.width(), img.height());
  for (std::size_t i = 0; i < img.size(); ++i) out.data()[i] = img.data()[i] / 255.0f;
  return out;
}

Image8 ToU8(const ImageF& img) {
  Image8 out(img.width(), img.height());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const float v = std::clamp(img.data()[i], 0.0f, 1.0f);
    out.data()[i] = static_cast<std::uint8_t>(std::round(v * 255.0f));
  }
  return out;
}

float SampleBilinear(const ImageF& img, double x, double y) {
  const int w = img.width();
  const int h = img.height();
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = (1 - fx) * img(x0, y0) + fx * img(x1, y0);
  const double bottom = (1 - fx) * img(x0, y1) + fx * img(x1, y1);
  return static_cast<float>((1 - fy) * top + fy * bottom);
}

ImageF WarpHomography(const ImageF& src, const Homography& H, int out_width, int out_height) {
  const Homography Hinv = H.inverse();
  ImageF out(out_width, out_height);
  for (int y = 0; y < out_height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      const Eigen::Vector2d s = ApplyHomography(Hinv, Eigen::Vector2d(x, y));
      out(x, y) = SampleBilinear(src, s.x(), s.y());
    }
  }
  return out;
}

ImageF ResizeByScale(const ImageF& src, double scale, int out_width, int out_height) {
  ImageF out(out_width, out_height);
  for (int y = 0; y < out_height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      out(x, y) = SampleBilinear(src, x / scale, y / scale);
    }
  }
  return out;
}

ImageF BoxBlur3(const ImageF& src) {
  const int w = src.width();
  const int h = src.height();
  ImageF out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double sum = 0.0;
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (src.contains(x + dx, y + dy)) {
            sum += src(x + dx, y + dy);
            ++n;
          }
        }
      }
      out(x, y) = static_cast<float>(sum / n);
    }
  }
  return out;
}

ImageF Crop(const ImageF& src, int x0, int y0, int width, int height) {
  Check(x0 >= 0 && y0 >= 0 && x0 + width <= src.width() && y0 + height <= src.height(),
        ErrorCode::kInvalidArgument, "crop window outside image");
  ImageF out(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) out(x, y) = src(x0 + x, y0 + y);
  return out;
}

std::optional<Eigen::Vector2d> CorrespondenceField::Lookup(double x, double y) const {
  const int w = width();
  const int h = height();
  const double rx = std::round(x);
  const double ry = std::round(y);
  const int nx = static_cast<int>(rx);
  const int ny = static_cast<int>(ry);
  if (std::abs(x - rx) < 1e-9 && std::abs(y - ry) < 1e-9) {
    if (nx < 0 || ny < 0 || nx >= w || ny >= h || !Valid(nx, ny)) return std::nullopt;
    return At(nx, ny);
  }
  if (x < -0.5 || y < -0.5 || x > w - 0.5 || y > h - 0.5) return std::nullopt;
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = x0 + 1;
  const int y1 = y0 + 1;
  if (x0 >= 0 && y0 >= 0 && x1 < w && y1 < h && Valid(x0, y0) && Valid(x1, y0) &&
      Valid(x0, y1) && Valid(x1, y1)) {
    const double fx = x - x0;
    const double fy = y - y0;
    return (1 - fy) * ((1 - fx) * At(x0, y0) + fx * At(x1, y0)) +
           fy * ((1 - fx) * At(x0, y1) + fx * At(x1, y1));
  }
  const int cx = std::clamp(nx, 0, w - 1);
  const int cy = std::clamp(ny, 0, h - 1);
  if (!Valid(cx, cy)) return std::nullopt;
  return At(cx, cy);
}

std::size_t CorrespondenceField::CountValid() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < x_.size(); ++i)
    if (!std::isnan(x_.data()[i]) && !std::isnan(y_.data()[i])) ++n;
  return n;
}

namespace {

bool InsideWithTolerance(const Eigen::Vector2d& p, int w, int h) {
  return p.x() >= -0.5 && p.y() >= -0.5 && p.x() <= w - 0.5 && p.y() <= h - 0.5;
}

}  // namespace

CorrespondenceField HomographyField(const Homography& H, int width, int height,
                                    int partner_width, int partner_height) {
  CorrespondenceField field(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Vector3d q = H * Eigen::Vector3d(x, y, 1.0);
      if (q.z() <= 0) continue;
      const Eigen::Vector2d p = q.hnormalized();
      if (InsideWithTolerance(p, partner_width, partner_height)) field.Set(x, y, p);
    }
  }
  return field;
}

CorrespondenceField TransformField(const CorrespondenceField& field, const Homography& Ta,
                                   const Homography& Tb, int new_width, int new_height,
                                   int new_partner_width, int new_partner_height) {
  const Homography Ta_inv = Ta.inverse();
  CorrespondenceField out(new_width, new_height);
  for (int y = 0; y < new_height; ++y) {
    for (int x = 0; x < new_width; ++x) {
      const Eigen::Vector2d src = ApplyHomography(Ta_inv, Eigen::Vector2d(x, y));
      const auto target = field.Lookup(src.x(), src.y());
      if (!target) continue;
      const Eigen::Vector2d moved = ApplyHomography(Tb, *target);
      if (InsideWithTolerance(moved, new_partner_width, new_partner_height)) out.Set(x, y, moved);
    }
  }
  return out;
}

}  // namespace navfeat
