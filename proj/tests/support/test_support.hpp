#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "navfeat/common.hpp"
#include "navfeat/pairing.hpp"

namespace navfeat::testing {

inline std::string FixturePath(const std::string& name) {
  return std::string(NAVFEAT_FIXTURE_DIR) + "/" + name;
}

// Smooth blob texture with plenty of corners; independent of the library RNG.
inline Image8 TexturedImage(int w, int h, std::uint32_t seed, int blobs = 120) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> ux(0.0, w), uy(0.0, h), us(2.0, 9.0), ua(-1.0, 1.0);
  std::vector<double> acc(static_cast<std::size_t>(w) * h, 0.0);
  for (int k = 0; k < blobs; ++k) {
    const double cx = ux(gen), cy = uy(gen), s = us(gen), a = ua(gen);
    const int r = static_cast<int>(3 * s) + 1;
    for (int y = std::max(0, int(cy) - r); y < std::min(h, int(cy) + r + 1); ++y)
      for (int x = std::max(0, int(cx) - r); x < std::min(w, int(cx) + r + 1); ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        acc[static_cast<std::size_t>(y) * w + x] += a * std::exp(-d2 / (2 * s * s));
      }
  }
  double lo = acc[0], hi = acc[0];
  for (double v : acc) lo = std::min(lo, v), hi = std::max(hi, v);
  Image8 img(w, h);
  for (std::size_t i = 0; i < acc.size(); ++i)
    img.data()[i] = static_cast<std::uint8_t>(std::lround(255.0 * (acc[i] - lo) / (hi - lo)));
  return img;
}

// Unit sphere seen by a pinhole camera at `distance` along -`boresight`,
// with image up (-y) chosen as close to `up` as possible. Background is NaN.
inline GeoImage SphereView(const std::string& id, int w, int h, double focal,
                           const Eigen::Vector3d& boresight, double distance,
                           const Eigen::Vector3d& up = Eigen::Vector3d::UnitZ()) {
  GeoImage g;
  g.id = id;
  g.intrinsics = Intrinsics::Pinhole(focal, focal, (w - 1) / 2.0, (h - 1) / 2.0);
  const Eigen::Vector3d zc = boresight.normalized();
  Eigen::Vector3d yc = -(up - up.dot(zc) * zc);
  if (yc.norm() < 1e-9) yc = zc.unitOrthogonal();
  yc.normalize();
  const Eigen::Vector3d xc = yc.cross(zc);
  Eigen::Matrix3d R;
  R.row(0) = xc;
  R.row(1) = yc;
  R.row(2) = zc;
  g.boresight = zc;
  g.cam_distance = distance;
  g.camera_rotation = Eigen::Quaterniond(R);
  const Eigen::Vector3d C = -distance * zc;
  g.coords = CoordGrid(w, h, Eigen::Vector3f::Constant(kNaNf));
  g.image = Image8(w, h, 0);
  const Eigen::Matrix3d K_inv = g.intrinsics.K.inverse();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector3d d = (R.transpose() * (K_inv * Eigen::Vector3d(x, y, 1))).normalized();
      const double b = d.dot(C), c = C.squaredNorm() - 1.0, disc = b * b - c;
      if (disc < 0) continue;
      const Eigen::Vector3d p = C + (-b - std::sqrt(disc)) * d;
      g.coords(x, y) = p.cast<float>();
      // Lambert shading from a fixed light plus a surface pattern.
      const double shade = std::max(0.0, p.dot(Eigen::Vector3d(0.3, -0.5, 0.8).normalized()));
      const double pattern = 0.5 + 0.5 * std::sin(9 * p.x()) * std::cos(7 * p.y() + 3 * p.z());
      g.image(x, y) = static_cast<std::uint8_t>(std::lround(40 + 200 * shade * (0.5 + 0.5 * pattern)));
    }
  return g;
}

}  // namespace navfeat::testing
