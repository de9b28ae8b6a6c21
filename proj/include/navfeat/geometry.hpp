#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "navfeat/common.hpp"

namespace navfeat {

// Pinhole projection matrix. Usually upper triangular (fx, fy, cx, cy, skew),
// but in-plane image rotations are folded in directly, so a general 3x3 is
// allowed as long as it is invertible and maps the optical axis to w > 0.
struct Intrinsics {
  Eigen::Matrix3d K = Eigen::Matrix3d::Identity();

  static Intrinsics Pinhole(double fx, double fy, double cx, double cy, double skew = 0.0);

  bool IsPinhole() const;
  double fx() const { return K(0, 0); }
  double fy() const { return K(1, 1); }
  double cx() const { return K(0, 2); }
  double cy() const { return K(1, 2); }

  // Unit bearing vector for a pixel.
  Eigen::Vector3d Bearing(const Eigen::Vector2d& px) const;
  // Projects a camera-frame point; returns false if behind the camera.
  bool Project(const Eigen::Vector3d& pc, Eigen::Vector2d* px) const;
  // Mean angular size of one pixel in radians, used to estimate footprints.
  double PixelAngle() const;
};

// Body-frame to camera-frame transform: x_cam = R * x_body + t.
struct Pose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Matrix3d R() const { return rotation.toRotationMatrix(); }
  Eigen::Vector3d Transform(const Eigen::Vector3d& body) const {
    return rotation * body + translation;
  }
  // Camera center in the body frame.
  Eigen::Vector3d Center() const { return -(rotation.conjugate() * translation); }
};

using Homography = Eigen::Matrix3d;

inline Eigen::Vector2d ApplyHomography(const Homography& H, const Eigen::Vector2d& p) {
  const Eigen::Vector3d q = H * p.homogeneous();
  return q.hnormalized();
}

Homography ScaleHomography(double sx, double sy);
Homography TranslationHomography(double tx, double ty);
// Mirror about the vertical axis of an image of the given width.
Homography FlipHomography(int width);
// Rotation by `angle_rad` about `center`, followed by a shift to `new_center`.
Homography RotationAbout(double angle_rad, const Eigen::Vector2d& center,
                         const Eigen::Vector2d& new_center);

// Geodesic angle between two rotations in degrees, sign-invariant.
double RotationAngleDeg(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b);

// RQ decomposition of a 3x3 matrix into upper-triangular U (positive diagonal)
// times a rotation Q, with U * Q = M up to sign (-M when det(M) < 0).
void RqDecompose(const Eigen::Matrix3d& M, Eigen::Matrix3d* U, Eigen::Matrix3d* Q);

}  // namespace navfeat
