#include "navfeat/geometry.hpp"

#include <Eigen/QR>

namespace navfeat {

Intrinsics Intrinsics::Pinhole(double fx, double fy, double cx, double cy, double skew) {
  Check(fx > 0 && fy > 0, ErrorCode::kInvalidArgument, "focal lengths must be positive");
  Intrinsics in;
  in.K << fx, skew, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return in;
}

bool Intrinsics::IsPinhole() const {
  return K(1, 0) == 0.0 && K(2, 0) == 0.0 && K(2, 1) == 0.0 && K(0, 1) == 0.0 &&
         K(2, 2) == 1.0;
}

Eigen::Vector3d Intrinsics::Bearing(const Eigen::Vector2d& px) const {
  const Eigen::Vector3d ray = K.inverse() * px.homogeneous();
  return ray.normalized();
}

bool Intrinsics::Project(const Eigen::Vector3d& pc, Eigen::Vector2d* px) const {
  if (pc.z() <= 0.0) return false;
  const Eigen::Vector3d h = K * pc;
  if (h.z() <= 0.0) return false;
  *px = h.hnormalized();
  return true;
}

double Intrinsics::PixelAngle() const {
  // In-plane rotations folded into K leave the 2x2 determinant unchanged.
  return 1.0 / std::sqrt(std::abs(K.topLeftCorner<2, 2>().determinant()));
}

Homography ScaleHomography(double sx, double sy) {
  Homography H = Homography::Identity();
  H(0, 0) = sx;
  H(1, 1) = sy;
  return H;
}

Homography TranslationHomography(double tx, double ty) {
  Homography H = Homography::Identity();
  H(0, 2) = tx;
  H(1, 2) = ty;
  return H;
}

Homography FlipHomography(int width) {
  Homography H = Homography::Identity();
  H(0, 0) = -1.0;
  H(0, 2) = static_cast<double>(width - 1);
  return H;
}

Homography RotationAbout(double angle_rad, const Eigen::Vector2d& center,
                         const Eigen::Vector2d& new_center) {
  const double c = std::cos(angle_rad);
  const double s = std::sin(angle_rad);
  Homography R = Homography::Identity();
  R(0, 0) = c;
  R(0, 1) = -s;
  R(1, 0) = s;
  R(1, 1) = c;
  return TranslationHomography(new_center.x(), new_center.y()) * R *
         TranslationHomography(-center.x(), -center.y());
}

double RotationAngleDeg(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
  const Eigen::Quaterniond d = a.normalized().conjugate() * b.normalized();
  const double vn = d.vec().norm();
  return RadToDeg(2.0 * std::atan2(vn, std::abs(d.w())));
}

void RqDecompose(const Eigen::Matrix3d& M, Eigen::Matrix3d* U, Eigen::Matrix3d* Q) {
  // RQ via QR of the row-reversed transpose.
  Eigen::Matrix3d P;
  P << 0, 0, 1, 0, 1, 0, 1, 0, 0;
  const Eigen::Matrix3d A = (P * M).transpose();
  Eigen::HouseholderQR<Eigen::Matrix3d> qr(A);
  Eigen::Matrix3d q = qr.householderQ();
  Eigen::Matrix3d r = qr.matrixQR().triangularView<Eigen::Upper>();
  Eigen::Matrix3d u = P * r.transpose() * P;
  Eigen::Matrix3d rot = P * q.transpose();
  // Make the diagonal of U positive.
  for (int i = 0; i < 3; ++i) {
    if (u(i, i) < 0) {
      u.col(i) *= -1.0;
      rot.row(i) *= -1.0;
    }
  }
  // det(M) < 0 leaves an improper Q; flipping it means U * Q = -M.
  if (rot.determinant() < 0) rot *= -1.0;
  *U = u;
  *Q = rot;
}

}  // namespace navfeat
