#include "navfeat/pose.hpp"

#include <algorithm>
#include <array>
#include <limits>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

namespace navfeat {

namespace {

using Poly = std::vector<double>;  // coefficients, lowest power first

Poly Mul(const Poly& a, const Poly& b) {
  Poly out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

Poly Add(const Poly& a, const Poly& b, double sb = 1.0) {
  Poly out(std::max(a.size(), b.size()), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += a[i];
  for (std::size_t i = 0; i < b.size(); ++i) out[i] += sb * b[i];
  return out;
}

double Eval(const Poly& p, double x) {
  double v = 0.0;
  for (std::size_t i = p.size(); i-- > 0;) v = v * x + p[i];
  return v;
}

double EvalDerivative(const Poly& p, double x) {
  double v = 0.0;
  for (std::size_t i = p.size(); i-- > 1;) v = v * x + static_cast<double>(i) * p[i];
  return v;
}

std::vector<double> RealRoots(Poly p) {
  double scale = 0.0;
  for (double c : p) scale = std::max(scale, std::abs(c));
  if (scale == 0.0) return {};
  while (p.size() > 1 && std::abs(p.back()) <= 1e-14 * scale) p.pop_back();
  const int n = static_cast<int>(p.size()) - 1;
  if (n < 1) return {};
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) companion(0, i) = -p[n - 1 - i] / p[n];
  for (int i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  std::vector<double> roots;
  for (int i = 0; i < n; ++i) {
    const auto z = solver.eigenvalues()[i];
    if (std::abs(z.imag()) > 1e-4 * (1.0 + std::abs(z.real()))) continue;
    double x = z.real();
    for (int it = 0; it < 8; ++it) {
      const double d = EvalDerivative(p, x);
      if (d == 0.0) break;
      const double step = Eval(p, x) / d;
      x -= step;
      if (std::abs(step) < 1e-15 * (1.0 + std::abs(x))) break;
    }
    roots.push_back(x);
  }
  return roots;
}

// Rigid transform with cam = R * body + t from three or more point pairs.
std::optional<Pose> Kabsch(const std::vector<Eigen::Vector3d>& body,
                           const std::vector<Eigen::Vector3d>& cam) {
  Eigen::Vector3d cb = Eigen::Vector3d::Zero();
  Eigen::Vector3d cc = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < body.size(); ++i) {
    cb += body[i];
    cc += cam[i];
  }
  cb /= static_cast<double>(body.size());
  cc /= static_cast<double>(cam.size());
  Eigen::Matrix3d S = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < body.size(); ++i) S += (cam[i] - cc) * (body[i] - cb).transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(S, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) D(2, 2) = -1.0;
  const Eigen::Matrix3d R = svd.matrixU() * D * svd.matrixV().transpose();
  if (!R.allFinite()) return std::nullopt;
  Pose pose;
  pose.rotation = Eigen::Quaterniond(R).normalized();
  pose.translation = cc - R * cb;
  return pose;
}

Eigen::Matrix3d Skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

// Gauss-Newton on |s_i f_i - s_j f_j|^2 = d_ij^2; the quartic route loses a
// few digits when u = N / D is poorly conditioned.
Eigen::Vector3d PolishDepths(Eigen::Vector3d s, const std::array<Eigen::Vector3d, 3>& f,
                             const Eigen::Vector3d& d2) {
  constexpr int kPairs[3][2] = {{1, 2}, {0, 2}, {0, 1}};
  for (int it = 0; it < 5; ++it) {
    Eigen::Vector3d r;
    Eigen::Matrix3d J = Eigen::Matrix3d::Zero();
    for (int k = 0; k < 3; ++k) {
      const int i = kPairs[k][0], j = kPairs[k][1];
      const Eigen::Vector3d diff = s[i] * f[i] - s[j] * f[j];
      r[k] = diff.squaredNorm() - d2[k];
      J(k, i) = 2.0 * diff.dot(f[i]);
      J(k, j) = -2.0 * diff.dot(f[j]);
    }
    const Eigen::FullPivLU<Eigen::Matrix3d> lu(J);
    if (!lu.isInvertible()) break;
    const Eigen::Vector3d step = lu.solve(r);
    if (!step.allFinite()) break;
    s -= step;
    if (step.norm() < 1e-15 * s.norm()) break;
  }
  return s;
}

}  // namespace

std::vector<Pose> SolveP3P(const std::vector<Eigen::Vector3d>& bearings,
                           const std::vector<Eigen::Vector3d>& points) {
  Check(bearings.size() >= 3 && points.size() >= 3, ErrorCode::kInvalidArgument,
        "P3P needs three correspondences");
  const Eigen::Vector3d f1 = bearings[0].normalized();
  const Eigen::Vector3d f2 = bearings[1].normalized();
  const Eigen::Vector3d f3 = bearings[2].normalized();
  const double a2 = (points[1] - points[2]).squaredNorm();
  const double b2 = (points[0] - points[2]).squaredNorm();
  const double c2 = (points[0] - points[1]).squaredNorm();
  if (a2 <= 0 || b2 <= 0 || c2 <= 0) return {};
  const double ca = f2.dot(f3);
  const double cb = f1.dot(f3);
  const double cg = f1.dot(f2);

  // With u = s2/s1 and v = s3/s1 the law of cosines gives
  //   u^2 - 2 cg u + P(v) = 0 and u^2 - 2 ca u v + Q(v) = 0,
  // whose difference is linear in u: u = (Q - P) / (2 (ca v - cg)).
  const double k1 = c2 / b2;
  const double k2 = a2 / b2;
  const Poly T = {1.0, -2.0 * cb, 1.0};
  const Poly P = Add({1.0}, T, -k1);
  const Poly Q = Add({0.0, 0.0, 1.0}, T, -k2);
  const Poly N = Add(Q, P, -1.0);
  const Poly D = {-2.0 * cg, 2.0 * ca};
  const Poly quartic = Add(Add(Mul(N, N), Mul(N, D), -2.0 * cg), Mul(P, Mul(D, D)));

  std::vector<Pose> poses;
  for (double v : RealRoots(quartic)) {
    if (v <= 0) continue;
    const double d = Eval(D, v);
    if (std::abs(d) < 1e-12) continue;
    const double u = Eval(N, v) / d;
    const double t = Eval(T, v);
    if (u <= 0 || t <= 0) continue;
    const double s1 = std::sqrt(b2 / t);
    const Eigen::Vector3d s =
        PolishDepths({s1, u * s1, v * s1}, {f1, f2, f3}, {a2, b2, c2});
    if (!(s.minCoeff() > 0)) continue;
    const std::vector<Eigen::Vector3d> cam = {s[0] * f1, s[1] * f2, s[2] * f3};
    const std::vector<Eigen::Vector3d> body = {points[0], points[1], points[2]};
    if (auto pose = Kabsch(body, cam)) poses.push_back(*pose);
  }
  return poses;
}

double ReprojectionError(const Pose& pose, const Intrinsics& K, const Correspondence2D3D& m) {
  Eigen::Vector2d px;
  if (!K.Project(pose.Transform(m.point), &px)) return std::numeric_limits<double>::infinity();
  return (px - m.pixel).norm();
}

std::size_t CountInliers(const Pose& pose, const Intrinsics& K,
                         const std::vector<Correspondence2D3D>& matches, double max_reproj_px) {
  std::size_t n = 0;
  for (const auto& m : matches)
    if (ReprojectionError(pose, K, m) <= max_reproj_px) ++n;
  return n;
}

RansacResult EstimatePoseRansac(const std::vector<Correspondence2D3D>& matches,
                                const Intrinsics& K, const RansacOptions& options,
                                std::uint64_t seed) {
  const std::size_t n = matches.size();
  Check(n >= 4, ErrorCode::kEstimationFailed, "pose estimation needs at least 4 matches");
  Rng rng(seed);
  std::vector<Eigen::Vector3d> bearings(n);
  for (std::size_t i = 0; i < n; ++i) bearings[i] = K.Bearing(matches[i].pixel);

  RansacResult best;
  bool found = false;
  long long needed = options.max_iterations;
  int it = 0;
  for (; it < needed && it < options.max_iterations; ++it) {
    std::array<std::size_t, 4> idx{};
    for (int k = 0; k < 4; ++k) {
      bool fresh = false;
      while (!fresh) {
        idx[k] = static_cast<std::size_t>(rng.UniformInt(0, static_cast<std::int64_t>(n) - 1));
        fresh = std::find(idx.begin(), idx.begin() + k, idx[k]) == idx.begin() + k;
      }
    }
    const auto candidates =
        SolveP3P({bearings[idx[0]], bearings[idx[1]], bearings[idx[2]]},
                 {matches[idx[0]].point, matches[idx[1]].point, matches[idx[2]].point});
    const Pose* model = nullptr;
    double best_fourth = std::numeric_limits<double>::infinity();
    for (const auto& c : candidates) {
      const double e = ReprojectionError(c, K, matches[idx[3]]);
      if (e < best_fourth) {
        best_fourth = e;
        model = &c;
      }
    }
    if (!model || best_fourth > options.max_reproj_px) continue;
    const std::size_t count = CountInliers(*model, K, matches, options.max_reproj_px);
    if (!found || count > best.inlier_count) {
      found = true;
      best.pose = *model;
      best.inlier_count = count;
      const double w = static_cast<double>(count) / static_cast<double>(n);
      const double miss = 1.0 - std::pow(w, 4);
      if (miss <= 0.0) {
        needed = options.min_iterations;
      } else {
        const double est = std::log(1.0 - options.confidence) / std::log(miss);
        needed = std::max<long long>(options.min_iterations,
                                     static_cast<long long>(std::ceil(std::min(est, 1e9))));
      }
    }
  }
  best.iterations = it;
  Check(found && best.inlier_count >= static_cast<std::size_t>(options.min_inliers),
        ErrorCode::kEstimationFailed, "no pose model with enough inliers");
  best.inliers.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    best.inliers[i] = ReprojectionError(best.pose, K, matches[i]) <= options.max_reproj_px;
  return best;
}

double PseudoHuber(double r, double delta) {
  const double q = r / delta;
  return delta * delta * (std::sqrt(1.0 + q * q) - 1.0);
}

double RobustCost(const Pose& pose, const Intrinsics& K,
                  const std::vector<Correspondence2D3D>& matches, double delta) {
  double cost = 0.0;
  for (const auto& m : matches) cost += PseudoHuber(ReprojectionError(pose, K, m), delta);
  return cost;
}

RefineResult RefinePose(const Pose& initial, const std::vector<Correspondence2D3D>& matches,
                        const Intrinsics& K, const RefineOptions& options) {
  Check(options.huber_delta > 0, ErrorCode::kInvalidArgument, "huber delta must be positive");
  RefineResult result;
  result.pose = initial;
  result.pose.rotation.normalize();
  double cost = RobustCost(result.pose, K, matches, options.huber_delta);
  result.accepted_costs.push_back(cost);
  if (matches.empty() || !std::isfinite(cost)) return result;
  double lambda = 1e-3;

  for (int it = 0; it < options.max_iterations; ++it) {
    result.iterations = it + 1;
    Eigen::Matrix<double, 6, 6> H = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    const Eigen::Matrix3d R = result.pose.R();
    for (const auto& m : matches) {
      const Eigen::Vector3d rx = R * m.point;
      const Eigen::Vector3d pc = rx + result.pose.translation;
      const Eigen::Vector3d h = K.K * pc;
      if (h.z() <= 0) continue;
      const Eigen::Vector2d r = h.head<2>() / h.z() - m.pixel;
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << 1 / h.z(), 0, -h.x() / (h.z() * h.z()), 0, 1 / h.z(), -h.y() / (h.z() * h.z());
      Eigen::Matrix<double, 3, 6> dp;
      dp.leftCols<3>() = -Skew(rx);
      dp.rightCols<3>() = Eigen::Matrix3d::Identity();
      const Eigen::Matrix<double, 2, 6> J = dproj * K.K * dp;
      const double q = r.norm() / options.huber_delta;
      const double w = 1.0 / std::sqrt(1.0 + q * q);
      H += w * J.transpose() * J;
      g += w * J.transpose() * r;
    }
    if (g.cwiseAbs().maxCoeff() < 1e-14) {
      result.converged = true;
      break;
    }
    bool accepted = false;
    while (lambda < 1e12) {
      Eigen::Matrix<double, 6, 6> A = H;
      A.diagonal() += lambda * H.diagonal().cwiseMax(1e-12);
      const Eigen::Matrix<double, 6, 1> step = A.ldlt().solve(-g);
      if (!step.allFinite()) {
        lambda *= 10;
        continue;
      }
      Pose trial = result.pose;
      const Eigen::Vector3d omega = step.head<3>();
      const double angle = omega.norm();
      if (angle > 0)
        trial.rotation = (Eigen::Quaterniond(Eigen::AngleAxisd(angle, omega / angle)) *
                          result.pose.rotation).normalized();
      trial.translation += step.tail<3>();
      const double trial_cost = RobustCost(trial, K, matches, options.huber_delta);
      if (trial_cost < cost) {
        const double change = cost - trial_cost;
        result.pose = trial;
        cost = trial_cost;
        result.accepted_costs.push_back(cost);
        lambda = std::max(lambda / 10, 1e-12);
        accepted = true;
        if (change < options.cost_tolerance) result.converged = true;
        break;
      }
      lambda *= 10;
    }
    if (!accepted) {
      // No descent direction left at working precision.
      result.converged = true;
      break;
    }
    if (result.converged) break;
  }
  return result;
}

std::vector<Correspondence2D3D> DenseMatches(const ImagePair& pair) {
  std::vector<Correspondence2D3D> out;
  const auto& coords = pair.a.coords;
  if (coords.empty()) return out;
  for (int y = 0; y < coords.height(); ++y)
    for (int x = 0; x < coords.width(); ++x) {
      if (!IsFinite(coords(x, y)) || !pair.corr_ab.Valid(x, y)) continue;
      out.push_back({coords(x, y).cast<double>(), pair.corr_ab.At(x, y)});
    }
  return out;
}

std::optional<Pose> GroundTruthPose(const ImagePair& pair, std::uint64_t seed,
                                    const GroundTruthOptions& options) {
  const auto matches = SubsampleCorrespondences(DenseMatches(pair), options.subsample_target);
  if (matches.size() < 4) return std::nullopt;
  try {
    RansacOptions ro;
    ro.max_reproj_px = options.max_reproj_px;
    const auto ransac = EstimatePoseRansac(matches, pair.b.intrinsics, ro, seed);
    std::vector<Correspondence2D3D> inliers;
    for (std::size_t i = 0; i < matches.size(); ++i)
      if (ransac.inliers[i]) inliers.push_back(matches[i]);
    return RefinePose(ransac.pose, inliers, pair.b.intrinsics, options.refine).pose;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kEstimationFailed) throw;
    return std::nullopt;
  }
}

double OrientationErrorDeg(const Pose& a, const Pose& b) {
  return RotationAngleDeg(a.rotation, b.rotation);
}

PoseOutcome ClassifyOutcome(const std::optional<Pose>& estimate, const Pose& ground_truth,
                            std::size_t inliers_within_gate, const OutcomeRules& rules) {
  PoseOutcome out;
  out.pose = estimate;
  out.inlier_count = inliers_within_gate;
  if (!estimate) return out;
  out.orientation_error_deg = OrientationErrorDeg(*estimate, ground_truth);
  out.failed = inliers_within_gate < rules.min_inliers ||
               !(out.orientation_error_deg <= rules.max_orientation_error_deg);
  return out;
}

PoseOutcome EstimateFeaturePose(const std::vector<Correspondence2D3D>& matches,
                                const Intrinsics& K, const Pose& ground_truth,
                                std::uint64_t seed, const FeaturePoseOptions& options) {
  RansacResult ransac;
  try {
    ransac = EstimatePoseRansac(matches, K, options.ransac, seed);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kEstimationFailed) throw;
    return ClassifyOutcome(std::nullopt, ground_truth, 0, options.rules);
  }
  std::vector<Correspondence2D3D> inliers;
  for (std::size_t i = 0; i < matches.size(); ++i)
    if (ransac.inliers[i]) inliers.push_back(matches[i]);
  const Pose refined = RefinePose(ransac.pose, inliers, K, options.refine).pose;
  const std::size_t count = CountInliers(refined, K, matches, options.ransac.max_reproj_px);
  return ClassifyOutcome(refined, ground_truth, count, options.rules);
}

}  // namespace navfeat
