#include "navfeat/pairing.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <numeric>

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>

#include "navfeat/augment.hpp"
#include "navfeat/pose.hpp"
#include "navfeat/preprocess.hpp"

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

namespace navfeat {

namespace {

using Point3 = bg::model::point<double, 3, bg::cs::cartesian>;
using Entry = std::pair<Point3, std::uint32_t>;
using Tree = bgi::rtree<Entry, bgi::quadratic<16>>;

Point3 ToPoint(const Eigen::Vector3d& v) { return Point3(v.x(), v.y(), v.z()); }

Eigen::Vector3d ToVec(const Point3& p) {
  return {bg::get<0>(p), bg::get<1>(p), bg::get<2>(p)};
}

std::vector<Eigen::Vector3d> FiniteCoords(const CoordGrid& coords, std::size_t max_points) {
  std::size_t finite = 0;
  for (const auto& c : coords.data())
    if (IsFinite(c)) ++finite;
  const std::size_t stride =
      max_points > 0 && finite > max_points ? (finite + max_points - 1) / max_points : 1;
  std::vector<Eigen::Vector3d> out;
  out.reserve(finite / stride + 1);
  std::size_t seen = 0;
  for (const auto& c : coords.data()) {
    if (!IsFinite(c)) continue;
    if (seen++ % stride == 0) out.push_back(c.cast<double>());
  }
  return out;
}

template <typename T>
void Shuffle(std::vector<T>* items, Rng& rng) {
  for (std::size_t i = items->size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.UniformInt(0, static_cast<std::int64_t>(i) - 1));
    std::swap((*items)[i - 1], (*items)[j]);
  }
}

}  // namespace

void GeoImage::Validate() const {
  Check(!image.empty(), ErrorCode::kInvalidArgument, "image is empty");
  Check(std::abs(boresight.norm() - 1.0) <= 1e-9, ErrorCode::kInvalidArgument,
        "boresight must have unit norm");
  Check(cam_distance > 0, ErrorCode::kInvalidArgument, "cam_distance must be positive");
  if (georeferenced())
    Check(coords.width() == image.width() && coords.height() == image.height(),
          ErrorCode::kInvalidArgument, "coordinate grid does not match image size");
  if (pixel_extent)
    Check(pixel_extent->width() == image.width() && pixel_extent->height() == image.height(),
          ErrorCode::kInvalidArgument, "pixel extent grid does not match image size");
}

const char* PairSourceName(PairSource s) {
  switch (s) {
    case PairSource::kReal: return "real";
    case PairSource::kSyntheticHomography: return "synthetic-homography";
    case PairSource::kSyntheticRendered: return "synthetic-rendered";
  }
  return "real";
}

PairSource ParsePairSource(const std::string& s) {
  if (s == "real") return PairSource::kReal;
  if (s == "synthetic-homography") return PairSource::kSyntheticHomography;
  if (s == "synthetic-rendered") return PairSource::kSyntheticRendered;
  throw Error(ErrorCode::kFormat, "unknown pair source: " + s);
}

std::vector<Eigen::Vector3d> KMeans(const std::vector<Eigen::Vector3d>& points, int k,
                                    int iterations, std::uint64_t seed) {
  Check(k >= 1, ErrorCode::kInvalidArgument, "k must be positive");
  if (points.empty()) return {};
  const std::size_t n = points.size();
  const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k), n);
  Rng rng(seed);

  // k-means++ seeding
  std::vector<Eigen::Vector3d> centers;
  centers.push_back(points[static_cast<std::size_t>(rng.UniformInt(0, n - 1))]);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (centers.size() < kk) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (points[i] - centers.back()).squaredNorm());
      total += d2[i];
    }
    if (total <= 0.0) break;  // fewer distinct points than clusters
    double r = rng.Uniform() * total;
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      r -= d2[i];
      if (r < 0.0) {
        pick = i;
        break;
      }
    }
    centers.push_back(points[pick]);
  }

  std::vector<std::size_t> assign(n, std::numeric_limits<std::size_t>::max());
  for (int it = 0; it < iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < centers.size(); ++c) {
        const double d = (points[i] - centers[c]).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<Eigen::Vector3d> sums(centers.size(), Eigen::Vector3d::Zero());
    std::vector<std::size_t> counts(centers.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums[assign[i]] += points[i];
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < centers.size(); ++c)
      if (counts[c] > 0) centers[c] = sums[c] / static_cast<double>(counts[c]);
  }
  return centers;
}

std::vector<CandidatePair> BuildPairCandidates(const std::vector<GeoImage>& images,
                                               const PairingParams& params, std::uint64_t seed,
                                               std::vector<std::size_t>* skipped) {
  std::vector<std::vector<Eigen::Vector3d>> centroids(images.size());
  ParallelFor(images.size(), 1, [&](std::size_t i) {
    if (!images[i].georeferenced()) return;
    const auto pts = FiniteCoords(images[i].coords,
                                  static_cast<std::size_t>(std::max(0, params.kmeans_max_points)));
    centroids[i] = KMeans(pts, params.clusters_per_image, params.kmeans_iterations,
                          DeriveSeed(seed, i));
  });

  std::vector<Entry> entries;
  std::vector<std::size_t> owner;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (centroids[i].empty()) {
      if (skipped) skipped->push_back(i);
      continue;
    }
    for (const auto& c : centroids[i]) {
      entries.emplace_back(ToPoint(c), static_cast<std::uint32_t>(owner.size()));
      owner.push_back(i);
    }
  }
  if (entries.empty()) return {};
  const Tree tree(entries.begin(), entries.end());

  std::set<std::pair<std::size_t, std::size_t>> unique;
  for (const auto& [pt, idx] : entries) {
    const std::size_t self = owner[idx];
    const std::string& self_id = images[self].id;
    std::vector<Entry> hit;
    tree.query(bgi::nearest(pt, 1) && bgi::satisfies([&](const Entry& e) {
                 return images[owner[e.second]].id != self_id;
               }),
               std::back_inserter(hit));
    if (hit.empty()) continue;
    const std::size_t other = owner[hit.front().second];
    unique.emplace(std::min(self, other), std::max(self, other));
  }

  std::vector<CandidatePair> out;
  out.reserve(unique.size());
  for (const auto& [a, b] : unique) out.push_back({a, b});
  Rng rng(DeriveSeed(seed, images.size() + 1));
  Shuffle(&out, rng);
  return out;
}

double BoresightAngleDeg(const GeoImage& a, const GeoImage& b) {
  const double c = std::clamp(a.boresight.normalized().dot(b.boresight.normalized()), -1.0, 1.0);
  return RadToDeg(std::acos(c));
}

bool PairingBook::GeometryAcceptable(const GeoImage& a, const GeoImage& b) const {
  const double angle = BoresightAngleDeg(a, b);
  if (angle < params_.min_angle_deg || angle > params_.max_angle_deg) return false;
  const double hi = std::max(a.cam_distance, b.cam_distance);
  const double lo = std::min(a.cam_distance, b.cam_distance);
  return lo > 0 && hi / lo <= params_.max_distance_ratio;
}

bool PairingBook::Accept(const GeoImage& a, const GeoImage& b) {
  if (a.id == b.id) return false;
  if (!GeometryAcceptable(a, b)) return false;
  if (PairCount(a.id) >= params_.max_pairs_per_image ||
      PairCount(b.id) >= params_.max_pairs_per_image)
    return false;
  const auto key = std::minmax(a.id, b.id);
  if (!accepted_.emplace(key.first, key.second).second) return false;
  ++counts_[a.id];
  ++counts_[b.id];
  return true;
}

int PairingBook::PairCount(const std::string& id) const {
  const auto it = counts_.find(id);
  return it == counts_.end() ? 0 : it->second;
}

int OtsuThreshold(const Image8& img) {
  std::array<double, 256> hist{};
  for (auto v : img.data()) hist[v] += 1.0;
  const double total = static_cast<double>(img.size());
  double sum_all = 0.0;
  for (int i = 0; i < 256; ++i) sum_all += i * hist[i];
  double w0 = 0.0;
  double sum0 = 0.0;
  double best = -1.0;
  int threshold = 0;
  for (int t = 0; t < 256; ++t) {
    w0 += hist[t];
    sum0 += t * hist[t];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0;
    const double m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      threshold = t;
    }
  }
  return threshold;
}

namespace {

Mask Morph(const Mask& m, int kernel, bool erode) {
  const int r = kernel / 2;
  Mask out(m.width(), m.height());
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      bool v = erode;
      for (int dy = -r; dy <= r && v == erode; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          if (!m.contains(x + dx, y + dy)) continue;
          const bool set = m(x + dx, y + dy) != 0;
          if (erode && !set) {
            v = false;
            break;
          }
          if (!erode && set) {
            v = true;
            break;
          }
        }
      }
      out(x, y) = v ? 1 : 0;
    }
  }
  return out;
}

}  // namespace

Mask Erode(const Mask& m, int kernel) { return Morph(m, kernel, true); }
Mask Dilate(const Mask& m, int kernel) { return Morph(m, kernel, false); }

Mask ShadowMask(const Image8& img, const PairingParams& params) {
  const int t = OtsuThreshold(img);
  Mask shadow(img.width(), img.height());
  for (std::size_t i = 0; i < img.size(); ++i) shadow.data()[i] = img.data()[i] <= t ? 1 : 0;
  for (int i = 0; i < params.morph_iterations; ++i) shadow = Erode(shadow, params.morph_kernel);
  for (int i = 0; i < params.morph_iterations; ++i) shadow = Dilate(shadow, params.morph_kernel);
  for (int i = 0; i < params.morph_iterations; ++i) shadow = Erode(shadow, params.morph_kernel);
  Mask usable(img.width(), img.height());
  for (std::size_t i = 0; i < img.size(); ++i) usable.data()[i] = shadow.data()[i] ? 0 : 1;
  return usable;
}

double PixelExtentP90(const GeoImage& img) {
  if (img.pixel_extent_p90) return *img.pixel_extent_p90;
  std::vector<double> extents;
  if (img.pixel_extent) {
    for (float v : img.pixel_extent->data())
      if (std::isfinite(v)) extents.push_back(v);
  } else if (img.georeferenced()) {
    const Eigen::Vector3d center = -img.cam_distance * img.boresight;
    const double angle = img.intrinsics.PixelAngle();
    for (const auto& c : img.coords.data())
      if (IsFinite(c)) extents.push_back((c.cast<double>() - center).norm() * angle);
  }
  Check(!extents.empty(), ErrorCode::kEmptyInput, "no pixel extents available for " + img.id);
  return Percentile(std::move(extents), 90.0);
}

CorrespondenceResult ComputeCorrespondences(const GeoImage& a, const GeoImage& b,
                                            const Mask& mask_a, const Mask& mask_b,
                                            const PairingParams& params) {
  Check(a.georeferenced() && b.georeferenced(), ErrorCode::kInvalidArgument,
        "correspondences need georeferenced images");
  auto usable = [](const Mask& m, int x, int y) { return m.empty() || m(x, y) != 0; };

  CorrespondenceResult result;
  result.sigma = std::max(PixelExtentP90(a), PixelExtentP90(b));
  Check(result.sigma > 0, ErrorCode::kDegenerate, "pixel extent must be positive");
  const double d_max = params.distance_sigmas * result.sigma;
  const double inv_2s2 = 1.0 / (2.0 * result.sigma * result.sigma);

  std::vector<Entry> entries;
  for (int y = 0; y < b.coords.height(); ++y)
    for (int x = 0; x < b.coords.width(); ++x)
      if (IsFinite(b.coords(x, y)) && usable(mask_b, x, y))
        entries.emplace_back(ToPoint(b.coords(x, y).cast<double>()),
                             static_cast<std::uint32_t>(b.coords.index(x, y)));
  result.field = CorrespondenceField(a.coords.width(), a.coords.height());
  Check(!entries.empty(), ErrorCode::kEmptyInput, "no usable coordinates in " + b.id);
  const Tree tree(entries.begin(), entries.end());
  const int bw = b.coords.width();

  ParallelFor(static_cast<std::size_t>(a.coords.height()), 1, [&](std::size_t row) {
    const int y = static_cast<int>(row);
    std::vector<Entry> hits;
    for (int x = 0; x < a.coords.width(); ++x) {
      if (!IsFinite(a.coords(x, y)) || !usable(mask_a, x, y)) continue;
      const Eigen::Vector3d q = a.coords(x, y).cast<double>();
      hits.clear();
      tree.query(bgi::nearest(ToPoint(q), static_cast<unsigned>(params.neighbors)),
                 std::back_inserter(hits));
      double wsum = 0.0;
      Eigen::Vector2d acc = Eigen::Vector2d::Zero();
      for (const auto& [pt, idx] : hits) {
        const double d2 = (ToVec(pt) - q).squaredNorm();
        if (d2 > d_max * d_max) continue;
        const double w = std::exp(-d2 * inv_2s2);
        acc += w * Eigen::Vector2d(idx % bw, idx / bw);
        wsum += w;
      }
      if (wsum > 0.0) result.field.Set(x, y, acc / wsum);
    }
  });

  std::size_t n = result.field.CountValid();
  const auto cap = static_cast<std::size_t>(params.max_correspondences);
  if (n > cap) {
    const std::size_t keep_every = (n + cap - 1) / cap;
    std::size_t seen = 0;
    for (int y = 0; y < result.field.height(); ++y)
      for (int x = 0; x < result.field.width(); ++x)
        if (result.field.Valid(x, y) && seen++ % keep_every != 0) result.field.Invalidate(x, y);
    n = result.field.CountValid();
  }
  result.count = n;
  Check(n > 0, ErrorCode::kEmptyInput, "no correspondences between " + a.id + " and " + b.id);
  return result;
}

Eigen::Quaterniond CameraRotation(const GeoImage& img) {
  if (img.camera_rotation) return img.camera_rotation->normalized();
  Check(img.georeferenced(), ErrorCode::kInvalidArgument,
        "camera rotation needs coordinates or a stored orientation");
  std::vector<Correspondence2D3D> matches;
  for (int y = 0; y < img.coords.height(); ++y)
    for (int x = 0; x < img.coords.width(); ++x)
      if (IsFinite(img.coords(x, y)))
        matches.push_back({img.coords(x, y).cast<double>(), Eigen::Vector2d(x, y)});
  matches = SubsampleCorrespondences(matches, 1000);
  RansacOptions opt;
  opt.max_reproj_px = 1.0;
  const auto ransac = EstimatePoseRansac(matches, img.intrinsics, opt, 0);
  std::vector<Correspondence2D3D> inliers;
  for (std::size_t i = 0; i < matches.size(); ++i)
    if (ransac.inliers[i]) inliers.push_back(matches[i]);
  return RefinePose(ransac.pose, inliers, img.intrinsics).pose.rotation;
}

std::optional<double> UprightAngle(const Eigen::Quaterniond& camera_rotation,
                                   const Intrinsics& intrinsics) {
  const Eigen::Vector3d z_cam = camera_rotation.normalized() * Eigen::Vector3d::UnitZ();
  const Eigen::Vector2d d = intrinsics.K.topLeftCorner<2, 2>() * z_cam.head<2>();
  if (z_cam.head<2>().norm() < 1e-6 || d.norm() == 0.0) return std::nullopt;
  // Image y grows downwards, so "up" is direction -pi/2.
  double angle = -kPi / 2.0 - std::atan2(d.y(), d.x());
  angle = std::remainder(angle, 2.0 * kPi);
  if (std::abs(angle) < 1e-12) angle = 0.0;
  return angle;
}

namespace {

template <typename T>
Grid<T> ResampleNearest(const Grid<T>& src, const Homography& T_inv, int width, int height,
                        const T& outside) {
  Grid<T> out(width, height, outside);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Vector2d s = ApplyHomography(T_inv, Eigen::Vector2d(x, y));
      const int sx = static_cast<int>(std::lround(s.x()));
      const int sy = static_cast<int>(std::lround(s.y()));
      if (src.contains(sx, sy)) out(x, y) = src(sx, sy);
    }
  }
  return out;
}

}  // namespace

GeoImage RotateGeoImage(const GeoImage& img, double angle, Homography* transform) {
  const int w = img.image.width();
  const int h = img.image.height();
  const double c = std::abs(std::cos(angle));
  const double s = std::abs(std::sin(angle));
  const int nw = static_cast<int>(std::ceil(w * c + h * s - 1e-9));
  const int nh = static_cast<int>(std::ceil(w * s + h * c - 1e-9));
  const Homography T = angle == 0.0
                           ? Homography::Identity()
                           : RotationAbout(angle, Eigen::Vector2d((w - 1) / 2.0, (h - 1) / 2.0),
                                           Eigen::Vector2d((nw - 1) / 2.0, (nh - 1) / 2.0));
  if (transform) *transform = T;
  if (angle == 0.0) return img;

  GeoImage out = img;
  out.image = ToU8(WarpHomography(ToFloat(img.image), T, nw, nh));
  const Homography T_inv = T.inverse();
  if (img.georeferenced())
    out.coords = ResampleNearest(img.coords, T_inv, nw, nh,
                                 Eigen::Vector3f::Constant(kNaNf).eval());
  if (img.pixel_extent) out.pixel_extent = ResampleNearest(*img.pixel_extent, T_inv, nw, nh, kNaNf);
  out.intrinsics.K = T * img.intrinsics.K;
  return out;
}

RotationNormalization NormalizeRotation(const ImagePair& pair) {
  RotationNormalization result;
  auto rotate = [](const GeoImage& img, Homography* T, bool* flagged) {
    const Eigen::Quaterniond q = CameraRotation(img);
    const auto angle = UprightAngle(q, img.intrinsics);
    *flagged = !angle.has_value();
    GeoImage out = RotateGeoImage(img, angle.value_or(0.0), T);
    out.camera_rotation = q;
    return out;
  };
  result.pair = pair;
  result.pair.a = rotate(pair.a, &result.transform_a, &result.a_flagged);
  result.pair.b = rotate(pair.b, &result.transform_b, &result.b_flagged);
  const auto& na = result.pair.a.image;
  const auto& nb = result.pair.b.image;
  result.pair.corr_ab = TransformField(pair.corr_ab, result.transform_a, result.transform_b,
                                       na.width(), na.height(), nb.width(), nb.height());
  return result;
}

ImagePair MakeSyntheticPair(const Image8& img, double lambda_r_deg, double lambda_p,
                            std::uint64_t seed) {
  const auto sample =
      SampleHomographyDetailed(img.width(), img.height(), lambda_r_deg, lambda_p, seed);
  ImagePair pair;
  pair.a.id = "a";
  pair.a.image = img;
  pair.b.id = "b";
  pair.b.image = ToU8(WarpHomography(ToFloat(img), sample.H, img.width(), img.height()));
  pair.corr_ab = HomographyField(sample.H, img.width(), img.height(), img.width(), img.height());
  pair.view_angle_change_deg = std::abs(sample.phi_deg);
  pair.source = PairSource::kSyntheticHomography;
  pair.homography = sample.H;
  return pair;
}

void AttachPlanarGeometry(ImagePair* pair, double focal_px, double depth) {
  Check(pair && pair->homography, ErrorCode::kInvalidArgument,
        "planar geometry needs a homography pair");
  Check(focal_px > 0 && depth > 0, ErrorCode::kInvalidArgument,
        "focal length and depth must be positive");
  GeoImage& a = pair->a;
  GeoImage& b = pair->b;
  const int w = a.image.width();
  const int h = a.image.height();
  a.intrinsics = Intrinsics::Pinhole(focal_px, focal_px, (w - 1) / 2.0, (h - 1) / 2.0);
  const Eigen::Matrix3d Ka_inv = a.intrinsics.K.inverse();
  auto plane_point = [&](const Eigen::Vector2d& px) -> Eigen::Vector3f {
    const Eigen::Vector3d ray = Ka_inv * px.homogeneous();
    return (ray * (depth / ray.z())).cast<float>();
  };
  a.coords = CoordGrid(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) a.coords(x, y) = plane_point(Eigen::Vector2d(x, y));
  a.boresight = Eigen::Vector3d::UnitZ();
  a.cam_distance = depth;
  a.camera_rotation = Eigen::Quaterniond::Identity();

  Eigen::Matrix3d U;
  Eigen::Matrix3d Q;
  RqDecompose(*pair->homography * a.intrinsics.K, &U, &Q);
  b.intrinsics.K = U / U(2, 2);
  b.camera_rotation = Eigen::Quaterniond(Q).normalized();
  b.boresight = Q.transpose().col(2).normalized();
  b.cam_distance = depth;
  const int bw = b.image.width();
  const int bh = b.image.height();
  const Homography H_inv = pair->homography->inverse();
  b.coords = CoordGrid(bw, bh, Eigen::Vector3f::Constant(kNaNf));
  for (int y = 0; y < bh; ++y) {
    for (int x = 0; x < bw; ++x) {
      const Eigen::Vector3d q = H_inv * Eigen::Vector3d(x, y, 1.0);
      if (q.z() <= 0) continue;
      const Eigen::Vector2d p = q.hnormalized();
      if (p.x() < -0.5 || p.y() < -0.5 || p.x() > w - 0.5 || p.y() > h - 0.5) continue;
      b.coords(x, y) = plane_point(p);
    }
  }
}

const char* DifficultyName(Difficulty d) { return d == Difficulty::kEasy ? "easy" : "hard"; }

Difficulty ClassifyDifficulty(PairSource source, std::optional<double> phi,
                              std::optional<double> alpha, std::optional<double> beta) {
  if (source == PairSource::kSyntheticRendered) {
    Check(alpha.has_value() && beta.has_value(), ErrorCode::kInvalidArgument,
          "rendered pair needs light perturbation angles");
    return std::abs(*alpha) < 20.0 && std::abs(*beta) < 30.0 ? Difficulty::kEasy
                                                             : Difficulty::kHard;
  }
  Check(phi.has_value(), ErrorCode::kInvalidArgument, "pair needs a view angle change");
  return std::abs(*phi) < 15.0 ? Difficulty::kEasy : Difficulty::kHard;
}

Difficulty ClassifyDifficulty(const ImagePair& pair) {
  return ClassifyDifficulty(pair.source, pair.view_angle_change_deg, pair.light_alpha_deg,
                            pair.light_beta_deg);
}

LightPerturbation SampleLightPerturbation(double alpha_max_deg, double beta_max_deg,
                                          std::uint64_t seed,
                                          const std::function<bool(double)>& alpha_ok,
                                          int max_attempts) {
  Check(alpha_max_deg >= 0 && beta_max_deg >= 0, ErrorCode::kInvalidArgument,
        "light perturbation bounds must be non-negative");
  Rng rng(seed);
  const double a2 = alpha_max_deg * alpha_max_deg;
  LightPerturbation out;
  int attempts = 0;
  for (;;) {
    out.alpha_deg = SignedSqrtUniform(rng, -a2, a2);
    if (!alpha_ok || alpha_ok(out.alpha_deg)) break;
    Check(++attempts < max_attempts, ErrorCode::kEstimationFailed,
          "no valid light perturbation found");
  }
  const double b2 = beta_max_deg * beta_max_deg;
  out.beta_deg = SignedSqrtUniform(rng, -b2, b2);
  return out;
}

}  // namespace navfeat
