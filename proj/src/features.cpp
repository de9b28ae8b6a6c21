#include "navfeat/features.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "navfeat/augment.hpp"

namespace navfeat {

DenseFeatureMap::DenseFeatureMap(int w, int h, int d)
    : width(w), height(h), dim(d),
      descriptors(static_cast<std::size_t>(w) * h * d, 0.0f), detection(w, h) {
  Check(w >= 1 && h >= 1 && d >= 1, ErrorCode::kInvalidArgument, "invalid feature map shape");
}

void DenseFeatureMap::Validate(double norm_tol) const {
  Check(width >= 1 && height >= 1 && dim >= 1, ErrorCode::kInvalidArgument,
        "invalid feature map shape");
  Check(descriptors.size() == static_cast<std::size_t>(width) * height * dim,
        ErrorCode::kInvalidArgument, "descriptor array size mismatch");
  Check(detection.width() == width && detection.height() == height,
        ErrorCode::kInvalidArgument, "detection map size mismatch");
  Check(scale > 0, ErrorCode::kInvalidArgument, "feature map scale must be positive");
  auto in_unit = [](const ImageF& m) {
    return std::all_of(m.data().begin(), m.data().end(),
                       [](float v) { return v >= 0.0f && v <= 1.0f; });
  };
  Check(in_unit(detection), ErrorCode::kInvalidArgument, "detection values outside [0, 1]");
  if (reliability) {
    Check(reliability->width() == width && reliability->height() == height,
          ErrorCode::kInvalidArgument, "reliability map size mismatch");
    Check(in_unit(*reliability), ErrorCode::kInvalidArgument, "reliability values outside [0, 1]");
  }
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const float* d = descriptor(x, y);
      double n2 = 0.0;
      for (int k = 0; k < dim; ++k) n2 += static_cast<double>(d[k]) * d[k];
      Check(std::abs(std::sqrt(n2) - 1.0) <= norm_tol, ErrorCode::kInvalidArgument,
            "descriptor is not L2 normalized");
    }
}

std::vector<PyramidLevel> BuildPyramid(const ImageF& img, int scales_per_octave, int min_side) {
  Check(!img.empty(), ErrorCode::kInvalidArgument, "empty image");
  const double k = PyramidFactor(scales_per_octave);
  const int short_edge = std::min(img.width(), img.height());
  std::vector<PyramidLevel> levels;
  levels.push_back({img, 1.0});
  for (int j = 1;; ++j) {
    const double scale = std::pow(k, -j);
    if (std::lround(short_edge * scale) < min_side) break;
    const int w = std::max(1, static_cast<int>(std::lround(img.width() * scale)));
    const int h = std::max(1, static_cast<int>(std::lround(img.height() * scale)));
    levels.push_back({ResizeByScale(img, scale, w, h), scale});
  }
  return levels;
}

std::vector<Keypoint> DetectKeypoints(const ImageF& detection, const ImageF* reliability,
                                      const ExtractParams& params) {
  const int w = detection.width();
  const int h = detection.height();
  const auto n_keep = static_cast<std::size_t>(std::max<long>(0, std::lround(params.feat_ratio * w * h)));
  if (n_keep == 0) return {};
  const ImageF blurred = BoxBlur3(detection);
  const int r = std::max(1, params.nms_radius);
  std::vector<Keypoint> out;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float raw = detection(x, y);
      if (raw < params.det_threshold) continue;
      const auto key = std::make_pair(blurred(x, y), raw);
      bool is_max = true;
      for (int dy = -r; dy <= r && is_max; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          if ((dx == 0 && dy == 0) || !detection.contains(x + dx, y + dy)) continue;
          if (std::make_pair(blurred(x + dx, y + dy), detection(x + dx, y + dy)) >= key) {
            is_max = false;
            break;
          }
        }
      if (!is_max) continue;
      const double score = reliability ? static_cast<double>(raw) * (*reliability)(x, y) : raw;
      out.push_back({x, y, score});
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Keypoint& a, const Keypoint& b) { return a.score > b.score; });
  if (out.size() > n_keep) out.resize(n_keep);
  return out;
}

SparseFeatures ExtractSparse(const DenseFeatureMap& map, const ExtractParams& params) {
  const auto kps =
      DetectKeypoints(map.detection, map.reliability ? &*map.reliability : nullptr, params);
  SparseFeatures out;
  out.reserve(kps.size());
  for (const auto& kp : kps) {
    Feature f;
    f.x = kp.px / static_cast<double>(map.scale);
    f.y = kp.py / static_cast<double>(map.scale);
    f.scale = map.scale;
    f.score = kp.score;
    f.descriptor = Eigen::Map<const Eigen::VectorXf>(map.descriptor(kp.px, kp.py), map.dim);
    out.push_back(std::move(f));
  }
  return out;
}

namespace {

struct Gradients {
  ImageF gx;
  ImageF gy;
};

Gradients ComputeGradients(const ImageF& img) {
  const int w = img.width();
  const int h = img.height();
  Gradients g{ImageF(w, h), ImageF(w, h)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      g.gx(x, y) = 0.5f * (img(std::min(x + 1, w - 1), y) - img(std::max(x - 1, 0), y));
      g.gy(x, y) = 0.5f * (img(x, std::min(y + 1, h - 1)) - img(x, std::max(y - 1, 0)));
    }
  return g;
}

Grid<double> GaussianSmooth(const Grid<double>& src, double sigma) {
  const int radius = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  const int w = src.width();
  const int h = src.height();
  Grid<double> tmp(w, h);
  Grid<double> out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += kernel[i + radius] * src(std::clamp(x + i, 0, w - 1), y);
      tmp(x, y) = s;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += kernel[i + radius] * tmp(x, std::clamp(y + i, 0, h - 1));
      out(x, y) = s;
    }
  return out;
}

constexpr int kCells = 4;
constexpr int kCellSize = 4;
constexpr int kBins = 8;
constexpr double kWindowSigma = 8.0;

Eigen::VectorXf DescriptorFromGradients(const Gradients& g, int x, int y) {
  Eigen::VectorXd hist = Eigen::VectorXd::Zero(kBaselineDim);
  const int half = kCells * kCellSize / 2;
  for (int dy = -half; dy < half; ++dy) {
    for (int dx = -half; dx < half; ++dx) {
      const int sx = x + dx;
      const int sy = y + dy;
      if (!g.gx.contains(sx, sy)) continue;
      const double gx = g.gx(sx, sy);
      const double gy = g.gy(sx, sy);
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      const double ox = dx + 0.5;
      const double oy = dy + 0.5;
      const double weight = std::exp(-(ox * ox + oy * oy) / (2 * kWindowSigma * kWindowSigma));
      double theta = std::atan2(gy, gx);
      if (theta < 0) theta += 2 * kPi;
      const double f = theta * kBins / (2 * kPi);
      const int b0 = static_cast<int>(std::floor(f)) % kBins;
      const double frac = f - std::floor(f);
      const int cell = ((dy + half) / kCellSize) * kCells + (dx + half) / kCellSize;
      hist[cell * kBins + b0] += weight * mag * (1 - frac);
      hist[cell * kBins + (b0 + 1) % kBins] += weight * mag * frac;
    }
  }
  const double n = hist.norm();
  if (n == 0.0) return Eigen::VectorXf::Constant(kBaselineDim, static_cast<float>(1.0 / std::sqrt(kBaselineDim)));
  return (hist / n).cast<float>();
}

}  // namespace

ImageF HarrisResponse(const ImageF& img) {
  const int w = img.width();
  const int h = img.height();
  const Gradients g = ComputeGradients(img);
  Grid<double> xx(w, h), yy(w, h), xy(w, h);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double gx = g.gx.data()[i];
    const double gy = g.gy.data()[i];
    xx.data()[i] = gx * gx;
    yy.data()[i] = gy * gy;
    xy.data()[i] = gx * gy;
  }
  xx = GaussianSmooth(xx, 1.0);
  yy = GaussianSmooth(yy, 1.0);
  xy = GaussianSmooth(xy, 1.0);
  std::vector<double> r(img.size());
  double max_r = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double tr = xx.data()[i] + yy.data()[i];
    r[i] = std::max(0.0, xx.data()[i] * yy.data()[i] - xy.data()[i] * xy.data()[i] - 0.04 * tr * tr);
    max_r = std::max(max_r, r[i]);
  }
  ImageF out(w, h, 0.0f);
  if (max_r <= 0.0) return out;
  for (std::size_t i = 0; i < img.size(); ++i)
    out.data()[i] = std::clamp(static_cast<float>(r[i] / max_r), 0.0f, 1.0f);
  return out;
}

Eigen::VectorXf BaselineDescriptor(const ImageF& img, int x, int y) {
  return DescriptorFromGradients(ComputeGradients(img), x, y);
}

DenseFeatureMap BaselineDenseExtract(const ImageF& img) {
  DenseFeatureMap map(img.width(), img.height(), kBaselineDim);
  map.detection = HarrisResponse(img);
  const Gradients g = ComputeGradients(img);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const Eigen::VectorXf d = DescriptorFromGradients(g, x, y);
      std::copy(d.data(), d.data() + kBaselineDim, map.descriptor(x, y));
    }
  return map;
}

DenseFeatureMap BaselineDenseExtract(const Image8& img) { return BaselineDenseExtract(ToFloat(img)); }

SparseFeatures BaselineExtractSparse(const ImageF& img, double scale, const ExtractParams& params) {
  const ImageF det = HarrisResponse(img);
  const Gradients g = ComputeGradients(img);
  SparseFeatures out;
  for (const auto& kp : DetectKeypoints(det, nullptr, params)) {
    Feature f;
    f.x = kp.px / scale;
    f.y = kp.py / scale;
    f.scale = scale;
    f.score = kp.score;
    f.descriptor = DescriptorFromGradients(g, kp.px, kp.py);
    out.push_back(std::move(f));
  }
  return out;
}

double DescriptorDistance(const Eigen::VectorXf& a, const Eigen::VectorXf& b) {
  Check(a.size() == b.size(), ErrorCode::kInvalidArgument, "descriptor dimensions differ");
  double s = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
    s += d * d;
  }
  return std::sqrt(s);
}

MatchSet MatchMutualNN(const SparseFeatures& fa, const SparseFeatures& fb,
                       const std::function<bool(std::size_t, std::size_t)>& allowed) {
  MatchSet out;
  if (fa.empty() || fb.empty()) return out;
  const std::size_t na = fa.size();
  const std::size_t nb = fb.size();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(na * nb, kInf);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j)
      if (!allowed || allowed(i, j)) dist[i * nb + j] = DescriptorDistance(fa[i].descriptor, fb[j].descriptor);

  std::vector<std::size_t> best_b(na, nb);
  std::vector<std::size_t> best_a(nb, na);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j) {
      const double d = dist[i * nb + j];
      if (d == kInf) continue;
      if (best_b[i] == nb || d < dist[i * nb + best_b[i]]) best_b[i] = j;
      if (best_a[j] == na || d < dist[best_a[j] * nb + j]) best_a[j] = i;
    }
  for (std::size_t i = 0; i < na; ++i) {
    const std::size_t j = best_b[i];
    if (j == nb || best_a[j] != i) continue;
    Match m;
    m.a = i;
    m.b = j;
    m.distance = dist[i * nb + j];
    out.matches.push_back(m);
  }
  out.proposed = out.matches.size();
  return out;
}

MultiscaleResult MatchMultiscale(const SparseFeatures& fa, const SparseFeatures& fb,
                                 int scales_per_octave) {
  MultiscaleResult result;
  const MatchSet stage1 = MatchMutualNN(fa, fb);
  if (stage1.matches.empty()) return result;
  std::vector<double> log_ratios;
  for (const auto& m : stage1.matches) log_ratios.push_back(std::log(fb[m.b].scale / fa[m.a].scale));
  auto mid = log_ratios.begin() + static_cast<std::ptrdiff_t>(log_ratios.size() / 2);
  std::nth_element(log_ratios.begin(), mid, log_ratios.end());
  const double center = *mid;
  result.scale_ratio = std::exp(center);
  // slack covers scales that went through float storage
  const double window = std::log(PyramidFactor(scales_per_octave)) + 1e-6;
  result.matches = MatchMutualNN(fa, fb, [&](std::size_t i, std::size_t j) {
    return std::abs(std::log(fb[j].scale / fa[i].scale) - center) <= window;
  });
  return result;
}

void LabelMatches(MatchSet* m, const SparseFeatures& fa, const SparseFeatures& fb,
                  const CorrespondenceField& corr, double tol_px) {
  m->proposed = m->matches.size();
  m->possible = 0;
  m->correct = 0;
  for (const auto& f : fa)
    if (corr.Lookup(f.x, f.y)) ++m->possible;
  for (auto& match : m->matches) {
    const auto gt = corr.Lookup(fa[match.a].x, fa[match.a].y);
    match.possible = gt.has_value();
    match.correct = false;
    match.error_px = kNaN;
    match.ground_truth = Eigen::Vector2d::Constant(kNaN);
    if (!gt) continue;
    match.ground_truth = *gt;
    match.error_px = (Eigen::Vector2d(fb[match.b].x, fb[match.b].y) - *gt).norm();
    match.correct = match.error_px <= tol_px;
    if (match.correct) ++m->correct;
  }
}

}  // namespace navfeat
