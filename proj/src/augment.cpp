#include "navfeat/augment.hpp"

#include <algorithm>

namespace navfeat {

void AugmentParams::Validate() const {
  Check(noise_amplitude >= 0 && noise_amplitude <= 1, ErrorCode::kInvalidArgument,
        "noise amplitude must lie in [0, 1]");
  Check(max_gain >= 1, ErrorCode::kInvalidArgument, "max gain must be >= 1");
  Check(student_max_gain >= 1, ErrorCode::kInvalidArgument, "student max gain must be >= 1");
  Check(student_noise_sd >= 0, ErrorCode::kInvalidArgument, "student noise must be >= 0");
  Check(scales_per_octave >= 1, ErrorCode::kInvalidArgument, "scales per octave must be >= 1");
  Check(short_edge_min >= 1 && short_edge_min <= short_edge_max, ErrorCode::kInvalidArgument,
        "invalid short edge range");
  Check(max_rotation_deg >= 0 && max_projection >= 0, ErrorCode::kInvalidArgument,
        "rotation and projection bounds must be non-negative");
  Check(crop_size >= 0 && max_crop_attempts >= 1, ErrorCode::kInvalidArgument,
        "invalid crop settings");
}

double PyramidFactor(int scales_per_octave) {
  Check(scales_per_octave >= 1, ErrorCode::kInvalidArgument, "scales per octave must be >= 1");
  return std::pow(2.0, 1.0 / scales_per_octave);
}

HomographySample SampleHomographyDetailed(int width, int height, double lambda_r_deg,
                                          double lambda_p, std::uint64_t seed) {
  Check(width >= 1 && height >= 1, ErrorCode::kInvalidArgument, "image size must be positive");
  Rng rng(seed);
  HomographySample s;
  const double r2 = lambda_r_deg * lambda_r_deg;
  s.phi_deg = SignedSqrtUniform(rng, -r2, r2);
  const double pos = lambda_p * lambda_p;
  const double neg_root = 1.0 / (lambda_p + 1.0) - 1.0;
  const double neg = neg_root * neg_root;
  auto draw_p = [&] {
    return rng.Bernoulli(0.5) ? SignedSqrtUniform(rng, 0.0, pos)
                              : SignedSqrtUniform(rng, -neg, 0.0);
  };
  s.p1 = draw_p();
  s.p2 = draw_p();
  Homography R = Homography::Identity();
  const double phi = DegToRad(s.phi_deg);
  R(0, 0) = std::cos(phi);
  R(0, 1) = -std::sin(phi);
  R(1, 0) = std::sin(phi);
  R(1, 1) = std::cos(phi);
  Homography P = Homography::Identity();
  P(2, 0) = s.p1 / width;
  P(2, 1) = s.p2 / height;
  s.H = R * P;
  return s;
}

Homography SampleHomography(int width, int height, double lambda_r_deg, double lambda_p,
                            std::uint64_t seed) {
  return SampleHomographyDetailed(width, height, lambda_r_deg, lambda_p, seed).H;
}

double SampleGain(Rng& rng, double max_gain) {
  const double l = std::log(max_gain);
  return std::exp(rng.Uniform(-l, l));
}

double EstimateRelativeScale(const CorrespondenceField& corr) {
  std::vector<double> scales;
  for (int y = 0; y + 1 < corr.height(); ++y) {
    for (int x = 0; x + 1 < corr.width(); ++x) {
      if (!corr.Valid(x, y) || !corr.Valid(x + 1, y) || !corr.Valid(x, y + 1)) continue;
      Eigen::Matrix2d J;
      J.col(0) = corr.At(x + 1, y) - corr.At(x, y);
      J.col(1) = corr.At(x, y + 1) - corr.At(x, y);
      scales.push_back(std::sqrt(std::abs(J.determinant())));
    }
  }
  if (scales.empty()) return 1.0;
  auto mid = scales.begin() + static_cast<std::ptrdiff_t>(scales.size() / 2);
  std::nth_element(scales.begin(), mid, scales.end());
  return *mid;
}

namespace {

struct Dims {
  int w = 0;
  int h = 0;
};

Dims ScaledDims(int w, int h, double scale) {
  return {std::max(1, static_cast<int>(std::lround(w * scale))),
          std::max(1, static_cast<int>(std::lround(h * scale)))};
}

// Scale that brings the short edge into [lo, hi], or 1 when already inside.
double ClampScale(int w, int h, int lo, int hi) {
  const int s = std::min(w, h);
  if (s < lo) return static_cast<double>(lo) / s;
  if (s > hi) return static_cast<double>(hi) / s;
  return 1.0;
}

// Summed-area table over a count grid.
class Integral {
 public:
  explicit Integral(const Grid<int>& counts)
      : w_(counts.width()), h_(counts.height()),
        sums_(static_cast<std::size_t>(w_ + 1) * (h_ + 1), 0) {
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x)
        at(x + 1, y + 1) = counts(x, y) + at(x, y + 1) + at(x + 1, y) - at(x, y);
  }
  std::int64_t Window(int x0, int y0, int w, int h) const {
    return at(x0 + w, y0 + h) - at(x0, y0 + h) - at(x0 + w, y0) + at(x0, y0);
  }

 private:
  std::int64_t& at(int x, int y) { return sums_[static_cast<std::size_t>(y) * (w_ + 1) + x]; }
  std::int64_t at(int x, int y) const { return sums_[static_cast<std::size_t>(y) * (w_ + 1) + x]; }
  int w_;
  int h_;
  std::vector<std::int64_t> sums_;
};

struct Window {
  int x0 = 0;
  int y0 = 0;
  std::int64_t count = 0;
};

// First window (row-major origin order) with the highest count.
Window BestWindow(const Grid<int>& counts, int cw, int ch) {
  const Integral integral(counts);
  Window best{0, 0, -1};
  for (int y = 0; y + ch <= counts.height(); ++y)
    for (int x = 0; x + cw <= counts.width(); ++x) {
      const auto c = integral.Window(x, y, cw, ch);
      if (c > best.count) best = {x, y, c};
    }
  return best;
}

// Window origin drawn with probability proportional to its count.
std::optional<Window> WeightedWindow(const Grid<int>& counts, int cw, int ch, Rng& rng) {
  const Integral integral(counts);
  std::vector<Window> windows;
  std::int64_t total = 0;
  for (int y = 0; y + ch <= counts.height(); ++y)
    for (int x = 0; x + cw <= counts.width(); ++x) {
      const auto c = integral.Window(x, y, cw, ch);
      if (c > 0) {
        windows.push_back({x, y, c});
        total += c;
      }
    }
  if (total == 0) return std::nullopt;
  double r = rng.Uniform() * static_cast<double>(total);
  for (const auto& w : windows) {
    r -= static_cast<double>(w.count);
    if (r < 0) return w;
  }
  return windows.back();
}

Grid<int> ValidCounts(const CorrespondenceField& f) {
  Grid<int> counts(f.width(), f.height());
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) counts(x, y) = f.Valid(x, y) ? 1 : 0;
  return counts;
}

// Histogram of B targets for A pixels inside an A window.
Grid<int> TargetCounts(const CorrespondenceField& f, const Window& a, int cw, int ch, int bw,
                       int bh) {
  Grid<int> counts(bw, bh);
  for (int y = a.y0; y < a.y0 + ch; ++y)
    for (int x = a.x0; x < a.x0 + cw; ++x) {
      if (!f.Valid(x, y)) continue;
      const auto p = f.At(x, y);
      const int tx = static_cast<int>(std::lround(p.x()));
      const int ty = static_cast<int>(std::lround(p.y()));
      if (counts.contains(tx, ty)) ++counts(tx, ty);
    }
  return counts;
}

// Valid A pixels whose target falls inside a B window.
Grid<int> SourceCounts(const CorrespondenceField& f, const Window& b, int cw, int ch) {
  Grid<int> counts(f.width(), f.height());
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) {
      if (!f.Valid(x, y)) continue;
      const auto p = f.At(x, y);
      const int tx = static_cast<int>(std::lround(p.x()));
      const int ty = static_cast<int>(std::lround(p.y()));
      counts(x, y) = tx >= b.x0 && ty >= b.y0 && tx < b.x0 + cw && ty < b.y0 + ch ? 1 : 0;
    }
  return counts;
}

void AddNoise(ImageF* img, double amplitude, Rng& rng) {
  for (auto& v : img->data())
    v = std::clamp(static_cast<float>(v + rng.Uniform(-amplitude, amplitude)), 0.0f, 1.0f);
}

void ApplyGain(ImageF* img, double gain) {
  for (auto& v : img->data()) v = std::clamp(static_cast<float>(v * gain), 0.0f, 1.0f);
}

int CropEdge(const AugmentParams& p, int short_edge) {
  return p.crop_size > 0 ? p.crop_size : short_edge;
}

TrainingPair Assemble(const ImagePair& pair, const Homography& Ta, const Homography& Tb,
                      Dims a, Dims b) {
  TrainingPair out;
  out.a = WarpHomography(ToFloat(pair.a.image), Ta, a.w, a.h);
  out.b = WarpHomography(ToFloat(pair.b.image), Tb, b.w, b.h);
  out.corr_ab = TransformField(pair.corr_ab, Ta, Tb, a.w, a.h, b.w, b.h);
  out.transform_a = Ta;
  out.transform_b = Tb;
  return out;
}

}  // namespace

TrainingPair AugmentPair(const ImagePair& pair, const AugmentParams& params, std::uint64_t seed) {
  params.Validate();
  Check(pair.corr_ab.width() == pair.a.image.width() &&
            pair.corr_ab.height() == pair.a.image.height(),
        ErrorCode::kInvalidArgument, "correspondence field does not match image A");
  Rng rng(seed);
  const int aw = pair.a.image.width();
  const int ah = pair.a.image.height();
  const int bw = pair.b.image.width();
  const int bh = pair.b.image.height();

  // 1-2: scales
  const double rho = EstimateRelativeScale(pair.corr_ab);
  double scale_a = 1.0;
  double scale_b = 1.0;
  double k_md = rho;
  if (params.random_scale) {
    const double target = rng.Uniform(params.short_edge_min, params.short_edge_max);
    scale_a = target / std::min(aw, ah);
    const double k = PyramidFactor(params.scales_per_octave);
    k_md = rng.Uniform(1.0 / std::sqrt(k), std::sqrt(k));
    scale_b = k_md * scale_a / rho;
  }
  const Dims da = ScaledDims(aw, ah, scale_a);
  const Dims db = ScaledDims(bw, bh, scale_b);
  const Homography Sa = ScaleHomography(scale_a, scale_a);
  const Homography Sb = ScaleHomography(scale_b, scale_b);
  const CorrespondenceField scaled = TransformField(pair.corr_ab, Sa, Sb, da.w, da.h, db.w, db.h);

  // 3-4: crops
  const int edge = CropEdge(params, std::min(da.w, da.h));
  const int cwa = std::min(edge, da.w);
  const int cha = std::min(edge, da.h);
  const int cwb = std::min(edge, db.w);
  const int chb = std::min(edge, db.h);
  const Grid<int> valid = ValidCounts(scaled);
  std::optional<Window> win_a;
  Window win_b;
  for (int attempt = 0; attempt < params.max_crop_attempts; ++attempt) {
    win_a = WeightedWindow(valid, cwa, cha, rng);
    if (!win_a) break;
    win_b = BestWindow(TargetCounts(scaled, *win_a, cwa, cha, db.w, db.h), cwb, chb);
    if (win_b.count > 0) break;
    win_a.reset();
  }
  Check(win_a.has_value(), ErrorCode::kEmptyInput, "crop leaves no correspondences");

  Homography Ta = TranslationHomography(-win_a->x0, -win_a->y0) * Sa;
  Homography Tb = TranslationHomography(-win_b.x0, -win_b.y0) * Sb;

  // 5: joint flip
  bool flipped = false;
  if (params.random_flip && rng.Bernoulli(0.5)) {
    flipped = true;
    Ta = FlipHomography(cwa) * Ta;
    Tb = FlipHomography(cwb) * Tb;
  }

  TrainingPair out = Assemble(pair, Ta, Tb, {cwa, cha}, {cwb, chb});
  out.flipped = flipped;
  out.relative_scale = k_md;

  // 6-7: photometric
  AddNoise(&out.a, params.noise_amplitude, rng);
  AddNoise(&out.b, params.noise_amplitude, rng);
  out.gain = SampleGain(rng, params.max_gain);
  ApplyGain(&out.b, out.gain);
  return out;
}

TrainingPair PrepareValidationPair(const ImagePair& pair, const AugmentParams& params) {
  params.Validate();
  const int aw = pair.a.image.width();
  const int ah = pair.a.image.height();
  const int bw = pair.b.image.width();
  const int bh = pair.b.image.height();
  const double scale_a = ClampScale(aw, ah, params.short_edge_min, params.short_edge_max);
  const double scale_b = ClampScale(bw, bh, params.short_edge_min, params.short_edge_max);
  const Dims da = ScaledDims(aw, ah, scale_a);
  const Dims db = ScaledDims(bw, bh, scale_b);
  const Homography Sa = ScaleHomography(scale_a, scale_a);
  const Homography Sb = ScaleHomography(scale_b, scale_b);
  const CorrespondenceField scaled = TransformField(pair.corr_ab, Sa, Sb, da.w, da.h, db.w, db.h);

  const int edge = CropEdge(params, std::min({da.w, da.h, db.w, db.h}));
  const int cwa = std::min(edge, da.w);
  const int cha = std::min(edge, da.h);
  const int cwb = std::min(edge, db.w);
  const int chb = std::min(edge, db.h);
  // Alternate between the two windows; each step cannot lower the joint count.
  Window win_a = BestWindow(ValidCounts(scaled), cwa, cha);
  Window win_b = BestWindow(TargetCounts(scaled, win_a, cwa, cha, db.w, db.h), cwb, chb);
  for (int round = 0; round < 3; ++round) {
    const Window next_a = BestWindow(SourceCounts(scaled, win_b, cwb, chb), cwa, cha);
    const Window next_b = BestWindow(TargetCounts(scaled, next_a, cwa, cha, db.w, db.h), cwb, chb);
    if (next_b.count <= win_b.count) break;
    win_a = next_a;
    win_b = next_b;
  }
  TrainingPair out = Assemble(pair, TranslationHomography(-win_a.x0, -win_a.y0) * Sa,
                              TranslationHomography(-win_b.x0, -win_b.y0) * Sb, {cwa, cha},
                              {cwb, chb});
  out.relative_scale = EstimateRelativeScale(pair.corr_ab) * scale_b / scale_a;
  return out;
}

AugmentedImage AugmentSingle(const Image8& img, const AugmentParams& params, std::uint64_t seed) {
  params.Validate();
  Rng rng(seed);
  const int w = img.width();
  const int h = img.height();
  const Homography H =
      SampleHomography(w, h, params.max_rotation_deg, params.max_projection, rng.Next());
  double scale = 1.0;
  if (params.random_scale)
    scale = rng.Uniform(params.short_edge_min, params.short_edge_max) / std::min(w, h);
  const Dims d = ScaledDims(w, h, scale);
  const int edge = CropEdge(params, std::min(d.w, d.h));
  const int cw = std::min(edge, d.w);
  const int ch = std::min(edge, d.h);
  const auto x0 = rng.UniformInt(0, d.w - cw);
  const auto y0 = rng.UniformInt(0, d.h - ch);
  Homography T = TranslationHomography(-static_cast<double>(x0), -static_cast<double>(y0)) *
                 ScaleHomography(scale, scale) * H;
  if (params.random_flip && rng.Bernoulli(0.5)) T = FlipHomography(cw) * T;

  AugmentedImage out;
  out.transform = T;
  out.image = WarpHomography(ToFloat(img), T, cw, ch);
  AddNoise(&out.image, params.noise_amplitude, rng);
  ApplyGain(&out.image, SampleGain(rng, params.max_gain));
  return out;
}

AugmentedImage PrepareValidationSingle(const Image8& img, const AugmentParams& params) {
  params.Validate();
  const double scale =
      ClampScale(img.width(), img.height(), params.short_edge_min, params.short_edge_max);
  const Dims d = ScaledDims(img.width(), img.height(), scale);
  const int edge = CropEdge(params, std::min(d.w, d.h));
  const int cw = std::min(edge, d.w);
  const int ch = std::min(edge, d.h);
  AugmentedImage out;
  out.transform = TranslationHomography(-((d.w - cw) / 2), -((d.h - ch) / 2)) *
                  ScaleHomography(scale, scale);
  out.image = WarpHomography(ToFloat(img), out.transform, cw, ch);
  return out;
}

ImageF StudentPerturb(const ImageF& img, double max_gain, double noise_sd, std::uint64_t seed) {
  Check(max_gain >= 1 && noise_sd >= 0, ErrorCode::kInvalidArgument,
        "invalid student perturbation parameters");
  Rng rng(seed);
  const double gain = SampleGain(rng, max_gain);
  ImageF out = img;
  for (auto& v : out.data()) {
    const double noise = noise_sd > 0 ? noise_sd * rng.Normal() : 0.0;
    v = std::clamp(static_cast<float>(v * gain + noise), 0.0f, 1.0f);
  }
  return out;
}

}  // namespace navfeat
