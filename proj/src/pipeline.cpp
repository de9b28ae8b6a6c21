#include "navfeat/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "navfeat/io.hpp"

namespace navfeat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Every configurable field, by dotted key. Used for reading, writing and
// validating unknown keys.
template <typename C, typename F>
void VisitFields(C& c, F&& f) {
  f("seed", c.seed);
  f("jobs", c.jobs);
  f("output", c.output);

  auto& p = c.preprocess;
  f("preprocess.p_lo", p.p_lo);
  f("preprocess.p_hi", p.p_hi);
  f("preprocess.gamma", p.gamma);
  f("preprocess.sat_p_lo", p.sat_p_lo);
  f("preprocess.sat_p_hi", p.sat_p_hi);
  f("preprocess.sat_min_spread", p.sat_min_spread);
  f("preprocess.bg_percentile", p.bg_percentile);
  f("preprocess.target_radius", p.target_radius);
  f("preprocess.min_target_contrast", p.min_target_contrast);
  f("preprocess.min_side", p.min_side);
  f("preprocess.max_black_row_fraction", p.max_black_row_fraction);
  f("preprocess.highlight_margin", p.highlight_margin);

  auto& q = c.pairing;
  f("pairing.clusters_per_image", q.clusters_per_image);
  f("pairing.kmeans_iterations", q.kmeans_iterations);
  f("pairing.kmeans_max_points", q.kmeans_max_points);
  f("pairing.min_angle_deg", q.min_angle_deg);
  f("pairing.max_angle_deg", q.max_angle_deg);
  f("pairing.max_distance_ratio", q.max_distance_ratio);
  f("pairing.max_pairs_per_image", q.max_pairs_per_image);
  f("pairing.max_correspondences", q.max_correspondences);
  f("pairing.neighbors", q.neighbors);
  f("pairing.distance_sigmas", q.distance_sigmas);
  f("pairing.morph_kernel", q.morph_kernel);
  f("pairing.morph_iterations", q.morph_iterations);
  f("pairing.synth_lambda_r", c.synth_lambda_r);
  f("pairing.synth_lambda_p", c.synth_lambda_p);
  f("pairing.synth_focal_px", c.synth_focal_px);
  f("pairing.synth_depth", c.synth_depth);

  auto& a = c.augment;
  f("augment.noise_amplitude", a.noise_amplitude);
  f("augment.max_gain", a.max_gain);
  f("augment.max_rotation_deg", a.max_rotation_deg);
  f("augment.max_projection", a.max_projection);
  f("augment.scales_per_octave", a.scales_per_octave);
  f("augment.short_edge_min", a.short_edge_min);
  f("augment.short_edge_max", a.short_edge_max);
  f("augment.crop_size", a.crop_size);
  f("augment.random_scale", a.random_scale);
  f("augment.random_flip", a.random_flip);
  f("augment.max_crop_attempts", a.max_crop_attempts);
  f("augment.student_max_gain", a.student_max_gain);
  f("augment.student_noise_sd", a.student_noise_sd);
  f("augment.preview_count", c.preview_count);

  f("extract.feat_ratio", c.extract.feat_ratio);
  f("extract.det_threshold", c.extract.det_threshold);
  f("extract.nms_radius", c.extract.nms_radius);
  f("extract.scales_per_octave", c.scales_per_octave);
  f("extract.min_side", c.min_side);

  f("pose.max_reproj_px", c.pose.ransac.max_reproj_px);
  f("pose.confidence", c.pose.ransac.confidence);
  f("pose.max_iterations", c.pose.ransac.max_iterations);
  f("pose.huber_delta", c.pose.refine.huber_delta);
  f("pose.refine_iterations", c.pose.refine.max_iterations);
  f("pose.cost_tolerance", c.pose.refine.cost_tolerance);
  f("pose.fail_min_inliers", c.pose.rules.min_inliers);
  f("pose.fail_max_error_deg", c.pose.rules.max_orientation_error_deg);
  f("pose.match_tol_px", c.match_tol_px);

  f("evaluate.manifest", c.manifest);
  f("evaluate.features_dir", c.features_dir);
  f("evaluate.baseline", c.baseline);
  f("evaluate.oracle", c.oracle);
  f("evaluate.method", c.method);

  f("tune.preset", c.preset);
  f("tune.space_file", c.space_file);
  f("tune.objective", c.objective);
  f("tune.eta", c.asha.eta);
  f("tune.r0", c.asha.r0);
  f("tune.r_max", c.asha.r_max);
  f("tune.trials", c.asha.total_trials);
  f("tune.workers", c.workers);
  f("tune.random_only", c.random_only);
  f("tune.search_log", c.search_log);
  f("tune.resume", c.resume);
}

std::string KeyOf(const std::string& section, const std::string& name) {
  return section.empty() ? name : section + "." + name;
}

void Flatten(const json& j, const std::string& prefix, std::map<std::string, json>* out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = KeyOf(prefix, it.key());
    if (it->is_object())
      Flatten(*it, key, out);
    else
      (*out)[key] = *it;
  }
}

template <typename T>
void Assign(const json& v, const std::string& key, T* out) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      Check(v.is_boolean(), ErrorCode::kFormat, key + ": expected true/false");
    } else if constexpr (std::is_integral_v<T>) {
      Check(v.is_number_integer() || v.is_number_unsigned(), ErrorCode::kFormat, key + ": expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      Check(v.is_number(), ErrorCode::kFormat, key + ": expected a number");
    } else {
      Check(v.is_string(), ErrorCode::kFormat, key + ": expected a string");
    }
    *out = v.get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, key + ": " + e.what());
  }
}

}  // namespace

void PipelineConfig::Merge(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("config: ") + e.what());
  }
  Check(j.is_object(), ErrorCode::kFormat, "config: expected an object");
  std::map<std::string, json> flat;
  Flatten(j, "", &flat);
  std::set<std::string> used;
  VisitFields(*this, [&](const char* key, auto& field) {
    const auto it = flat.find(key);
    if (it == flat.end()) return;
    Assign(it->second, key, &field);
    used.insert(key);
  });
  for (const auto& [key, v] : flat)
    Check(used.count(key) > 0, ErrorCode::kFormat, "config: unknown key " + key);
}

PipelineConfig PipelineConfig::FromJson(const std::string& text) {
  PipelineConfig c;
  c.Merge(text);
  c.Validate();
  return c;
}

std::string PipelineConfig::ToJson() const {
  json j = json::object();
  VisitFields(*this, [&](const char* key, const auto& field) {
    const std::string k = key;
    const auto dot = k.find('.');
    if (dot == std::string::npos)
      j[k] = field;
    else
      j[k.substr(0, dot)][k.substr(dot + 1)] = field;
  });
  return j.dump(2);
}

std::uint64_t PipelineConfig::Hash() const {
  // Execution-only settings do not change results.
  PipelineConfig c = *this;
  c.jobs = 1;
  c.workers = 1;
  c.output.clear();
  return Fnv1a(c.ToJson());
}

std::string PipelineConfig::HashHex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(Hash()));
  return buf;
}

void PipelineConfig::Validate() const {
  auto require = [](bool ok, const std::string& what) { Check(ok, ErrorCode::kInvalidArgument, what); };
  require(jobs >= 1, "jobs must be >= 1");
  preprocess.Validate();
  augment.Validate();
  require(synth_lambda_r >= 0 && synth_lambda_r <= 180, "pairing.synth_lambda_r must lie in [0, 180]");
  require(synth_lambda_p >= 0 && synth_lambda_p < 1, "pairing.synth_lambda_p must lie in [0, 1)");
  require(synth_focal_px >= 0 && synth_depth > 0, "synthetic focal length and depth must be positive");
  require(pairing.min_angle_deg >= 0 && pairing.min_angle_deg <= pairing.max_angle_deg,
          "pairing angle limits out of order");
  require(pairing.clusters_per_image >= 1 && pairing.neighbors >= 1 && pairing.max_correspondences >= 1,
          "pairing counts must be positive");
  require(preview_count >= 0, "augment.preview_count must be >= 0");
  require(extract.feat_ratio > 0 && extract.feat_ratio <= 1, "extract.feat_ratio must lie in (0, 1]");
  require(extract.det_threshold >= 0 && extract.det_threshold <= 1, "extract.det_threshold must lie in [0, 1]");
  require(extract.nms_radius >= 1, "extract.nms_radius must be >= 1");
  require(scales_per_octave >= 1 && min_side >= 8, "extract pyramid settings out of range");
  require(pose.ransac.max_reproj_px > 0 && pose.ransac.confidence > 0 && pose.ransac.confidence < 1 &&
              pose.ransac.max_iterations >= 1,
          "pose RANSAC settings out of range");
  require(pose.refine.huber_delta > 0 && pose.refine.max_iterations >= 0, "pose refinement settings out of range");
  require(pose.rules.max_orientation_error_deg > 0, "pose.fail_max_error_deg must be positive");
  require(match_tol_px > 0, "pose.match_tol_px must be positive");
  require(objective == "synthetic" || objective == "pipeline", "tune.objective must be synthetic or pipeline");
  if (space_file.empty()) {
    const auto names = PresetNames();
    require(std::find(names.begin(), names.end(), preset) != names.end(), "unknown preset " + preset);
  }
  asha.Validate();
  require(workers >= 1, "tune.workers must be >= 1");
}

FeatureSource SourceFor(const PipelineConfig& config) {
  if (config.oracle) return FeatureSource::kOracle;
  if (!config.features_dir.empty()) return FeatureSource::kDenseMaps;
  return FeatureSource::kBaseline;
}

void OracleFeatures(const ImagePair& pair, const ExtractParams& params, std::uint64_t seed,
                    SparseFeatures* fa, SparseFeatures* fb) {
  // Any strict corner maximum will do; the threshold is irrelevant here.
  ExtractParams p = params;
  p.det_threshold = 0.0;
  const ImageF response = HarrisResponse(ToFloat(pair.a.image));
  const auto kps = DetectKeypoints(response, nullptr, p);
  Rng rng(seed);
  constexpr int kDim = 32;
  fa->clear();
  fb->clear();
  for (const auto& kp : kps) {
    Feature f;
    f.x = kp.px;
    f.y = kp.py;
    f.score = kp.score;
    f.descriptor.resize(kDim);
    for (int i = 0; i < kDim; ++i) f.descriptor[i] = static_cast<float>(rng.Normal());
    f.descriptor.normalize();
    const auto g = pair.corr_ab.Lookup(f.x, f.y);
    if (g) {
      Feature h = f;
      h.x = g->x();
      h.y = g->y();
      fb->push_back(std::move(h));
    }
    fa->push_back(std::move(f));
  }
}

SparseFeatures BaselineFeatures(const Image8& img, const PipelineConfig& config) {
  SparseFeatures out;
  for (const auto& level : BuildPyramid(ToFloat(img), config.scales_per_octave, config.min_side)) {
    auto fs = BaselineExtractSparse(level.image, level.scale, config.extract);
    out.insert(out.end(), std::make_move_iterator(fs.begin()), std::make_move_iterator(fs.end()));
  }
  return out;
}

bool CoordAt(const CoordGrid& coords, double x, double y, Eigen::Vector3d* out) {
  if (coords.empty()) return false;
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;
  if (coords.contains(x0, y0) && coords.contains(x0 + 1, y0 + 1)) {
    const auto& a = coords(x0, y0);
    const auto& b = coords(x0 + 1, y0);
    const auto& c = coords(x0, y0 + 1);
    const auto& d = coords(x0 + 1, y0 + 1);
    if (IsFinite(a) && IsFinite(b) && IsFinite(c) && IsFinite(d)) {
      *out = ((1 - fx) * (1 - fy)) * a.cast<double>() + (fx * (1 - fy)) * b.cast<double>() +
             ((1 - fx) * fy) * c.cast<double>() + (fx * fy) * d.cast<double>();
      return true;
    }
  }
  const int xn = static_cast<int>(std::lround(x));
  const int yn = static_cast<int>(std::lround(y));
  if (!coords.contains(xn, yn) || !IsFinite(coords(xn, yn))) return false;
  *out = coords(xn, yn).cast<double>();
  return true;
}

PairEvaluation EvaluateFeatures(const ImagePair& pair, const SparseFeatures& fa,
                                const SparseFeatures& fb, const PipelineConfig& config,
                                std::uint64_t seed) {
  PairEvaluation ev;
  ev.matching = MatchMultiscale(fa, fb, config.scales_per_octave);
  LabelMatches(&ev.matching.matches, fa, fb, pair.corr_ab, config.match_tol_px);
  ev.result.metrics = ComputePairMetrics(ev.matching.matches, fa, fb, config.match_tol_px);
  ev.result.difficulty = ClassifyDifficulty(pair);

  if (!pair.a.georeferenced()) return ev;  // failed pose by default
  const auto truth = GroundTruthPose(pair, DeriveSeed(seed, 1));
  if (!truth) return ev;
  std::vector<Correspondence2D3D> matches;
  for (const auto& m : ev.matching.matches.matches) {
    Correspondence2D3D c;
    if (!CoordAt(pair.a.coords, fa[m.a].x, fa[m.a].y, &c.point)) continue;
    c.pixel = Eigen::Vector2d(fb[m.b].x, fb[m.b].y);
    matches.push_back(c);
  }
  ev.result.pose = EstimateFeaturePose(matches, pair.b.intrinsics, *truth, DeriveSeed(seed, 2), config.pose);
  return ev;
}

namespace {

std::vector<DenseFeatureMap> LoadDenseMaps(const std::string& dir, const std::string& stem) {
  std::vector<std::pair<int, fs::path>> files;
  const fs::path single = fs::path(dir) / (stem + ".dfm");
  if (fs::exists(single)) files.emplace_back(0, single);
  if (fs::is_directory(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      const std::string name = e.path().filename().string();
      const std::string prefix = stem + ".";
      if (name.size() <= prefix.size() + 4 || name.compare(0, prefix.size(), prefix) != 0 ||
          e.path().extension() != ".dfm")
        continue;
      const std::string level = name.substr(prefix.size(), name.size() - prefix.size() - 4);
      if (level.empty() || !std::all_of(level.begin(), level.end(), ::isdigit)) continue;
      files.emplace_back(std::stoi(level), e.path());
    }
  }
  Check(!files.empty(), ErrorCode::kIo, "no feature maps for " + stem);
  std::sort(files.begin(), files.end());
  std::vector<DenseFeatureMap> maps;
  for (const auto& [level, path] : files) maps.push_back(ReadDfm1(path.string()));
  return maps;
}

}  // namespace

PairEvaluation EvaluatePair(const ImagePair& pair, const PipelineConfig& config,
                            std::uint64_t seed, const std::string& features_dir) {
  SparseFeatures fa, fb;
  switch (SourceFor(config)) {
    case FeatureSource::kOracle:
      OracleFeatures(pair, config.extract, DeriveSeed(seed, 0), &fa, &fb);
      break;
    case FeatureSource::kBaseline:
      fa = BaselineFeatures(pair.a.image, config);
      fb = BaselineFeatures(pair.b.image, config);
      break;
    case FeatureSource::kDenseMaps: {
      const std::string dir = features_dir.empty() ? config.features_dir : features_dir;
      for (const auto& m : LoadDenseMaps(dir, pair.a.id)) {
        auto f = ExtractSparse(m, config.extract);
        fa.insert(fa.end(), f.begin(), f.end());
      }
      for (const auto& m : LoadDenseMaps(dir, pair.b.id)) {
        auto f = ExtractSparse(m, config.extract);
        fb.insert(fb.end(), f.begin(), f.end());
      }
      break;
    }
  }
  return EvaluateFeatures(pair, fa, fb, config, seed);
}

namespace {

std::vector<fs::path> ListFiles(const std::string& dir, const std::set<std::string>& extensions) {
  Check(fs::is_directory(dir), ErrorCode::kIo, "not a directory: " + dir);
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (extensions.count(ext)) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void EnsureDir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  Check(fs::is_directory(dir), ErrorCode::kIo, "cannot create directory " + dir);
}

std::string CsvQuote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

std::string Num(double v, int precision = 17) {
  if (std::isnan(v) || std::isinf(v)) return "";
  std::ostringstream ss;
  ss.precision(precision);
  ss << v;
  return ss.str();
}

std::string Fixed(double v, int digits) {
  if (std::isnan(v) || std::isinf(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void WriteGeoImage(const fs::path& dir, const std::string& stem, const GeoImage& img) {
  WritePng8((dir / (stem + ".png")).string(), img.image);
  WriteFileBytes((dir / (stem + ".json")).string(), SidecarToJson(img) + "\n");
  if (img.georeferenced()) WriteGeo1((dir / (stem + ".geo")).string(), img.coords);
}

}  // namespace

PreprocessSummary CmdPreprocess(const PipelineConfig& config, const std::string& input_dir,
                                const std::string& output_dir) {
  config.Validate();
  const auto files = ListFiles(input_dir, {".png", ".raw"});
  Check(!files.empty(), ErrorCode::kEmptyInput, "no inputs");
  EnsureDir(output_dir);

  struct Outcome {
    std::string reason;  // empty when accepted
    Image8 image;
  };
  std::vector<Outcome> outcomes(files.size());
  ParallelFor(files.size(), config.jobs, [&](std::size_t i) {
    try {
      const RawImage raw = ReadRawImage(files[i].string());
      auto r = FilterImage(raw, config.preprocess);
      if (r.accepted())
        outcomes[i].image = std::move(r.image);
      else
        outcomes[i].reason = FilterReasonName(r.reason);
    } catch (const Error& e) {
      outcomes[i].reason = std::string("unreadable: ") + e.what();
    }
  });

  PreprocessSummary s;
  s.available = files.size();
  std::ostringstream rejections;
  rejections << "filename,reason\n";
  for (std::size_t i = 0; i < files.size(); ++i) {
    const std::string name = files[i].filename().string();
    if (!outcomes[i].reason.empty()) {
      if (outcomes[i].reason.rfind("unreadable", 0) == 0) ++s.errors;
      rejections << CsvQuote(name) << ',' << CsvQuote(outcomes[i].reason) << '\n';
      continue;
    }
    ++s.acceptable;
    const std::string stem = files[i].stem().string();
    WritePng8((fs::path(output_dir) / (stem + ".png")).string(), outcomes[i].image);
    // Georeferencing travels with the image.
    for (const char* ext : {".json", ".geo"}) {
      fs::path side = files[i];
      side.replace_extension(ext);
      if (fs::exists(side))
        fs::copy_file(side, fs::path(output_dir) / (stem + ext), fs::copy_options::overwrite_existing);
    }
  }
  WriteFileBytes((fs::path(output_dir) / "rejections.csv").string(), rejections.str());
  Check(s.acceptable > 0, ErrorCode::kEmptyInput, "no acceptable images");
  return s;
}

std::size_t CmdPair(const PipelineConfig& config, const std::string& images_dir,
                    const std::string& output_dir) {
  config.Validate();
  const auto files = ListFiles(images_dir, {".png"});
  Check(!files.empty(), ErrorCode::kEmptyInput, "no inputs");
  EnsureDir(output_dir);

  std::vector<GeoImage> geo;
  std::vector<GeoImage> plain;
  for (const auto& f : files) {
    GeoImage g = LoadGeoImage(f.string());
    (g.georeferenced() ? geo : plain).push_back(std::move(g));
  }

  std::vector<ImagePair> pairs;
  if (geo.size() >= 2) {
    const auto candidates = BuildPairCandidates(geo, config.pairing, config.seed);
    PairingBook book(config.pairing);
    std::map<std::size_t, Mask> masks;
    auto mask_of = [&](std::size_t i) -> const Mask& {
      auto it = masks.find(i);
      if (it == masks.end()) it = masks.emplace(i, ShadowMask(geo[i].image, config.pairing)).first;
      return it->second;
    };
    for (const auto& c : candidates) {
      const GeoImage& a = geo[c.first];
      const GeoImage& b = geo[c.second];
      if (!book.GeometryAcceptable(a, b)) continue;
      if (book.PairCount(a.id) >= config.pairing.max_pairs_per_image ||
          book.PairCount(b.id) >= config.pairing.max_pairs_per_image)
        continue;
      CorrespondenceResult corr;
      try {
        corr = ComputeCorrespondences(a, b, mask_of(c.first), mask_of(c.second), config.pairing);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kEmptyInput) continue;
        throw;
      }
      if (!book.Accept(a, b)) continue;
      ImagePair p;
      p.a = a;
      p.b = b;
      p.corr_ab = std::move(corr.field);
      p.view_angle_change_deg = BoresightAngleDeg(a, b);
      p.source = PairSource::kReal;
      pairs.push_back(NormalizeRotation(p).pair);
    }
  }
  for (std::size_t i = 0; i < plain.size(); ++i) {
    ImagePair p = MakeSyntheticPair(plain[i].image, config.synth_lambda_r, config.synth_lambda_p,
                                    DeriveSeed(config.seed, 1000 + i));
    const double focal = config.synth_focal_px > 0 ? config.synth_focal_px : plain[i].image.width();
    AttachPlanarGeometry(&p, focal, config.synth_depth);
    pairs.push_back(std::move(p));
  }

  std::vector<PairManifestRow> rows;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "pair_%04zu", k);
    const auto& p = pairs[k];
    WriteGeoImage(output_dir, std::string(stem) + "_a", p.a);
    WriteGeoImage(output_dir, std::string(stem) + "_b", p.b);
    WriteCor1((fs::path(output_dir) / (std::string(stem) + ".cor")).string(), p.corr_ab);
    PairManifestRow r;
    r.image_a = std::string(stem) + "_a.png";
    r.image_b = std::string(stem) + "_b.png";
    r.corr_file = std::string(stem) + ".cor";
    r.phi = p.view_angle_change_deg.value_or(kNaN);
    r.alpha = p.light_alpha_deg.value_or(kNaN);
    r.beta = p.light_beta_deg.value_or(kNaN);
    r.source = p.source;
    rows.push_back(r);
  }
  WritePairManifest((fs::path(output_dir) / "manifest.csv").string(), rows);
  Check(!rows.empty(), ErrorCode::kEmptyInput, "no pairs formed");
  return rows.size();
}

std::size_t CmdAugmentPreview(const PipelineConfig& config, const std::string& image_path,
                              const std::string& output_dir) {
  config.Validate();
  const Image8 img = ReadPng8(image_path);
  Check(!img.empty(), ErrorCode::kEmptyInput, "empty image");
  EnsureDir(output_dir);
  std::ostringstream csv;
  csv << "index,h00,h01,h02,h10,h11,h12,h20,h21,h22\n";
  for (int i = 0; i < config.preview_count; ++i) {
    const auto out = AugmentSingle(img, config.augment, DeriveSeed(config.seed, static_cast<std::uint64_t>(i)));
    char name[32];
    std::snprintf(name, sizeof name, "preview_%02d.png", i);
    WritePng8((fs::path(output_dir) / name).string(), ToU8(out.image));
    csv << i;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) csv << ',' << Num(out.transform(r, c));
    csv << '\n';
  }
  WriteFileBytes((fs::path(output_dir) / "preview_transforms.csv").string(), csv.str());
  return static_cast<std::size_t>(config.preview_count);
}

std::size_t CmdExtract(const PipelineConfig& config, const std::string& images_dir,
                       const std::string& output_dir) {
  config.Validate();
  const auto files = ListFiles(images_dir, {".png"});
  Check(!files.empty(), ErrorCode::kEmptyInput, "no inputs");
  EnsureDir(output_dir);
  std::vector<std::size_t> written(files.size(), 0);
  ParallelFor(files.size(), config.jobs, [&](std::size_t i) {
    const Image8 img = ReadPng8(files[i].string());
    const auto levels = BuildPyramid(ToFloat(img), config.scales_per_octave, config.min_side);
    for (std::size_t l = 0; l < levels.size(); ++l) {
      DenseFeatureMap m = BaselineDenseExtract(levels[l].image);
      m.scale = static_cast<float>(levels[l].scale);
      const std::string name = files[i].stem().string() + "." + std::to_string(l) + ".dfm";
      WriteDfm1((fs::path(output_dir) / name).string(), m);
      ++written[i];
    }
  });
  std::size_t n = 0;
  for (auto w : written) n += w;
  return n;
}

namespace {

ImagePair LoadPair(const PairManifestRow& row, const fs::path& base) {
  ImagePair p;
  p.a = LoadGeoImage((base / row.image_a).string());
  p.b = LoadGeoImage((base / row.image_b).string());
  p.corr_ab = ReadCor1((base / row.corr_file).string());
  Check(p.corr_ab.width() == p.a.image.width() && p.corr_ab.height() == p.a.image.height(),
        ErrorCode::kFormat, row.corr_file + ": field size differs from image A");
  if (!std::isnan(row.phi)) p.view_angle_change_deg = row.phi;
  if (!std::isnan(row.alpha)) p.light_alpha_deg = row.alpha;
  if (!std::isnan(row.beta)) p.light_beta_deg = row.beta;
  p.source = row.source;
  return p;
}

const char* kPairsHeader =
    "method,image_a,image_b,difficulty,m_score,mma,map,le_px,proposed,possible,correct,inliers,"
    "orientation_error_deg,pose_failed\n";

std::string PairsCsvRow(const std::string& method, const PairManifestRow& row, const PairResult& r) {
  std::ostringstream ss;
  const auto& m = r.metrics;
  ss << CsvQuote(method) << ',' << CsvQuote(row.image_a) << ',' << CsvQuote(row.image_b) << ','
     << DifficultyName(r.difficulty) << ',' << (m.valid ? Num(m.m_score) : "") << ','
     << (m.valid ? Num(m.mma) : "") << ',' << Num(m.map) << ',' << Num(m.le_px) << ',' << m.proposed
     << ',' << m.possible << ',' << m.correct << ',' << r.pose.inlier_count << ','
     << Num(r.pose.orientation_error_deg) << ',' << (r.pose.failed ? 1 : 0) << '\n';
  return ss.str();
}

}  // namespace

std::string ReportCsv(const std::vector<std::pair<std::string, DatasetReport>>& reports,
                      const std::string& config_hash, std::size_t skipped) {
  std::ostringstream ss;
  ss << "method,subset,m_score,fail_pct,p50,p85,n\n";
  for (const auto& [method, rep] : reports)
    for (const auto* s : {&rep.easy, &rep.hard, &rep.all})
      ss << CsvQuote(method) << ',' << s->subset << ',' << Fixed(s->mean_m_score, 4) << ','
         << Fixed(s->fail_pct, 2) << ',' << Fixed(s->p50, 3) << ',' << Fixed(s->p85, 3) << ',' << s->n
         << '\n';
  ss << "# config_hash=" << config_hash << " skipped=" << skipped << '\n';
  return ss.str();
}

std::string ReportJson(const std::vector<std::pair<std::string, DatasetReport>>& reports,
                       const std::string& config_hash, std::size_t skipped) {
  auto value = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json rows = json::array();
  for (const auto& [method, rep] : reports)
    for (const auto* s : {&rep.easy, &rep.hard, &rep.all})
      rows.push_back({{"method", method},
                      {"subset", s->subset},
                      {"m_score", value(s->mean_m_score)},
                      {"fail_pct", value(s->fail_pct)},
                      {"p50", value(s->p50)},
                      {"p85", value(s->p85)},
                      {"n", s->n}});
  return json{{"config_hash", config_hash}, {"skipped", skipped}, {"rows", rows}}.dump(2) + "\n";
}

EvaluateSummary CmdEvaluate(const PipelineConfig& config, const std::string& output_dir) {
  config.Validate();
  Check(!config.manifest.empty(), ErrorCode::kInvalidArgument, "no pair manifest given");
  Check(fs::exists(config.manifest), ErrorCode::kInvalidArgument, "missing manifest " + config.manifest);
  if (SourceFor(config) == FeatureSource::kDenseMaps)
    Check(fs::is_directory(config.features_dir), ErrorCode::kIo,
          "missing features directory " + config.features_dir);
  const auto rows = ReadPairManifest(config.manifest);
  Check(!rows.empty(), ErrorCode::kEmptyInput, "empty pair manifest");
  EnsureDir(output_dir);
  const fs::path base = fs::path(config.manifest).parent_path();

  std::vector<std::optional<PairResult>> results(rows.size());
  std::vector<std::string> warnings(rows.size());
  ParallelFor(rows.size(), config.jobs, [&](std::size_t i) {
    try {
      const ImagePair pair = LoadPair(rows[i], base);
      results[i] = EvaluatePair(pair, config, DeriveSeed(config.seed, i)).result;
    } catch (const Error& e) {
      warnings[i] = e.what();
    }
  });

  EvaluateSummary s;
  std::vector<PairResult> done;
  std::ostringstream pairs_csv;
  pairs_csv << kPairsHeader;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!results[i]) {
      std::cerr << "warning: skipped pair " << rows[i].image_a << " / " << rows[i].image_b << ": "
                << warnings[i] << '\n';
      ++s.skipped;
      continue;
    }
    pairs_csv << PairsCsvRow(config.method, rows[i], *results[i]);
    done.push_back(*results[i]);
  }
  s.evaluated = done.size();
  s.report = AggregateReport(done);
  const std::vector<std::pair<std::string, DatasetReport>> reports{{config.method, s.report}};
  const fs::path out(output_dir);
  WriteFileBytes((out / "pairs.csv").string(), pairs_csv.str());
  WriteFileBytes((out / "report.csv").string(), ReportCsv(reports, config.HashHex(), s.skipped));
  WriteFileBytes((out / "report.json").string(), ReportJson(reports, config.HashHex(), s.skipped));
  Check(s.evaluated > 0, ErrorCode::kEmptyInput, "no pair could be evaluated");
  return s;
}

double SyntheticObjective(const SearchSpace& space, const Config& config, long resource,
                          long r_max, std::uint64_t seed) {
  const Eigen::VectorXd x = space.Normalize(config);
  double d2 = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double c = 0.35 + 0.15 * static_cast<double>(i % 3);
    d2 += (x[i] - c) * (x[i] - c);
  }
  const double quality = std::exp(-4.0 * d2 / static_cast<double>(std::max<Eigen::Index>(1, x.size())));
  const double progress = 1.0 - std::exp(-3.0 * static_cast<double>(resource) / static_cast<double>(r_max));
  Rng rng(DeriveSeed(seed, static_cast<std::uint64_t>(resource)));
  return quality * progress + 0.01 * rng.Normal();
}

SearchSpace TuneSpace(const PipelineConfig& config) {
  if (!config.space_file.empty()) return SearchSpace::FromJson(ReadFileBytes(config.space_file));
  return PresetSpace(config.preset);
}

TuneSummary CmdTune(const PipelineConfig& config, const std::string& output_dir) {
  config.Validate();
  const SearchSpace space = TuneSpace(config);
  EnsureDir(output_dir);

  Objective objective;
  std::vector<ImagePair> pairs;
  if (config.objective == "synthetic") {
    const long r_max = config.asha.r_max;
    objective = [&space, r_max](const Config& c, long resource, std::uint64_t seed) {
      return SyntheticObjective(space, c, resource, r_max, seed);
    };
  } else {
    Check(!config.manifest.empty() && fs::exists(config.manifest), ErrorCode::kIo,
          "pipeline objective needs a pair manifest");
    const auto rows = ReadPairManifest(config.manifest);
    Check(!rows.empty(), ErrorCode::kEmptyInput, "empty pair manifest");
    const fs::path base = fs::path(config.manifest).parent_path();
    for (const auto& r : rows) pairs.push_back(LoadPair(r, base));
    const int i_thr = space.IndexOf("det_threshold");
    const int i_ratio = space.IndexOf("feat_ratio");
    const int i_s = space.IndexOf("scales_per_octave");
    Check(i_thr >= 0 || i_ratio >= 0 || i_s >= 0, ErrorCode::kInvalidArgument,
          "pipeline objective needs extraction parameters in the search space");
    objective = [&, i_thr, i_ratio, i_s](const Config& c, long resource, std::uint64_t seed) {
      PipelineConfig local = config;
      local.oracle = false;
      local.features_dir.clear();
      if (i_thr >= 0) local.extract.det_threshold = c[static_cast<std::size_t>(i_thr)];
      if (i_ratio >= 0) local.extract.feat_ratio = c[static_cast<std::size_t>(i_ratio)];
      if (i_s >= 0) local.scales_per_octave = static_cast<int>(c[static_cast<std::size_t>(i_s)]);
      // More resource, more validation pairs.
      const auto n = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::ceil(static_cast<double>(pairs.size()) * resource /
                                                static_cast<double>(config.asha.r_max))));
      double sum = 0.0;
      std::size_t valid = 0;
      for (std::size_t i = 0; i < std::min(n, pairs.size()); ++i) {
        const auto ev = EvaluatePair(pairs[i], local, DeriveSeed(seed, i));
        if (!ev.result.metrics.valid) continue;
        sum += ev.result.metrics.m_score;
        ++valid;
      }
      return valid > 0 ? sum / static_cast<double>(valid) : 0.0;
    };
  }

  SearchOptions options;
  options.asha = config.asha;
  options.bo.random_only = config.random_only;
  options.workers = config.workers;
  options.seed = config.seed;
  options.log_path = config.search_log.empty() ? (fs::path(output_dir) / "search_log.jsonl").string()
                                               : config.search_log;
  options.resume = config.resume;

  TuneSummary s;
  s.search = RunSearch(objective, space, options);
  Check(s.search.best_trial >= 0, ErrorCode::kEstimationFailed, "every trial failed");
  const TrialRecord* best = nullptr;
  std::ostringstream trials_csv;
  trials_csv << "trial,status,resource,best_score";
  for (const auto& p : space.params()) trials_csv << ',' << p.name;
  trials_csv << '\n';
  for (const auto& t : s.search.trials) {
    if (t.id == s.search.best_trial) best = &t;
    trials_csv << t.id << ',' << TrialStatusName(t.status) << ',' << t.resource() << ','
               << Num(t.best_score);
    const json cfg = json::parse(space.ConfigToJson(t.config));
    for (const auto& p : space.params()) {
      const auto& v = cfg.at(p.name);
      trials_csv << ',' << (v.is_string() ? CsvQuote(v.get<std::string>()) : v.dump());
    }
    trials_csv << '\n';
  }
  const json best_json{{"trial", best->id},
                       {"score", best->best_score},
                       {"space", space.name()},
                       {"config", json::parse(space.ConfigToJson(best->config))}};
  s.best_config_json = best_json.dump(2) + "\n";
  WriteFileBytes((fs::path(output_dir) / "best_config.json").string(), s.best_config_json);
  WriteFileBytes((fs::path(output_dir) / "trials.csv").string(), trials_csv.str());
  return s;
}

namespace {

std::vector<std::string> SplitRow(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  out.push_back(cell);
  return out;
}

double Cell(const std::string& s) { return s.empty() ? kNaN : std::stod(s); }

}  // namespace

std::vector<std::pair<std::string, DatasetReport>> CmdReport(
    const PipelineConfig& config, const std::vector<std::string>& pair_csvs,
    const std::string& output_dir) {
  Check(!pair_csvs.empty(), ErrorCode::kEmptyInput, "no inputs");
  std::vector<std::string> order;
  std::map<std::string, std::vector<PairResult>> by_method;
  for (const auto& path : pair_csvs) {
    std::ifstream in(path);
    Check(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path);
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (header) {
        header = false;
        Check(line.rfind("method,", 0) == 0, ErrorCode::kFormat, path + ": not a pairs file");
        continue;
      }
      const auto c = SplitRow(line);
      Check(c.size() == 14, ErrorCode::kFormat, path + ": expected 14 columns");
      try {
        PairResult r;
        r.difficulty = c[3] == "easy" ? Difficulty::kEasy : Difficulty::kHard;
        r.metrics.valid = !c[4].empty();
        r.metrics.m_score = Cell(c[4]);
        r.metrics.mma = Cell(c[5]);
        r.metrics.map = Cell(c[6]);
        r.metrics.le_px = Cell(c[7]);
        r.metrics.proposed = std::stoul(c[8]);
        r.metrics.possible = std::stoul(c[9]);
        r.metrics.correct = std::stoul(c[10]);
        r.pose.inlier_count = std::stoul(c[11]);
        r.pose.orientation_error_deg = Cell(c[12]);
        r.pose.failed = c[13] == "1";
        if (!by_method.count(c[0])) order.push_back(c[0]);
        by_method[c[0]].push_back(r);
      } catch (const std::logic_error&) {
        throw Error(ErrorCode::kFormat, path + ": bad number in row");
      }
    }
  }
  Check(!order.empty(), ErrorCode::kEmptyInput, "no pair results");
  std::vector<std::pair<std::string, DatasetReport>> reports;
  for (const auto& m : order) reports.emplace_back(m, AggregateReport(by_method[m]));
  EnsureDir(output_dir);
  WriteFileBytes((fs::path(output_dir) / "report.csv").string(), ReportCsv(reports, config.HashHex(), 0));
  WriteFileBytes((fs::path(output_dir) / "report.json").string(), ReportJson(reports, config.HashHex(), 0));
  return reports;
}

}  // namespace navfeat
