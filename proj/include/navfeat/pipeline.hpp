#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "navfeat/augment.hpp"
#include "navfeat/features.hpp"
#include "navfeat/hyperopt.hpp"
#include "navfeat/metrics.hpp"
#include "navfeat/pairing.hpp"
#include "navfeat/pose.hpp"
#include "navfeat/preprocess.hpp"

namespace navfeat {

struct PipelineConfig {
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string output = "out";

  PreprocessParams preprocess;

  PairingParams pairing;
  double synth_lambda_r = 10.0;  // degrees
  double synth_lambda_p = 0.5;
  double synth_focal_px = 0.0;   // 0 = image width
  double synth_depth = 1000.0;

  AugmentParams augment;
  int preview_count = 4;

  ExtractParams extract;
  int scales_per_octave = 4;
  int min_side = 128;

  FeaturePoseOptions pose;
  double match_tol_px = 5.0;

  std::string manifest;
  std::string features_dir;
  bool baseline = true;
  bool oracle = false;
  std::string method = "baseline";

  std::string preset = "pipeline";
  std::string space_file;  // custom search space JSON, overrides the preset
  std::string objective = "synthetic";  // or "pipeline"
  AshaParams asha;
  int workers = 1;
  bool random_only = false;
  std::string search_log;
  bool resume = false;

  // Nested JSON; unknown keys are rejected, absent keys keep their defaults.
  static PipelineConfig FromJson(const std::string& text);
  // Overlays the keys of `text` onto this config.
  void Merge(const std::string& text);
  std::string ToJson() const;  // canonical, every key present
  std::uint64_t Hash() const;
  std::string HashHex() const;
  void Validate() const;
};

enum class FeatureSource { kBaseline, kDenseMaps, kOracle };

FeatureSource SourceFor(const PipelineConfig& config);

// Oracle features: A keypoints from the baseline detector with random unique
// descriptors; B features are the same points mapped through the field.
void OracleFeatures(const ImagePair& pair, const ExtractParams& params, std::uint64_t seed,
                    SparseFeatures* fa, SparseFeatures* fb);

SparseFeatures BaselineFeatures(const Image8& img, const PipelineConfig& config);

// 3-D body coordinates at a sub-pixel location of a georeferenced image.
bool CoordAt(const CoordGrid& coords, double x, double y, Eigen::Vector3d* out);

struct PairEvaluation {
  PairResult result;
  MultiscaleResult matching;
};

// Matching, metrics and pose for one pair with precomputed features.
PairEvaluation EvaluateFeatures(const ImagePair& pair, const SparseFeatures& fa,
                                const SparseFeatures& fb, const PipelineConfig& config,
                                std::uint64_t seed);

PairEvaluation EvaluatePair(const ImagePair& pair, const PipelineConfig& config,
                            std::uint64_t seed, const std::string& features_dir = "");

struct PreprocessSummary {
  std::size_t available = 0;
  std::size_t acceptable = 0;
  std::size_t errors = 0;
};

// Writes 8-bit PNGs and rejections.csv into `output_dir`. Throws
// Error(kEmptyInput) when the input holds no images or nothing is accepted.
PreprocessSummary CmdPreprocess(const PipelineConfig& config, const std::string& input_dir,
                                const std::string& output_dir);

// Georeferenced images (with .geo backplanes) are paired by geometry; the
// rest become synthetic homography pairs. Writes pair files and manifest.csv.
std::size_t CmdPair(const PipelineConfig& config, const std::string& images_dir,
                    const std::string& output_dir);

std::size_t CmdAugmentPreview(const PipelineConfig& config, const std::string& image_path,
                              const std::string& output_dir);

// Baseline dense maps, one DFM1 per pyramid level: <stem>.<level>.dfm.
std::size_t CmdExtract(const PipelineConfig& config, const std::string& images_dir,
                       const std::string& output_dir);

struct EvaluateSummary {
  DatasetReport report;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

// Reads config.manifest; writes pairs.csv, report.csv and report.json.
EvaluateSummary CmdEvaluate(const PipelineConfig& config, const std::string& output_dir);

struct TuneSummary {
  SearchResult search;
  std::string best_config_json;
};

// Synthetic objective used for smoke runs: a smooth bump in normalized space
// with a saturating learning curve in the resource.
double SyntheticObjective(const SearchSpace& space, const Config& config, long resource,
                          long r_max, std::uint64_t seed);

SearchSpace TuneSpace(const PipelineConfig& config);

// Writes best_config.json and search_log.jsonl (unless config.search_log).
TuneSummary CmdTune(const PipelineConfig& config, const std::string& output_dir);

// Re-aggregates pairs.csv files (one method each) into report.csv/json.
std::vector<std::pair<std::string, DatasetReport>> CmdReport(
    const PipelineConfig& config, const std::vector<std::string>& pair_csvs,
    const std::string& output_dir);

std::string ReportCsv(const std::vector<std::pair<std::string, DatasetReport>>& reports,
                      const std::string& config_hash, std::size_t skipped);
std::string ReportJson(const std::vector<std::pair<std::string, DatasetReport>>& reports,
                       const std::string& config_hash, std::size_t skipped);

}  // namespace navfeat
