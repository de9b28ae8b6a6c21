#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "navfeat/common.hpp"

namespace navfeat {

enum class ParamKind { kLog, kUniform, kInt, kCategorical };

const char* ParamKindName(ParamKind kind);  // "log", "uni", "int", "cat"
ParamKind ParseParamKind(const std::string& s);

struct ParamSpec {
  std::string group;
  std::string name;
  std::string symbol;
  ParamKind kind = ParamKind::kUniform;
  double lo = 0.0;  // numeric kinds
  double hi = 1.0;
  double init_lo = 0.0;
  double init_hi = 1.0;
  std::vector<std::string> labels;  // categorical only
  std::string initial_label;

  bool operator==(const ParamSpec&) const = default;
};

// One value per parameter; categoricals hold the label index.
using Config = std::vector<double>;

class SearchSpace {
 public:
  SearchSpace() = default;
  SearchSpace(std::string name, std::vector<ParamSpec> params);

  const std::string& name() const { return name_; }
  const std::vector<ParamSpec>& params() const { return params_; }
  std::size_t size() const { return params_.size(); }
  int IndexOf(const std::string& name) const;  // -1 when absent

  void Validate() const;
  bool Contains(const Config& config) const;

  // Log kinds are min-max scaled in log space, categoricals as idx / (L - 1).
  // Throws Error(kInvalidArgument) for values outside the space.
  Eigen::VectorXd Normalize(const Config& config) const;
  // Inverse of Normalize; clamps to [0, 1], rounds integers and categories.
  Config Denormalize(const Eigen::VectorXd& x) const;

  Config SampleInitial(Rng& rng) const;
  Config SampleFull(Rng& rng) const;

  std::string ToJson() const;
  static SearchSpace FromJson(const std::string& text);
  // {"name": value, ...} with labels for categoricals.
  std::string ConfigToJson(const Config& config) const;
  Config ConfigFromJson(const std::string& text) const;

  bool operator==(const SearchSpace&) const = default;

 private:
  std::string name_;
  std::vector<ParamSpec> params_;
};

// Built-in spaces: "disk", "r2d2u", "lafe".
SearchSpace PresetSpace(const std::string& name);
std::vector<std::string> PresetNames();

struct AshaParams {
  int eta = 3;
  long r0 = 1500;
  long r_max = 24000;
  int total_trials = 243;

  void Validate() const;
  // r0 * eta^k strictly below r_max.
  std::vector<long> Rungs() const;
};

enum class AshaDecision { kContinue, kStop, kPassThrough };
const char* AshaDecisionName(AshaDecision d);

// Asynchronous successive halving with immediate decisions. A trial continues
// past a rung when its score reaches the (1 - 1/eta) percentile (linear
// interpolation) of the scores recorded there before it; the first arrival
// always continues. Its own score is recorded after the decision.
class AshaScheduler {
 public:
  explicit AshaScheduler(AshaParams params);

  AshaDecision OnReport(long resource, double score);
  bool WouldContinue(std::size_t rung, double score) const;
  const std::vector<double>& Recorded(std::size_t rung) const { return recorded_.at(rung); }
  const AshaParams& params() const { return params_; }
  const std::vector<long>& rungs() const { return rungs_; }

 private:
  AshaParams params_;
  std::vector<long> rungs_;
  std::vector<std::vector<double>> recorded_;
};

struct GpOptions {
  int restarts = 5;
  int max_iterations = 50;
  double length_lo = 0.01;
  double length_hi = 100.0;
  double amplitude_lo = 1e-2;  // signal variance on standardized targets
  double amplitude_hi = 1e2;
  double noise_lo = 1e-10;
  double noise_hi = 1.0;
};

// ARD Matern-5/2 plus white noise on standardized targets, hyperparameters
// by maximum marginal likelihood (L-BFGS with restarts).
class GaussianProcess {
 public:
  static GaussianProcess Fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const GpOptions& options, std::uint64_t seed,
                             const GaussianProcess* warm_start = nullptr);

  // Posterior mean and latent standard deviation in target units.
  void Predict(const Eigen::VectorXd& x, double* mean, double* sd) const;

  const Eigen::VectorXd& length_scales() const { return lengths_; }
  double signal_variance() const { return signal_; }
  double noise_variance() const { return noise_; }
  double neg_log_likelihood() const { return nll_; }
  bool noise_only() const { return noise_only_; }
  double y_mean() const { return y_mean_; }
  double y_scale() const { return y_scale_; }

 private:
  Eigen::MatrixXd X_;
  Eigen::VectorXd alpha_;
  Eigen::MatrixXd chol_l_;
  Eigen::VectorXd lengths_;
  double signal_ = 1.0;
  double noise_ = 1e-6;
  double nll_ = 0.0;
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  bool noise_only_ = false;

  friend class GpFitter;
};

// Negative log marginal likelihood and its gradient with respect to
// (log lengths, log signal variance, log noise variance).
double GpNegLogLikelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y_std,
                          const Eigen::VectorXd& log_params, Eigen::VectorXd* gradient);

double Matern52(double r);

enum class Acquisition { kPI, kEI, kUCB };
const char* AcquisitionName(Acquisition a);

// Scores for maximization; `best` is the incumbent.
double AcquisitionValue(Acquisition a, double mean, double sd, double best, double xi = 0.01,
                        double kappa = 1.96);

struct BoOptions {
  int n_initial = 10;
  int n_candidates = 10000;
  int n_starts = 5;
  int ascent_iterations = 30;
  double xi = 0.01;
  double kappa = 1.96;
  bool random_only = false;  // plain random search over the full space
  GpOptions gp;
};

struct Observation {
  Eigen::VectorXd x;  // normalized
  double score = 0.0;
};

struct Suggestion {
  Config config;
  std::optional<Acquisition> acquisition;  // empty for random draws
  std::optional<GaussianProcess> model;
};

// Pending points get the worst observed score (constant liar).
Suggestion Suggest(const SearchSpace& space, const std::vector<Observation>& observations,
                   const std::vector<Eigen::VectorXd>& pending, const BoOptions& options,
                   std::uint64_t seed);

// Score of a configuration after `resource` units of work.
using Objective = std::function<double(const Config& config, long resource, std::uint64_t seed)>;

enum class TrialStatus { kRunning, kStopped, kCompleted, kFailed };
const char* TrialStatusName(TrialStatus s);

struct TrialRecord {
  int id = 0;
  Config config;
  std::vector<std::pair<long, double>> reports;
  TrialStatus status = TrialStatus::kRunning;
  double best_score = kNaN;  // max over reports
  long resource() const { return reports.empty() ? 0 : reports.back().first; }
};

struct SearchOptions {
  AshaParams asha;
  BoOptions bo;
  int workers = 1;
  std::uint64_t seed = 0;
  std::string log_path;  // JSON lines; empty = in memory only
  bool resume = false;   // replay `log_path` before continuing
};

struct SearchResult {
  std::vector<TrialRecord> trials;  // by id
  int best_trial = -1;
  long total_resource = 0;
  std::vector<std::string> log;  // lines written by this run
  std::optional<GaussianProcess> last_model;
};

SearchResult RunSearch(const Objective& objective, const SearchSpace& space,
                       const SearchOptions& options);

}  // namespace navfeat
