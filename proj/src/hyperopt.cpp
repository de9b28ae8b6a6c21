#include "navfeat/hyperopt.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <Eigen/Cholesky>
#include <ceres/ceres.h>
#include <json.hpp>

#include "navfeat/preprocess.hpp"

namespace navfeat {

using nlohmann::json;

const char* ParamKindName(ParamKind kind) {
  switch (kind) {
    case ParamKind::kLog: return "log";
    case ParamKind::kUniform: return "uni";
    case ParamKind::kInt: return "int";
    case ParamKind::kCategorical: return "cat";
  }
  return "uni";
}

ParamKind ParseParamKind(const std::string& s) {
  if (s == "log") return ParamKind::kLog;
  if (s == "uni") return ParamKind::kUniform;
  if (s == "int") return ParamKind::kInt;
  if (s == "cat") return ParamKind::kCategorical;
  throw Error(ErrorCode::kFormat, "unknown parameter type: " + s);
}

SearchSpace::SearchSpace(std::string name, std::vector<ParamSpec> params)
    : name_(std::move(name)), params_(std::move(params)) {
  Validate();
}

int SearchSpace::IndexOf(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return static_cast<int>(i);
  return -1;
}

void SearchSpace::Validate() const {
  std::set<std::string> names;
  for (const auto& p : params_) {
    Check(names.insert(p.name).second, ErrorCode::kInvalidArgument, "duplicate parameter " + p.name);
    if (p.kind == ParamKind::kCategorical) {
      Check(p.labels.size() >= 2, ErrorCode::kInvalidArgument, p.name + ": needs two labels");
      Check(std::find(p.labels.begin(), p.labels.end(), p.initial_label) != p.labels.end(),
            ErrorCode::kInvalidArgument, p.name + ": initial label not in labels");
      continue;
    }
    Check(p.lo < p.hi, ErrorCode::kInvalidArgument, p.name + ": empty range");
    Check(p.init_lo <= p.init_hi && p.init_lo >= p.lo && p.init_hi <= p.hi,
          ErrorCode::kInvalidArgument, p.name + ": initial range outside full range");
    if (p.kind == ParamKind::kLog)
      Check(p.lo > 0, ErrorCode::kInvalidArgument, p.name + ": log range must be positive");
    if (p.kind == ParamKind::kInt)
      Check(p.lo == std::round(p.lo) && p.hi == std::round(p.hi) &&
                p.init_lo == std::round(p.init_lo) && p.init_hi == std::round(p.init_hi),
            ErrorCode::kInvalidArgument, p.name + ": integer bounds must be integral");
  }
}

namespace {

double Tolerance(const ParamSpec& p) { return 1e-9 * std::max(1.0, std::abs(p.hi - p.lo)); }

bool InRange(const ParamSpec& p, double v) {
  if (!std::isfinite(v)) return false;
  if (p.kind == ParamKind::kCategorical)
    return v == std::round(v) && v >= 0 && v < static_cast<double>(p.labels.size());
  if (p.kind == ParamKind::kInt && v != std::round(v)) return false;
  return v >= p.lo - Tolerance(p) && v <= p.hi + Tolerance(p);
}

}  // namespace

bool SearchSpace::Contains(const Config& config) const {
  if (config.size() != params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (!InRange(params_[i], config[i])) return false;
  return true;
}

Eigen::VectorXd SearchSpace::Normalize(const Config& config) const {
  Check(config.size() == params_.size(), ErrorCode::kInvalidArgument, "config size mismatch");
  Eigen::VectorXd x(static_cast<Eigen::Index>(params_.size()));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& p = params_[i];
    const double v = config[i];
    Check(InRange(p, v), ErrorCode::kInvalidArgument, p.name + ": value outside search space");
    double u = 0.0;
    switch (p.kind) {
      case ParamKind::kLog:
        u = (std::log(v) - std::log(p.lo)) / (std::log(p.hi) - std::log(p.lo));
        break;
      case ParamKind::kUniform:
      case ParamKind::kInt:
        u = (v - p.lo) / (p.hi - p.lo);
        break;
      case ParamKind::kCategorical:
        u = v / static_cast<double>(p.labels.size() - 1);
        break;
    }
    x[static_cast<Eigen::Index>(i)] = std::clamp(u, 0.0, 1.0);
  }
  return x;
}

Config SearchSpace::Denormalize(const Eigen::VectorXd& x) const {
  Check(static_cast<std::size_t>(x.size()) == params_.size(), ErrorCode::kInvalidArgument,
        "vector size mismatch");
  Config c(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& p = params_[i];
    const double u = std::clamp(x[static_cast<Eigen::Index>(i)], 0.0, 1.0);
    switch (p.kind) {
      case ParamKind::kLog:
        c[i] = std::clamp(std::exp(std::log(p.lo) + u * (std::log(p.hi) - std::log(p.lo))), p.lo, p.hi);
        break;
      case ParamKind::kUniform:
        c[i] = std::clamp(p.lo + u * (p.hi - p.lo), p.lo, p.hi);
        break;
      case ParamKind::kInt:
        c[i] = std::clamp(std::round(p.lo + u * (p.hi - p.lo)), p.lo, p.hi);
        break;
      case ParamKind::kCategorical:
        c[i] = std::round(u * static_cast<double>(p.labels.size() - 1));
        break;
    }
  }
  return c;
}

namespace {

double SampleRange(const ParamSpec& p, double lo, double hi, Rng& rng) {
  switch (p.kind) {
    case ParamKind::kLog: return std::clamp(std::exp(rng.Uniform(std::log(lo), std::log(hi))), lo, hi);
    case ParamKind::kUniform: return rng.Uniform(lo, hi);
    case ParamKind::kInt:
      return static_cast<double>(rng.UniformInt(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
    case ParamKind::kCategorical: break;
  }
  return lo;
}

double LabelIndex(const ParamSpec& p, const std::string& label) {
  const auto it = std::find(p.labels.begin(), p.labels.end(), label);
  Check(it != p.labels.end(), ErrorCode::kInvalidArgument, p.name + ": unknown label " + label);
  return static_cast<double>(it - p.labels.begin());
}

}  // namespace

Config SearchSpace::SampleInitial(Rng& rng) const {
  Config c(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& p = params_[i];
    c[i] = p.kind == ParamKind::kCategorical ? LabelIndex(p, p.initial_label)
                                             : SampleRange(p, p.init_lo, p.init_hi, rng);
  }
  return c;
}

Config SearchSpace::SampleFull(Rng& rng) const {
  Config c(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& p = params_[i];
    c[i] = p.kind == ParamKind::kCategorical
               ? static_cast<double>(rng.UniformInt(0, static_cast<std::int64_t>(p.labels.size()) - 1))
               : SampleRange(p, p.lo, p.hi, rng);
  }
  return c;
}

std::string SearchSpace::ToJson() const {
  json params = json::array();
  for (const auto& p : params_) {
    json j{{"group", p.group}, {"name", p.name}, {"symbol", p.symbol}, {"type", ParamKindName(p.kind)}};
    if (p.kind == ParamKind::kCategorical) {
      j["initial"] = p.initial_label;
      j["range"] = p.labels;
    } else {
      j["initial"] = {p.init_lo, p.init_hi};
      j["range"] = {p.lo, p.hi};
    }
    params.push_back(j);
  }
  return json{{"name", name_}, {"params", params}}.dump(2);
}

SearchSpace SearchSpace::FromJson(const std::string& text) {
  try {
    const json j = json::parse(text);
    std::vector<ParamSpec> params;
    for (const auto& jp : j.at("params")) {
      ParamSpec p;
      p.group = jp.value("group", "");
      p.name = jp.at("name").get<std::string>();
      p.symbol = jp.value("symbol", p.name);
      p.kind = ParseParamKind(jp.at("type").get<std::string>());
      if (p.kind == ParamKind::kCategorical) {
        p.labels = jp.at("range").get<std::vector<std::string>>();
        p.initial_label = jp.at("initial").get<std::string>();
      } else {
        const auto r = jp.at("range").get<std::vector<double>>();
        const auto ini = jp.at("initial").get<std::vector<double>>();
        Check(r.size() == 2 && ini.size() == 2, ErrorCode::kFormat, p.name + ": ranges need two values");
        p.lo = r[0];
        p.hi = r[1];
        p.init_lo = ini[0];
        p.init_hi = ini[1];
      }
      params.push_back(std::move(p));
    }
    return SearchSpace(j.value("name", "custom"), std::move(params));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("bad search space: ") + e.what());
  }
}

std::string SearchSpace::ConfigToJson(const Config& config) const {
  Check(config.size() == params_.size(), ErrorCode::kInvalidArgument, "config size mismatch");
  json j = json::object();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& p = params_[i];
    if (p.kind == ParamKind::kCategorical)
      j[p.name] = p.labels.at(static_cast<std::size_t>(config[i]));
    else if (p.kind == ParamKind::kInt)
      j[p.name] = static_cast<long long>(config[i]);
    else
      j[p.name] = config[i];
  }
  return j.dump();
}

Config SearchSpace::ConfigFromJson(const std::string& text) const {
  try {
    const json j = json::parse(text);
    Config c(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& p = params_[i];
      const auto& v = j.at(p.name);
      c[i] = p.kind == ParamKind::kCategorical ? LabelIndex(p, v.is_string() ? v.get<std::string>() : v.dump())
                                               : v.get<double>();
    }
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("bad config: ") + e.what());
  }
}

namespace {

ParamSpec Num(const char* group, const char* name, const char* symbol, ParamKind kind,
              double init_lo, double init_hi, double lo, double hi) {
  ParamSpec p;
  p.group = group;
  p.name = name;
  p.symbol = symbol;
  p.kind = kind;
  p.init_lo = init_lo;
  p.init_hi = init_hi;
  p.lo = lo;
  p.hi = hi;
  return p;
}

ParamSpec Cat(const char* group, const char* name, const char* symbol, const char* initial,
              std::vector<std::string> labels) {
  ParamSpec p;
  p.group = group;
  p.name = name;
  p.symbol = symbol;
  p.kind = ParamKind::kCategorical;
  p.initial_label = initial;
  p.labels = std::move(labels);
  return p;
}

std::vector<ParamSpec> AugmentationParams() {
  return {
      Num("data", "lambda_r", "λ_r", ParamKind::kUniform, 8, 12, 0, 20),
      Num("data", "lambda_p", "λ_p", ParamKind::kUniform, 0.45, 0.55, 0.2, 0.9),
      Num("data", "lambda_n", "λ_n", ParamKind::kUniform, 0.08, 0.12, 0.0, 0.3),
      Cat("data", "synth", "synth", "false", {"false", "true"}),
  };
}

}  // namespace

SearchSpace PresetSpace(const std::string& name) {
  using K = ParamKind;
  std::vector<ParamSpec> p;
  if (name == "disk") {
    p = {
        Num("loss", "rho_fp", "ρ_fp", K::kUniform, 0.23, 0.27, 0.0, 0.5),
        Cat("loss", "h", "h", "8", {"6", "8", "12"}),
        Num("loss", "theta_m", "θ_M", K::kLog, 48, 52, 20, 500),
        Num("loss", "epsilon", "ϵ", K::kUniform, 1.4, 1.6, 1.0, 5.0),
        Num("opt", "wd", "wd", K::kLog, 0.9e-6, 1.1e-6, 1e-8, 1e-3),
    };
  } else if (name == "r2d2u") {
    p = {
        Num("loss", "alpha", "α", K::kUniform, 0.23, 0.27, 0.1, 1.0),
        Num("loss", "beta", "β", K::kUniform, 0.18, 0.22, 0.05, 0.5),
        Num("loss", "kappa", "κ", K::kUniform, 0.58, 0.62, 0.5, 0.99),
        Num("loss", "n_rep", "n_rep", K::kInt, 23, 25, 16, 32),
        Num("loss", "r_pos", "r_pos", K::kInt, 1, 2, 1, 5),
        Num("loss", "r_neg", "r_neg", K::kInt, 9, 11, 6, 20),
        Num("opt", "wd", "wd", K::kLog, 0.9e-6, 1.1e-6, 1e-8, 1e-3),
    };
  } else if (name == "lafe") {
    return SearchSpace(name, {
        Cat("model", "arch", "arch", "mn2", {"mn2", "mn3", "en0"}),
        Cat("model", "desc_se", "desc-se", "true", {"true", "false"}),
        Num("opt", "wd", "wd", K::kLog, 0.9e-8, 1.1e-8, 1e-9, 1e-5),
        Num("data", "lambda_g_st", "λ_g^st", K::kUniform, 1.08, 1.12, 1.0, 1.3),
        Num("data", "lambda_sigma_st", "λ_σ^st", K::kUniform, 0.01, 0.02, 0.0, 0.1),
    });
  } else if (name == "pipeline") {
    return SearchSpace(name, {
        Num("extract", "det_threshold", "det_threshold", K::kUniform, 0.45, 0.55, 0.05, 0.95),
        Num("extract", "feat_ratio", "feat_ratio", K::kLog, 0.0008, 0.0012, 0.0002, 0.005),
        Num("extract", "scales_per_octave", "s", K::kInt, 3, 5, 1, 8),
    });
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown preset: " + name);
  }
  for (auto& a : AugmentationParams()) p.push_back(std::move(a));
  return SearchSpace(name, std::move(p));
}

std::vector<std::string> PresetNames() { return {"disk", "r2d2u", "lafe", "pipeline"}; }

void AshaParams::Validate() const {
  Check(eta >= 2, ErrorCode::kInvalidArgument, "eta must be >= 2");
  Check(r0 >= 1 && r_max >= r0, ErrorCode::kInvalidArgument, "need 1 <= r0 <= r_max");
  Check(total_trials >= 1, ErrorCode::kInvalidArgument, "need at least one trial");
}

std::vector<long> AshaParams::Rungs() const {
  Validate();
  std::vector<long> rungs;
  for (long r = r0; r < r_max; r *= eta) rungs.push_back(r);
  return rungs;
}

const char* AshaDecisionName(AshaDecision d) {
  switch (d) {
    case AshaDecision::kContinue: return "continue";
    case AshaDecision::kStop: return "stop";
    case AshaDecision::kPassThrough: return "pass";
  }
  return "pass";
}

AshaScheduler::AshaScheduler(AshaParams params)
    : params_(params), rungs_(params.Rungs()), recorded_(rungs_.size()) {}

bool AshaScheduler::WouldContinue(std::size_t rung, double score) const {
  const auto& scores = recorded_.at(rung);
  if (scores.empty()) return true;
  const double cutoff = Percentile(scores, (1.0 - 1.0 / params_.eta) * 100.0);
  return score >= cutoff;
}

AshaDecision AshaScheduler::OnReport(long resource, double score) {
  if (resource >= params_.r_max) return AshaDecision::kStop;
  const auto it = std::find(rungs_.begin(), rungs_.end(), resource);
  if (it == rungs_.end()) return AshaDecision::kPassThrough;
  const auto rung = static_cast<std::size_t>(it - rungs_.begin());
  const bool go = WouldContinue(rung, score);
  recorded_[rung].push_back(score);
  return go ? AshaDecision::kContinue : AshaDecision::kStop;
}

double Matern52(double r) {
  const double s = std::sqrt(5.0) * r;
  return (1.0 + s + s * s / 3.0) * std::exp(-s);
}

double GpNegLogLikelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& log_params, Eigen::VectorXd* gradient) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  const Eigen::VectorXd inv_len = (-log_params.head(d)).array().exp();
  const double signal = std::exp(log_params[d]);
  const double noise = std::exp(log_params[d + 1]);
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b <= a; ++b) {
      const double r = ((X.row(a) - X.row(b)).transpose().cwiseProduct(inv_len)).norm();
      K(a, b) = K(b, a) = signal * Matern52(r);
    }
  K.diagonal().array() += noise;
  const Eigen::LLT<Eigen::MatrixXd> llt(K);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  const Eigen::VectorXd alpha = llt.solve(y);
  const Eigen::MatrixXd L = llt.matrixL();
  const double nll = 0.5 * y.dot(alpha) + L.diagonal().array().log().sum() +
                     0.5 * static_cast<double>(n) * std::log(2.0 * kPi);
  if (gradient) {
    const Eigen::MatrixXd W =
        alpha * alpha.transpose() - llt.solve(Eigen::MatrixXd::Identity(n, n));
    gradient->setZero(d + 2);
    const double s5 = std::sqrt(5.0);
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = 0; b < n; ++b) {
        const Eigen::VectorXd scaled = (X.row(a) - X.row(b)).transpose().cwiseProduct(inv_len);
        const double r = scaled.norm();
        const double e = std::exp(-s5 * r);
        const double w = W(a, b);
        const double common = signal * (5.0 / 3.0) * (1.0 + s5 * r) * e;
        for (Eigen::Index i = 0; i < d; ++i) (*gradient)[i] -= 0.5 * w * common * scaled[i] * scaled[i];
        (*gradient)[d] -= 0.5 * w * signal * Matern52(r);
      }
    (*gradient)[d + 1] = -0.5 * noise * W.trace();
  }
  return nll;
}

namespace {

struct Bounds {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
};

double Sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Eigen::VectorXd ToLogParams(const Eigen::VectorXd& z, const Bounds& b) {
  Eigen::VectorXd p(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) p[i] = b.lo[i] + (b.hi[i] - b.lo[i]) * Sigmoid(z[i]);
  return p;
}

Eigen::VectorXd FromLogParams(const Eigen::VectorXd& p, const Bounds& b) {
  Eigen::VectorXd z(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double span = b.hi[i] - b.lo[i];
    if (span <= 0) {
      z[i] = 0.0;
      continue;
    }
    const double t = std::clamp((p[i] - b.lo[i]) / span, 1e-9, 1 - 1e-9);
    z[i] = std::log(t / (1 - t));
  }
  return z;
}

class NllFunction : public ceres::FirstOrderFunction {
 public:
  NllFunction(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Bounds b)
      : X_(X), y_(y), b_(std::move(b)) {}

  bool Evaluate(const double* z, double* cost, double* gradient) const override {
    const Eigen::Map<const Eigen::VectorXd> zv(z, NumParameters());
    const Eigen::VectorXd p = ToLogParams(zv, b_);
    Eigen::VectorXd g;
    const double v = GpNegLogLikelihood(X_, y_, p, gradient ? &g : nullptr);
    if (!std::isfinite(v)) return false;
    *cost = v;
    if (gradient)
      for (int i = 0; i < NumParameters(); ++i) {
        const double s = Sigmoid(zv[i]);
        gradient[i] = g[i] * (b_.hi[i] - b_.lo[i]) * s * (1 - s);
      }
    return true;
  }
  int NumParameters() const override { return static_cast<int>(b_.lo.size()); }

 private:
  const Eigen::MatrixXd& X_;
  const Eigen::VectorXd& y_;
  Bounds b_;
};

}  // namespace

class GpFitter {
 public:
  static void Finish(GaussianProcess* gp, const Eigen::VectorXd& y_std, const Eigen::VectorXd& p) {
    const Eigen::Index n = gp->X_.rows();
    const Eigen::Index d = gp->X_.cols();
    gp->lengths_ = p.head(d).array().exp();
    gp->signal_ = std::exp(p[d]);
    gp->noise_ = std::exp(p[d + 1]);
    gp->nll_ = GpNegLogLikelihood(gp->X_, y_std, p, nullptr);
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = 0; b < n; ++b) {
        const double r = ((gp->X_.row(a) - gp->X_.row(b)).transpose().cwiseQuotient(gp->lengths_)).norm();
        K(a, b) = gp->signal_ * Matern52(r);
      }
    K.diagonal().array() += gp->noise_;
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    Check(llt.info() == Eigen::Success, ErrorCode::kEstimationFailed, "GP covariance not positive definite");
    gp->chol_l_ = llt.matrixL();
    gp->alpha_ = llt.solve(y_std);
  }
};

GaussianProcess GaussianProcess::Fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                     const GpOptions& options, std::uint64_t seed,
                                     const GaussianProcess* warm_start) {
  Check(X.rows() == y.size() && X.rows() >= 1, ErrorCode::kInvalidArgument, "need observations");
  GaussianProcess gp;
  gp.X_ = X;
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  gp.y_mean_ = y.mean();
  const double var = n > 1 ? (y.array() - gp.y_mean_).square().sum() / static_cast<double>(n) : 0.0;
  gp.y_scale_ = var > 1e-24 ? std::sqrt(var) : 1.0;
  const Eigen::VectorXd y_std = (y.array() - gp.y_mean_) / gp.y_scale_;

  bool identical = true;
  for (Eigen::Index i = 1; i < n && identical; ++i) identical = X.row(i) == X.row(0);
  if (identical) {
    // Inputs carry no information: a constant mean with all spread as noise.
    gp.noise_only_ = true;
    gp.lengths_ = Eigen::VectorXd::Constant(d, options.length_hi);
    gp.signal_ = 0.0;
    gp.noise_ = 1.0;
    gp.alpha_ = Eigen::VectorXd::Zero(n);
    gp.chol_l_ = Eigen::MatrixXd::Identity(n, n);
    return gp;
  }

  Bounds b{Eigen::VectorXd(d + 2), Eigen::VectorXd(d + 2)};
  b.lo.head(d).setConstant(std::log(options.length_lo));
  b.hi.head(d).setConstant(std::log(options.length_hi));
  b.lo[d] = std::log(options.amplitude_lo);
  b.hi[d] = std::log(options.amplitude_hi);
  b.lo[d + 1] = std::log(options.noise_lo);
  b.hi[d + 1] = std::log(options.noise_hi);

  Rng rng(seed);
  ceres::GradientProblemSolver::Options solver_options;
  solver_options.line_search_direction_type = ceres::LBFGS;
  solver_options.line_search_interpolation_type = ceres::BISECTION;
  solver_options.max_num_iterations = options.max_iterations;
  solver_options.logging_type = ceres::SILENT;
  solver_options.minimizer_progress_to_stdout = false;

  double best_cost = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_z = Eigen::VectorXd::Zero(d + 2);
  for (int r = 0; r < std::max(1, options.restarts); ++r) {
    Eigen::VectorXd z(d + 2);
    if (r == 0 && warm_start && !warm_start->noise_only_ && warm_start->lengths_.size() == d) {
      Eigen::VectorXd p(d + 2);
      p.head(d) = warm_start->lengths_.array().log();
      p[d] = std::log(warm_start->signal_);
      p[d + 1] = std::log(warm_start->noise_);
      z = FromLogParams(p, b);
    } else if (r == 0) {
      z.setZero();
    } else {
      for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.Uniform(-3.0, 3.0);
    }
    ceres::GradientProblem problem(new NllFunction(X, y_std, b));
    ceres::GradientProblemSolver::Summary summary;
    ceres::Solve(solver_options, problem, z.data(), &summary);
    const double cost = GpNegLogLikelihood(X, y_std, ToLogParams(z, b), nullptr);
    if (cost < best_cost) {
      best_cost = cost;
      best_z = z;
    }
  }
  Check(std::isfinite(best_cost), ErrorCode::kEstimationFailed, "GP fit failed");
  GpFitter::Finish(&gp, y_std, ToLogParams(best_z, b));
  return gp;
}

void GaussianProcess::Predict(const Eigen::VectorXd& x, double* mean, double* sd) const {
  if (noise_only_) {
    *mean = y_mean_;
    *sd = y_scale_;
    return;
  }
  const Eigen::Index n = X_.rows();
  Eigen::VectorXd k(n);
  for (Eigen::Index a = 0; a < n; ++a)
    k[a] = signal_ * Matern52(((X_.row(a).transpose() - x).cwiseQuotient(lengths_)).norm());
  const Eigen::VectorXd v = chol_l_.triangularView<Eigen::Lower>().solve(k);
  *mean = y_mean_ + y_scale_ * k.dot(alpha_);
  *sd = y_scale_ * std::sqrt(std::max(0.0, signal_ - v.squaredNorm()));
}

const char* AcquisitionName(Acquisition a) {
  switch (a) {
    case Acquisition::kPI: return "PI";
    case Acquisition::kEI: return "EI";
    case Acquisition::kUCB: return "UCB";
  }
  return "EI";
}

double AcquisitionValue(Acquisition a, double mean, double sd, double best, double xi,
                        double kappa) {
  const double improvement = mean - best - xi;
  switch (a) {
    case Acquisition::kUCB: return mean + kappa * sd;
    case Acquisition::kPI:
      if (sd <= 0) return improvement > 0 ? 1.0 : 0.0;
      return 0.5 * std::erfc(-improvement / sd / std::sqrt(2.0));
    case Acquisition::kEI: {
      if (sd <= 0) return std::max(0.0, improvement);
      const double z = improvement / sd;
      const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
      const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi);
      return improvement * cdf + sd * pdf;
    }
  }
  return 0.0;
}

Suggestion Suggest(const SearchSpace& space, const std::vector<Observation>& observations,
                   const std::vector<Eigen::VectorXd>& pending, const BoOptions& options,
                   std::uint64_t seed) {
  Rng rng(seed);
  Suggestion out;
  if (options.random_only) {
    out.config = space.SampleFull(rng);
    return out;
  }
  if (observations.size() + pending.size() < static_cast<std::size_t>(options.n_initial) ||
      observations.size() < 2) {
    out.config = space.SampleInitial(rng);
    return out;
  }
  const auto d = static_cast<Eigen::Index>(space.size());
  const auto n = static_cast<Eigen::Index>(observations.size() + pending.size());
  Eigen::MatrixXd X(n, d);
  Eigen::VectorXd y(n);
  double worst = std::numeric_limits<double>::infinity();
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < observations.size(); ++i) {
    X.row(static_cast<Eigen::Index>(i)) = observations[i].x.transpose();
    y[static_cast<Eigen::Index>(i)] = observations[i].score;
    worst = std::min(worst, observations[i].score);
    best = std::max(best, observations[i].score);
  }
  for (std::size_t i = 0; i < pending.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(observations.size() + i);
    X.row(row) = pending[i].transpose();
    y[row] = worst;
  }
  const GaussianProcess gp = GaussianProcess::Fit(X, y, options.gp, rng.Next());
  const auto acq = static_cast<Acquisition>(rng.UniformInt(0, 2));
  const double best_std = (best - gp.y_mean()) / gp.y_scale();
  auto score = [&](const Eigen::VectorXd& x) {
    double m = 0.0, s = 0.0;
    gp.Predict(x, &m, &s);
    return AcquisitionValue(acq, (m - gp.y_mean()) / gp.y_scale(), s / gp.y_scale(), best_std,
                            options.xi, options.kappa);
  };

  std::vector<std::pair<double, Eigen::VectorXd>> candidates;
  candidates.reserve(static_cast<std::size_t>(options.n_candidates));
  for (int c = 0; c < options.n_candidates; ++c) {
    Eigen::VectorXd x(d);
    for (Eigen::Index i = 0; i < d; ++i) x[i] = rng.Uniform();
    candidates.emplace_back(score(x), std::move(x));
  }
  const auto n_starts = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, options.n_starts)),
                                              candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n_starts),
                    candidates.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  // Projected finite-difference gradient ascent from the best candidates.
  double best_value = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x;
  for (std::size_t s = 0; s < n_starts; ++s) {
    Eigen::VectorXd x = candidates[s].second;
    double fx = candidates[s].first;
    double step = 0.05;
    for (int it = 0; it < options.ascent_iterations && step > 1e-6; ++it) {
      Eigen::VectorXd g(d);
      const double h = 1e-5;
      for (Eigen::Index i = 0; i < d; ++i) {
        Eigen::VectorXd xp = x, xm = x;
        xp[i] = std::min(1.0, x[i] + h);
        xm[i] = std::max(0.0, x[i] - h);
        g[i] = xp[i] > xm[i] ? (score(xp) - score(xm)) / (xp[i] - xm[i]) : 0.0;
      }
      const double gn = g.norm();
      if (gn == 0.0 || !std::isfinite(gn)) break;
      bool moved = false;
      while (step > 1e-6) {
        const Eigen::VectorXd trial = (x + step * g / gn).cwiseMax(0.0).cwiseMin(1.0);
        const double ft = score(trial);
        if (ft > fx) {
          x = trial;
          fx = ft;
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
    }
    if (fx > best_value) {
      best_value = fx;
      best_x = x;
    }
  }
  out.config = space.Denormalize(best_x);
  out.acquisition = acq;
  out.model = gp;
  return out;
}

const char* TrialStatusName(TrialStatus s) {
  switch (s) {
    case TrialStatus::kRunning: return "running";
    case TrialStatus::kStopped: return "stopped";
    case TrialStatus::kCompleted: return "completed";
    case TrialStatus::kFailed: return "failed";
  }
  return "running";
}

namespace {

TrialStatus ParseStatus(const std::string& s) {
  if (s == "stopped") return TrialStatus::kStopped;
  if (s == "completed") return TrialStatus::kCompleted;
  if (s == "failed") return TrialStatus::kFailed;
  return TrialStatus::kRunning;
}

class SearchState {
 public:
  SearchState(const Objective& objective, const SearchSpace& space, const SearchOptions& options)
      : objective_(objective), space_(space), options_(options), scheduler_(options.asha) {}

  void Replay(const std::string& path) {
    std::ifstream in(path);
    if (!in) return;
    struct Attempt {
      Config config;
      int attempt = 0;
      bool ended = false;
      TrialStatus status = TrialStatus::kRunning;
    };
    std::map<int, Attempt> attempts;
    struct ReportEvent {
      int trial;
      int attempt;
      long resource;
      double score;
    };
    std::vector<ReportEvent> reports;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception&) {
        break;  // torn final line
      }
      const std::string ev = j.at("event");
      const int id = j.at("trial");
      if (ev == "start") {
        auto& a = attempts[id];
        a.attempt += 1;
        a.ended = false;
        a.config = space_.ConfigFromJson(j.at("config").dump());
      } else if (ev == "report" && attempts.count(id)) {
        reports.push_back({id, attempts[id].attempt, j.at("resource").get<long>(), j.at("score").get<double>()});
      } else if (ev == "end" && attempts.count(id)) {
        attempts[id].ended = true;
        attempts[id].status = ParseStatus(j.at("status"));
      }
    }
    for (const auto& [id, a] : attempts) {
      TrialRecord t;
      t.id = id;
      t.config = a.config;
      t.status = a.ended ? a.status : TrialStatus::kRunning;
      trials_[id] = t;
      next_id_ = std::max(next_id_, id + 1);
      if (!a.ended) rerun_.push_back(id);
    }
    for (const auto& r : reports) {
      const auto& a = attempts[r.trial];
      if (!a.ended || r.attempt != a.attempt) continue;
      trials_[r.trial].reports.emplace_back(r.resource, r.score);
      scheduler_.OnReport(r.resource, r.score);
    }
    for (auto& [id, t] : trials_) {
      if (t.status == TrialStatus::kRunning) continue;
      for (const auto& [res, s] : t.reports)
        t.best_score = std::isnan(t.best_score) ? s : std::max(t.best_score, s);
    }
  }

  void OpenLog() {
    if (options_.log_path.empty()) return;
    log_file_.open(options_.log_path, options_.resume ? std::ios::app : std::ios::trunc);
    Check(static_cast<bool>(log_file_), ErrorCode::kIo, "cannot open search log " + options_.log_path);
  }

  void Worker() {
    for (;;) {
      int id = -1;
      Config config;
      {
        std::lock_guard<std::mutex> lock(mutex_);
        if (!rerun_.empty()) {
          id = rerun_.front();
          rerun_.erase(rerun_.begin());
          config = trials_[id].config;
          trials_[id].reports.clear();
        } else if (next_id_ < options_.asha.total_trials) {
          id = next_id_++;
          config = NextConfig(id);
        } else {
          return;
        }
        auto& t = trials_[id];
        t.id = id;
        t.config = config;
        t.status = TrialStatus::kRunning;
        t.best_score = kNaN;
        Log(json{{"event", "start"}, {"trial", id}, {"config", json::parse(space_.ConfigToJson(config))}});
      }
      RunTrial(id, config);
    }
  }

  SearchResult Finish() {
    SearchResult result;
    for (auto& [id, t] : trials_) {
      result.total_resource += t.resource();
      if (t.status != TrialStatus::kFailed && !std::isnan(t.best_score) &&
          (result.best_trial < 0 ||
           t.best_score > trials_[result.best_trial].best_score))
        result.best_trial = id;
      result.trials.push_back(t);
    }
    result.log = std::move(log_);
    result.last_model = std::move(last_model_);
    return result;
  }

 private:
  Config NextConfig(int id) {
    std::vector<Observation> obs;
    std::vector<Eigen::VectorXd> pending;
    for (const auto& [tid, t] : trials_) {
      if (t.status == TrialStatus::kRunning) {
        pending.push_back(space_.Normalize(t.config));
      } else if (t.status != TrialStatus::kFailed && !std::isnan(t.best_score)) {
        obs.push_back({space_.Normalize(t.config), t.best_score});
      }
    }
    auto s = Suggest(space_, obs, pending, options_.bo, DeriveSeed(options_.seed, 2 * static_cast<std::uint64_t>(id)));
    if (s.model) last_model_ = std::move(s.model);
    return s.config;
  }

  void RunTrial(int id, const Config& config) {
    const std::uint64_t trial_seed = DeriveSeed(options_.seed, 2 * static_cast<std::uint64_t>(id) + 1);
    const auto& asha = options_.asha;
    TrialStatus status = TrialStatus::kCompleted;
    for (long step = 1;; ++step) {
      const long resource = std::min(step * asha.r0, asha.r_max);
      double score = kNaN;
      std::string failure;
      try {
        score = objective_(config, resource, trial_seed);
        if (!std::isfinite(score)) failure = "non-finite score";
      } catch (const std::exception& e) {
        failure = e.what();
      }
      std::lock_guard<std::mutex> lock(mutex_);
      auto& t = trials_[id];
      if (!failure.empty()) {
        status = TrialStatus::kFailed;
        Log(json{{"event", "error"}, {"trial", id}, {"resource", resource}, {"message", failure}});
        break;
      }
      t.reports.emplace_back(resource, score);
      t.best_score = std::isnan(t.best_score) ? score : std::max(t.best_score, score);
      const AshaDecision decision = scheduler_.OnReport(resource, score);
      Log(json{{"event", "report"}, {"trial", id}, {"resource", resource}, {"score", score},
               {"decision", AshaDecisionName(decision)}});
      if (decision == AshaDecision::kStop) {
        status = resource >= asha.r_max ? TrialStatus::kCompleted : TrialStatus::kStopped;
        break;
      }
    }
    std::lock_guard<std::mutex> lock(mutex_);
    auto& t = trials_[id];
    t.status = status;
    json end{{"event", "end"}, {"trial", id}, {"status", TrialStatusName(status)}, {"resource", t.resource()}};
    end["score"] = status == TrialStatus::kFailed || std::isnan(t.best_score) ? json(nullptr) : json(t.best_score);
    Log(end);
  }

  void Log(const json& j) {
    const std::string line = j.dump();
    log_.push_back(line);
    if (log_file_.is_open()) {
      log_file_ << line << '\n';
      log_file_.flush();
    }
  }

  const Objective& objective_;
  const SearchSpace& space_;
  const SearchOptions& options_;
  AshaScheduler scheduler_;
  std::map<int, TrialRecord> trials_;
  std::vector<int> rerun_;
  int next_id_ = 0;
  std::vector<std::string> log_;
  std::ofstream log_file_;
  std::optional<GaussianProcess> last_model_;
  std::mutex mutex_;
};

}  // namespace

SearchResult RunSearch(const Objective& objective, const SearchSpace& space,
                       const SearchOptions& options) {
  options.asha.Validate();
  space.Validate();
  Check(options.workers >= 1, ErrorCode::kInvalidArgument, "need at least one worker");
  SearchState state(objective, space, options);
  if (options.resume && !options.log_path.empty()) state.Replay(options.log_path);
  state.OpenLog();
  if (options.workers == 1) {
    state.Worker();
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < options.workers; ++w) threads.emplace_back([&] { state.Worker(); });
    for (auto& t : threads) t.join();
  }
  return state.Finish();
}

}  // namespace navfeat
