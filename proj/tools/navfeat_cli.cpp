// Command-line driver; talks to the toolkit through the C API only.
#include <cmath>
#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "navfeat/navfeat.h"

namespace {

int ExitCode(nf_status s) {
  switch (s) {
    case NF_OK: return 0;
    case NF_ERR_EMPTY_INPUT:
    case NF_ERR_INVALID_ARGUMENT:
    case NF_ERR_FORMAT: return 2;
    default: return 1;
  }
}

struct ConfigDeleter {
  void operator()(nf_config* c) const { nf_config_destroy(c); }
};
using ConfigPtr = std::unique_ptr<nf_config, ConfigDeleter>;

class Failure {
 public:
  explicit Failure(nf_status s) : status(s) {}
  nf_status status;
};

void Ok(nf_status s) {
  if (s != NF_OK) throw Failure(s);
}

void Set(nf_config* cfg, const std::string& key, const nlohmann::json& value) {
  Ok(nf_config_set(cfg, key.c_str(), value.dump().c_str()));
}

std::string ConfigString(const nf_config* cfg, const char* section, const char* key) {
  char* text = nullptr;
  Ok(nf_config_to_json(cfg, &text));
  const auto j = nlohmann::json::parse(text);
  nf_string_free(text);
  const auto& v = section ? j.at(section).at(key) : j.at(key);
  return v.get<std::string>();
}

std::string Cell(double v, int digits) {
  if (!std::isfinite(v)) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void PrintSubset(const char* name, const nf_subset_report& s) {
  std::cout << name << ": n=" << s.n << " m_score=" << Cell(s.mean_m_score, 4)
            << " fail_pct=" << Cell(s.fail_pct, 2) << " p50=" << Cell(s.p50, 3)
            << " p85=" << Cell(s.p85, 3) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature matching evaluation and tuning toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> output;
  app.add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Global seed");
  app.add_option("--jobs", jobs, "Parallel jobs")->check(CLI::PositiveNumber);
  app.add_option("--output", output, "Output directory");

  auto* pre = app.add_subcommand("preprocess", "Rescale raw images to 8 bit and filter them");
  std::string pre_input;
  pre->add_option("input", pre_input, "Directory of raw images")->required();

  auto* pair = app.add_subcommand("pair", "Form image pairs with dense correspondences");
  std::string pair_input;
  pair->add_option("images", pair_input, "Directory of 8-bit images")->required();

  auto* aug = app.add_subcommand("augment-preview", "Write randomly augmented copies of one image");
  std::string aug_image;
  std::optional<int> aug_count;
  aug->add_option("image", aug_image, "8-bit PNG")->required()->check(CLI::ExistingFile);
  aug->add_option("--count", aug_count, "Number of previews")->check(CLI::NonNegativeNumber);

  auto* ext = app.add_subcommand("extract", "Write baseline dense feature maps");
  std::string ext_input;
  ext->add_option("images", ext_input, "Directory of 8-bit images")->required();

  auto* eval = app.add_subcommand("evaluate", "Match, score and estimate poses for a pair manifest");
  std::optional<std::string> manifest, features_dir, method;
  bool baseline = false, oracle = false;
  eval->add_option("--manifest", manifest, "Pair manifest CSV");
  eval->add_option("--features-dir", features_dir, "Directory of DFM1 feature maps");
  eval->add_flag("--baseline", baseline, "Use the built-in baseline extractor");
  eval->add_flag("--oracle", oracle, "Ground-truth descriptor self-test");
  eval->add_option("--method", method, "Method name in the report");

  auto* tune = app.add_subcommand("tune", "Hyperparameter search");
  std::optional<std::string> preset, space_file, objective, search_log;
  std::optional<int> trials, workers, eta;
  std::optional<long> r0, r_max;
  bool random_only = false, resume = false;
  tune->add_option("--preset", preset, "Search space preset")
      ->check(CLI::IsMember({"disk", "r2d2u", "lafe", "pipeline"}));
  tune->add_option("--space", space_file, "Custom search space JSON")->check(CLI::ExistingFile);
  tune->add_option("--objective", objective, "synthetic or pipeline")
      ->check(CLI::IsMember({"synthetic", "pipeline"}));
  tune->add_option("--manifest", manifest, "Validation pair manifest for the pipeline objective");
  tune->add_option("--trials", trials, "Number of trials")->check(CLI::PositiveNumber);
  tune->add_option("--workers", workers, "Concurrent trials")->check(CLI::PositiveNumber);
  tune->add_option("--eta", eta, "Reduction factor");
  tune->add_option("--r0", r0, "Minimum resource");
  tune->add_option("--r-max", r_max, "Maximum resource");
  tune->add_flag("--random-only", random_only, "Random search instead of GP suggestions");
  tune->add_option("--log", search_log, "Search log (JSON lines)");
  tune->add_flag("--resume", resume, "Continue from the search log");

  auto* rep = app.add_subcommand("report", "Aggregate pairs.csv files into report tables");
  std::vector<std::string> rep_inputs;
  rep->add_option("pairs", rep_inputs, "pairs.csv files")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    nf_config* raw = nullptr;
    Ok(config_path.empty() ? nf_config_create(&raw) : nf_config_load(config_path.c_str(), &raw));
    ConfigPtr cfg(raw);
    // Flags win over the file.
    if (seed) Set(cfg.get(), "seed", *seed);
    if (jobs) Set(cfg.get(), "jobs", *jobs);
    if (output) Set(cfg.get(), "output", *output);
    if (aug_count) Set(cfg.get(), "augment.preview_count", *aug_count);
    if (manifest) Set(cfg.get(), "evaluate.manifest", *manifest);
    if (features_dir) {
      Set(cfg.get(), "evaluate.features_dir", *features_dir);
      Set(cfg.get(), "evaluate.baseline", false);
    }
    if (baseline) {
      Set(cfg.get(), "evaluate.baseline", true);
      Set(cfg.get(), "evaluate.features_dir", "");
    }
    if (oracle) Set(cfg.get(), "evaluate.oracle", true);
    if (method) Set(cfg.get(), "evaluate.method", *method);
    else if (oracle) Set(cfg.get(), "evaluate.method", "oracle");
    else if (features_dir) Set(cfg.get(), "evaluate.method", "features");
    if (preset) Set(cfg.get(), "tune.preset", *preset);
    if (space_file) Set(cfg.get(), "tune.space_file", *space_file);
    if (objective) Set(cfg.get(), "tune.objective", *objective);
    if (trials) Set(cfg.get(), "tune.trials", *trials);
    if (workers) Set(cfg.get(), "tune.workers", *workers);
    if (eta) Set(cfg.get(), "tune.eta", *eta);
    if (r0) Set(cfg.get(), "tune.r0", *r0);
    if (r_max) Set(cfg.get(), "tune.r_max", *r_max);
    if (random_only) Set(cfg.get(), "tune.random_only", true);
    if (search_log) Set(cfg.get(), "tune.search_log", *search_log);
    if (resume) Set(cfg.get(), "tune.resume", true);
    Ok(nf_config_validate(cfg.get()));
    const std::string out_dir = ConfigString(cfg.get(), nullptr, "output");

    if (*pre) {
      nf_preprocess_summary s{};
      Ok(nf_cmd_preprocess(cfg.get(), pre_input.c_str(), out_dir.c_str(), &s));
      std::cout << "available=" << s.available << " acceptable=" << s.acceptable
                << " unreadable=" << s.errors << '\n';
    } else if (*pair) {
      std::size_t n = 0;
      Ok(nf_cmd_pair(cfg.get(), pair_input.c_str(), out_dir.c_str(), &n));
      std::cout << "pairs=" << n << '\n';
    } else if (*aug) {
      std::size_t n = 0;
      Ok(nf_cmd_augment_preview(cfg.get(), aug_image.c_str(), out_dir.c_str(), &n));
      std::cout << "previews=" << n << '\n';
    } else if (*ext) {
      std::size_t n = 0;
      Ok(nf_cmd_extract(cfg.get(), ext_input.c_str(), out_dir.c_str(), &n));
      std::cout << "feature_maps=" << n << '\n';
    } else if (*eval) {
      nf_evaluate_summary s{};
      Ok(nf_cmd_evaluate(cfg.get(), out_dir.c_str(), &s));
      std::cout << "evaluated=" << s.evaluated << " skipped=" << s.skipped << '\n';
      PrintSubset("easy", s.easy);
      PrintSubset("hard", s.hard);
      PrintSubset("all", s.all);
    } else if (*tune) {
      nf_tune_summary s{};
      Ok(nf_cmd_tune(cfg.get(), out_dir.c_str(), &s));
      std::cout << "trials=" << s.trials << " full_resource=" << s.full_resource_trials
                << " total_resource=" << s.total_resource << " best_trial=" << s.best_trial
                << " best_score=" << Cell(s.best_score, 6) << '\n';
    } else if (*rep) {
      std::vector<const char*> paths;
      for (const auto& p : rep_inputs) paths.push_back(p.c_str());
      std::size_t n = 0;
      Ok(nf_cmd_report(cfg.get(), paths.data(), paths.size(), out_dir.c_str(), &n));
      std::cout << "methods=" << n << '\n';
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << nf_last_error() << '\n';
    return ExitCode(f.status);
  }
  return 0;
}
