#include "navfeat/navfeat.h"

#include <cstring>
#include <new>
#include <string>

#include <json.hpp>

#include "navfeat/hyperopt.hpp"
#include "navfeat/io.hpp"
#include "navfeat/losses.hpp"
#include "navfeat/metrics.hpp"
#include "navfeat/pipeline.hpp"
#include "navfeat/preprocess.hpp"

struct nf_config {
  navfeat::PipelineConfig cfg;
};
struct nf_feature_map {
  navfeat::DenseFeatureMap map;
};
struct nf_corr {
  navfeat::CorrespondenceField field;
};
struct nf_geo {
  navfeat::CoordGrid coords;
};
struct nf_space {
  navfeat::SearchSpace space;
};

static_assert(sizeof(Eigen::Vector3f) == 3 * sizeof(float), "packed coordinates expected");

namespace {

thread_local std::string g_last_error;

nf_status Fail(nf_status s, const char* what) {
  g_last_error = what;
  return s;
}

template <typename F>
nf_status Guard(F&& f) {
  try {
    f();
    g_last_error.clear();
    return NF_OK;
  } catch (const navfeat::Error& e) {
    return Fail(static_cast<nf_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return Fail(NF_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return Fail(NF_ERR_INTERNAL, e.what());
  } catch (...) {
    return Fail(NF_ERR_INTERNAL, "unknown error");
  }
}

void NotNull(const void* p, const char* name) {
  navfeat::Check(p != nullptr, navfeat::ErrorCode::kInvalidArgument, std::string(name) + " is null");
}

char* CopyString(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

nf_subset_report ToC(const navfeat::SubsetReport& s) {
  return {s.n, s.mean_m_score, s.fail_pct, s.p50, s.p85};
}

}  // namespace

extern "C" {

const char* nf_last_error(void) { return g_last_error.c_str(); }
const char* nf_version(void) { return "1.0.0"; }
void nf_string_free(char* s) { delete[] s; }

nf_status nf_config_create(nf_config** out) {
  return Guard([&] {
    NotNull(out, "out");
    *out = new nf_config{};
  });
}

nf_status nf_config_load(const char* path, nf_config** out) {
  return Guard([&] {
    NotNull(path, "path");
    NotNull(out, "out");
    auto cfg = navfeat::PipelineConfig::FromJson(navfeat::ReadFileBytes(path));
    *out = new nf_config{std::move(cfg)};
  });
}

nf_status nf_config_merge_json(nf_config* cfg, const char* json) {
  return Guard([&] {
    NotNull(cfg, "cfg");
    NotNull(json, "json");
    navfeat::PipelineConfig next = cfg->cfg;
    next.Merge(json);
    cfg->cfg = std::move(next);
  });
}

nf_status nf_config_set(nf_config* cfg, const char* key, const char* json_value) {
  return Guard([&] {
    NotNull(cfg, "cfg");
    NotNull(key, "key");
    NotNull(json_value, "json_value");
    nlohmann::json value;
    try {
      value = nlohmann::json::parse(json_value);
    } catch (const nlohmann::json::exception& e) {
      throw navfeat::Error(navfeat::ErrorCode::kFormat, std::string(key) + ": " + e.what());
    }
    nlohmann::json doc = nlohmann::json::object();
    doc[nlohmann::json::json_pointer("/" + [&] {
      std::string k = key;
      for (auto& c : k)
        if (c == '.') c = '/';
      return k;
    }())] = value;
    navfeat::PipelineConfig next = cfg->cfg;
    next.Merge(doc.dump());
    cfg->cfg = std::move(next);
  });
}

nf_status nf_config_validate(const nf_config* cfg) {
  return Guard([&] {
    NotNull(cfg, "cfg");
    cfg->cfg.Validate();
  });
}

nf_status nf_config_to_json(const nf_config* cfg, char** out) {
  return Guard([&] {
    NotNull(cfg, "cfg");
    NotNull(out, "out");
    *out = CopyString(cfg->cfg.ToJson());
  });
}

nf_status nf_config_hash(const nf_config* cfg, uint64_t* out) {
  return Guard([&] {
    NotNull(cfg, "cfg");
    NotNull(out, "out");
    *out = cfg->cfg.Hash();
  });
}

void nf_config_destroy(nf_config* cfg) { delete cfg; }

nf_status nf_cmd_preprocess(const nf_config* cfg, const char* input_dir, const char* output_dir,
                            nf_preprocess_summary* out) {
  return Guard([&] {
    NotNull(cfg, "cfg");
    NotNull(input_dir, "input_dir");
    NotNull(output_dir, "output_dir");
    const auto s = navfeat::CmdPreprocess(cfg->cfg, input_dir, output_dir);
    if (out) *out = {s.available, s.acceptable, s.errors};
  });
}

nf_status nf_cmd_pair(const nf_config* cfg, const char* images_dir, const char* output_dir,
                      size_t* n_pairs) {
  return Guard([&] {
    NotNull(cfg, "cfg");
    NotNull(images_dir, "images_dir");
    NotNull(output_dir, "output_dir");
    const auto n = navfeat::CmdPair(cfg->cfg, images_dir, output_dir);
    if (n_pairs) *n_pairs = n;
  });
}

nf_status nf_cmd_augment_preview(const nf_config* cfg, const char* image_path,
                                 const char* output_dir, size_t* n_images) {
  return Guard([&] {
    NotNull(cfg, "cfg");
    NotNull(image_path, "image_path");
    NotNull(output_dir, "output_dir");
    const auto n = navfeat::CmdAugmentPreview(cfg->cfg, image_path, output_dir);
    if (n_images) *n_images = n;
  });
}

nf_status nf_cmd_extract(const nf_config* cfg, const char* images_dir, const char* output_dir,
                         size_t* n_files) {
  return Guard([&] {
    NotNull(cfg, "cfg");
    NotNull(images_dir, "images_dir");
    NotNull(output_dir, "output_dir");
    const auto n = navfeat::CmdExtract(cfg->cfg, images_dir, output_dir);
    if (n_files) *n_files = n;
  });
}

nf_status nf_cmd_evaluate(const nf_config* cfg, const char* output_dir, nf_evaluate_summary* out) {
  return Guard([&] {
    NotNull(cfg, "cfg");
    NotNull(output_dir, "output_dir");
    const auto s = navfeat::CmdEvaluate(cfg->cfg, output_dir);
    if (out)
      *out = {s.evaluated, s.skipped, ToC(s.report.easy), ToC(s.report.hard), ToC(s.report.all)};
  });
}

nf_status nf_cmd_tune(const nf_config* cfg, const char* output_dir, nf_tune_summary* out) {
  return Guard([&] {
    NotNull(cfg, "cfg");
    NotNull(output_dir, "output_dir");
    const auto s = navfeat::CmdTune(cfg->cfg, output_dir);
    if (!out) return;
    out->trials = s.search.trials.size();
    out->full_resource_trials = 0;
    out->best_score = navfeat::kNaN;
    for (const auto& t : s.search.trials) {
      if (t.resource() >= cfg->cfg.asha.r_max) ++out->full_resource_trials;
      if (t.id == s.search.best_trial) out->best_score = t.best_score;
    }
    out->best_trial = s.search.best_trial;
    out->total_resource = s.search.total_resource;
  });
}

nf_status nf_cmd_report(const nf_config* cfg, const char* const* pair_csvs, size_t n_csvs,
                        const char* output_dir, size_t* n_methods) {
  return Guard([&] {
    NotNull(cfg, "cfg");
    NotNull(output_dir, "output_dir");
    if (n_csvs > 0) NotNull(pair_csvs, "pair_csvs");
    std::vector<std::string> paths;
    for (size_t i = 0; i < n_csvs; ++i) {
      NotNull(pair_csvs[i], "pair_csvs[i]");
      paths.emplace_back(pair_csvs[i]);
    }
    const auto reports = navfeat::CmdReport(cfg->cfg, paths, output_dir);
    if (n_methods) *n_methods = reports.size();
  });
}

nf_status nf_rescale_value(double v, double v_lo, double v_hi, double gamma,
                           double highlight_margin, uint8_t* out) {
  return Guard([&] {
    NotNull(out, "out");
    navfeat::Check(gamma > 0 && highlight_margin * v_hi > v_lo, navfeat::ErrorCode::kInvalidArgument,
                   "rescale needs gamma > 0 and margin * v_hi > v_lo");
    *out = navfeat::RescaleValue(v, v_lo, v_hi, gamma, highlight_margin);
  });
}

nf_status nf_foreground_percentile(int width, int height, double radius, double* out) {
  return Guard([&] {
    NotNull(out, "out");
    *out = navfeat::ForegroundPercentile(width, height, radius);
  });
}

nf_status nf_ap_exact(const double* similarities, size_t n, size_t positive, double* out) {
  return Guard([&] {
    NotNull(similarities, "similarities");
    NotNull(out, "out");
    *out = navfeat::ApExact(std::vector<double>(similarities, similarities + n), positive);
  });
}

nf_status nf_ap_quantized(const double* similarities, size_t n, size_t positive, int bins,
                          double* out) {
  return Guard([&] {
    NotNull(similarities, "similarities");
    NotNull(out, "out");
    *out = navfeat::ApQuantized(std::vector<double>(similarities, similarities + n), positive, bins);
  });
}

nf_status nf_feature_map_create(int width, int height, int dim, int n_detection_maps, float scale,
                                nf_feature_map** out) {
  return Guard([&] {
    NotNull(out, "out");
    navfeat::Check(width >= 0 && height >= 0 && dim > 0 && dim <= 65535, navfeat::ErrorCode::kInvalidArgument,
                   "bad feature map shape");
    navfeat::Check(n_detection_maps == 1 || n_detection_maps == 2, navfeat::ErrorCode::kInvalidArgument,
                   "n_detection_maps must be 1 or 2");
    auto* m = new nf_feature_map{navfeat::DenseFeatureMap(width, height, dim)};
    m->map.scale = scale;
    if (n_detection_maps == 2) m->map.reliability = navfeat::ImageF(width, height);
    *out = m;
  });
}

nf_status nf_feature_map_read(const char* path, nf_feature_map** out) {
  return Guard([&] {
    NotNull(path, "path");
    NotNull(out, "out");
    *out = new nf_feature_map{navfeat::ReadDfm1(path)};
  });
}

nf_status nf_feature_map_write(const nf_feature_map* map, const char* path) {
  return Guard([&] {
    NotNull(map, "map");
    NotNull(path, "path");
    navfeat::WriteDfm1(path, map->map);
  });
}

nf_status nf_feature_map_info(const nf_feature_map* map, int* width, int* height, int* dim,
                              int* n_detection_maps, float* scale) {
  return Guard([&] {
    NotNull(map, "map");
    if (width) *width = map->map.width;
    if (height) *height = map->map.height;
    if (dim) *dim = map->map.dim;
    if (n_detection_maps) *n_detection_maps = map->map.reliability ? 2 : 1;
    if (scale) *scale = map->map.scale;
  });
}

float* nf_feature_map_descriptors(nf_feature_map* map) {
  return map ? map->map.descriptors.data() : nullptr;
}

float* nf_feature_map_detection(nf_feature_map* map, int index) {
  if (!map) return nullptr;
  if (index == 0) return map->map.detection.data().data();
  if (index == 1 && map->map.reliability) return map->map.reliability->data().data();
  return nullptr;
}

void nf_feature_map_destroy(nf_feature_map* map) { delete map; }

nf_status nf_corr_create(int width, int height, nf_corr** out) {
  return Guard([&] {
    NotNull(out, "out");
    *out = new nf_corr{navfeat::CorrespondenceField(width, height)};
  });
}

nf_status nf_corr_read(const char* path, nf_corr** out) {
  return Guard([&] {
    NotNull(path, "path");
    NotNull(out, "out");
    *out = new nf_corr{navfeat::ReadCor1(path)};
  });
}

nf_status nf_corr_write(const nf_corr* corr, const char* path) {
  return Guard([&] {
    NotNull(corr, "corr");
    NotNull(path, "path");
    navfeat::WriteCor1(path, corr->field);
  });
}

nf_status nf_corr_info(const nf_corr* corr, int* width, int* height) {
  return Guard([&] {
    NotNull(corr, "corr");
    if (width) *width = corr->field.width();
    if (height) *height = corr->field.height();
  });
}

float* nf_corr_x(nf_corr* corr) { return corr ? corr->field.xs().data().data() : nullptr; }
float* nf_corr_y(nf_corr* corr) { return corr ? corr->field.ys().data().data() : nullptr; }
void nf_corr_destroy(nf_corr* corr) { delete corr; }

nf_status nf_geo_create(int width, int height, nf_geo** out) {
  return Guard([&] {
    NotNull(out, "out");
    *out = new nf_geo{navfeat::CoordGrid(width, height, Eigen::Vector3f::Constant(navfeat::kNaNf))};
  });
}

nf_status nf_geo_read(const char* path, nf_geo** out) {
  return Guard([&] {
    NotNull(path, "path");
    NotNull(out, "out");
    *out = new nf_geo{navfeat::ReadGeo1(path)};
  });
}

nf_status nf_geo_write(const nf_geo* geo, const char* path) {
  return Guard([&] {
    NotNull(geo, "geo");
    NotNull(path, "path");
    navfeat::WriteGeo1(path, geo->coords);
  });
}

nf_status nf_geo_info(const nf_geo* geo, int* width, int* height) {
  return Guard([&] {
    NotNull(geo, "geo");
    if (width) *width = geo->coords.width();
    if (height) *height = geo->coords.height();
  });
}

float* nf_geo_data(nf_geo* geo) {
  return geo ? reinterpret_cast<float*>(geo->coords.data().data()) : nullptr;
}

void nf_geo_destroy(nf_geo* geo) { delete geo; }

nf_status nf_space_preset(const char* name, nf_space** out) {
  return Guard([&] {
    NotNull(name, "name");
    NotNull(out, "out");
    *out = new nf_space{navfeat::PresetSpace(name)};
  });
}

nf_status nf_space_from_json(const char* json, nf_space** out) {
  return Guard([&] {
    NotNull(json, "json");
    NotNull(out, "out");
    *out = new nf_space{navfeat::SearchSpace::FromJson(json)};
  });
}

nf_status nf_space_to_json(const nf_space* space, char** out) {
  return Guard([&] {
    NotNull(space, "space");
    NotNull(out, "out");
    *out = CopyString(space->space.ToJson());
  });
}

nf_status nf_space_size(const nf_space* space, size_t* out) {
  return Guard([&] {
    NotNull(space, "space");
    NotNull(out, "out");
    *out = space->space.size();
  });
}

void nf_space_destroy(nf_space* space) { delete space; }

}  // extern "C"
