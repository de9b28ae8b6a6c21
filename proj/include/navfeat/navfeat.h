#ifndef NAVFEAT_NAVFEAT_H_
#define NAVFEAT_NAVFEAT_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define NF_API __declspec(dllexport)
#else
#define NF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nf_status {
  NF_OK = 0,
  NF_ERR_INVALID_ARGUMENT = 1,
  NF_ERR_IO = 2,
  NF_ERR_FORMAT = 3,
  NF_ERR_DEGENERATE = 4,
  NF_ERR_ESTIMATION_FAILED = 5,
  NF_ERR_EMPTY_INPUT = 6,
  NF_ERR_INTERNAL = 99
} nf_status;

/* Message of the last failed call on this thread; "" after success. */
NF_API const char* nf_last_error(void);
NF_API const char* nf_version(void);
/* Frees strings returned through char** out-parameters. */
NF_API void nf_string_free(char* s);

/* Pipeline configuration. Keys are dotted paths such as "extract.feat_ratio". */
typedef struct nf_config nf_config;

NF_API nf_status nf_config_create(nf_config** out);
NF_API nf_status nf_config_load(const char* path, nf_config** out);
NF_API nf_status nf_config_merge_json(nf_config* cfg, const char* json);
/* `json_value` is a JSON literal: 0.5, true, "text". */
NF_API nf_status nf_config_set(nf_config* cfg, const char* key, const char* json_value);
NF_API nf_status nf_config_validate(const nf_config* cfg);
NF_API nf_status nf_config_to_json(const nf_config* cfg, char** out);
NF_API nf_status nf_config_hash(const nf_config* cfg, uint64_t* out);
NF_API void nf_config_destroy(nf_config* cfg);

typedef struct nf_preprocess_summary {
  size_t available;
  size_t acceptable;
  size_t errors;
} nf_preprocess_summary;

typedef struct nf_subset_report {
  size_t n;
  double mean_m_score; /* NaN when no pair was valid */
  double fail_pct;
  double p50; /* +inf when the percentile falls on a failure */
  double p85;
} nf_subset_report;

typedef struct nf_evaluate_summary {
  size_t evaluated;
  size_t skipped;
  nf_subset_report easy;
  nf_subset_report hard;
  nf_subset_report all;
} nf_evaluate_summary;

typedef struct nf_tune_summary {
  size_t trials;
  size_t full_resource_trials;
  int best_trial;
  double best_score;
  long total_resource;
} nf_tune_summary;

NF_API nf_status nf_cmd_preprocess(const nf_config* cfg, const char* input_dir,
                                   const char* output_dir, nf_preprocess_summary* out);
NF_API nf_status nf_cmd_pair(const nf_config* cfg, const char* images_dir, const char* output_dir,
                             size_t* n_pairs);
NF_API nf_status nf_cmd_augment_preview(const nf_config* cfg, const char* image_path,
                                        const char* output_dir, size_t* n_images);
NF_API nf_status nf_cmd_extract(const nf_config* cfg, const char* images_dir,
                                const char* output_dir, size_t* n_files);
NF_API nf_status nf_cmd_evaluate(const nf_config* cfg, const char* output_dir,
                                 nf_evaluate_summary* out);
NF_API nf_status nf_cmd_tune(const nf_config* cfg, const char* output_dir, nf_tune_summary* out);
NF_API nf_status nf_cmd_report(const nf_config* cfg, const char* const* pair_csvs, size_t n_csvs,
                               const char* output_dir, size_t* n_methods);

/* Formula-level entry points. */
NF_API nf_status nf_rescale_value(double v, double v_lo, double v_hi, double gamma,
                                  double highlight_margin, uint8_t* out);
NF_API nf_status nf_foreground_percentile(int width, int height, double radius, double* out);
NF_API nf_status nf_ap_exact(const double* similarities, size_t n, size_t positive, double* out);
NF_API nf_status nf_ap_quantized(const double* similarities, size_t n, size_t positive, int bins,
                                 double* out);

/* Dense feature maps (DFM1). Descriptors are H*W*D floats, row-major;
   detection map 0 is the repeatability, map 1 the optional reliability. */
typedef struct nf_feature_map nf_feature_map;

NF_API nf_status nf_feature_map_create(int width, int height, int dim, int n_detection_maps,
                                       float scale, nf_feature_map** out);
NF_API nf_status nf_feature_map_read(const char* path, nf_feature_map** out);
NF_API nf_status nf_feature_map_write(const nf_feature_map* map, const char* path);
NF_API nf_status nf_feature_map_info(const nf_feature_map* map, int* width, int* height, int* dim,
                                     int* n_detection_maps, float* scale);
NF_API float* nf_feature_map_descriptors(nf_feature_map* map);
NF_API float* nf_feature_map_detection(nf_feature_map* map, int index);
NF_API void nf_feature_map_destroy(nf_feature_map* map);

/* Correspondence fields (COR1): separate x and y planes, NaN = missing. */
typedef struct nf_corr nf_corr;

NF_API nf_status nf_corr_create(int width, int height, nf_corr** out);
NF_API nf_status nf_corr_read(const char* path, nf_corr** out);
NF_API nf_status nf_corr_write(const nf_corr* corr, const char* path);
NF_API nf_status nf_corr_info(const nf_corr* corr, int* width, int* height);
NF_API float* nf_corr_x(nf_corr* corr);
NF_API float* nf_corr_y(nf_corr* corr);
NF_API void nf_corr_destroy(nf_corr* corr);

/* Geometry backplanes (GEO1): H*W*3 floats, NaN = background. */
typedef struct nf_geo nf_geo;

NF_API nf_status nf_geo_create(int width, int height, nf_geo** out);
NF_API nf_status nf_geo_read(const char* path, nf_geo** out);
NF_API nf_status nf_geo_write(const nf_geo* geo, const char* path);
NF_API nf_status nf_geo_info(const nf_geo* geo, int* width, int* height);
NF_API float* nf_geo_data(nf_geo* geo);
NF_API void nf_geo_destroy(nf_geo* geo);

/* Hyperparameter search spaces. */
typedef struct nf_space nf_space;

NF_API nf_status nf_space_preset(const char* name, nf_space** out);
NF_API nf_status nf_space_from_json(const char* json, nf_space** out);
NF_API nf_status nf_space_to_json(const nf_space* space, char** out);
NF_API nf_status nf_space_size(const nf_space* space, size_t* out);
NF_API void nf_space_destroy(nf_space* space);

#ifdef __cplusplus
}
#endif

#endif
