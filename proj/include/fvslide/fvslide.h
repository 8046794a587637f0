/*
 * fvslide C API.
 *
 * Slide-level Fisher-vector representations and attention-MIL
 * classification over bags of patch embeddings. All objects are opaque
 * handles owned by the caller and released with the matching *_destroy.
 * Every fallible call returns an fvs_status; on failure a description is
 * available from fvs_last_error() on the calling thread until the next call.
 */
#ifndef FVSLIDE_FVSLIDE_H
#define FVSLIDE_FVSLIDE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(FVSLIDE_BUILDING)
#    define FVS_API __declspec(dllexport)
#  else
#    define FVS_API __declspec(dllimport)
#  endif
#else
#  define FVS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values double as CLI exit codes. */
typedef enum fvs_status {
  FVS_OK = 0,
  FVS_ERR_VALIDATION = 1,
  FVS_ERR_IO = 2,
  FVS_ERR_INTERNAL = 3
} fvs_status;

typedef struct fvs_config fvs_config;
typedef struct fvs_slidepack fvs_slidepack;
typedef struct fvs_cluster_model fvs_cluster_model;
typedef struct fvs_representation fvs_representation;
typedef struct fvs_model fvs_model;
typedef struct fvs_metrics fvs_metrics;
typedef struct fvs_elbow fvs_elbow;

FVS_API const char* fvs_version(void);
FVS_API const char* fvs_last_error(void);

/* 0 debug, 1 info, 2 warn, 3 error, 4 quiet. */
FVS_API void fvs_set_log_level(int level);

/* ---- configuration (key = value settings, see README for keys) ---- */
FVS_API fvs_status fvs_config_create(fvs_config** out);
FVS_API void fvs_config_destroy(fvs_config* config);
FVS_API fvs_status fvs_config_load(fvs_config* config, const char* path);
FVS_API fvs_status fvs_config_set(fvs_config* config, const char* key, const char* value);
/* Copies the value (or "" if unset) into buf; *needed gets strlen + 1. */
FVS_API fvs_status fvs_config_get(const fvs_config* config, const char* key, char* buf,
                                  size_t buf_len, size_t* needed);

/* ---- pipeline stages driven by a config ---- */
FVS_API fvs_status fvs_synth(const fvs_config* config);
FVS_API fvs_status fvs_cluster(const fvs_config* config);
FVS_API fvs_status fvs_encode(const fvs_config* config);
FVS_API fvs_status fvs_train(const fvs_config* config);
/* Evaluates the configured split and writes the metrics CSV. */
FVS_API fvs_status fvs_eval(const fvs_config* config, fvs_metrics** out);
/* Full cluster -> encode -> train -> eval with stage caching; returns test metrics. */
FVS_API fvs_status fvs_run(const fvs_config* config, fvs_metrics** out);
/* Number of stages served from cache by the last fvs_run on this thread. */
FVS_API int fvs_last_run_cached_stages(void);
FVS_API fvs_status fvs_elbow_run(const fvs_config* config, fvs_elbow** out);

FVS_API void fvs_elbow_destroy(fvs_elbow* report);
FVS_API size_t fvs_elbow_count(const fvs_elbow* report);
FVS_API int fvs_elbow_k(const fvs_elbow* report, size_t i);
FVS_API double fvs_elbow_wcss(const fvs_elbow* report, size_t i);
FVS_API int fvs_elbow_chosen_k(const fvs_elbow* report);

typedef enum fvs_metric {
  FVS_METRIC_ACCURACY = 0,
  FVS_METRIC_AUC = 1,
  FVS_METRIC_PRECISION = 2,
  FVS_METRIC_RECALL = 3,
  FVS_METRIC_F1 = 4
} fvs_metric;

FVS_API void fvs_metrics_destroy(fvs_metrics* metrics);
FVS_API double fvs_metrics_get(const fvs_metrics* metrics, fvs_metric which);
FVS_API fvs_status fvs_metrics_write_csv(const fvs_metrics* metrics, const char* path);

/* ---- slide packs ---- */
/* data is n_patches * dim row-major floats; it is copied. */
FVS_API fvs_status fvs_slidepack_create(const char* slide_id, int label, const float* data,
                                        uint32_t n_patches, uint32_t dim, fvs_slidepack** out);
FVS_API fvs_status fvs_slidepack_read(const char* path, fvs_slidepack** out);
FVS_API fvs_status fvs_slidepack_write(const fvs_slidepack* pack, const char* path);
FVS_API void fvs_slidepack_destroy(fvs_slidepack* pack);
FVS_API uint32_t fvs_slidepack_n_patches(const fvs_slidepack* pack);
FVS_API uint32_t fvs_slidepack_dim(const fvs_slidepack* pack);
FVS_API const float* fvs_slidepack_data(const fvs_slidepack* pack);

/* ---- clustering ---- */
FVS_API fvs_status fvs_kmeans_fit(const fvs_slidepack* pack, int k, uint64_t seed,
                                  fvs_cluster_model** out);
FVS_API void fvs_cluster_model_destroy(fvs_cluster_model* model);
FVS_API int fvs_cluster_model_k(const fvs_cluster_model* model);
FVS_API double fvs_cluster_model_wcss(const fvs_cluster_model* model);
FVS_API const uint32_t* fvs_cluster_model_assignments(const fvs_cluster_model* model, size_t* n);

/* ---- fisher vector encoding ---- */
typedef struct fvs_fv_options {
  int m;
  double pi;
  double sigma;
  int power_l2;            /* nonzero: signed sqrt + L2 */
  int paper_literal;       /* nonzero: no sigma^2 centering of the second-order block */
  uint64_t seed;
} fvs_fv_options;

/* m = 5, pi = 0.2, sigma = 0.1, power_l2 = 1, paper_literal = 0, seed = 0. */
FVS_API fvs_fv_options fvs_fv_default_options(void);
FVS_API fvs_status fvs_encode_slide(const fvs_slidepack* pack, const fvs_cluster_model* clusters,
                                    const fvs_fv_options* options, fvs_representation** out);
FVS_API fvs_status fvs_representation_read(const char* path, fvs_representation** out);
FVS_API fvs_status fvs_representation_write(const fvs_representation* rep, const char* path);
FVS_API void fvs_representation_destroy(fvs_representation* rep);
FVS_API size_t fvs_representation_k(const fvs_representation* rep);
FVS_API size_t fvs_representation_length(const fvs_representation* rep);
/* k * length row-major doubles. */
FVS_API const double* fvs_representation_data(const fvs_representation* rep);

/* ---- classifier ---- */
FVS_API fvs_status fvs_model_read(const char* path, fvs_model** out);
FVS_API void fvs_model_destroy(fvs_model* model);
FVS_API int fvs_model_n_classes(const fvs_model* model);
/* probs must hold n_classes doubles; attention (may be NULL) k doubles. */
FVS_API fvs_status fvs_model_predict(const fvs_model* model, const fvs_representation* rep,
                                     double* probs, double* attention);

#ifdef __cplusplus
}
#endif

#endif /* FVSLIDE_FVSLIDE_H */
