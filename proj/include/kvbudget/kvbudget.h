/* Copyright (C) 2026 The kvbudget Authors
 * SPDX-License-Identifier: Apache-2.0
 */

/*
 * C interface to the kvbudget pipeline: needle-in-a-haystack probes, attention
 * traces, per-head behavior heatmaps, KV budget plans and cache compression.
 *
 * Objects are opaque handles released with the matching *_free function.
 * Every fallible call returns a kvb_status; on failure kvb_last_error()
 * describes the problem until the next failing call on the same thread.
 * Output handles are only written on success.
 */

#ifndef KVBUDGET_KVBUDGET_H
#define KVBUDGET_KVBUDGET_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(KVBUDGET_BUILDING)
#    define KVB_API __declspec(dllexport)
#  else
#    define KVB_API __declspec(dllimport)
#  endif
#else
#  define KVB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum kvb_status {
    KVB_OK = 0,
    KVB_ERROR_DOMAIN = 1,   /* invalid configuration, shape mismatch, failed validation */
    KVB_ERROR_IO = 2,       /* file could not be read or written */
    KVB_ERROR_PARSE = 3,    /* malformed input file; message names the line */
    KVB_ERROR_ARGUMENT = 4, /* null handle or pointer */
    KVB_ERROR_INTERNAL = 5
} kvb_status;

typedef struct kvb_probes kvb_probes;
typedef struct kvb_traces kvb_traces;
typedef struct kvb_heatmap kvb_heatmap;
typedef struct kvb_plan kvb_plan;
typedef struct kvb_summary kvb_summary;

KVB_API const char *kvb_last_error(void);
KVB_API const char *kvb_version(void);

/* "fnv1a64:<hex>" digest of a file, written to buf (at least 25 bytes). */
KVB_API kvb_status kvb_file_digest(const char *path, char *buf, size_t buf_len);

/* ---- probes ------------------------------------------------------------ */

typedef struct kvb_needle_template {
    const char *needle;
    const char *question;
    const char *answer;
} kvb_needle_template;

typedef struct kvb_grid_params {
    const size_t *lengths; /* total tokens per probe */
    size_t num_lengths;
    const double *depths; /* strictly increasing, within [0, 1] */
    size_t num_depths;
    const kvb_needle_template *needles; /* NULL selects the first builtin needle */
    size_t num_needles;
    size_t vocab_size;
    uint64_t seed;
    const char *haystack_text_path; /* optional; NULL for synthetic filler */
} kvb_grid_params;

/* Standard sweep: 6 lengths x 33 depths, one needle, vocab 1024, seed 0.
 * The arrays point to static storage. */
KVB_API void kvb_grid_params_default(kvb_grid_params *params);

KVB_API kvb_status kvb_probes_build(const kvb_grid_params *params, kvb_probes **out);
KVB_API kvb_status kvb_probes_read(const char *path, kvb_probes **out);
/* `metadata` holds newline-separated "key=value" lines embedded in the file
 * header; may be NULL. */
KVB_API kvb_status kvb_probes_write(const kvb_probes *probes, const char *path, const char *metadata);
KVB_API size_t kvb_probes_count(const kvb_probes *probes);
/* Length of probe `index`, or 0 when out of range. */
KVB_API size_t kvb_probes_length(const kvb_probes *probes, size_t index);
KVB_API void kvb_probes_free(kvb_probes *probes);

/* ---- traces ------------------------------------------------------------ */

typedef enum kvb_query_policy {
    KVB_QUERY_LAST_ROW = 0,
    KVB_QUERY_WINDOW_MEAN = 1
} kvb_query_policy;

typedef struct kvb_model_config {
    size_t layers;
    size_t heads;
    size_t d_k; /* d_model = heads * d_k */
    size_t vocab_size;
    uint64_t seed;
    kvb_query_policy query_policy;
    size_t query_rows; /* rows averaged by KVB_QUERY_WINDOW_MEAN */
    size_t threads;    /* worker threads across probes; output is identical for any value */
} kvb_model_config;

KVB_API void kvb_model_config_default(kvb_model_config *config);

KVB_API kvb_status kvb_traces_from_model(const kvb_model_config *config, const kvb_probes *probes, kvb_traces **out);
/* mode: "all-on-needle", "all-off-needle" or "uniform". */
KVB_API kvb_status kvb_traces_oracle(const kvb_probes *probes, const char *mode, size_t layers, size_t heads,
                                     kvb_traces **out);
KVB_API kvb_status kvb_traces_read(const char *path, kvb_traces **out);
KVB_API kvb_status kvb_traces_write(const kvb_traces *traces, const char *path, const char *metadata);
/* Every (probe, layer, head) must appear exactly once with matching length
 * and needle span; the error message lists what is missing. */
KVB_API kvb_status kvb_traces_validate(const kvb_traces *traces, const kvb_probes *probes, size_t layers,
                                       size_t heads);
KVB_API size_t kvb_traces_count(const kvb_traces *traces);
KVB_API void kvb_traces_free(kvb_traces *traces);

/* ---- behavior heatmap -------------------------------------------------- */

typedef enum kvb_aggregation {
    KVB_AGGREGATE_MEAN = 0,
    KVB_AGGREGATE_MAX = 1
} kvb_aggregation;

typedef enum kvb_metric {
    KVB_METRIC_SF = 0,
    KVB_METRIC_LG = 1,
    KVB_METRIC_INF = 2,
    KVB_METRIC_WO = 3,
    KVB_METRIC_WD = 4,
    KVB_METRIC_WS = 5,
    KVB_METRIC_WIDE = 6
} kvb_metric;

typedef struct kvb_score_params {
    size_t top_k; /* 0: use the needle length */
    kvb_aggregation aggregation;
} kvb_score_params;

KVB_API kvb_status kvb_heatmap_from_traces(const kvb_traces *traces, const kvb_score_params *params,
                                           kvb_heatmap **out);
/* Heatmap with the given row-major INFsc grid and all other metrics zero. */
KVB_API kvb_status kvb_heatmap_from_inf(size_t layers, size_t heads, const double *inf, kvb_heatmap **out);
KVB_API kvb_status kvb_heatmap_read(const char *path, kvb_heatmap **out);
KVB_API kvb_status kvb_heatmap_write(const kvb_heatmap *heatmap, const char *path, const char *metadata);
KVB_API kvb_status kvb_heatmap_dims(const kvb_heatmap *heatmap, size_t *layers, size_t *heads);
KVB_API kvb_status kvb_heatmap_value(const kvb_heatmap *heatmap, kvb_metric metric, size_t layer, size_t head,
                                     double *value);
KVB_API void kvb_heatmap_free(kvb_heatmap *heatmap);

/* Harmonic mean of the two behavior scores (0 when both are 0). */
KVB_API double kvb_infsc_harmonic(double sf, double lg);

/* ---- budget plan ------------------------------------------------------- */

typedef struct kvb_allocator_config {
    size_t budget; /* base tokens per head */
    double beta;   /* > 1 */
    double floor;  /* per-layer additive share, default 0.01 */
} kvb_allocator_config;

KVB_API void kvb_allocator_config_default(kvb_allocator_config *config);

KVB_API kvb_status kvb_plan_allocate(const kvb_allocator_config *config, const kvb_heatmap *heatmap, kvb_plan **out);
KVB_API kvb_status kvb_plan_read(const char *path, kvb_plan **out);
KVB_API kvb_status kvb_plan_write(const kvb_plan *plan, const char *path, const char *metadata);
KVB_API kvb_status kvb_plan_dims(const kvb_plan *plan, size_t *layers, size_t *heads);
KVB_API kvb_status kvb_plan_capacity(const kvb_plan *plan, size_t layer, size_t head, size_t *capacity);
/* Sum of capacities and the unrounded closed-form total. */
KVB_API kvb_status kvb_plan_totals(const kvb_plan *plan, size_t *total, double *closed_form);
/* 1 when every INFsc was zero and the dynamic pool was spread uniformly. */
KVB_API int kvb_plan_uniform_fallback(const kvb_plan *plan);
KVB_API void kvb_plan_free(kvb_plan *plan);

/* ---- compression ------------------------------------------------------- */

typedef struct kvb_compress_params {
    size_t window;      /* trailing query window, always kept when capacity allows */
    size_t pool_kernel; /* odd max-pool width over relevance; 0 disables */
    size_t probe_index; /* probe whose tokens fill the caches */
} kvb_compress_params;

/* Fills each head's cache by running the toy model over one probe, then
 * compresses every head to its planned capacity. */
KVB_API kvb_status kvb_compress_toy(const kvb_plan *plan, const kvb_model_config *model, const kvb_probes *probes,
                                    const kvb_compress_params *params, kvb_summary **out);
KVB_API kvb_status kvb_summary_write(const kvb_summary *summary, const char *path, const char *metadata);
KVB_API kvb_status kvb_summary_totals(const kvb_summary *summary, size_t *original, size_t *retained, double *ratio);
KVB_API void kvb_summary_free(kvb_summary *summary);

/* ---- reports ----------------------------------------------------------- */

typedef struct kvb_report_params {
    size_t budget;
    double floor;
    const double *betas; /* beta sweep; NULL selects 1.2, 1.351, 1.5, 2.0 */
    size_t num_betas;
    int use_thresholds; /* nonzero: add behavior class shares */
    double wide_below;
    double logic_min;
    double surface_min;
} kvb_report_params;

KVB_API void kvb_report_params_default(kvb_report_params *params);
/* Reads any pipeline artifact and writes plot-ready tables. */
KVB_API kvb_status kvb_report(const char *artifact_path, const char *out_path, const kvb_report_params *params);

#ifdef __cplusplus
}
#endif

#endif /* KVBUDGET_KVBUDGET_H */
