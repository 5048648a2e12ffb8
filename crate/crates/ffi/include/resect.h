#ifndef RESECT_H
#define RESECT_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum ResectStatus {
  RESECT_STATUS_OK = 0,
  RESECT_STATUS_NULL_POINTER = 1,
  RESECT_STATUS_INVALID_ARGUMENT = 2,
  RESECT_STATUS_IO = 3,
  RESECT_STATUS_PARSE = 4,
  RESECT_STATUS_DEGENERATE = 5,
  RESECT_STATUS_GEOMETRY = 6,
  RESECT_STATUS_PANIC = 7,
} ResectStatus;

typedef struct ResectPlan ResectPlan;

typedef struct ResectStudy ResectStudy;

typedef struct ResectTrace ResectTrace;

typedef struct ResectRegistration {
  double quaternion_wxyz[4];
  double translation[3];
  double fre_rms;
  double fre_mean;
} ResectRegistration;

typedef struct ResectTrialMetrics {
  double deviation_mean_mm;
  double deviation_max_mm;
  double margin_min_mm;
  double time_s;
  bool breach;
  /**
   * False for unguided.
   */
  bool guided;
} ResectTrialMetrics;

typedef struct ResectTestResult {
  double t_statistic;
  size_t degrees_of_freedom;
  double p_value;
  double mean_difference;
  double sd_difference;
  bool degenerate;
} ResectTestResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message on this thread, or null. Owned by the library.
 */
const char *resect_last_error(void);

/**
 * Library version, static.
 */
const char *resect_version(void);

void resect_string_free(char *s);

/**
 * Builds the bundled demo plan.
 */
enum ResectStatus resect_plan_demo(struct ResectPlan **out);

/**
 * Loads a plan manifest, verifying its checksum.
 */
enum ResectStatus resect_plan_load(const char *manifest_path, struct ResectPlan **out);

void resect_plan_free(struct ResectPlan *plan);

/**
 * Number of points on the planned path.
 */
enum ResectStatus resect_plan_path_len(const struct ResectPlan *plan, size_t *out_len);

/**
 * Copies path points as `x y z` triples into `xyz`, which holds `capacity` points.
 */
enum ResectStatus resect_plan_path_points(const struct ResectPlan *plan,
                                          double *xyz,
                                          size_t capacity);

enum ResectStatus resect_plan_perimeter(const struct ResectPlan *plan, double *out_mm);

/**
 * Rigid model-to-measured fit of `n` point pairs given as `x y z` triples.
 */
enum ResectStatus resect_register(const double *model_xyz,
                                  const double *measured_xyz,
                                  size_t n,
                                  struct ResectRegistration *out);

/**
 * Parses a trace in the `#trace v1` text format.
 */
enum ResectStatus resect_trace_parse(const char *text, struct ResectTrace **out);

void resect_trace_free(struct ResectTrace *trace);

/**
 * Scores a trace against a plan with the default scoring options.
 */
enum ResectStatus resect_score_trial(const struct ResectPlan *plan,
                                     const struct ResectTrace *trace,
                                     struct ResectTrialMetrics *out);

/**
 * Paired t-test of `a - b` over `n` pairs.
 */
enum ResectStatus resect_paired_t_test(const double *a,
                                       const double *b,
                                       size_t n,
                                       struct ResectTestResult *out);

/**
 * Runs a study. `config_toml` may be null for the defaults; `seed` overrides
 * the config's seed.
 */
enum ResectStatus resect_study_run(const char *config_toml,
                                   uint64_t seed,
                                   struct ResectStudy **out);

/**
 * Report text; free with `resect_string_free`.
 */
enum ResectStatus resect_study_report(const struct ResectStudy *study, char **out);

/**
 * Metrics CSV; free with `resect_string_free`.
 */
enum ResectStatus resect_study_metrics_csv(const struct ResectStudy *study, char **out);

void resect_study_free(struct ResectStudy *study);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RESECT_H */
