#ifndef ALEX_LEM_H
#define ALEX_LEM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum AlexScenario {
  ALEX_SCENARIO_NO_DERMS = 0,
  ALEX_SCENARIO_INDIVIDUAL_DERMS = 1,
  ALEX_SCENARIO_ALEX = 2,
} AlexScenario;

typedef enum AlexStatus {
  ALEX_STATUS_OK = 0,
  ALEX_STATUS_NULL_ARGUMENT = 1,
  ALEX_STATUS_INVALID_ARGUMENT = 2,
  ALEX_STATUS_IO = 3,
  ALEX_STATUS_PARSE = 4,
  ALEX_STATUS_INVALID_DATASET = 5,
  ALEX_STATUS_CONFIG = 6,
  ALEX_STATUS_INCOMPATIBLE = 7,
  ALEX_STATUS_SOLVER = 8,
  ALEX_STATUS_BUFFER_TOO_SMALL = 9,
  ALEX_STATUS_PANIC = 10,
} AlexStatus;

/*
 A parsed run configuration.
 */
typedef struct AlexConfig AlexConfig;

/*
 A loaded, validated community dataset.
 */
typedef struct AlexDataset AlexDataset;

/*
 A solved and replayed scenario.
 */
typedef struct AlexRun AlexRun;

/*
 Community net-load metrics. Load factors are NaN when undefined.
 */
typedef struct AlexMetrics {
  double avg_daily_import;
  double avg_daily_export;
  double avg_daily_peak;
  double avg_daily_valley;
  double max_peak;
  double min_valley;
  double ramping_per_step;
  double ramping_daily_sum;
  double daily_load_factor_complement;
  double monthly_load_factor_complement;
} AlexMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread; empty if none. The
 pointer stays valid until the next failing call on the same thread.
 */
const char *alex_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *alex_version(void);

/*
 Parses a TOML config file. Relative dataset paths resolve against the
 file's directory.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AlexStatus alex_config_load(const char *path, struct AlexConfig **out);

/*
 Overrides the config's seed.

 # Safety
 `config` must come from [`alex_config_load`].
 */
enum AlexStatus alex_config_set_seed(struct AlexConfig *config, uint64_t seed);

/*
 # Safety
 `config` must come from [`alex_config_load`] or be null.
 */
void alex_config_free(struct AlexConfig *config);

/*
 Loads (or generates) the dataset a config names.

 # Safety
 `config` must come from [`alex_config_load`]; `out` must be valid.
 */
enum AlexStatus alex_dataset_load(const struct AlexConfig *config, struct AlexDataset **out);

/*
 # Safety
 `dataset` must come from [`alex_dataset_load`]; outputs must be valid.
 */
enum AlexStatus alex_dataset_shape(const struct AlexDataset *dataset,
                                   size_t *buildings,
                                   size_t *steps);

/*
 # Safety
 `dataset` must come from [`alex_dataset_load`] or be null.
 */
void alex_dataset_free(struct AlexDataset *dataset);

/*
 Solves the scenario's policies and replays them through the market.

 # Safety
 Handles must be live; `out` must be valid.
 */
enum AlexStatus alex_run_scenario(const struct AlexConfig *config,
                                  const struct AlexDataset *dataset,
                                  enum AlexScenario scenario,
                                  struct AlexRun **out);

/*
 Reports whether the best-response search met its threshold and how many
 rounds it used.

 # Safety
 `run` must be live; outputs must be valid.
 */
enum AlexStatus alex_run_convergence(const struct AlexRun *run, bool *converged, size_t *rounds);

/*
 Copies the community net load into `buffer`. `written` always receives
 the series length; a short buffer yields `BufferTooSmall` and no copy.

 # Safety
 `buffer` must hold `capacity` doubles (it may be null when `capacity` is 0).
 */
enum AlexStatus alex_run_net_load(const struct AlexRun *run,
                                  double *buffer,
                                  size_t capacity,
                                  size_t *written);

/*
 # Safety
 `run` must be live; `out` must be valid.
 */
enum AlexStatus alex_run_metrics(const struct AlexRun *run, struct AlexMetrics *out);

/*
 Writes the full run directory (manifest, trace, policies, metrics,
 figure series) to `dir`.

 # Safety
 Handles must be live and be the ones the run was made from.
 */
enum AlexStatus alex_run_write(const struct AlexRun *run,
                               const struct AlexConfig *config,
                               const struct AlexDataset *dataset,
                               const char *dir);

/*
 # Safety
 `run` must come from [`alex_run_scenario`] or be null.
 */
void alex_run_free(struct AlexRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ALEX_LEM_H */
