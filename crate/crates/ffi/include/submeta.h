#ifndef SUBMETA_H
#define SUBMETA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum SubmetaStatus {
  SUBMETA_STATUS_OK = 0,
  SUBMETA_STATUS_NULL_POINTER = 1,
  SUBMETA_STATUS_INVALID_UTF8 = 2,
  SUBMETA_STATUS_INVALID_INPUT = 3,
  SUBMETA_STATUS_CONVERGENCE = 4,
  SUBMETA_STATUS_NOT_FOUND = 5,
  SUBMETA_STATUS_PANIC = 6,
} SubmetaStatus;

typedef enum SubmetaOutcome {
  SUBMETA_OUTCOME_PFS = 0,
  SUBMETA_OUTCOME_OS = 1,
} SubmetaOutcome;

typedef enum SubmetaVariant {
  SUBMETA_VARIANT_MAIN = 0,
  SUBMETA_VARIANT_SENSITIVITY = 1,
} SubmetaVariant;

typedef enum SubmetaModel {
  SUBMETA_MODEL_M1 = 0,
  SUBMETA_MODEL_M2 = 1,
  SUBMETA_MODEL_M2_NEG = 2,
  SUBMETA_MODEL_M3 = 3,
} SubmetaModel;

// Opaque dataset handle.
typedef struct SubmetaDataset SubmetaDataset;

// Opaque posterior summary handle.
typedef struct SubmetaFit SubmetaFit;

typedef struct SubmetaBlockCounts {
  size_t positive_only;
  size_t both;
  size_t negative_only;
  size_t mixed;
} SubmetaBlockCounts;

typedef struct SubmetaSamplerConfig {
  size_t n_chains;
  size_t burn_in;
  size_t samples;
  size_t thin;
  uint64_t seed;
} SubmetaSamplerConfig;

// Posterior summary of one parameter; `rhat` is NaN for a single chain.
typedef struct SubmetaParamSummary {
  double mean;
  double median;
  double sd;
  double lower;
  double upper;
  double rhat;
  double ess;
} SubmetaParamSummary;

// Message for the last failed call on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *submeta_last_error(void);

// Parses a dataset CSV held in a NUL-terminated string.
//
// # Safety
// `csv` must be a valid C string and `out` a valid pointer.
enum SubmetaStatus submeta_dataset_parse(const char *csv, struct SubmetaDataset **out);

// One of the bundled colorectal-cancer datasets.
//
// # Safety
// `out` must be a valid pointer.
enum SubmetaStatus submeta_dataset_bundled(enum SubmetaOutcome outcome,
                                           enum SubmetaVariant variant,
                                           struct SubmetaDataset **out);

// Number of studies, or 0 for a null handle.
//
// # Safety
// `ds` must be null or a live dataset handle.
size_t submeta_dataset_len(const struct SubmetaDataset *ds);

// # Safety
// `ds` must be a live dataset handle and `out` a valid pointer.
enum SubmetaStatus submeta_dataset_block_counts(const struct SubmetaDataset *ds,
                                                struct SubmetaBlockCounts *out);

// # Safety
// `ds` must be null or a handle not yet freed.
void submeta_dataset_free(struct SubmetaDataset *ds);

// 4 chains, 5 000 burn-in and 20 000 retained iterations.
struct SubmetaSamplerConfig submeta_sampler_desk(uint64_t seed);

// 4 chains, 50 000 burn-in and 100 000 retained iterations.
struct SubmetaSamplerConfig submeta_sampler_paper(uint64_t seed);

// Fits `model` with the default vague hyperpriors.
//
// # Safety
// `ds` must be a live dataset handle; `config` and `out` valid pointers.
enum SubmetaStatus submeta_fit(const struct SubmetaDataset *ds,
                               enum SubmetaModel model,
                               const struct SubmetaSamplerConfig *config,
                               struct SubmetaFit **out);

// Number of summarized parameters, or 0 for a null handle.
//
// # Safety
// `fit` must be null or a live fit handle.
size_t submeta_fit_param_count(const struct SubmetaFit *fit);

// Summary of the parameter called `name`, e.g. "d_pos" or "tau_beta_sq".
//
// # Safety
// `fit` must be a live fit handle, `name` a valid C string and `out` a
// valid pointer.
enum SubmetaStatus submeta_fit_param(const struct SubmetaFit *fit,
                                     const char *name,
                                     struct SubmetaParamSummary *out);

// # Safety
// `fit` must be null or a handle not yet freed.
void submeta_fit_free(struct SubmetaFit *fit);

// Beta shapes with the given mean and variance.
//
// # Safety
// `alpha` and `beta` must be valid pointers.
enum SubmetaStatus submeta_beta_from_moments(double mean,
                                             double variance,
                                             double *alpha,
                                             double *beta);

// Beta shapes from `n_negative` biomarker-negative out of `n_known`.
//
// # Safety
// `alpha` and `beta` must be valid pointers.
enum SubmetaStatus submeta_beta_from_counts(uint64_t n_negative,
                                            uint64_t n_known,
                                            double *alpha,
                                            double *beta);

// Beta shapes from a range read as mean +/- 2 sd.
//
// # Safety
// `alpha` and `beta` must be valid pointers.
enum SubmetaStatus submeta_beta_from_range(double low, double high, double *alpha, double *beta);

#endif  /* SUBMETA_H */
