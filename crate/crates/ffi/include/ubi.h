#ifndef UBI_H
#define UBI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum UbiStatus {
  UBI_STATUS_OK = 0,
  UBI_STATUS_NULL_POINTER = 1,
  UBI_STATUS_INVALID_ARGUMENT = 2,
  // Malformed JSON or text input.
  UBI_STATUS_PARSE = 3,
  // Single-class target, separation or collinearity.
  UBI_STATUS_FIT = 4,
  // A feature required by the model was not supplied.
  UBI_STATUS_MISSING_FEATURE = 5,
  UBI_STATUS_PANIC = 6,
} UbiStatus;

// Acceleration axis for [`ubi_classify_accel`].
typedef enum UbiAxis {
  UBI_AXIS_LONGITUDINAL = 0,
  UBI_AXIS_LATERAL = 1,
} UbiAxis;

// Opaque fitted or reference model.
typedef struct UbiModel UbiModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Text of the last error on this thread; empty after a success. The
// pointer stays valid until the next library call on the same thread.
const char *ubi_last_error(void);

// Library version as a static NUL-terminated string.
const char *ubi_version(void);

// Releases a string returned by the library. Null is ignored.
//
// # Safety
// `s` must be null or a pointer obtained from this library, freed once.
void ubi_string_free(char *s);

// Great-circle distance in km between two WGS84 points.
//
// # Safety
// `out` must be null or valid for writes.
enum UbiStatus ubi_haversine_km(double lat1, double lon1, double lat2, double lon2, double *out);

// Band index of an acceleration event: 0..=8 for a1..a3, d1..d3, s1..s3,
// or -1 when the event is below every band.
//
// # Safety
// `out` must be null or valid for writes.
enum UbiStatus ubi_classify_accel(enum UbiAxis axis, double accel_g, int32_t *out);

// Severity class of a claim: 0 none, 1 weak, 2 medium, 3 strong.
//
// # Safety
// `out` must be null or valid for writes.
enum UbiStatus ubi_classify_severity(double loss_size, double ins_sum, bool culprit, int32_t *out);

// ROC AUC of `scores` against 0/1 `labels`.
//
// # Safety
// `scores` and `labels` must each hold `n` readable elements; `out` must
// be null or valid for writes.
enum UbiStatus ubi_roc_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

// Premium: `p · loss + admin + margin`.
//
// # Safety
// `out` must be null or valid for writes.
enum UbiStatus ubi_premium(double p_accident,
                           double predicted_loss,
                           double admin_costs,
                           double margin,
                           double *out);

// The published model for `target` (`any`, `weak`, `medium`, `strong`).
//
// # Safety
// `target` must be a NUL-terminated string; `out` null or valid for writes.
enum UbiStatus ubi_model_paper_reference(const char *target, struct UbiModel **out);

// Fits a logistic model on a row-major `n_rows × n_features` matrix.
// With `alpha` in [0, 1] insignificant features are eliminated backwards;
// a negative `alpha` keeps every feature.
//
// # Safety
// `names` must hold `n_features` NUL-terminated strings, `x` hold
// `n_rows * n_features` values, `y` hold `n_rows` values; `out` null or
// valid for writes.
enum UbiStatus ubi_model_fit(const char *const *names,
                             size_t n_features,
                             const double *x,
                             const uint8_t *y,
                             size_t n_rows,
                             const char *target,
                             double alpha,
                             struct UbiModel **out);

// Reads a model from its JSON form.
//
// # Safety
// `json` must be a NUL-terminated string; `out` null or valid for writes.
enum UbiStatus ubi_model_from_json(const char *json, struct UbiModel **out);

// JSON form of a model; release with [`ubi_string_free`].
//
// # Safety
// `model` must be a live handle; `out` null or valid for writes.
enum UbiStatus ubi_model_to_json(const struct UbiModel *model, char **out);

// Accident probability for one observation given by parallel arrays of
// feature names and values. Features the model does not use are ignored.
//
// # Safety
// `names` and `values` must each hold `n` elements; `model` must be a live
// handle; `out` null or valid for writes.
enum UbiStatus ubi_model_predict(const struct UbiModel *model,
                                 const char *const *names,
                                 const double *values,
                                 size_t n,
                                 double *out);

// Number of model columns, intercept included; 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t ubi_model_n_columns(const struct UbiModel *model);

// Name of column `i` (`const` for the intercept); release with
// [`ubi_string_free`].
//
// # Safety
// `model` must be a live handle; `out` null or valid for writes.
enum UbiStatus ubi_model_column_name(const struct UbiModel *model, size_t i, char **out);

// Coefficient and standard error of column `i`. Either out pointer may be
// null.
//
// # Safety
// `model` must be a live handle; out pointers null or valid for writes.
enum UbiStatus ubi_model_coefficient(const struct UbiModel *model,
                                     size_t i,
                                     double *coef,
                                     double *std_error);

// Log-likelihood and AIC of a model. Either out pointer may be null.
//
// # Safety
// `model` must be a live handle; out pointers null or valid for writes.
enum UbiStatus ubi_model_fit_stats(const struct UbiModel *model,
                                   double *log_likelihood,
                                   double *aic);

// Releases a model handle. Null is ignored.
//
// # Safety
// `model` must be null or a handle from this library, freed once.
void ubi_model_free(struct UbiModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UBI_H */
