#ifndef KIDECOMP_H
#define KIDECOMP_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/*
 Status codes. The first four mirror the CLI exit codes.
 */
typedef enum KdStatus {
  KD_STATUS_OK = 0,
  KD_STATUS_INPUT_ERROR = 1,
  KD_STATUS_NUMERICAL_ERROR = 2,
  KD_STATUS_VERIFICATION_ERROR = 3,
  KD_STATUS_NULL_POINTER = 4,
  KD_STATUS_PANIC = 5,
} KdStatus;

/*
 Opaque decomposition result.
 */
typedef struct KdDecomposition KdDecomposition;

/*
 Opaque statistical experiment.
 */
typedef struct KdExperiment KdExperiment;

/*
 Numerical thresholds; see `kd_tolerance_default`.
 */
typedef struct KdTolerance {
  double rank_cut;
  double residual;
  double cluster_gap;
} KdTolerance;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Default thresholds: rank_cut 1e-9, residual 1e-8, cluster_gap 1e-6.
 */
struct KdTolerance kd_tolerance_default(void);

/*
 Library version as a static nul-terminated string.
 */
const char *kd_version(void);

/*
 Message for the last failed call on this thread, or NULL. The pointer is
 valid until the next `kd_*` call on the same thread.
 */
const char *kd_last_error_message(void);

/*
 Releases a string returned by this library. NULL is ignored.

 # Safety
 `s` must come from this library and not have been freed.
 */
void kd_string_free(char *s);

/*
 Parses an experiment from its JSON document.

 # Safety
 `json` must be a valid nul-terminated string; `out` must be writable.
 */
enum KdStatus kd_experiment_from_json(const char *json, struct KdExperiment **out);

/*
 # Safety
 `e` must come from `kd_experiment_from_json` and not have been freed. NULL is ignored.
 */
void kd_experiment_free(struct KdExperiment *e);

/*
 Hilbert-space dimension of the experiment (0 for NULL).

 # Safety
 `e` must be a live handle or NULL.
 */
size_t kd_experiment_dim(const struct KdExperiment *e);

/*
 Number of labels (0 for NULL).

 # Safety
 `e` must be a live handle or NULL.
 */
size_t kd_experiment_num_labels(const struct KdExperiment *e);

/*
 Dimension of the minimal sufficient subalgebra. `tol` may be NULL for defaults.

 # Safety
 `e` must be a live handle; `tol` NULL or valid; `out` writable.
 */
enum KdStatus kd_minimal_sufficient_dim(const struct KdExperiment *e,
                                        const struct KdTolerance *tol,
                                        size_t *out);

/*
 Computes the Koashi-Imoto decomposition. `tol` may be NULL for defaults.

 # Safety
 `e` must be a live handle; `tol` NULL or valid; `out` writable.
 */
enum KdStatus kd_decompose(const struct KdExperiment *e,
                           const struct KdTolerance *tol,
                           uint64_t seed,
                           struct KdDecomposition **out);

/*
 # Safety
 `k` must come from `kd_decompose` and not have been freed. NULL is ignored.
 */
void kd_decomposition_free(struct KdDecomposition *k);

/*
 Number of blocks (0 for NULL).

 # Safety
 `k` must be a live handle or NULL.
 */
size_t kd_decomposition_num_blocks(const struct KdDecomposition *k);

/*
 Dimensions (n, m) of block `index`.

 # Safety
 `k` must be a live handle; `n` and `m` writable.
 */
enum KdStatus kd_decomposition_block_dims(const struct KdDecomposition *k,
                                          size_t index,
                                          size_t *n,
                                          size_t *m);

/*
 Decomposition JSON document. Release with `kd_string_free`.

 # Safety
 `k` must be a live handle; `out` writable.
 */
enum KdStatus kd_decomposition_to_json(const struct KdDecomposition *k, char **out);

/*
 Classical part as JSON `{"index": [...], "distributions": {label: [...]}}`.

 # Safety
 `k` must be a live handle; `out` writable.
 */
enum KdStatus kd_classical_part_json(const struct KdDecomposition *k, char **out);

/*
 Whether the experiment is broadcastable (every block has n = 1).

 # Safety
 `k` must be a live handle; `out` writable.
 */
enum KdStatus kd_is_broadcastable(const struct KdDecomposition *k, bool *out);

/*
 Verification report of `k` against `e` as JSON. Returns
 `VerificationError` (with the report still written) when a check fails.

 # Safety
 `e`, `k` must be live handles; `tol` NULL or valid; `out` writable.
 */
enum KdStatus kd_verify_json(const struct KdExperiment *e,
                             const struct KdDecomposition *k,
                             const struct KdTolerance *tol,
                             char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KIDECOMP_H */
