#ifndef HLSPEC_H
#define HLSPEC_H

/* Generated with cbindgen:0.29.4 */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HlsStatus {
  HLS_STATUS_OK = 0,
  HLS_STATUS_NULL_POINTER = 1,
  HLS_STATUS_INVALID_ARGUMENT = 2,
  HLS_STATUS_CONFIG = 3,
  HLS_STATUS_DATASET = 4,
  HLS_STATUS_NUMERICAL = 5,
  HLS_STATUS_IO = 6,
  HLS_STATUS_OUT_OF_RANGE = 7,
  HLS_STATUS_PANIC = 8,
} HlsStatus;

// Opaque dataset handle.
typedef struct HlsDataset HlsDataset;

// Lineshape fit with the pulse time held fixed.
typedef struct HlsFit {
  double a;
  double omega_line_hz;
  double tau_s;
  double alpha;
  double delta0_hz;
  // Standard error of `alpha`; NaN when unavailable.
  double alpha_err;
  bool converged;
} HlsFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread. Valid until the next call
// that fails on the same thread.
const char *hls_last_error(void);

// Library version as a static string.
const char *hls_version(void);

// Runs a scan described by one `[[scan]]` table in TOML.
//
// # Safety
// `config_toml` must be a NUL-terminated string and `out` a writable pointer.
enum HlsStatus hls_scan_run(const char *config_toml, struct HlsDataset **out);

// Reads a dataset file and its metadata sidecar.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum HlsStatus hls_dataset_read(const char *path, struct HlsDataset **out);

// Writes a dataset file and its metadata sidecar.
//
// # Safety
// `ds` must be a live handle and `path` a NUL-terminated string.
enum HlsStatus hls_dataset_write(const struct HlsDataset *ds, const char *path);

// Releases a dataset. Null is ignored.
//
// # Safety
// `ds` must be null or a handle not yet freed.
void hls_dataset_free(struct HlsDataset *ds);

// Number of points, axes and outcomes.
//
// # Safety
// `ds` must be a live handle; each output pointer must be writable or null.
enum HlsStatus hls_dataset_shape(const struct HlsDataset *ds,
                                 size_t *points,
                                 size_t *axes,
                                 size_t *outcomes);

// Coordinate of `point` along `axis`, in Hz for frequencies and seconds
// for pulse times.
//
// # Safety
// `ds` must be a live handle and `out` writable.
enum HlsStatus hls_dataset_coord(const struct HlsDataset *ds,
                                 size_t point,
                                 size_t axis,
                                 double *out);

// Observed frequency of `outcome` (index into the outcome list) at `point`.
//
// # Safety
// `ds` must be a live handle and `out` writable.
enum HlsStatus hls_dataset_frequency(const struct HlsDataset *ds,
                                     size_t point,
                                     size_t outcome,
                                     double *out);

// Fits the lineshape to the `target` outcome with the pulse time fixed at
// `tau_s`, starting from narrowing factor `alpha_start`.
//
// # Safety
// `ds` must be a live handle, `target` a NUL-terminated string and `out`
// writable.
enum HlsStatus hls_fit_lineshape(const struct HlsDataset *ds,
                                 const char *target,
                                 double tau_s,
                                 double alpha_start,
                                 struct HlsFit *out);

// Evaluates the lineshape at detuning `delta_hz`.
//
// # Safety
// `out` must be writable.
enum HlsStatus hls_lineshape(double a,
                             double omega_line_hz,
                             double tau_s,
                             double alpha,
                             double delta0_hz,
                             double delta_hz,
                             double *out);

// Best-point uncertainty ratios of the correlated pair against two
// independent ions and against one ion, for coupling `omega_hz`.
//
// # Safety
// Both output pointers must be writable.
enum HlsStatus hls_fisher_ratios(double omega_hz, double *to_pair, double *to_single);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HLSPEC_H */
