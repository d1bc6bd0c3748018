#ifndef STEREOFUSE_H
#define STEREOFUSE_H

#pragma once

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every entry point.
 */
typedef enum SfStatus {
  SF_STATUS_OK = 0,
  SF_STATUS_INVALID_ARGUMENT = 1,
  SF_STATUS_CONFIG = 2,
  SF_STATUS_IO = 3,
  SF_STATUS_COMPUTE = 4,
  SF_STATUS_PANIC = 5,
} SfStatus;

/**
 * Opaque 2-D float map with a validity mask.
 */
typedef struct SfFloatMap SfFloatMap;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next call into the library from the same thread.
 */
const char *sf_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sf_version(void);

/**
 * Creates a `width` x `height` map from row-major `data` (`width * height`
 * values). Non-finite values become invalid pixels. A null `data` yields zeros.
 *
 * # Safety
 * `data` must be null or point to `width * height` readable doubles; `out` must be writable.
 */
enum SfStatus sf_map_new(uint32_t width,
                         uint32_t height,
                         const double *data,
                         struct SfFloatMap **out);

/**
 * Reads a PFM file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SfStatus sf_map_read_pfm(const char *path, struct SfFloatMap **out);

/**
 * Writes a map as PFM (invalid pixels as NaN).
 *
 * # Safety
 * `map` must be a live handle; `path` a NUL-terminated string.
 */
enum SfStatus sf_map_write_pfm(const struct SfFloatMap *map, const char *path);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `map` must be null or a handle not yet freed.
 */
void sf_map_free(struct SfFloatMap *map);

/**
 * Width and height of a map.
 *
 * # Safety
 * `map` must be a live handle; `width` and `height` writable.
 */
enum SfStatus sf_map_dims(const struct SfFloatMap *map, uint32_t *width, uint32_t *height);

/**
 * Copies the map row-major into `out`; invalid pixels are written as NaN.
 *
 * # Safety
 * `map` must be a live handle; `out` must hold `len` doubles.
 */
enum SfStatus sf_map_copy_data(const struct SfFloatMap *map, double *out, size_t len);

/**
 * Runs the pipeline from a config file plus `key=value` overrides. On success
 * `disparity` receives a new handle and `report_json` a new string.
 *
 * # Safety
 * `config_path` must be NUL-terminated; `overrides` must hold `n_overrides`
 * NUL-terminated strings; output pointers must be writable.
 */
enum SfStatus sf_run_config(const char *config_path,
                            const char *const *overrides,
                            size_t n_overrides,
                            struct SfFloatMap **disparity,
                            char **report_json);

/**
 * Runs the pipeline on in-memory maps with default tunables plus `key=value`
 * overrides (path keys are not accepted here). `gt` and `occlusion` may be
 * null; occluded pixels are those with value > 0.5.
 *
 * # Safety
 * Map arguments must be live handles or null where allowed; `overrides` must
 * hold `n_overrides` NUL-terminated strings; output pointers must be writable.
 */
enum SfStatus sf_run(const struct SfFloatMap *left,
                     const struct SfFloatMap *right,
                     const struct SfFloatMap *mono_left,
                     const struct SfFloatMap *mono_right,
                     const struct SfFloatMap *gt,
                     const struct SfFloatMap *occlusion,
                     const char *const *overrides,
                     size_t n_overrides,
                     struct SfFloatMap **disparity,
                     char **report_json);

/**
 * Scores `pred` against `gt`. Disparity mode reports bad-τ for each of the
 * `n_taus` thresholds and the average error over All/Noc/Occ; with `depth`
 * non-zero it reports AbsRel, RMSE and δ<1.05 instead.
 *
 * # Safety
 * `pred`, `gt` must be live handles, `occlusion` a handle or null; `taus`
 * must hold `n_taus` doubles; `report_json` must be writable.
 */
enum SfStatus sf_evaluate(const struct SfFloatMap *pred,
                          const struct SfFloatMap *gt,
                          const struct SfFloatMap *occlusion,
                          const double *taus,
                          size_t n_taus,
                          int32_t depth,
                          char **report_json);

/**
 * Joint scale/shift aligning the mono maps to the disparities under the
 * given confidences.
 *
 * # Safety
 * All map arguments must be live handles; `scale` and `shift` writable.
 */
enum SfStatus sf_solve_scale_shift(const struct SfFloatMap *mono_left,
                                   const struct SfFloatMap *mono_right,
                                   const struct SfFloatMap *disp_left,
                                   const struct SfFloatMap *disp_right,
                                   const struct SfFloatMap *conf_left,
                                   const struct SfFloatMap *conf_right,
                                   double *scale,
                                   double *shift);

/**
 * Releases a string returned by the library; null is ignored.
 *
 * # Safety
 * `s` must be null or a string from this library not yet freed.
 */
void sf_string_free(char *s);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* STEREOFUSE_H */
