#ifndef EVFUSION_H
#define EVFUSION_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum EvfStatus {
  EVF_STATUS_OK = 0,
  EVF_STATUS_NULL_POINTER = 1,
  EVF_STATUS_INVALID_ARGUMENT = 2,
  EVF_STATUS_CONFIG = 3,
  EVF_STATUS_PARSE = 4,
  EVF_STATUS_IO = 5,
  EVF_STATUS_OUT_OF_RANGE = 6,
  EVF_STATUS_NUMERICAL = 7,
  EVF_STATUS_EMPTY_EVENT_WINDOW = 8,
  EVF_STATUS_INTERNAL = 9,
  EVF_STATUS_PANIC = 10,
} EvfStatus;

/**
 * Interpolation kernel for region filling.
 */
typedef enum EvfKernel {
  EVF_KERNEL_INVERSE = 0,
  EVF_KERNEL_GAUSS = 1,
  EVF_KERNEL_EXPONENTIAL = 2,
} EvfKernel;

/**
 * Opaque camera model.
 */
typedef struct EvfCamera EvfCamera;

/**
 * Opaque segmentation result.
 */
typedef struct EvfLabelMap EvfLabelMap;

/**
 * Opaque dense range image.
 */
typedef struct EvfRangeImage EvfRangeImage;

typedef struct EvfFillConfig {
  double contour_fraction;
  double interior_fraction;
  uint32_t ring_width;
  enum EvfKernel kernel;
  double sigma;
} EvfFillConfig;

/**
 * Headline numbers of a pipeline run.
 */
typedef struct EvfMapSummary {
  size_t n1;
  size_t n2;
  size_t res;
  double beta;
  size_t filled_regions;
  size_t regions;
} EvfMapSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *evf_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *evf_version(void);

/**
 * Filling score of `n2` dense points grown from `n1` semi-dense points on
 * a `res`-pixel image.
 *
 * # Safety
 * `out_beta` must be valid for writes.
 */
enum EvfStatus evf_filling_score(size_t n1, size_t n2, size_t res, double *out_beta);

/**
 * Default fill parameters: 30 % contour, 5 % interior, 3 px ring,
 * inverse-distance kernel, sigma 5.
 */
struct EvfFillConfig evf_fill_config_default(void);

/**
 * Creates a camera with radial-tangential distortion `k1 k2 p1 p2 k3`.
 *
 * # Safety
 * `out` must be valid for writes. The handle is released with
 * [`evf_camera_free`].
 */
enum EvfStatus evf_camera_new(uint32_t width,
                              uint32_t height,
                              double fx,
                              double fy,
                              double cx,
                              double cy,
                              double k1,
                              double k2,
                              double p1,
                              double p2,
                              double k3,
                              struct EvfCamera **out);

/**
 * # Safety
 * `cam` must be null or a handle from [`evf_camera_new`] not yet freed.
 */
void evf_camera_free(struct EvfCamera *cam);

/**
 * Pinhole projection (distortion ignored) of a camera-frame point.
 * Fails with `EVF_STATUS_OUT_OF_RANGE` for points not in front of the
 * camera.
 *
 * # Safety
 * `cam` must be a live handle; `out_u` and `out_v` valid for writes.
 */
enum EvfStatus evf_camera_project(const struct EvfCamera *cam,
                                  double x,
                                  double y,
                                  double z,
                                  double *out_u,
                                  double *out_v);

/**
 * Camera-frame point at z-depth `depth` on the rectified ray through
 * pixel `(u, v)`. `out_xyz` receives three values.
 *
 * # Safety
 * `cam` must be a live handle; `out_xyz` valid for three writes.
 */
enum EvfStatus evf_camera_back_project(const struct EvfCamera *cam,
                                       double u,
                                       double v,
                                       double depth,
                                       double *out_xyz);

/**
 * Region-grows a row-major 8-bit image and drops regions smaller than
 * `min_region_size`. `connectivity` is 4 or 8.
 *
 * # Safety
 * `gray` must hold `width * height` bytes; `out` valid for writes. The
 * handle is released with [`evf_label_map_free`].
 */
enum EvfStatus evf_segment(const uint8_t *gray,
                           uint32_t width,
                           uint32_t height,
                           uint8_t threshold,
                           uint32_t connectivity,
                           uint32_t min_region_size,
                           struct EvfLabelMap **out);

/**
 * # Safety
 * `labels` must be null or a live handle.
 */
void evf_label_map_free(struct EvfLabelMap *labels);

/**
 * Number of kept regions; labels run from 1 to this value, 0 is invalid.
 *
 * # Safety
 * `labels` must be null or a live handle.
 */
size_t evf_label_map_num_regions(const struct EvfLabelMap *labels);

/**
 * Copies the row-major labels into `out`, which holds `len` entries.
 *
 * # Safety
 * `labels` must be a live handle; `out` valid for `len` writes.
 */
enum EvfStatus evf_label_map_copy(const struct EvfLabelMap *labels, uint32_t *out, size_t len);

/**
 * Fills the regions of `labels` from sparse depths. `depths` is row-major
 * with the label map's size; entries that are not finite and positive mark
 * pixels without a projected event.
 *
 * # Safety
 * `labels` must be a live handle, `depths` hold one value per pixel,
 * `cfg` be readable and `out` valid for writes. The handle is released
 * with [`evf_range_image_free`].
 */
enum EvfStatus evf_fuse(const struct EvfLabelMap *labels,
                        const float *depths,
                        const struct EvfFillConfig *cfg,
                        struct EvfRangeImage **out);

/**
 * # Safety
 * `ri` must be null or a live handle.
 */
void evf_range_image_free(struct EvfRangeImage *ri);

/**
 * Number of pixels with a depth, N2.
 *
 * # Safety
 * `ri` must be null or a live handle.
 */
size_t evf_range_image_count(const struct EvfRangeImage *ri);

/**
 * Copies depths (0 where empty) and provenance codes (0 empty, 1 event,
 * 2 fill) into caller buffers of `len` entries each. Either buffer may be
 * null to skip it.
 *
 * # Safety
 * `ri` must be a live handle; non-null buffers valid for `len` writes.
 */
enum EvfStatus evf_range_image_copy(const struct EvfRangeImage *ri,
                                    float *out_depths,
                                    uint8_t *out_provenance,
                                    size_t len);

/**
 * Runs the full pipeline from a config file, writing artifacts to
 * `out_dir` (or the config's `out` when null).
 *
 * # Safety
 * `config_path` must be a NUL-terminated path, `out_dir` null or
 * NUL-terminated, `out_summary` null or valid for writes.
 */
enum EvfStatus evf_run_pipeline(const char *config_path,
                                const char *out_dir,
                                struct EvfMapSummary *out_summary);

/**
 * Writes the default synthetic textured-plane dataset with the given
 * seed, plane depth (meters) and duration (seconds) to `out_dir`.
 *
 * # Safety
 * `out_dir` must be a NUL-terminated path.
 */
enum EvfStatus evf_run_synth(const char *out_dir, uint64_t seed, double depth, double duration);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EVFUSION_H */
