#ifndef BEVMOTION_H
#define BEVMOTION_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result of every fallible call.
typedef enum BmStatus {
  BM_STATUS_OK = 0,
  // A required pointer argument was null.
  BM_STATUS_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  BM_STATUS_INVALID_UTF8 = 2,
  BM_STATUS_INVALID_ARGUMENT = 3,
  BM_STATUS_DOMAIN = 4,
  BM_STATUS_CONFIG = 5,
  BM_STATUS_INPUT = 6,
  BM_STATUS_FORMAT = 7,
  BM_STATUS_PARSE = 8,
  BM_STATUS_IO = 9,
  BM_STATUS_DIVERGED = 10,
  // The library panicked; the handle arguments should not be reused.
  BM_STATUS_PANIC = 11,
} BmStatus;

// A rasterized occupancy grid.
typedef struct BmGrid BmGrid;

// A trained model.
typedef struct BmModel BmModel;

// A scenario with its lidar sweeps.
typedef struct BmScene BmScene;

// Oriented box: center, extent along and across the heading, heading in radians.
typedef struct BmBox {
  double cx;
  double cy;
  double length;
  double width;
  double heading;
} BmBox;

typedef struct BmWaypoint {
  double cx;
  double cy;
  double heading;
} BmWaypoint;

// Loss value and its derivatives with respect to the error and the scale.
typedef struct BmScaleLoss {
  double value;
  double d_error;
  double d_scale;
} BmScaleLoss;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null when the last
// call succeeded. Valid until the next library call on the same thread.
const char *bm_last_error(void);

// Library version as a static NUL-terminated string.
const char *bm_version(void);

// Releases a string returned by the library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void bm_string_free(char *s);

// Intersection over union of two oriented boxes.
//
// # Safety
// Pointers must be null or valid for the access.
enum BmStatus bm_rotated_iou(const struct BmBox *a, const struct BmBox *b, double *out);

// Along-track and cross-track error of `predicted` in the frame of `truth`.
//
// # Safety
// Pointers must be null or valid for the access.
enum BmStatus bm_decompose_at_ct(const struct BmWaypoint *predicted,
                                 const struct BmWaypoint *truth,
                                 double *out_at,
                                 double *out_ct);

// KL divergence from the Laplace label distribution with scale `b_gt` to the
// predicted one with scale `b_hat`, for a location error `e_hat`.
//
// # Safety
// `out` must be null or valid for writes.
enum BmStatus bm_laplace_kl(double e_hat, double b_hat, double b_gt, struct BmScaleLoss *out);

// Gaussian counterpart of [`bm_laplace_kl`] with standard deviations.
//
// # Safety
// `out` must be null or valid for writes.
enum BmStatus bm_gaussian_kl(double e_hat,
                             double sigma_hat,
                             double sigma_gt,
                             struct BmScaleLoss *out);

// Generates a scenario from a TOML spec (an empty string gives the defaults).
//
// # Safety
// `spec_toml` must be null or NUL-terminated; `out` null or valid for writes.
enum BmStatus bm_scene_generate(const char *spec_toml, struct BmScene **out);

// Loads a scn-1 scenario and its PTS1 sweeps.
//
// # Safety
// `path` must be null or NUL-terminated; `out` null or valid for writes.
enum BmStatus bm_scene_load(const char *path, struct BmScene **out);

// Number of frames in `scene`, or 0 for null.
//
// # Safety
// `scene` must be null or a live handle.
size_t bm_scene_num_frames(const struct BmScene *scene);

// Number of actors in `scene`, or 0 for null.
//
// # Safety
// `scene` must be null or a live handle.
size_t bm_scene_num_actors(const struct BmScene *scene);

// The frame predictions are made from, or 0 for null.
//
// # Safety
// `scene` must be null or a live handle.
size_t bm_scene_current_frame(const struct BmScene *scene);

// # Safety
// `scene` must be null or a live handle; it is invalid afterwards.
void bm_scene_free(struct BmScene *scene);

// Rasterizes the sweeps ending at `frame` into the sensor frame at `frame`.
// A null `grid_toml` selects the 150 m x 100 m x 3.2 m default grid.
//
// # Safety
// `scene` must be null or live; `grid_toml` null or NUL-terminated; `out`
// null or valid for writes.
enum BmStatus bm_grid_rasterize(const struct BmScene *scene,
                                const char *grid_toml,
                                size_t frame,
                                struct BmGrid **out);

// Writes the grid dimensions; any output pointer may be null.
//
// # Safety
// `grid` must be live; outputs null or valid for writes.
enum BmStatus bm_grid_shape(const struct BmGrid *grid,
                            size_t *rows,
                            size_t *cols,
                            size_t *channels);

// Reads one cell as 0 or 1.
//
// # Safety
// `grid` must be live; `out` null or valid for writes.
enum BmStatus bm_grid_get(const struct BmGrid *grid,
                          size_t row,
                          size_t col,
                          size_t channel,
                          uint8_t *out);

// Number of occupied cells, or 0 for null.
//
// # Safety
// `grid` must be null or live.
uint64_t bm_grid_count_occupied(const struct BmGrid *grid);

// Saves the grid as a BVG1 file.
//
// # Safety
// `grid` must be live; `path` NUL-terminated.
enum BmStatus bm_grid_write(const struct BmGrid *grid, const char *path);

// # Safety
// `grid` must be null or a live handle; it is invalid afterwards.
void bm_grid_free(struct BmGrid *grid);

// Loads a model JSON file.
//
// # Safety
// `path` must be NUL-terminated; `out` null or valid for writes.
enum BmStatus bm_model_load(const char *path, struct BmModel **out);

// # Safety
// `model` must be null or a live handle; it is invalid afterwards.
void bm_model_free(struct BmModel *model);

// Evaluates `model` (or the ground-truth oracle when null) on `scenes` and
// returns the report CSV in `out_csv`, to be freed with [`bm_string_free`].
// A null `eval_toml` selects the default evaluation settings.
//
// # Safety
// `model` null or live; `scenes` an array of `num_scenes` live handles;
// `eval_toml` null or NUL-terminated; `out_csv` null or valid for writes.
enum BmStatus bm_evaluate(const struct BmModel *model,
                          const struct BmScene *const *scenes,
                          size_t num_scenes,
                          const char *eval_toml,
                          char **out_csv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BEVMOTION_H */
