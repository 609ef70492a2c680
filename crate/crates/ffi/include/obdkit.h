#ifndef OBDKIT_H
#define OBDKIT_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum ObdStatus {
  OBD_STATUS_OK = 0,
  OBD_STATUS_NULL_POINTER = 1,
  OBD_STATUS_INVALID_ARGUMENT = 2,
  OBD_STATUS_NON_FINITE = 3,
  OBD_STATUS_DEGENERATE_QUAD = 4,
  OBD_STATUS_OUT_OF_RANGE = 5,
  OBD_STATUS_BUFFER_TOO_SMALL = 6,
  OBD_STATUS_PANIC = 99,
} ObdStatus;

// Suppression overlap measure.
typedef enum ObdSuppressionMode {
  OBD_SUPPRESSION_MODE_POLYGONAL = 0,
  OBD_SUPPRESSION_MODE_AXIS_ALIGNED = 1,
} ObdSuppressionMode;

// Opaque set of scored detections.
typedef struct ObdDetections ObdDetections;

// Opaque accumulator of per-image matching results.
typedef struct ObdEvaluator ObdEvaluator;

// Best point of a confidence sweep.
typedef struct ObdEvalResult {
  double recall;
  double precision;
  double hmean;
  double best_threshold;
  uint64_t matches;
  uint64_t detections;
  uint64_t gts;
} ObdEvalResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (nul-terminated,
// truncated to `len`). Returns the full message length without the nul, or
// 0 if the last call succeeded.
size_t obd_last_error_message(char *buf, size_t len);

// Sorted key edges and matching type id of a quad.
enum ObdStatus obd_encode(const double *coords,
                          double *xs_out,
                          double *ys_out,
                          uint8_t *matching_out);

// Rebuilds the quad for a matching type. Key edges need not be sorted.
enum ObdStatus obd_decode(const double *xs, const double *ys, uint8_t matching, double *coords_out);

enum ObdStatus obd_is_valid_matching(const double *xs,
                                     const double *ys,
                                     uint8_t matching,
                                     bool *valid_out);

// Exact polygon IoU of two simple quads.
enum ObdStatus obd_iou(const double *a, const double *b, double *iou_out);

enum ObdStatus obd_peak_mass(const double *scores, size_t len, double *mass_out);

// `scores` holds 8 vectors of `m` entries, row-major.
enum ObdStatus obd_s_obd(const double *scores, size_t m, double *s_out);

enum ObdStatus obd_fuse(double s_box, double s_obd, double gamma, double *fused_out);

struct ObdDetections *obd_detections_new(void);

void obd_detections_free(struct ObdDetections *dets);

size_t obd_detections_len(const struct ObdDetections *dets);

enum ObdStatus obd_detections_push(struct ObdDetections *dets, const double *coords, double score);

// Pushes a detection with its 8 key-edge score vectors of `m` entries.
enum ObdStatus obd_detections_push_with_scores(struct ObdDetections *dets,
                                               const double *coords,
                                               double s_box,
                                               const double *scores,
                                               size_t m);

// Fuses box and key-edge scores of every detection that has vectors.
enum ObdStatus obd_detections_rescore(struct ObdDetections *dets, double gamma);

// Ranking score (fused if rescored) of detection `index`.
enum ObdStatus obd_detections_score(const struct ObdDetections *dets,
                                    size_t index,
                                    double *score_out);

// Greedy suppression. Writes the kept input indices, best first, into
// `kept_out` (capacity `cap`) and their count into `n_kept`. With too
// small a buffer nothing is written except `n_kept`, and the call returns
// `OBD_STATUS_BUFFER_TOO_SMALL`.
enum ObdStatus obd_detections_suppress(const struct ObdDetections *dets,
                                       enum ObdSuppressionMode mode,
                                       double threshold,
                                       size_t *kept_out,
                                       size_t cap,
                                       size_t *n_kept);

// New evaluator; `ignore_by_detection_area` selects intersection over
// detection area instead of IoU for "do not care" regions.
struct ObdEvaluator *obd_evaluator_new(double iou_threshold, bool ignore_by_detection_area);

void obd_evaluator_free(struct ObdEvaluator *ev);

// Matches one image. `gt_coords` holds `n_gt` quads, `gt_ignore` one flag
// per ground truth (may be null: all cared for), `det_coords` and
// `det_scores` hold `n_det` detections.
enum ObdStatus obd_evaluator_add_image(struct ObdEvaluator *ev,
                                       const double *gt_coords,
                                       const bool *gt_ignore,
                                       size_t n_gt,
                                       const double *det_coords,
                                       const double *det_scores,
                                       size_t n_det);

// Best-Hmean point over all confidence cutoffs of the images added so far.
enum ObdStatus obd_evaluator_sweep(const struct ObdEvaluator *ev, struct ObdEvalResult *result_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OBDKIT_H */
