/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef SPOTERKIT_H
#define SPOTERKIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Zero is success.
typedef enum SpoterkitStatus {
  SPOTERKIT_STATUS_OK = 0,
  SPOTERKIT_STATUS_NULL_ARGUMENT = 1,
  SPOTERKIT_STATUS_INVALID_UTF8 = 2,
  SPOTERKIT_STATUS_IO = 3,
  SPOTERKIT_STATUS_CHECKPOINT = 4,
  // Malformed landmark document or frame data.
  SPOTERKIT_STATUS_LANDMARKS = 5,
  // `k` is zero or larger than the number of classes.
  SPOTERKIT_STATUS_INVALID_K = 6,
  // Every frame has zero detected landmarks.
  SPOTERKIT_STATUS_NO_DETECTIONS = 7,
  SPOTERKIT_STATUS_INTERNAL = 8,
} SpoterkitStatus;

// A loaded checkpoint ready for inference.
typedef struct SpoterkitClassifier SpoterkitClassifier;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Loads a checkpoint file. On success `*out` receives a new handle.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum SpoterkitStatus spoterkit_classifier_open(const char *path, struct SpoterkitClassifier **out);

// Releases a handle. Null is ignored.
//
// # Safety
// `classifier` must come from [`spoterkit_classifier_open`] and not be used
// afterwards.
void spoterkit_classifier_free(struct SpoterkitClassifier *classifier);

// Number of glosses the classifier distinguishes, or 0 for a null handle.
//
// # Safety
// `classifier` must be null or a live handle.
size_t spoterkit_classifier_num_classes(const struct SpoterkitClassifier *classifier);

// Gloss for a class index, or null when out of range. The string lives as
// long as the handle.
//
// # Safety
// `classifier` must be null or a live handle.
const char *spoterkit_classifier_gloss(const struct SpoterkitClassifier *classifier,
                                       size_t class_index);

// Content hash identifying the loaded weights. Lives as long as the handle.
//
// # Safety
// `classifier` must be null or a live handle.
const char *spoterkit_classifier_model_id(const struct SpoterkitClassifier *classifier);

// Top-`k` prediction for a landmark document (structured JSON or tabular
// text). Writes `k` class indices and probabilities, most likely first.
//
// # Safety
// `document` must be NUL-terminated; both output arrays must hold `k`
// elements.
enum SpoterkitStatus spoterkit_predict_document(const struct SpoterkitClassifier *classifier,
                                                const char *document,
                                                size_t k,
                                                size_t *out_classes,
                                                double *out_probabilities);

// Like [`spoterkit_predict_document`], reading the document from a file.
//
// # Safety
// See [`spoterkit_predict_document`]; `path` must be NUL-terminated.
enum SpoterkitStatus spoterkit_predict_file(const struct SpoterkitClassifier *classifier,
                                            const char *path,
                                            size_t k,
                                            size_t *out_classes,
                                            double *out_probabilities);

// Top-`k` prediction from raw canonical frames: `coords` holds
// `frames * 108` values (x, y per slot) and `present` holds `frames * 54`
// flags (non-zero = detected). Coordinates of absent slots are ignored.
//
// # Safety
// Array lengths must match `frames`; both output arrays must hold `k`
// elements.
enum SpoterkitStatus spoterkit_predict_frames(const struct SpoterkitClassifier *classifier,
                                              const double *coords,
                                              const uint8_t *present,
                                              size_t frames,
                                              double fps,
                                              size_t k,
                                              size_t *out_classes,
                                              double *out_probabilities);

// Message for the last failure on this thread; empty if none. Valid until
// the next failing call on the same thread.
const char *spoterkit_last_error(void);

// Library version, static.
const char *spoterkit_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPOTERKIT_H */
