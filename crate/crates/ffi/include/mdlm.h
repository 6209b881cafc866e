#ifndef MDLM_H
#define MDLM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MdlmStatus {
  MDLM_STATUS_OK = 0,
  MDLM_STATUS_NULL_POINTER = 1,
  MDLM_STATUS_INVALID_UTF8 = 2,
  MDLM_STATUS_CONFIG = 3,
  MDLM_STATUS_PARSE = 4,
  MDLM_STATUS_ALIGNMENT = 5,
  MDLM_STATUS_CONTRACT = 6,
  MDLM_STATUS_NUMERICAL = 7,
  MDLM_STATUS_CHECKPOINT = 8,
  MDLM_STATUS_IO = 9,
  MDLM_STATUS_BUFFER_TOO_SMALL = 10,
  MDLM_STATUS_PANIC = 11,
} MdlmStatus;

// Trained (or freshly initialized) model with its vocabulary and decoding
// settings.
typedef struct MdlmModel MdlmModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failure on this thread; empty after success.
// The pointer stays valid until the next library call on this thread.
const char *mdlm_last_error(void);

// Library version as a static NUL-terminated string.
const char *mdlm_version(void);

// Loads a checkpoint. `run_config_json` may be null for defaults; it
// supplies the vocabulary and decoding settings.
//
// # Safety
// `path` and a non-null `run_config_json` must be NUL-terminated strings;
// `out` must be writable.
enum MdlmStatus mdlm_model_load(const char *path,
                                const char *run_config_json,
                                struct MdlmModel **out);

// Creates an untrained model from a run configuration (null for defaults).
//
// # Safety
// A non-null `run_config_json` must be NUL-terminated; `out` must be writable.
enum MdlmStatus mdlm_model_init(const char *run_config_json, struct MdlmModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from this library and not be used afterwards.
void mdlm_model_free(struct MdlmModel *model);

// Number of scalar parameters.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum MdlmStatus mdlm_model_param_count(const struct MdlmModel *model, size_t *out);

// Generates a report for a condition given as JSON (the dataset's
// `condition` object). The text is written to `out_text`; pass counts to
// the optional `out_forward_passes` and `out_revisions`.
//
// # Safety
// `model` must be live, `condition_json` NUL-terminated, `out_text`
// writable; the two counters may be null.
enum MdlmStatus mdlm_decode(const struct MdlmModel *model,
                            const char *condition_json,
                            char **out_text,
                            size_t *out_forward_passes,
                            size_t *out_revisions);

// Rewriting trigger steps for a schedule. Writes at most `capacity`
// entries to `buffer` and the full count to `out_len`; returns
// `BUFFER_TOO_SMALL` when the buffer cannot hold them all.
//
// # Safety
// `buffer` must hold `capacity` elements (may be null when 0); `out_len`
// must be writable.
enum MdlmStatus mdlm_trigger_steps(size_t steps,
                                   size_t period,
                                   double window_lo,
                                   double window_hi,
                                   size_t *buffer,
                                   size_t capacity,
                                   size_t *out_len);

// Masking exponent and loss weight for an anchor level (-1 non-anchor,
// 0 anatomy, 1 finding, 2 modifier).
//
// # Safety
// `out_phi` and `out_weight` must be writable.
enum MdlmStatus mdlm_token_annotation(int32_t level,
                                      double beta,
                                      double gamma,
                                      double lambda,
                                      double *out_phi,
                                      double *out_weight);

// Extracts slot findings from report text, returned as condition JSON.
//
// # Safety
// `report` must be NUL-terminated and `out_json` writable.
enum MdlmStatus mdlm_extract_findings(const char *report, char **out_json);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void mdlm_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MDLM_H */
