#ifndef JOINTSPEECH_H
#define JOINTSPEECH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum JsStatus {
  JS_STATUS_OK = 0,
  JS_STATUS_NULL_ARGUMENT = 1,
  JS_STATUS_INVALID_INPUT = 2,
  JS_STATUS_INVALID_CONFIG = 3,
  JS_STATUS_FORMAT = 4,
  JS_STATUS_IO = 5,
  JS_STATUS_NUMERIC = 6,
  JS_STATUS_INFEASIBLE_ALIGNMENT = 7,
  JS_STATUS_INTERNAL = 8,
  JS_STATUS_PANIC = 9,
} JsStatus;

// A loaded or generated corpus.
typedef struct JsCorpus JsCorpus;

// A trained model with its normalisation statistics.
typedef struct JsModel JsModel;

typedef struct JsEvalResult {
  double enh_loss;
  double asr_loss;
  // Percent.
  double per;
  uint64_t skipped;
} JsEvalResult;

typedef struct JsEditCounts {
  size_t substitutions;
  size_t insertions;
  size_t deletions;
} JsEditCounts;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *js_last_error(void);

const char *js_version(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must be null or a pointer returned by this library, freed once.
void js_string_free(char *s);

// Generates a synthetic corpus from a JSON corpus config.
//
// # Safety
// `config_json` must be a NUL-terminated string; `out` must be writable.
enum JsStatus js_corpus_generate(const char *config_json, uint64_t seed, struct JsCorpus **out);

// # Safety
// `dir` must be a NUL-terminated path; `out` must be writable.
enum JsStatus js_corpus_load(const char *dir, struct JsCorpus **out);

// # Safety
// `corpus` must be a live handle; `dir` a NUL-terminated path.
enum JsStatus js_corpus_save(const struct JsCorpus *corpus, const char *dir);

// Number of utterances, or 0 for a null handle.
//
// # Safety
// `corpus` must be null or a live handle.
size_t js_corpus_len(const struct JsCorpus *corpus);

// # Safety
// `corpus` must be null or a handle from this library, freed once.
void js_corpus_free(struct JsCorpus *corpus);

// Loads a checkpoint given its path stem.
//
// # Safety
// `stem` must be a NUL-terminated path; `out` must be writable.
enum JsStatus js_model_load(const char *stem, struct JsModel **out);

// # Safety
// `model` must be a live handle; `stem` a NUL-terminated path.
enum JsStatus js_model_save(const struct JsModel *model, const char *stem);

// Number of trainable scalars, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t js_model_num_parameters(const struct JsModel *model);

// Mean losses and greedy-decoding PER of `model` on `corpus`.
//
// # Safety
// `model` and `corpus` must be live handles; `out` must be writable.
enum JsStatus js_model_evaluate(const struct JsModel *model,
                                const struct JsCorpus *corpus,
                                struct JsEvalResult *out);

// # Safety
// `model` must be null or a handle from this library, freed once.
void js_model_free(struct JsModel *model);

// Runs a full training experiment from a JSON experiment config. On
// success `report_json` receives a summary to release with
// [`js_string_free`].
//
// # Safety
// `config_json` must be a NUL-terminated string; `report_json` writable.
enum JsStatus js_train(const char *config_json, char **report_json);

// CTC loss of row-major `frames × classes` logits; the blank is the last
// class. `grad` may be null, otherwise it receives `frames × classes`
// values.
//
// # Safety
// Buffers must hold the stated number of elements.
enum JsStatus js_ctc_loss(const double *logits,
                          size_t frames,
                          size_t classes,
                          const size_t *labels,
                          size_t label_len,
                          double *loss,
                          double *grad);

// Adaptive weight `10^⌊log10 l_asr⌋ / 10^⌊log10 l_enh⌋`.
double js_lambda_adapt(double l_asr, double l_enh);

// Mean squared error between two buffers of `len` values.
//
// # Safety
// Both buffers must hold `len` elements.
enum JsStatus js_mse(const double *a, const double *b, size_t len, double *out);

// Minimum edit counts turning `reference` into `hypothesis`.
//
// # Safety
// Buffers must hold the stated number of elements; `out` writable.
enum JsStatus js_edit_distance(const uint32_t *reference,
                               size_t reference_len,
                               const uint32_t *hypothesis,
                               size_t hypothesis_len,
                               struct JsEditCounts *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JOINTSPEECH_H */
