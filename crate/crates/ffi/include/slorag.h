#ifndef SLORAG_H
#define SLORAG_H

/* Generated by cbindgen from crates/ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SloragStatus {
  SLORAG_STATUS_OK = 0,
  SLORAG_STATUS_NULL_ARGUMENT = 1,
  SLORAG_STATUS_INVALID_UTF8 = 2,
  SLORAG_STATUS_PARSE = 3,
  SLORAG_STATUS_SCHEMA = 4,
  SLORAG_STATUS_RANGE = 5,
  SLORAG_STATUS_DIMENSION = 6,
  SLORAG_STATUS_IO = 7,
  SLORAG_STATUS_BUFFER_TOO_SMALL = 8,
  SLORAG_STATUS_EMPTY_CORPUS = 9,
  SLORAG_STATUS_INVALID_ARGUMENT = 10,
  SLORAG_STATUS_INTERNAL = 99,
} SloragStatus;

/**
 * Parsed SQuAD corpus.
 */
typedef struct SloragCorpus SloragCorpus;

/**
 * Retriever index.
 */
typedef struct SloragIndex SloragIndex;

/**
 * Trained routing policy.
 */
typedef struct SloragPolicy SloragPolicy;

/**
 * Reward weights. Refusal sub-weights are symmetric (1.0) across the ABI.
 */
typedef struct SloragProfile {
  double w_acc;
  double w_cost;
  double w_hall;
  double w_ref;
  double cost_scale;
} SloragProfile;

/**
 * Outcome flags of one (question, action) execution.
 */
typedef struct SloragFlags {
  bool acc;
  uint64_t cost_tokens;
  bool hall;
  bool refusal;
  /**
   * +1 correct refusal, -1 incorrect refusal, 0 otherwise.
   */
  int8_t refusal_correct;
} SloragFlags;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *slorag_version(void);

/**
 * Message for the last failed call on this thread, or NULL. Valid until the
 * next slorag call on the same thread.
 */
const char *slorag_last_error_message(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library and not yet freed.
 */
void slorag_string_free(char *s);

/**
 * Normalizes an answer string (lowercase, no punctuation, no articles,
 * collapsed whitespace).
 *
 * # Safety
 * `text` must be a valid NUL-terminated string; `out` a valid pointer.
 */
enum SloragStatus slorag_normalize_text(const char *text, char **out);

/**
 * # Safety
 * `prediction` must be a valid string; `golds` an array of `num_golds` valid
 * strings (may be NULL when `num_golds` is 0); `out` a valid pointer.
 */
enum SloragStatus slorag_em_match(const char *prediction,
                                  const char *const *golds,
                                  size_t num_golds,
                                  bool *out);

/**
 * # Safety
 * `answer` must be a valid string; `out` a valid pointer.
 */
enum SloragStatus slorag_detect_refusal(const char *answer, bool *out);

/**
 * Parses SQuAD 2.0 JSON from memory.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` a valid pointer.
 */
enum SloragStatus slorag_corpus_from_json(const uint8_t *data,
                                          size_t len,
                                          struct SloragCorpus **out);

/**
 * Reads and parses a SQuAD 2.0 JSON file.
 *
 * # Safety
 * `path` must be a valid string; `out` a valid pointer.
 */
enum SloragStatus slorag_corpus_load(const char *path, struct SloragCorpus **out);

/**
 * # Safety
 * `corpus` must be a live handle.
 */
size_t slorag_corpus_num_paragraphs(const struct SloragCorpus *corpus);

/**
 * # Safety
 * `corpus` must be a live handle.
 */
size_t slorag_corpus_num_questions(const struct SloragCorpus *corpus);

/**
 * # Safety
 * `corpus` must be NULL or a handle not yet freed.
 */
void slorag_corpus_free(struct SloragCorpus *corpus);

/**
 * Builds a BM25 index over the corpus paragraphs.
 *
 * # Safety
 * `corpus` must be a live handle; `out` a valid pointer.
 */
enum SloragStatus slorag_index_build(const struct SloragCorpus *corpus, struct SloragIndex **out);

/**
 * Top-`k` retrieval. Writes up to `capacity` ids and scores (best first) and
 * the number written to `written`. Returns `BufferTooSmall` (with `written`
 * set to the required size) when `capacity` is insufficient.
 *
 * # Safety
 * `ids` and `scores` must have room for `capacity` elements (may be NULL when
 * `capacity` is 0); other pointers must be valid.
 */
enum SloragStatus slorag_index_retrieve(const struct SloragIndex *index,
                                        const char *query,
                                        size_t k,
                                        uint32_t *ids,
                                        double *scores,
                                        size_t capacity,
                                        size_t *written);

/**
 * # Safety
 * `index` must be a live handle.
 */
size_t slorag_index_num_docs(const struct SloragIndex *index);

/**
 * # Safety
 * `index` must be NULL or a handle not yet freed.
 */
void slorag_index_free(struct SloragIndex *index);

/**
 * State features of a question: `embed_dim` hashed-embedding entries followed
 * by five retrieval/length entries. `capacity` must be at least `embed_dim + 5`.
 *
 * # Safety
 * `out` must have room for `capacity` doubles; other pointers must be valid.
 */
enum SloragStatus slorag_extract_features(const struct SloragIndex *index,
                                          const char *question,
                                          size_t embed_dim,
                                          double *out,
                                          size_t capacity);

/**
 * Fills `out` with a built-in profile ("quality_first" or "cheap").
 *
 * # Safety
 * `name` must be a valid string; `out` a valid pointer.
 */
enum SloragStatus slorag_profile_builtin(const char *name, struct SloragProfile *out);

/**
 * Reward of one outcome under a profile.
 *
 * # Safety
 * All pointers must be valid.
 */
enum SloragStatus slorag_compute_reward(const struct SloragFlags *flags,
                                        const struct SloragProfile *profile,
                                        double *out);

/**
 * Parses a model from its JSON text.
 *
 * # Safety
 * `json` must be a valid string; `out` a valid pointer.
 */
enum SloragStatus slorag_policy_from_json(const char *json, struct SloragPolicy **out);

/**
 * Loads a model file written by `slorag train`.
 *
 * # Safety
 * `path` must be a valid string; `out` a valid pointer.
 */
enum SloragStatus slorag_policy_load(const char *path, struct SloragPolicy **out);

/**
 * # Safety
 * `policy` must be a live handle.
 */
size_t slorag_policy_feature_dim(const struct SloragPolicy *policy);

/**
 * Action probabilities; `probs` receives 5 doubles.
 *
 * # Safety
 * `features` must hold `len` doubles; `probs` room for 5.
 */
enum SloragStatus slorag_policy_probabilities(const struct SloragPolicy *policy,
                                              const double *features,
                                              size_t len,
                                              double *probs);

/**
 * Greedy action id (0..=4).
 *
 * # Safety
 * `features` must hold `len` doubles; `action` must be valid.
 */
enum SloragStatus slorag_policy_predict(const struct SloragPolicy *policy,
                                        const double *features,
                                        size_t len,
                                        uint8_t *action);

/**
 * # Safety
 * `policy` must be NULL or a handle not yet freed.
 */
void slorag_policy_free(struct SloragPolicy *policy);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLORAG_H */
