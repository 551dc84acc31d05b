#ifndef PLAUSRANK_H
#define PLAUSRANK_H

/* Generated by cbindgen from the plausrank-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call in this interface.
 */
typedef enum {
  /**
   * Success; out-parameters hold valid values.
   */
  PR_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  PR_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  PR_STATUS_UTF8 = 2,
  /**
   * Arguments were well-formed but unusable (unknown connector, empty text).
   */
  PR_STATUS_INVALID_ARGUMENT = 3,
  /**
   * The corpus directory could not be read or parsed.
   */
  PR_STATUS_CORPUS_ERROR = 4,
  /**
   * The checkpoint could not be loaded, or scoring failed.
   */
  PR_STATUS_MODEL_ERROR = 5,
  /**
   * An internal panic was caught at the boundary.
   */
  PR_STATUS_PANIC = 6,
} PrStatus;

/**
 * Relation label produced by the scorer.
 */
typedef enum {
  PR_LABEL_SUPPORT = 0,
  PR_LABEL_ATTACK = 1,
} PrLabel;

/**
 * A loaded corpus directory. Opaque; create with `pr_corpus_load`, release
 * with `pr_corpus_free`.
 */
typedef struct PrCorpus PrCorpus;

/**
 * A loaded checkpoint plus its deterministic embedder. Opaque; create with
 * `pr_scorer_open`, release with `pr_scorer_free`.
 */
typedef struct PrScorer PrScorer;

/**
 * One classification outcome: the label and both reading scores.
 */
typedef struct {
  PrLabel label;
  double score_support;
  double score_attack;
} PrClassification;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent non-OK status on this thread. Never null;
 * empty before any failure. The pointer is invalidated by the next failing
 * call on the same thread.
 */
const char *pr_last_error_message(void);

/**
 * Crate version as a static nul-terminated string.
 */
const char *pr_version(void);

/**
 * Load every document of a brat-style corpus directory.
 *
 * On success writes a handle to `out_corpus`; the caller owns it and must
 * release it with `pr_corpus_free`.
 */
PrStatus pr_corpus_load(const char *dir, PrCorpus **out_corpus);

/**
 * Number of documents in the corpus.
 */
PrStatus pr_corpus_document_count(const PrCorpus *corpus, uint64_t *out_count);

/**
 * Total number of argumentative relations across all documents.
 */
PrStatus pr_corpus_relation_count(const PrCorpus *corpus, uint64_t *out_count);

/**
 * Release a corpus handle. Passing null is a no-op.
 */
void pr_corpus_free(PrCorpus *corpus);

/**
 * Open a scorer from a checkpoint directory (`manifest.json` + `params.bin`,
 * as written by the pipeline's train step).
 *
 * Texts are embedded with the built-in deterministic hash embedder at
 * `embedder_seed`, sized to the checkpoint's input width; use the same seed
 * the checkpoint was trained with. On success writes a handle to
 * `out_scorer`; release it with `pr_scorer_free`.
 */
PrStatus pr_scorer_open(const char *checkpoint_dir, uint64_t embedder_seed, PrScorer **out_scorer);

/**
 * Classify the relation from `source` to `target` using one connector pair
 * (by abbreviation, e.g. "M/H"): reconstruct both readings, score each, and
 * pick the better-scoring label.
 */
PrStatus pr_scorer_classify(const PrScorer *scorer,
                            const char *connector_abbrev,
                            const char *target,
                            const char *source,
                            PrClassification *out);

/**
 * Release a scorer handle. Passing null is a no-op.
 */
void pr_scorer_free(PrScorer *scorer);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PLAUSRANK_H */
