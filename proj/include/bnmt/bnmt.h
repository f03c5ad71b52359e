/* Copyright 2026 The bnmt Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

/* C interface to the bnmt translation toolkit.
 *
 * All objects are opaque handles released with their *_free function.
 * Functions return BNMT_OK or an error status; the message for the most
 * recent failure on the calling thread is available from bnmt_last_error().
 * Strings returned through char** outputs are owned by the caller and must
 * be released with bnmt_free().
 */

#ifndef BNMT_BNMT_H_
#define BNMT_BNMT_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(BNMT_BUILDING_LIBRARY)
#define BNMT_API __declspec(dllexport)
#else
#define BNMT_API __declspec(dllimport)
#endif
#else
#define BNMT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bnmt_status {
  BNMT_OK = 0,
  BNMT_ERR_USAGE = 1,
  BNMT_ERR_CONFIG = 2,
  BNMT_ERR_VARIANT = 3,
  BNMT_ERR_INCOMPATIBLE = 4,
  BNMT_ERR_INPUT = 5,
  BNMT_ERR_ALIGNMENT = 6,
  BNMT_ERR_LOOKUP = 7,
  BNMT_ERR_FORMAT = 8,
  BNMT_ERR_VERSION = 9,
  BNMT_ERR_TRUNCATED = 10,
  BNMT_ERR_SHAPE = 11,
  BNMT_ERR_IO = 12,
  BNMT_ERR_DIMENSION = 13,
  BNMT_ERR_DEGENERATE_MASK = 14,
  BNMT_ERR_NUMERIC = 15,
  BNMT_ERR_INTERNAL = 16
} bnmt_status;

BNMT_API const char* bnmt_version(void);
BNMT_API const char* bnmt_status_name(bnmt_status status);
/* Process exit code: 0 ok, 1 usage/config, 2 data, 3 numeric. */
BNMT_API int bnmt_exit_code(bnmt_status status);
BNMT_API const char* bnmt_last_error(void);
BNMT_API void bnmt_free(char* str);

/* --- run configuration ----------------------------------------------- */

typedef struct bnmt_config bnmt_config;

BNMT_API bnmt_status bnmt_config_new(bnmt_config** out);
BNMT_API bnmt_status bnmt_config_load(const char* path, bnmt_config** out);
BNMT_API void bnmt_config_free(bnmt_config* config);
BNMT_API bnmt_status bnmt_config_set(bnmt_config* config, const char* key,
                                     const char* value);
BNMT_API bnmt_status bnmt_config_get(const bnmt_config* config,
                                     const char* key, char** out);
/* Resolved "key=value" text, every key in declaration order. */
BNMT_API bnmt_status bnmt_config_text(const bnmt_config* config, char** out);
/* One "key<TAB>default<TAB>help" line per known key. */
BNMT_API bnmt_status bnmt_config_keys(char** out);

/* --- models ---------------------------------------------------------- */

typedef struct bnmt_model bnmt_model;

BNMT_API bnmt_status bnmt_model_load(const char* checkpoint, bnmt_model** out);
BNMT_API void bnmt_model_free(bnmt_model* model);
/* JSON object: variant, dimensions, vocabulary sizes, parameter count,
 * epoch and step. */
BNMT_API bnmt_status bnmt_model_info(const bnmt_model* model, char** out);
/* Beam search on one whitespace-tokenised sentence. */
BNMT_API bnmt_status bnmt_model_translate(const bnmt_model* model,
                                          const char* sentence,
                                          size_t beam_size, char** out);

/* variant: "baseline", "source-bridge", "target-bridge", "direct-bridge". */
BNMT_API bnmt_status bnmt_count_params(const char* variant, size_t embed_dim,
                                       size_t hidden_dim, size_t src_vocab,
                                       size_t tgt_vocab, uint64_t* out);

/* --- commands -------------------------------------------------------- */

typedef struct bnmt_toy_spec {
  size_t vocab_size;
  size_t n_pairs;
  size_t min_len;
  size_t max_len;
  double swap_prob;
  uint64_t seed;
  const char* swap_mode; /* "lexical" or "random" */
} bnmt_toy_spec;

BNMT_API void bnmt_toy_spec_default(bnmt_toy_spec* spec);
BNMT_API bnmt_status bnmt_toygen(const bnmt_toy_spec* spec, const char* out_dir);

/* summary: JSON object with epochs, steps, best_epoch, best_bleu,
 * train_pairs, dev_pairs, copied, fresh. May be NULL. */
BNMT_API bnmt_status bnmt_train(const bnmt_config* config, const char* out_dir,
                                char** summary);

typedef struct bnmt_translate_options {
  const char* checkpoint;
  const char* input;
  const char* output;
  const char* attention_out; /* NULL or "" for no dump */
  size_t beam_size;
  size_t max_out_len; /* 0: 2 * source length + 5 */
  int length_norm;
  size_t threads;
} bnmt_translate_options;

BNMT_API void bnmt_translate_options_default(bnmt_translate_options* options);
BNMT_API bnmt_status bnmt_translate(const bnmt_translate_options* options,
                                    size_t* lines, size_t* unk_tokens);

typedef struct bnmt_align_options {
  const char* checkpoint;
  const char* src;
  const char* ref;
  const char* output;
  const char* pharaoh_out; /* NULL or "" for none */
  size_t threads;
} bnmt_align_options;

BNMT_API bnmt_status bnmt_align(const bnmt_align_options* options,
                                size_t* lines);

/* Metric inputs as parallel key/value arrays. Keys: hyp, ref (repeatable),
 * src, attention, alignment, gold, src-pos, tgt-pos, tag-merge, tags,
 * checkpoint, words, top-frequent, k, edges, smooth, case-sensitive,
 * display-top. List values are comma separated. report receives the JSON
 * line, table the human-readable form; either may be NULL. */
BNMT_API bnmt_status bnmt_analyze(const char* metric, const char* const* keys,
                                  const char* const* values, size_t n,
                                  char** report, char** table);

typedef struct bnmt_gradcheck_options {
  size_t embed_dim;
  size_t hidden_dim;
  size_t vocab_size;
  size_t length;
  size_t batch;
  double dropout_rate;
  double step;
  double tolerance;
  uint64_t seed;
  int primitives;
  const char* variants;     /* comma separated; NULL or "" for all four */
  const char* inject_fault; /* op name whose adjoint is sign-flipped, or NULL */
} bnmt_gradcheck_options;

BNMT_API void bnmt_gradcheck_options_default(bnmt_gradcheck_options* options);
/* passed receives 1 when every check is within tolerance. */
BNMT_API bnmt_status bnmt_gradcheck(const bnmt_gradcheck_options* options,
                                    int* passed, char** report);

#ifdef __cplusplus
}
#endif

#endif /* BNMT_BNMT_H_ */
