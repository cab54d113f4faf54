/* C interface to the SSNT transduction library. Every function returns a
 * status code; on failure ssnt_last_error() describes the problem for the
 * calling thread. Strings returned through char** are owned by the caller
 * and released with ssnt_string_free. */
#ifndef SSNT_SSNT_H
#define SSNT_SSNT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SSNT_API __declspec(dllexport)
#else
#define SSNT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ssnt_status {
  SSNT_OK = 0,
  SSNT_ERR_ARGUMENT = 1,
  SSNT_ERR_CONFIG = 2,
  SSNT_ERR_DATA = 3,
  SSNT_ERR_IO = 4,
  SSNT_ERR_LOAD = 5,
  SSNT_ERR_VOCAB_MISMATCH = 6,
  SSNT_ERR_NUMERIC = 7,
  SSNT_ERR_DIVERGED = 8,
  SSNT_ERR_INTERNAL = 9
} ssnt_status;

typedef enum ssnt_role { SSNT_ROLE_DIRECT = 0, SSNT_ROLE_CHANNEL = 1, SSNT_ROLE_LM = 2 } ssnt_role;

typedef struct ssnt_model ssnt_model;
typedef struct ssnt_decoder ssnt_decoder;

/* Receives progress messages; may be NULL. */
typedef void (*ssnt_log_fn)(const char* message, void* user);

SSNT_API const char* ssnt_version(void);
SSNT_API const char* ssnt_status_name(ssnt_status status);
SSNT_API const char* ssnt_last_error(void);
SSNT_API void ssnt_string_free(char* s);

/* Training. Overrides apply on top of the config file; NULL or empty
 * strings leave a key alone, a negative seed keeps the config's seed. */
typedef struct ssnt_train_overrides {
  const char* train_src;
  const char* train_tgt;
  const char* dev_src;
  const char* dev_tgt;
  int64_t seed;
} ssnt_train_overrides;

SSNT_API void ssnt_train_overrides_init(ssnt_train_overrides* o);
SSNT_API ssnt_status ssnt_train(ssnt_role role, const char* config_path,
                                const ssnt_train_overrides* overrides, const char* output_path,
                                ssnt_log_fn log, void* user);

/* Models. */
SSNT_API ssnt_status ssnt_model_load(const char* path, ssnt_model** out);
SSNT_API void ssnt_model_free(ssnt_model* model);
SSNT_API ssnt_status ssnt_model_role(const ssnt_model* model, ssnt_role* out);
SSNT_API ssnt_status ssnt_model_vocab_sizes(const ssnt_model* model, size_t* input_size,
                                            size_t* output_size);

/* Per-line log-probabilities, one per line of `out_path` (or stdout when
 * NULL): log q(y|x) for a direct model, log p(x|y) for a channel model,
 * log p(y) for an LM. src holds x and tgt holds y; the LM reads src. */
SSNT_API ssnt_status ssnt_score_file(const ssnt_model* model, const char* src_path,
                                     const char* tgt_path, const char* out_path);

/* Decoding. */
typedef struct ssnt_decode_options {
  double lambda[4];
  size_t k1;
  size_t k2;
  size_t jmax; /* 0: min(2|x| + 5, 64) */
  size_t workers;
} ssnt_decode_options;

SSNT_API void ssnt_decode_options_init(ssnt_decode_options* o);
/* channel and lm may be NULL, which zeroes their weights. The decoder
 * borrows the models; they must outlive it. */
SSNT_API ssnt_status ssnt_decoder_create(const ssnt_model* direct, const ssnt_model* channel,
                                         const ssnt_model* lm, const ssnt_decode_options* options,
                                         ssnt_decoder** out);
SSNT_API void ssnt_decoder_free(ssnt_decoder* decoder);
SSNT_API ssnt_status ssnt_decoder_set_lambda(ssnt_decoder* decoder, const double lambda[4]);
SSNT_API ssnt_status ssnt_decode_line(ssnt_decoder* decoder, const char* line, char** out);
/* One output line per input line; truncated receives the number of inputs
 * with no EOS-terminated hypothesis (may be NULL). */
SSNT_API ssnt_status ssnt_decode_file(ssnt_decoder* decoder, const char* input_path,
                                      const char* output_path, size_t* truncated);

/* Tries every lambda in grid_path (one "l1,l2,l3,l4" per line) on the dev
 * set and keeps the best under metric "exact" or "rougeL". The report lists
 * one "lambda<TAB>score" line per grid point. */
SSNT_API ssnt_status ssnt_grid_search(ssnt_decoder* decoder, const char* grid_path,
                                      const char* dev_src_path, const char* dev_ref_path,
                                      const char* metric, double best_lambda[4], char** report);

/* Scores predictions against references; returns the TSV report. metric is
 * one of exact, rouge1, rouge2, rougeL. */
SSNT_API ssnt_status ssnt_eval_files(const char* metric, const char* pred_path,
                                     const char* ref_path, char** report);

#ifdef __cplusplus
}
#endif

#endif
