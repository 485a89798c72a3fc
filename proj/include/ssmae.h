/* C interface to the ssmae library. Every call returns an ssmae_status;
 * on failure ssmae_last_error() holds the message for the calling thread. */
#ifndef SSMAE_H
#define SSMAE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SSMAE_API __declspec(dllexport)
#else
#define SSMAE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ssmae_status {
  SSMAE_OK = 0,
  SSMAE_ERR_DIMENSION = 1,
  SSMAE_ERR_PARAMETER = 2,
  SSMAE_ERR_CONTRACT = 3,
  SSMAE_ERR_INVALID_MASK = 4,
  SSMAE_ERR_LABEL = 5,
  SSMAE_ERR_ACCUMULATION = 6,
  SSMAE_ERR_DETERMINISM = 7,
  SSMAE_ERR_FORMAT = 8,
  SSMAE_ERR_IO = 9,
  SSMAE_ERR_SAMPLE = 10,
  SSMAE_ERR_DIVERGENCE = 11,
  SSMAE_ERR_METRIC = 12,
  SSMAE_ERR_CONFIG = 13,
  SSMAE_ERR_INTERNAL = 99
} ssmae_status;

typedef struct ssmae_config ssmae_config;

typedef struct ssmae_scores {
  double oa;
  double aa;
  double kappa;
} ssmae_scores;

/* Receives one text line per grad-check case. */
typedef void (*ssmae_line_fn)(const char* line, void* user);

SSMAE_API const char* ssmae_version(void);
SSMAE_API const char* ssmae_last_error(void);
SSMAE_API const char* ssmae_status_name(ssmae_status status);

/* Defaults, or a flat JSON file. *out must be released with ssmae_config_free. */
SSMAE_API ssmae_status ssmae_config_new(ssmae_config** out);
SSMAE_API ssmae_status ssmae_config_load(const char* path, ssmae_config** out);
/* Same keys as the JSON document, value in text form. */
SSMAE_API ssmae_status ssmae_config_set(ssmae_config* cfg, const char* key, const char* value);
SSMAE_API ssmae_status ssmae_config_validate(const ssmae_config* cfg);
/* Copies at most cap-1 bytes plus NUL; *needed gets the full length + 1. */
SSMAE_API ssmae_status ssmae_config_to_json(const ssmae_config* cfg, char* buf, size_t cap, size_t* needed);
SSMAE_API void ssmae_config_free(ssmae_config* cfg);

/* Artifacts are written to the configured out_dir. */
SSMAE_API ssmae_status ssmae_gen_data(const ssmae_config* cfg);
SSMAE_API ssmae_status ssmae_pretrain(const ssmae_config* cfg);
/* from_pretrained may be NULL. */
SSMAE_API ssmae_status ssmae_train(const ssmae_config* cfg, const char* from_pretrained);
/* checkpoint NULL means <out_dir>/model.mst; scores may be NULL. */
SSMAE_API ssmae_status ssmae_eval(const ssmae_config* cfg, const char* checkpoint, ssmae_scores* scores);
SSMAE_API ssmae_status ssmae_mask_demo(const ssmae_config* cfg);
/* *failures gets the number of cases above tolerance. */
SSMAE_API ssmae_status ssmae_grad_check(uint64_t seed, ssmae_line_fn on_line, void* user, size_t* failures);

#ifdef __cplusplus
}
#endif

#endif
