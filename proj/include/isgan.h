/* C API for the isgan library: opaque handles, integer status codes, and a
 * thread-local error message. All functions return ISGAN_OK (0) on success. */
#ifndef ISGAN_H
#define ISGAN_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum isgan_status {
  ISGAN_OK = 0,
  ISGAN_ERR_IO = 1,          /* file read/write failure */
  ISGAN_ERR_NOT_FOUND = 2,   /* missing file or directory */
  ISGAN_ERR_FORMAT = 3,      /* unsupported or corrupt file format */
  ISGAN_ERR_ARGUMENT = 4,    /* invalid argument or configuration */
  ISGAN_ERR_DIMENSION = 5,   /* shape or size mismatch */
  ISGAN_ERR_DATASET = 6,     /* empty or insufficient dataset */
  ISGAN_ERR_NUMERIC = 7,     /* non-finite loss during training */
  ISGAN_ERR_CHECKPOINT = 8,  /* bad magic or version in a checkpoint */
  ISGAN_ERR_INTERNAL = 9
} isgan_status;

/* Message for the last failure on this thread; never NULL. */
const char* isgan_last_error(void);
const char* isgan_status_name(isgan_status status);

/* ------------------------------------------------------------------ */
/* Images (PNG; 8-bit gray or RGB, values held as [0,1] intensities)   */
/* ------------------------------------------------------------------ */

typedef struct isgan_image isgan_image;

isgan_status isgan_image_load(const char* path, isgan_image** out);
isgan_status isgan_image_save(const isgan_image* image, const char* path);
/* channels is 1 (gray) or 3 (RGB). */
isgan_status isgan_image_size(const isgan_image* image, int* width, int* height, int* channels);
void isgan_image_free(isgan_image* image);

/* ------------------------------------------------------------------ */
/* Models (checkpoints holding encoder/decoder/steganalyzer networks)  */
/* ------------------------------------------------------------------ */

typedef struct isgan_model isgan_model;

/* Freshly initialized networks; with_steganalyzer adds the adversary. */
isgan_status isgan_model_new(uint64_t seed, int with_steganalyzer, isgan_model** out);
isgan_status isgan_model_load(const char* path, isgan_model** out);
isgan_status isgan_model_save(const isgan_model* model, const char* path);
void isgan_model_free(isgan_model* model);

/* Embeds a gray secret into the Y channel of an RGB cover. Dimensions must
 * match; the stego image keeps the cover's chroma exactly. */
isgan_status isgan_hide(isgan_model* model, const isgan_image* cover, const isgan_image* secret,
                        isgan_image** stego_out);
isgan_status isgan_reveal(isgan_model* model, const isgan_image* stego, isgan_image** secret_out);
/* Cover/stego probabilities from the model's steganalyzer. */
isgan_status isgan_steganalyze(isgan_model* model, const isgan_image* image, double* p_cover,
                               double* p_stego);

/* ------------------------------------------------------------------ */
/* Training                                                            */
/* ------------------------------------------------------------------ */

typedef struct isgan_train_config isgan_train_config;

isgan_status isgan_train_config_new(isgan_train_config** out);
/* Keys: epochs, batch_size, lr, lr_decay_start, lr_decay_factor,
 * lr_decay_interval, alpha, beta, gamma, adv_weight, weight_decay,
 * steganalyzer_lr, label_flip, mse_only, seed, image_size, split_fraction.
 * Unknown keys fail with ISGAN_ERR_ARGUMENT. */
isgan_status isgan_train_config_set(isgan_train_config* config, const char* key, double value);
void isgan_train_config_free(isgan_train_config* config);

/* Scans data_dir for PNGs, trains on the train split (adversarially when
 * adversarial != 0), writes the checkpoint to checkpoint_out and, when
 * history_csv_out is non-NULL, the per-epoch history CSV. */
isgan_status isgan_train(const char* data_dir, const isgan_train_config* config, int adversarial,
                         const char* checkpoint_out, const char* history_csv_out);

/* Hide/reveal quality over the validation split of data_dir; writes the
 * report as CSV and/or JSON (either path may be NULL). */
isgan_status isgan_evaluate(const char* data_dir, const isgan_train_config* config, const char* checkpoint,
                            const char* csv_out, const char* json_out);

/* Finite-difference verification of every layer kind. Writes a one-line-per-
 * check report into buf (truncating if needed) and the worst relative error
 * into max_rel_error (either may be NULL). Fails with ISGAN_ERR_NUMERIC if
 * any check exceeds its tolerance. */
isgan_status isgan_grad_check(char* buf, size_t buf_len, double* max_rel_error);

#ifdef __cplusplus
}
#endif

#endif /* ISGAN_H */
