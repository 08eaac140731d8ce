#ifndef ESDT_H
#define ESDT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EsdtStatus {
  ESDT_STATUS_OK = 0,
  ESDT_STATUS_NULL_POINTER = 1,
  ESDT_STATUS_INVALID_ARGUMENT = 2,
  ESDT_STATUS_SHAPE = 3,
  ESDT_STATUS_LAYOUT = 4,
  ESDT_STATUS_CONTRACT = 5,
  ESDT_STATUS_DECODE = 6,
  ESDT_STATUS_IO = 7,
  ESDT_STATUS_TRANSPORT = 8,
  ESDT_STATUS_PANIC = 9,
} EsdtStatus;

// Loaded checkpoint.
typedef struct EsdtCheckpoint EsdtCheckpoint;

// Rolling decision-transformer episode context.
typedef struct EsdtContext EsdtContext;

// One of the built-in environments.
typedef struct EsdtEnv EsdtEnv;

// Policy architecture.
typedef struct EsdtSpec EsdtSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *esdt_last_error_message(void);

enum EsdtStatus esdt_spec_feedforward(size_t obs_dim,
                                      const size_t *hidden,
                                      size_t n_hidden,
                                      size_t act_dim,
                                      struct EsdtSpec **out);

enum EsdtStatus esdt_spec_decision_transformer(size_t obs_dim,
                                               size_t act_dim,
                                               size_t embed_dim,
                                               size_t n_layers,
                                               size_t n_heads,
                                               size_t context_len,
                                               size_t ff_dim,
                                               size_t max_ep_len,
                                               struct EsdtSpec **out);

void esdt_spec_free(struct EsdtSpec *spec);

enum EsdtStatus esdt_spec_param_count(const struct EsdtSpec *spec, size_t *out);

// Writes a seeded initialization into `params`, which must hold exactly
// `esdt_spec_param_count` values.
enum EsdtStatus esdt_init_params(const struct EsdtSpec *spec,
                                 uint64_t seed,
                                 double *params,
                                 size_t len);

enum EsdtStatus esdt_context_new(double target_return,
                                 double scale,
                                 size_t capacity,
                                 struct EsdtContext **out);

void esdt_context_free(struct EsdtContext *ctx);

// Appends one step; the return-to-go drops by `reward / scale`.
enum EsdtStatus esdt_context_record_step(struct EsdtContext *ctx,
                                         const double *obs,
                                         size_t obs_len,
                                         const double *action,
                                         size_t act_len,
                                         double reward);

enum EsdtStatus esdt_context_current_rtg(const struct EsdtContext *ctx, double *out);

// Action of the policy for `obs`. `ctx` is required for decision
// transformers and ignored (may be null) for feedforward policies.
enum EsdtStatus esdt_policy_act(const struct EsdtSpec *spec,
                                const double *params,
                                size_t n_params,
                                const struct EsdtContext *ctx,
                                const double *obs,
                                size_t obs_len,
                                double *action,
                                size_t act_len);

// Creates an environment by name (`point_target` or `key_corridor`).
enum EsdtStatus esdt_env_new(const char *name, struct EsdtEnv **out);

void esdt_env_free(struct EsdtEnv *env);

size_t esdt_env_obs_dim(const struct EsdtEnv *env);

size_t esdt_env_act_dim(const struct EsdtEnv *env);

enum EsdtStatus esdt_env_reset(struct EsdtEnv *env, uint64_t seed, double *obs, size_t obs_len);

enum EsdtStatus esdt_env_step(struct EsdtEnv *env,
                              const double *action,
                              size_t act_len,
                              double *obs,
                              size_t obs_len,
                              double *reward,
                              bool *done);

enum EsdtStatus esdt_checkpoint_load(const char *path, struct EsdtCheckpoint **out);

void esdt_checkpoint_free(struct EsdtCheckpoint *ckpt);

// Number of parameters stored in the checkpoint.
size_t esdt_checkpoint_param_count(const struct EsdtCheckpoint *ckpt);

enum EsdtStatus esdt_checkpoint_params(const struct EsdtCheckpoint *ckpt,
                                       double *params,
                                       size_t len);

// New spec handle describing the checkpoint's architecture.
enum EsdtStatus esdt_checkpoint_spec(const struct EsdtCheckpoint *ckpt, struct EsdtSpec **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ESDT_H */
