/* SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface of the rlforge engine. All objects are opaque handles owned by
 * the caller and released with the matching *_free function. Every fallible
 * call returns an rlf_status; on failure rlf_last_error() describes the
 * problem and, for RLF_ERR_CONFIG, rlf_last_error_key() names the offending
 * setting. Error state is per thread.
 */
#ifndef RLFORGE_H
#define RLFORGE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define RLF_API __declspec(dllexport)
#else
#define RLF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rlf_status {
  RLF_OK = 0,
  RLF_ERR_CONFIG = 1,   /* invalid or inconsistent configuration */
  RLF_ERR_RUNTIME = 2,  /* divergence, I/O failure, missing or corrupt artifact */
  RLF_ERR_ARGUMENT = 3  /* null handle, bad buffer, unknown name */
} rlf_status;

typedef struct rlf_config rlf_config;
typedef struct rlf_world rlf_world;
typedef struct rlf_policy rlf_policy;
typedef struct rlf_pipeline_report rlf_pipeline_report;

/* Called after every optimizer step; eval_json is NULL between evals. */
typedef void (*rlf_progress_fn)(const char* step_json, const char* eval_json, void* user);

RLF_API const char* rlf_version(void);
RLF_API const char* rlf_last_error(void);
RLF_API const char* rlf_last_error_key(void);

/* ---- configuration ---------------------------------------------------- */

RLF_API rlf_status rlf_config_default(rlf_config** out);
RLF_API rlf_status rlf_config_load(const char* path, rlf_config** out);
RLF_API rlf_status rlf_config_parse(const char* text, rlf_config** out);
/* Applies one dotted setting ("train.lr" = "5e-4", "data" = "D0:0.5,D3:0.5")
 * and re-validates; the config is unchanged on failure. */
RLF_API rlf_status rlf_config_set(rlf_config* c, const char* key, const char* value);
RLF_API rlf_status rlf_config_clone(const rlf_config* c, rlf_config** out);
/* Copies a NUL-terminated string into buf; *needed gets the full size
 * including the terminator. A NULL or short buffer yields RLF_ERR_ARGUMENT
 * with *needed set. */
RLF_API rlf_status rlf_config_hash(const rlf_config* c, char* buf, size_t len, size_t* needed);
/* Current value of one dotted setting, rendered as text. */
RLF_API rlf_status rlf_config_get(const rlf_config* c, const char* key, char* buf, size_t len, size_t* needed);
RLF_API rlf_status rlf_config_json(const rlf_config* c, char* buf, size_t len, size_t* needed);
RLF_API void rlf_config_free(rlf_config* c);

/* ---- world and data --------------------------------------------------- */

RLF_API rlf_status rlf_world_create(const rlf_config* c, rlf_world** out);
RLF_API void rlf_world_free(rlf_world* w);
/* Writes a JSON-lines dataset (header line + one sample per line). */
RLF_API rlf_status rlf_gen_data(const rlf_world* w, const char* task, const char* subset, size_t n, uint64_t seed,
                                const char* out_path);

/* ---- models ----------------------------------------------------------- */

/* Supervised baseline for the configured task; writes a policy checkpoint. */
RLF_API rlf_status rlf_pretrain_policy(const rlf_config* c, const char* out_ckpt);
/* Frozen TTS reward model; writes a reward_model checkpoint. */
RLF_API rlf_status rlf_pretrain_reward(const rlf_config* c, const char* out_ckpt, double* accuracy);

RLF_API rlf_status rlf_policy_load(const char* ckpt, rlf_policy** out);
RLF_API void rlf_policy_free(rlf_policy* p);
/* Greedy decode; out receives at most cap tokens, *len the full length. */
RLF_API rlf_status rlf_policy_decode(const rlf_policy* p, const int32_t* condition, size_t n, size_t t_max,
                                     int32_t* out, size_t cap, size_t* len);

/* ---- runs ------------------------------------------------------------- */

/* Full RL run. Optional baseline / reward-model checkpoints may be NULL (they
 * are then pretrained). Artifacts go to <root>/<config-hash>-s<seed>/, whose
 * path is copied into dir_buf. */
RLF_API rlf_status rlf_train(const rlf_config* c, const char* root, const char* baseline_ckpt, const char* rm_ckpt,
                             rlf_progress_fn progress, void* user, char* dir_buf, size_t dir_len);
/* Evaluates a policy checkpoint on the config's held-out test set and writes
 * a JSON summary plus per-utterance JSON-lines next to it. */
RLF_API rlf_status rlf_eval(const rlf_config* c, const char* policy_ckpt, const char* rm_ckpt, const char* out_json);
/* Scores JSON-lines {"ref":[..],"hyp":[..],"keywords":[..]} pairs with the
 * configured ASR rules into a CSV with a trailing corpus row. */
RLF_API rlf_status rlf_score(const rlf_config* c, const char* in_jsonl, const char* out_csv);
/* Renders an ablation table (table.txt) and curve CSVs for completed runs. */
RLF_API rlf_status rlf_render_report(const char* const* run_dirs, size_t n, const char* out_dir);

/* ---- pipeline timing -------------------------------------------------- */

RLF_API rlf_status rlf_pipeline_preset(const char* name, rlf_pipeline_report** out);
RLF_API rlf_status rlf_pipeline_load(const char* stage_file, rlf_pipeline_report** out);
RLF_API double rlf_pipeline_total(const rlf_pipeline_report* r);
RLF_API double rlf_pipeline_rtf(const rlf_pipeline_report* r);
RLF_API int rlf_pipeline_exclusive(const rlf_pipeline_report* r);
/* Writes report.json and breakdown.csv into out_dir. */
RLF_API rlf_status rlf_pipeline_write(const rlf_pipeline_report* r, const char* out_dir);
/* Re-simulates the report's stages for each value and writes a CSV. */
RLF_API rlf_status rlf_pipeline_sweep(const rlf_pipeline_report* r, const char* parameter, const double* values,
                                      size_t n, const char* out_csv);
RLF_API void rlf_pipeline_free(rlf_pipeline_report* r);

#ifdef __cplusplus
}
#endif

#endif /* RLFORGE_H */
