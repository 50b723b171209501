/* Copyright 2026 The ULDP-FL Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface of the simulator. Every entry point takes a JSON request and
 * yields an opaque output holding named text artifacts (CSV, JSON, JSON
 * lines). The output is produced on failure too and then carries the error
 * message, so callers always release it with uldp_output_free. All entry
 * points are reentrant. */

#ifndef ULDP_ULDP_H_
#define ULDP_ULDP_H_

#include <stddef.h>

#if defined(_WIN32)
#define ULDP_API __declspec(dllexport)
#elif defined(__GNUC__)
#define ULDP_API __attribute__((visibility("default")))
#else
#define ULDP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values double as process exit codes for command-line front ends. */
typedef enum uldp_status {
  ULDP_OK = 0,
  ULDP_ERROR_INTERNAL = 1,
  /* Malformed request, unknown key or invalid value. */
  ULDP_ERROR_CONFIG = 2,
  /* The secure protocol's correctness conditions do not hold. */
  ULDP_ERROR_PRECONDITION = 3,
  ULDP_ERROR_NULL_ARGUMENT = 4
} uldp_status;

typedef struct uldp_output uldp_output;

ULDP_API const char* uldp_version(void);
ULDP_API const char* uldp_status_name(uldp_status status);

/* Experiment config (see README) -> metrics_<r>.csv, summary.csv,
 * config.json. */
ULDP_API uldp_status uldp_simulate(const char* config_json, uldp_output** out);

/* Experiment config -> weighting.csv: uniform vs count-proportional weights
 * on identical seeds and data. */
ULDP_API uldp_status uldp_compare_weighting(const char* config_json,
                                            uldp_output** out);

/* Experiment config -> config.json with every default filled in. */
ULDP_API uldp_status uldp_normalize_config(const char* config_json,
                                           uldp_output** out);

/* {"mechanism": "naive-avg" | "group" | "raw-curve", "sigma", "q", "steps",
 *  "k", "delta", "orders"?, "k_list"?} -> account.jsonl, plus
 * group_sweep.csv when k_list is given. */
ULDP_API uldp_status uldp_account(const char* request_json, uldp_output** out);

/* {"distribution": {...}, "num_records", "num_users", "num_silos", "seed",
 *  "features"?, "dataset"?} -> allocation.csv, histogram.json. */
ULDP_API uldp_status uldp_allocate(const char* request_json, uldp_output** out);

/* {"silos", "users", "dim", "rounds", "key_bits", "precision", "n_max",
 *  "records_per_pair", "seed"} -> timings.csv, correctness.json,
 * transcript.jsonl. */
ULDP_API uldp_status uldp_protocol_bench(const char* request_json,
                                         uldp_output** out);

/* {"sigma", "q", "steps", "delta", "k_list"} -> group_sweep.csv. */
ULDP_API uldp_status uldp_sweep_gdp(const char* request_json, uldp_output** out);

ULDP_API size_t uldp_output_count(const uldp_output* out);
ULDP_API const char* uldp_output_name(const uldp_output* out, size_t index);
/* NUL-terminated; `length` (optional) receives the byte count. */
ULDP_API const char* uldp_output_text(const uldp_output* out, size_t index,
                                      size_t* length);
/* Text of the artifact called `name`, or NULL. */
ULDP_API const char* uldp_output_find(const uldp_output* out, const char* name);
/* Empty string on success. */
ULDP_API const char* uldp_output_error(const uldp_output* out);
ULDP_API void uldp_output_free(uldp_output* out);

#ifdef __cplusplus
}  /* extern "C" */
#endif

#endif  /* ULDP_ULDP_H_ */
