#ifndef TIERKV_H
#define TIERKV_H

#include <stddef.h>
#include <stdint.h>

#if defined(TIERKV_BUILDING_LIBRARY)
#define TKV_API __attribute__((visibility("default")))
#else
#define TKV_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Same numbering as the C++ error codes. */
typedef enum tkv_status {
  TKV_OK = 0,
  TKV_INVALID_ARGUMENT = 1,
  TKV_EMPTY_CONFIG_SET = 2,
  TKV_INVALID_CURVE = 3,
  TKV_NON_POSITIVE_INPUT = 4,
  TKV_EMPTY_TRACE = 5,
  TKV_CAPACITY_EXCEEDED = 6,
  TKV_DIRTY_OVERFLOW = 7,
  TKV_IO_FAILURE = 8,
  TKV_CHECKSUM_MISMATCH = 9,
  TKV_STORAGE_WRITE_FAILED = 10,
  TKV_STORAGE_READ_FAILED = 11,
  TKV_BACKPRESSURE = 12,
  TKV_CORRUPT_BLOB = 13,
  TKV_DICT_VERSION_MISMATCH = 14,
  TKV_CORPUS_FILE_UNREADABLE = 15,
  TKV_MALFORMED_LINE = 16,
  TKV_BAD_HEADER = 17,
  TKV_STORE_UNREACHABLE = 18,
  TKV_NEVER_MEETS_SLO = 19,
  TKV_CONFIG_ERROR = 20,
  TKV_BIND_FAILURE = 21,
  TKV_INTERNAL = 99
} tkv_status;

/* Name of a status ("ConfigError", ...). */
TKV_API const char* tkv_status_name(tkv_status status);
/* Message of the last failed call on this thread ("" if none). */
TKV_API const char* tkv_last_error(void);

/* Library-owned bytes; release with tkv_buffer_free. */
typedef struct tkv_buffer {
  char* data;
  size_t len;
} tkv_buffer;
TKV_API void tkv_buffer_free(tkv_buffer* buf);

/* ---- configuration ---- */

typedef struct tkv_config tkv_config;

/* path NULL gives all defaults. */
TKV_API tkv_status tkv_config_load(const char* path, tkv_config** out);
TKV_API tkv_status tkv_config_set(tkv_config* config, const char* key, const char* value);
/* Resolves and validates every key without building anything. */
TKV_API tkv_status tkv_config_validate(const tkv_config* config);
TKV_API void tkv_config_free(tkv_config* config);

/* ---- store: storage tier + cache + executor ---- */

typedef struct tkv_store tkv_store;

TKV_API tkv_status tkv_store_open(const tkv_config* config, tkv_store** out);
TKV_API void tkv_store_close(tkv_store* store);

TKV_API tkv_status tkv_store_set(tkv_store* store, const char* key, size_t key_len, const void* value,
                                 size_t value_len);
/* *found is 0 for an absent key; value is left empty then. */
TKV_API tkv_status tkv_store_get(tkv_store* store, const char* key, size_t key_len, tkv_buffer* value, int* found);
TKV_API tkv_status tkv_store_del(tkv_store* store, const char* key, size_t key_len, int* existed);
/* Writes dirty data to the storage tier. */
TKV_API tkv_status tkv_store_flush(tkv_store* store, size_t* flushed);
/* `key value` lines. */
TKV_API tkv_status tkv_store_stats(tkv_store* store, tkv_buffer* text);
/* Current execution mode ("single" or "multi:N"). */
TKV_API tkv_status tkv_store_mode(tkv_store* store, tkv_buffer* text);

/* ---- TCP server ---- */

typedef struct tkv_server tkv_server;

/* Listens on server.listen from the config the store was opened with. */
TKV_API tkv_status tkv_server_start(tkv_store* store, tkv_server** out);
TKV_API uint16_t tkv_server_port(const tkv_server* server);
TKV_API void tkv_server_stop(tkv_server* server);
/* Stops if still running. The store must outlive the server. */
TKV_API void tkv_server_free(tkv_server* server);

/* ---- workloads and traces ---- */

typedef struct tkv_workload tkv_workload;

typedef enum tkv_distribution { TKV_ZIPFIAN = 0, TKV_UNIFORM = 1 } tkv_distribution;
typedef enum tkv_value_source { TKV_VALUES_RANDOM = 0, TKV_VALUES_CORPUS = 1, TKV_VALUES_TEMPLATE = 2 } tkv_value_source;

typedef struct tkv_gen_options {
  uint64_t key_count;
  size_t record_size_min;
  size_t record_size_max;
  tkv_distribution distribution;
  double theta;
  double read_fraction;
  uint64_t op_count;
  uint64_t seed;
  tkv_value_source value_source;
  const char* corpus_path;
  uint64_t interval_us;
  int load_phase;
} tkv_gen_options;

/* YCSB-A shaped defaults. */
TKV_API void tkv_gen_options_init(tkv_gen_options* options);
TKV_API tkv_status tkv_workload_generate(const tkv_gen_options* options, tkv_workload** out);
/* load_path may be NULL (no load phase). */
TKV_API tkv_status tkv_workload_read(const char* load_path, const char* run_path, tkv_workload** out);
/* With load_path NULL the load phase is prepended to the run trace. */
TKV_API tkv_status tkv_workload_write(const tkv_workload* workload, const char* load_path, const char* run_path);
TKV_API size_t tkv_workload_load_size(const tkv_workload* workload);
TKV_API size_t tkv_workload_run_size(const tkv_workload* workload);
TKV_API void tkv_workload_free(tkv_workload* workload);

/* ---- replay ---- */

typedef enum tkv_pacing { TKV_PACE_MAX = 0, TKV_PACE_TIMED = 1, TKV_PACE_FIXED_QPS = 2 } tkv_pacing;

typedef struct tkv_replay_options {
  tkv_pacing pacing;
  double fixed_qps;
  size_t concurrency;
  double warmup_s;
  double duration_s; /* 0: replay once */
  int include_load;  /* replay the load phase first, unmeasured */
} tkv_replay_options;

TKV_API void tkv_replay_options_init(tkv_replay_options* options);

typedef struct tkv_replay_report {
  uint64_t ops;
  uint64_t gets;
  uint64_t sets;
  uint64_t dels;
  uint64_t errors;
  double elapsed_s;
  double achieved_qps;
  double p50_us;
  double p99_us;
  double p999_us;
  uint64_t storage_reads;
  uint64_t storage_writes;
  uint64_t cache_hits;
  uint64_t cache_misses;
  double hit_ratio;
} tkv_replay_report;

TKV_API tkv_status tkv_replay_store(tkv_store* store, const tkv_workload* workload, const tkv_replay_options* options,
                                    tkv_replay_report* report);
TKV_API tkv_status tkv_replay_tcp(const char* host, uint16_t port, const tkv_workload* workload,
                                  const tkv_replay_options* options, tkv_replay_report* report);
/* Header line plus one row. */
TKV_API tkv_status tkv_replay_report_csv(const tkv_replay_report* report, tkv_buffer* csv);
TKV_API tkv_status tkv_replay_report_text(const tkv_replay_report* report, tkv_buffer* text);

/* ---- compression ---- */

typedef struct tkv_train_options {
  size_t min_pattern_len;
  size_t max_pattern_len;
  size_t max_patterns;
  double min_support;
  size_t max_samples;
} tkv_train_options;

TKV_API void tkv_train_options_init(tkv_train_options* options);
/* Samples are the corpus lines, or the SET values of the workload when
   corpus_path is NULL. *ratio gets the corpus compression ratio. */
TKV_API tkv_status tkv_train_dict(const char* corpus_path, const tkv_workload* workload,
                                  const tkv_train_options* options, const char* out_path, size_t* patterns,
                                  double* ratio);
TKV_API tkv_status tkv_write_template_corpus(size_t count, uint64_t seed, const char* path);

/* ---- miss-ratio curve ---- */

/* Curve of every access in the run trace (load phase excluded). sizes NULL
   gives one point per distinct stack distance. */
TKV_API tkv_status tkv_mrc(const tkv_workload* workload, const uint64_t* sizes, size_t n_sizes, tkv_buffer* csv);

/* ---- cost model ---- */

typedef struct tkv_break_even {
  double seconds;
  double cpqps_slow;
  double cpgb_fast;
  double records_per_gb;
} tkv_break_even;

TKV_API tkv_status tkv_break_even_interval(double cpqps_slow, double cpgb_fast, double avg_record_size,
                                           tkv_break_even* out);

/* ---- evaluation ---- */

/* One config per candidate; the profile comes from `profile` (or the first
   config when NULL). Writes the report CSV; text may be NULL. */
TKV_API tkv_status tkv_eval(const tkv_config* const* configs, size_t n_configs, const tkv_config* profile,
                            const tkv_workload* workload, tkv_buffer* csv, tkv_buffer* text, tkv_buffer* winner);

typedef struct tkv_sweep_params {
  double pc_cache;
  double pc_miss;
  double pc_storage;
  double sc_cache;
  double sc_storage;
  int derive; /* measure the base config first and use its cost terms */
} tkv_sweep_params;

/* CSV columns cr,mr,pc,sc,total. */
TKV_API tkv_status tkv_sweep_cr(const tkv_config* base, const tkv_workload* workload, const double* ratios,
                                size_t n_ratios, const tkv_sweep_params* params, tkv_buffer* csv,
                                double* recommended_cr, double* analytic_cr);

/* Single-thread ops/s of this host and the watermarks derived from it. */
TKV_API tkv_status tkv_calibrate(double budget_s, double* single_qps, double* high_watermark,
                                 double* low_watermark);

#ifdef __cplusplus
}
#endif

#endif
