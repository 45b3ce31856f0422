#ifndef NVCACHE_H
#define NVCACHE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NvcStatus {
  NVC_STATUS_OK = 0,
  NVC_STATUS_NULL_POINTER = 1,
  NVC_STATUS_INVALID_UTF8 = 2,
  NVC_STATUS_CONFIG = 3,
  NVC_STATUS_TRACE = 4,
  NVC_STATUS_UNSAFE_BACKUP = 5,
  NVC_STATUS_SCHEDULE = 6,
  NVC_STATUS_IO = 7,
  NVC_STATUS_PANIC = 8,
} NvcStatus;

typedef enum NvcAccessKind {
  NVC_ACCESS_KIND_READ = 0,
  NVC_ACCESS_KIND_WRITE = 1,
} NvcAccessKind;

/**
 * Opaque hierarchy configuration.
 */
typedef struct NvcConfig NvcConfig;

/**
 * Opaque simulator instance.
 */
typedef struct NvcSim NvcSim;

/**
 * Opaque in-memory trace.
 */
typedef struct NvcTrace NvcTrace;

/**
 * Counters and energy ledger of a run. Energies in nJ.
 */
typedef struct NvcStats {
  uint64_t accesses;
  uint64_t l1_reads;
  uint64_t l1_writes;
  uint64_t l1_hits;
  uint64_t l1_misses;
  uint64_t l1_fills;
  uint64_t llc_reads;
  uint64_t llc_writes;
  uint64_t llc_hits;
  uint64_t llc_misses;
  uint64_t pcm_reads;
  uint64_t pcm_writes;
  uint64_t br_reads;
  uint64_t br_writes;
  uint64_t wbq_forwards;
  uint64_t dbt_evictions;
  uint64_t stall_cycles;
  uint64_t backup_cycles;
  uint64_t restore_cycles;
  uint64_t total_cycles;
  double energy_stable_nj;
  double energy_backup_nj;
  double energy_restore_nj;
  double energy_total_nj;
  uint64_t backups_performed;
  uint64_t blocks_backed_up;
  uint64_t max_dirty_blocks;
} NvcStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until
 * the next call into this library on the same thread.
 */
const char *nvc_last_error(void);

/**
 * Blocks a capacitor can back up after the register file.
 *
 * # Safety
 * `out_k` must point to writable storage for one `uint64_t`.
 */
enum NvcStatus nvc_derive_k(double e_capacitor_nj,
                            double e_reg_file_nj,
                            double e_w_nj,
                            uint64_t *out_k);

/**
 * A configuration holding the built-in defaults. Never returns NULL.
 */
struct NvcConfig *nvc_config_new(void);

/**
 * Load a `key = value` configuration file over the defaults.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_config` must be writable.
 */
enum NvcStatus nvc_config_load(const char *path, struct NvcConfig **out_config);

/**
 * Set one key from its textual value.
 *
 * # Safety
 * `config` must be a live handle; `key` and `value` NUL-terminated strings.
 */
enum NvcStatus nvc_config_set(struct NvcConfig *config, const char *key, const char *value);

/**
 * # Safety
 * `config` must be a live handle.
 */
enum NvcStatus nvc_config_validate(const struct NvcConfig *config);

/**
 * # Safety
 * `config` must be NULL or a handle not yet freed.
 */
void nvc_config_free(struct NvcConfig *config);

/**
 * Read a text (`.mtr`) or binary (`.mtb`) trace, checking addresses
 * against `config`'s memory size.
 *
 * # Safety
 * `path` must be NUL-terminated, `config` live, `out_trace` writable.
 */
enum NvcStatus nvc_trace_load(const char *path,
                              const struct NvcConfig *config,
                              struct NvcTrace **out_trace);

/**
 * Number of records, or 0 for NULL.
 *
 * # Safety
 * `trace` must be NULL or a live handle.
 */
uint64_t nvc_trace_len(const struct NvcTrace *trace);

/**
 * # Safety
 * `trace` must be NULL or a handle not yet freed.
 */
void nvc_trace_free(struct NvcTrace *trace);

/**
 * A fresh simulator. The configuration is copied; it may be freed after.
 *
 * # Safety
 * `config` must be live; `out_sim` writable.
 */
enum NvcStatus nvc_sim_new(const struct NvcConfig *config, struct NvcSim **out_sim);

/**
 * Simulate one memory access. `instr_index` must not decrease.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum NvcStatus nvc_sim_access(struct NvcSim *sim,
                              enum NvcAccessKind kind,
                              uint64_t address,
                              uint64_t instr_index);

/**
 * Back up, lose power, and restore. Reports the dirty block count that
 * was backed up through `out_dirty_blocks` when it is not NULL.
 *
 * # Safety
 * `sim` must be live; `out_dirty_blocks` NULL or writable.
 */
enum NvcStatus nvc_sim_power_failure(struct NvcSim *sim, uint64_t *out_dirty_blocks);

/**
 * Counters so far.
 *
 * # Safety
 * `sim` must be live; `out_stats` writable.
 */
enum NvcStatus nvc_sim_stats(const struct NvcSim *sim, struct NvcStats *out_stats);

/**
 * # Safety
 * `sim` must be NULL or a handle not yet freed.
 */
void nvc_sim_free(struct NvcSim *sim);

/**
 * Run a whole trace. Power fails every `failure_every_instructions`
 * instructions; 0 means stable power.
 *
 * # Safety
 * `config` and `trace` must be live; `out_stats` writable.
 */
enum NvcStatus nvc_run(const struct NvcConfig *config,
                       const struct NvcTrace *trace,
                       uint64_t failure_every_instructions,
                       struct NvcStats *out_stats);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NVCACHE_H */
