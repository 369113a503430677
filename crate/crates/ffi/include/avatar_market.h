#ifndef AVATAR_MARKET_H
#define AVATAR_MARKET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AmStatus {
  AM_STATUS_OK = 0,
  AM_STATUS_NULL_POINTER = 1,
  AM_STATUS_INVALID_UTF8 = 2,
  AM_STATUS_CONFIG_ERROR = 3,
  AM_STATUS_AVATAR_ERROR = 4,
  AM_STATUS_ENGINE_ERROR = 5,
  AM_STATUS_IO_ERROR = 6,
  AM_STATUS_OUT_OF_RANGE = 7,
  AM_STATUS_PANIC = 8,
} AmStatus;

/**
 * The outcome of one run.
 */
typedef struct AmRun AmRun;

/**
 * A validated scenario.
 */
typedef struct AmScenario AmScenario;

typedef struct AmTrade {
  uint64_t trade_id;
  uint64_t time;
  int64_t price;
  int64_t qty;
  uint32_t buy_agent;
  uint32_t sell_agent;
  /**
   * 0 when the buyer was the aggressor, 1 for the seller.
   */
  uint8_t aggressor;
} AmTrade;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library from the same thread.
 */
const char *am_last_error(void);

/**
 * Library version as a static string.
 */
const char *am_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void am_string_free(char *s);

/**
 * Parses a scenario from JSON text. `base_dir` resolves `avatar_file`
 * references and may be null when the scenario has none.
 *
 * # Safety
 * `json` must be a valid string, `base_dir` null or a valid string, and
 * `out` a valid pointer.
 */
enum AmStatus am_scenario_from_json(const char *json,
                                    const char *base_dir,
                                    struct AmScenario **out);

/**
 * Loads a scenario file.
 *
 * # Safety
 * `path` must be a valid string and `out` a valid pointer.
 */
enum AmStatus am_scenario_load(const char *path, struct AmScenario **out);

/**
 * # Safety
 * `scenario` must be a live handle.
 */
enum AmStatus am_scenario_set_seed(struct AmScenario *scenario, uint64_t seed);

/**
 * # Safety
 * `scenario` must be null or a live handle; it is invalid afterwards.
 */
void am_scenario_free(struct AmScenario *scenario);

/**
 * Runs a scenario to completion.
 *
 * # Safety
 * `scenario` must be a live handle and `out` a valid pointer.
 */
enum AmStatus am_run(const struct AmScenario *scenario, struct AmRun **out);

/**
 * # Safety
 * `run` must be null or a live handle; it is invalid afterwards.
 */
void am_run_free(struct AmRun *run);

/**
 * Number of trades on the tape, or 0 for a null handle.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
uint64_t am_run_trade_count(const struct AmRun *run);

/**
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum AmStatus am_run_trade(const struct AmRun *run, uint64_t index, struct AmTrade *out);

/**
 * Copies up to `capacity` trade prices into `buf` and stores the number
 * copied in `written`.
 *
 * # Safety
 * `run` must be a live handle, `buf` valid for `capacity` writes and
 * `written` a valid pointer.
 */
enum AmStatus am_run_prices(const struct AmRun *run,
                            int64_t *buf,
                            size_t capacity,
                            size_t *written);

/**
 * Final `(cash, shares)` of one agent.
 *
 * # Safety
 * `run` must be a live handle; `cash` and `shares` valid pointers.
 */
enum AmStatus am_run_account(const struct AmRun *run,
                             uint32_t agent,
                             int64_t *cash,
                             int64_t *shares);

/**
 * The stylized-facts report as JSON.
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum AmStatus am_run_report_json(const struct AmRun *run, size_t max_lag, char **out);

/**
 * Writes tape, snapshots, config and report into `dir`.
 *
 * # Safety
 * `run` must be a live handle and `dir` a valid string.
 */
enum AmStatus am_run_write_archive(const struct AmRun *run, const char *dir, size_t max_lag);

/**
 * Checks an avatar script. On success `canonical` receives the printed
 * form; on failure the error (with line and column) is in [`am_last_error`].
 *
 * # Safety
 * `source` must be a valid string; `canonical` null or a valid pointer.
 */
enum AmStatus am_avatar_check(const char *source, char **canonical);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AVATAR_MARKET_H */
