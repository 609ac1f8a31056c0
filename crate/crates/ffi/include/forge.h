#ifndef FORGE_H
#define FORGE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum ForgeStatus {
  FORGE_STATUS_OK = 0,
  FORGE_STATUS_NULL_ARGUMENT = 1,
  FORGE_STATUS_INVALID_UTF8 = 2,
  FORGE_STATUS_PARSE = 3,
  FORGE_STATUS_CONFIG = 4,
  FORGE_STATUS_INFRASTRUCTURE = 5,
  FORGE_STATUS_IO = 6,
  /**
   * The operation ran but the task failed (e.g. an unsolvable bundle).
   */
  FORGE_STATUS_TASK_FAILURE = 7,
  FORGE_STATUS_PANIC = 8,
  FORGE_STATUS_OTHER = 9,
} ForgeStatus;

/**
 * An opened website bundle.
 */
typedef struct ForgeBundle ForgeBundle;

/**
 * A running environment server.
 */
typedef struct ForgeServer ForgeServer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Owned by the
 * library and valid until the next call on the same thread.
 */
const char *forge_last_error(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library and not yet freed.
 */
void forge_string_free(char *s);

/**
 * Writes a bit mask of admissible overall levels (bit 0 = L1, bit 1 = L2,
 * bit 2 = L3) for a vector of seven levels in `{1, 2, 3}`.
 *
 * # Safety
 * `values` must point to 7 readable bytes and `out_mask` to a writable byte.
 */
enum ForgeStatus forge_admissible_levels(const uint8_t *values, uint8_t *out_mask);

/**
 * # Safety
 * `values` must point to 7 readable bytes and `out_ok` to a writable bool.
 */
enum ForgeStatus forge_check_composition(uint8_t level, const uint8_t *values, bool *out_ok);

/**
 * Base64-encodes a secret. The result must be freed with
 * [`forge_string_free`].
 *
 * # Safety
 * `plaintext` must be a NUL-terminated string; `out` must be writable.
 */
enum ForgeStatus forge_encode_secret(const char *plaintext, char **out);

/**
 * # Safety
 * `encoded` must be a NUL-terminated string; `out` must be writable.
 */
enum ForgeStatus forge_decode_secret(const char *encoded, char **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum ForgeStatus forge_bundle_open(const char *path, struct ForgeBundle **out);

/**
 * # Safety
 * `bundle` must be NULL or a handle from [`forge_bundle_open`] not yet freed.
 */
void forge_bundle_free(struct ForgeBundle *bundle);

/**
 * The task card (instruction, domain, level, difficulty) as JSON.
 *
 * # Safety
 * `bundle` must be a live handle; `out` must be writable.
 */
enum ForgeStatus forge_bundle_task_json(const struct ForgeBundle *bundle, char **out);

/**
 * Replays the reference solution in the simulated browser and writes the
 * verdict as JSON. Returns `TaskFailure` (with the verdict still written)
 * when the bundle is not solvable within `budget` actions.
 *
 * # Safety
 * `bundle` must be a live handle; `out_verdict` must be writable.
 */
enum ForgeStatus forge_bundle_validate(const struct ForgeBundle *bundle,
                                       uint32_t budget,
                                       char **out_verdict);

/**
 * The confirmation code the site shows for a workflow state given as a
 * JSON object of strings.
 *
 * # Safety
 * `bundle` must be a live handle; `state_json` NUL-terminated; `out` writable.
 */
enum ForgeStatus forge_bundle_resolve(const struct ForgeBundle *bundle,
                                      const char *state_json,
                                      char **out);

/**
 * Judges a final answer given as a JSON object of strings.
 *
 * # Safety
 * `bundle` must be a live handle; `answers_json` NUL-terminated; `out_correct` writable.
 */
enum ForgeStatus forge_bundle_judge(const struct ForgeBundle *bundle,
                                    const char *answers_json,
                                    bool *out_correct);

/**
 * Serves the bundle on 127.0.0.1 (`port` 0 picks a free port).
 *
 * # Safety
 * `bundle` must be a live handle; `out` must be writable.
 */
enum ForgeStatus forge_server_start(const struct ForgeBundle *bundle,
                                    uint16_t port,
                                    uint32_t seed,
                                    struct ForgeServer **out);

/**
 * # Safety
 * `server` must be NULL or a live handle.
 */
uint16_t forge_server_port(const struct ForgeServer *server);

/**
 * Stops the server and frees the handle.
 *
 * # Safety
 * `server` must be NULL or a handle from [`forge_server_start`] not yet freed.
 */
void forge_server_free(struct ForgeServer *server);

/**
 * Renders the report tables for a benchmark directory and a results file
 * into `out_dir`.
 *
 * # Safety
 * All arguments must be NUL-terminated strings.
 */
enum ForgeStatus forge_report(const char *benchmark_dir,
                              const char *results_path,
                              const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FORGE_H */
