#ifndef SOCIEX_H
#define SOCIEX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SociexStatus {
  SOCIEX_STATUS_OK = 0,
  SOCIEX_STATUS_NULL_POINTER = 1,
  SOCIEX_STATUS_INVALID_UTF8 = 2,
  SOCIEX_STATUS_INVALID_ARGUMENT = 3,
  SOCIEX_STATUS_CONFIG = 4,
  SOCIEX_STATUS_NEGOTIATION = 5,
  SOCIEX_STATUS_RUN = 6,
  SOCIEX_STATUS_IO = 7,
  SOCIEX_STATUS_PANIC = 8,
} SociexStatus;

/**
 * A configured experiment and, once run, its event logs.
 */
typedef struct SociexExperiment SociexExperiment;

/**
 * One negotiation phase, driven turn by turn from the caller.
 */
typedef struct SociexNegotiation SociexNegotiation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. Free with
 * [`sociex_string_free`].
 */
char *sociex_last_error_message(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void sociex_string_free(char *s);

/**
 * Library version as a static string. Do not free.
 */
const char *sociex_version(void);

/**
 * Points for a holding of `n` resource types under coefficients `coeffs`.
 *
 * # Safety
 * `units` and `coeffs` must each point to `n` readable values.
 */
enum SociexStatus sociex_holding_value(const uint64_t *units,
                                       const uint64_t *coeffs,
                                       size_t n,
                                       uint64_t *out_points);

/**
 * Participant payout for a final holding value.
 */
double sociex_compensation(double total_value);

/**
 * Creates an experiment from TOML text, or the standard setup when
 * `config_toml` is null.
 *
 * # Safety
 * `config_toml` must be null or a NUL-terminated string; `out` must be writable.
 */
enum SociexStatus sociex_experiment_new(const char *config_toml, struct SociexExperiment **out);

/**
 * Replaces every agent's controller, in agent order, from a comma-separated
 * list such as `"scripted:tit-for-tat,scripted:greedy,scripted:pass-bot"`.
 *
 * # Safety
 * `h` must be a live experiment handle; `roster` a NUL-terminated string.
 */
enum SociexStatus sociex_experiment_set_roster(struct SociexExperiment *h, const char *roster);

/**
 * Sets the number of rounds per repetition.
 *
 * # Safety
 * `h` must be a live experiment handle.
 */
enum SociexStatus sociex_experiment_set_rounds(struct SociexExperiment *h, uint32_t rounds);

/**
 * Runs every repetition with `seed`. Only scripted controllers are
 * available through this interface. With a non-null `out_dir`, logs and the
 * manifest are written there as well.
 *
 * # Safety
 * `h` must be a live experiment handle; `out_dir` null or NUL-terminated.
 */
enum SociexStatus sociex_experiment_run(struct SociexExperiment *h,
                                        uint64_t seed,
                                        const char *out_dir);

/**
 * Number of logs held after the last successful run (0 before any run).
 *
 * # Safety
 * `h` must be null or a live experiment handle.
 */
size_t sociex_experiment_log_count(const struct SociexExperiment *h);

/**
 * The NDJSON event log of one repetition. Free with [`sociex_string_free`].
 *
 * # Safety
 * `h` must be a live experiment handle; `out` must be writable.
 */
enum SociexStatus sociex_experiment_log(struct SociexExperiment *h,
                                        uint32_t repetition,
                                        char **out);

/**
 * Final holding value of `agent_id` in one repetition.
 *
 * # Safety
 * `h` must be a live experiment handle; `agent_id` NUL-terminated; `out` writable.
 */
enum SociexStatus sociex_experiment_final_value(struct SociexExperiment *h,
                                                uint32_t repetition,
                                                const char *agent_id,
                                                uint64_t *out);

/**
 * # Safety
 * `h` must be null or a handle from [`sociex_experiment_new`], not yet freed.
 */
void sociex_experiment_free(struct SociexExperiment *h);

/**
 * Opens a phase for a comma-separated turn order such as `"alice,bob,carol"`.
 *
 * # Safety
 * `agents` must be NUL-terminated; `out` writable.
 */
enum SociexStatus sociex_negotiation_new(const char *agents,
                                         uint32_t round,
                                         uint32_t max_discussion_rounds,
                                         size_t num_resource_types,
                                         struct SociexNegotiation **out);

/**
 * Applies one turn. `actions_json` is a JSON array of actions, e.g.
 * `[{"type":"PROPOSE","counterpart":"bob","give":[1,0,0],"receive":[0,1,0]}]`;
 * `[]` is a pass. A rejected turn leaves the phase unchanged.
 *
 * # Safety
 * `h` must be a live negotiation handle; `actor` and `actions_json`
 * NUL-terminated; `utterance` null or NUL-terminated.
 */
enum SociexStatus sociex_negotiation_apply_turn(struct SociexNegotiation *h,
                                                const char *actor,
                                                const char *actions_json,
                                                const char *utterance);

/**
 * # Safety
 * `h` must be a live negotiation handle; `out` writable.
 */
enum SociexStatus sociex_negotiation_is_closed(struct SociexNegotiation *h, bool *out);

/**
 * Full phase state as JSON. Free with [`sociex_string_free`].
 *
 * # Safety
 * `h` must be a live negotiation handle; `out` writable.
 */
enum SociexStatus sociex_negotiation_state_json(struct SociexNegotiation *h, char **out);

/**
 * # Safety
 * `h` must be null or a handle from [`sociex_negotiation_new`], not yet freed.
 */
void sociex_negotiation_free(struct SociexNegotiation *h);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SOCIEX_H */
