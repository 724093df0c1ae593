#ifndef SEEBF_H
#define SEEBF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum SeebfStatus {
  SEEBF_STATUS_OK = 0,
  SEEBF_STATUS_NULL_POINTER = 1,
  SEEBF_STATUS_INVALID_ARGUMENT = 2,
  SEEBF_STATUS_CONFIG = 3,
  SEEBF_STATUS_DIMENSION = 4,
  SEEBF_STATUS_NUMERICAL = 5,
  // The zero-forcing design does not exist for this channel draw.
  SEEBF_STATUS_ZF_INFEASIBLE = 6,
  SEEBF_STATUS_IO = 7,
  // A Rust panic was caught at the boundary.
  SEEBF_STATUS_PANIC = 8,
} SeebfStatus;

typedef enum SeebfMethod {
  SEEBF_METHOD_SEE = 0,
  SEEBF_METHOD_EE = 1,
  SEEBF_METHOD_SUM_SECRECY = 2,
  SEEBF_METHOD_ZF_DINKELBACH = 3,
} SeebfMethod;

typedef enum SeebfTermination {
  SEEBF_TERMINATION_CONVERGED = 0,
  SEEBF_TERMINATION_MAX_ITERS = 1,
  SEEBF_TERMINATION_INIT_FAILED = 2,
  SEEBF_TERMINATION_FAILED = 3,
} SeebfTermination;

// One channel draw.
typedef struct SeebfChannels SeebfChannels;

// System parameters.
typedef struct SeebfConfig SeebfConfig;

// Result of one optimization run.
typedef struct SeebfRun SeebfRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer stays
// valid until the next failing call on the same thread.
const char *seebf_last_error(void);

// Library version as a static NUL-terminated string.
const char *seebf_version(void);

// The three-pair reference setup (`P_max = 10 dB`, `P_c = 7 dB`).
//
// # Safety
// `out` must be a valid pointer to writable storage.
enum SeebfStatus seebf_config_default(struct SeebfConfig **out);

// Parses a JSON configuration document; the first power budget and circuit
// power of the document are used.
//
// # Safety
// `json` must be a NUL-terminated string and `out` writable.
enum SeebfStatus seebf_config_from_json(const char *json, struct SeebfConfig **out);

// # Safety
// `cfg` must come from this library (or be NULL).
void seebf_config_free(struct SeebfConfig *cfg);

// # Safety
// `cfg` must be a live handle.
enum SeebfStatus seebf_config_set_p_max_db(struct SeebfConfig *cfg, double db);

// # Safety
// `cfg` must be a live handle.
enum SeebfStatus seebf_config_set_circuit_power_db(struct SeebfConfig *cfg, double db);

// Whether the antenna counts pass the zero-forcing counting test.
//
// # Safety
// `cfg` must be a live handle and `feasible` writable.
enum SeebfStatus seebf_zf_counting_test(const struct SeebfConfig *cfg, bool *feasible);

// Draws the Rayleigh channels of one seed.
//
// # Safety
// `cfg` must be a live handle and `out` writable.
enum SeebfStatus seebf_channels_generate(const struct SeebfConfig *cfg,
                                         uint64_t seed,
                                         struct SeebfChannels **out);

// # Safety
// `ch` must come from this library (or be NULL).
void seebf_channels_free(struct SeebfChannels *ch);

// Runs one method on one channel draw. An initialization failure is a
// successful call whose run reports `SEEBF_TERMINATION_INIT_FAILED`.
//
// # Safety
// `cfg` and `ch` must be live handles and `out` writable.
enum SeebfStatus seebf_solve(const struct SeebfConfig *cfg,
                             const struct SeebfChannels *ch,
                             enum SeebfMethod method,
                             struct SeebfRun **out);

// # Safety
// `run` must come from this library (or be NULL).
void seebf_run_free(struct SeebfRun *run);

// Secrecy energy efficiency of the final design in bits per Joule (NaN when
// no design was produced).
//
// # Safety
// `run` must be a live handle.
double seebf_run_see_bits(const struct SeebfRun *run);

// Final value of the method's own objective, nats based.
//
// # Safety
// `run` must be a live handle.
double seebf_run_objective(const struct SeebfRun *run);

// # Safety
// `run` must be a live handle.
size_t seebf_run_iterations(const struct SeebfRun *run);

// # Safety
// `run` must be a live handle and `out` writable.
enum SeebfStatus seebf_run_termination(const struct SeebfRun *run, enum SeebfTermination *out);

// Copies beamformer `user` (`N × d_1`, column-major) into `re` and `im`,
// each holding `len = N·d_1` doubles.
//
// # Safety
// `run` must be a live handle; `re` and `im` must hold `len` doubles.
enum SeebfStatus seebf_run_beamformer(const struct SeebfRun *run,
                                      size_t user,
                                      double *re,
                                      double *im,
                                      size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEEBF_H */
