#ifndef COSTREC_H
#define COSTREC_H

/* Generated by cbindgen from the costrec-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every ABI call.
typedef enum CostrecStatus {
  // The call succeeded.
  CostrecStatus_Ok = 0,
  // The audit ran to completion and at least one check failed.
  CostrecStatus_AuditFail = 1,
  // The config could not be parsed or validated.
  CostrecStatus_ConfigError = 2,
  // The config is valid but the requested combination cannot be built or
  // evaluated (for example exact mode on a continuous prior).
  CostrecStatus_Incompatible = 3,
  // A null pointer, wrong length, or otherwise unusable argument.
  CostrecStatus_BadArgument = 4,
  // An internal panic was caught at the boundary.
  CostrecStatus_Panicked = 5,
} CostrecStatus;

// A parsed experiment config plus the instance it describes.
typedef struct CostrecInstance CostrecInstance;

// A mechanism produced by [`costrec_reduce`].
typedef struct CostrecMechanism CostrecMechanism;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// ABI revision of this header; bumped on any incompatible change.
uint32_t costrec_abi_version(void);

// Message describing the most recent failure on the calling thread, or
// null if there has been none. The pointer stays valid until the next
// failing call on the same thread; do not free it.
const char *costrec_last_error(void);

// Parse a TOML experiment config and build the instance it describes.
// On `Ok`, `*out` owns the new handle.
//
// # Safety
// `text` must point to a NUL-terminated string and `out` to writable
// storage for one pointer.
enum CostrecStatus costrec_instance_from_toml(const char *text, struct CostrecInstance **out);

// Number of agents in the instance; 0 if the handle is null.
//
// # Safety
// `inst` must be a live handle from [`costrec_instance_from_toml`] or null.
size_t costrec_instance_agents(const struct CostrecInstance *inst);

// Release an instance handle. Null is ignored.
//
// # Safety
// `inst` must be a handle from [`costrec_instance_from_toml`] that has not
// been freed, or null.
void costrec_instance_free(struct CostrecInstance *inst);

// Build the reduction the config asked for around the instance's base
// algorithm. On `Ok`, `*out` owns the new mechanism handle; the instance
// handle stays usable and independent.
//
// # Safety
// `inst` must be a live instance handle and `out` writable storage for one
// pointer.
enum CostrecStatus costrec_reduce(const struct CostrecInstance *inst,
                                  struct CostrecMechanism **out);

// Release a mechanism handle. Null is ignored.
//
// # Safety
// `mech` must be a handle from [`costrec_reduce`] that has not been freed,
// or null.
void costrec_mechanism_free(struct CostrecMechanism *mech);

// The price floor a threshold reduction settled on. Fails with
// `Incompatible` when the configured reduction has no threshold schedule
// (the ex-post reductions price per profile instead).
//
// # Safety
// `mech` must be a live mechanism handle and `out` writable storage for
// one double.
enum CostrecStatus costrec_mechanism_threshold(const struct CostrecMechanism *mech, double *out);

// Run the mechanism once on a valuation profile. `values` holds `len`
// nonnegative valuations, one per agent, and `len` must equal the agent
// count. The outcome is written to `served` (0/1 per agent) and `payments`
// (charge per agent); both must hold `len` entries. `seed` fixes the
// mechanism's internal randomness, so equal seeds replay equal outcomes.
//
// # Safety
// `mech` must be a live mechanism handle; `values`, `served`, and
// `payments` must point to `len` readable (respectively writable) entries.
enum CostrecStatus costrec_mechanism_run(const struct CostrecMechanism *mech,
                                         const double *values,
                                         size_t len,
                                         uint64_t seed,
                                         uint8_t *served,
                                         double *payments);

// The threshold schedule as CSV (same layout the CLI writes), or null when
// the reduction has no schedule. Free the string with
// [`costrec_string_free`].
//
// # Safety
// `mech` must be a live mechanism handle or null.
char *costrec_mechanism_schedule_csv(const struct CostrecMechanism *mech);

// Run the standard audit suite for this instance/mechanism pair and hand
// back the reports as a JSON array. Returns `Ok` when every check passes
// and `AuditFail` when at least one fails; `*out` carries the JSON in both
// cases. Free it with [`costrec_string_free`].
//
// # Safety
// `inst` and `mech` must be live handles built from the same config, and
// `out` writable storage for one pointer.
enum CostrecStatus costrec_audit_json(const struct CostrecInstance *inst,
                                      const struct CostrecMechanism *mech,
                                      char **out);

// Release a string returned by this library. Null is ignored.
//
// # Safety
// `s` must be a string returned by this library that has not been freed,
// or null.
void costrec_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COSTREC_H */
