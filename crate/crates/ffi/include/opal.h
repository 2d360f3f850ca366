#ifndef OPAL_H
#define OPAL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero is success.
 */
typedef enum {
  OPAL_STATUS_OK = 0,
  OPAL_STATUS_NULL_ARGUMENT = 1,
  OPAL_STATUS_INVALID_UTF8 = 2,
  OPAL_STATUS_INVALID_JSON = 3,
  OPAL_STATUS_INVALID_KEY = 4,
  OPAL_STATUS_UNKNOWN_ROLE = 5,
  OPAL_STATUS_UNKNOWN_SCHEME = 6,
  OPAL_STATUS_CANONICALIZATION_FAILED = 7,
  OPAL_STATUS_SIGNING_FAILED = 8,
  OPAL_STATUS_DSL_REJECTED = 9,
  OPAL_STATUS_IO = 10,
  OPAL_STATUS_CHAIN_BROKEN = 11,
  OPAL_STATUS_HEAD_MISMATCH = 12,
  OPAL_STATUS_PANIC = 99,
} OpalStatus;

/**
 * Opaque signing key with its role.
 */
typedef struct OpalKeypair OpalKeypair;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread. Owned by the library; valid
 * until the next call on the same thread. Never null.
 */
const char *opal_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void opal_string_free(char *s);

/**
 * Generates a key pair for `role` (e.g. "querier").
 *
 * # Safety
 * `role` must be a valid C string; `out` must be writable.
 */
OpalStatus opal_keypair_generate(const char *role, OpalKeypair **out);

/**
 * Restores a key pair from its base64 secret.
 *
 * # Safety
 * String arguments must be valid C strings; `out` must be writable.
 */
OpalStatus opal_keypair_from_secret(const char *role, const char *secret_base64, OpalKeypair **out);

/**
 * Releases a key pair. Null is ignored.
 *
 * # Safety
 * `key` must come from this library and not have been freed.
 */
void opal_keypair_free(OpalKeypair *key);

/**
 * Base64 public key of `key`.
 *
 * # Safety
 * `key` must be a live handle; `out` must be writable.
 */
OpalStatus opal_keypair_public_key(const OpalKeypair *key, char **out);

/**
 * Hex fingerprint of the public key of `key`.
 *
 * # Safety
 * `key` must be a live handle; `out` must be writable.
 */
OpalStatus opal_keypair_fingerprint(const OpalKeypair *key, char **out);

/**
 * Canonical form of a JSON document.
 *
 * # Safety
 * `json` must be a valid C string; `out` must be writable.
 */
OpalStatus opal_canonicalize_json(const char *json, char **out);

/**
 * Signs a JSON document; writes the signature envelope as JSON.
 *
 * # Safety
 * `key` must be a live handle, `json` a valid C string, `out_envelope` writable.
 */
OpalStatus opal_sign_json(const OpalKeypair *key, const char *json, char **out_envelope);

/**
 * Verifies `envelope_json` over `json` under a base64 public key. An
 * unregistered scheme is reported as `UnknownScheme`, not as an invalid signature.
 *
 * # Safety
 * String arguments must be valid C strings; `out_valid` must be writable.
 */
OpalStatus opal_verify_json(const char *json,
                            const char *envelope_json,
                            const char *public_key_base64,
                            bool *out_valid);

/**
 * Checks an algorithm source against a schema (a JSON list of
 * `{"name", "type"}` columns). On rejection returns `DslRejected` and, when
 * `out_error` is non-null, a "line:column: message" description.
 *
 * # Safety
 * String arguments must be valid C strings; `out_error` may be null.
 */
OpalStatus opal_dsl_validate(const char *source, const char *schema_json, char **out_error);

/**
 * Verifies an audit log file. On `ChainBroken`, `out_broken_sequence` receives
 * the first bad sequence number (it is left untouched otherwise). `expected_head_hex` may be null.
 *
 * # Safety
 * `path` must be a valid C string; `expected_head_hex` null or a valid C string;
 * `out_broken_sequence` writable.
 */
OpalStatus opal_audit_verify_file(const char *path,
                                  const char *expected_head_hex,
                                  uint64_t *out_broken_sequence);

/**
 * Verifies a contract response (wire JSON) under a provider's base64 public key.
 *
 * # Safety
 * String arguments must be valid C strings; `out_valid` must be writable.
 */
OpalStatus opal_verify_response(const char *response_json,
                                const char *public_key_base64,
                                bool *out_valid);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OPAL_H */
