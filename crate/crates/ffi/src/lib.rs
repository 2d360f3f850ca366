//! C ABI over the protocol core.
//!
//! Conventions:
//! * every function returns an [`OpalStatus`]; results come back through out-pointers
//! * strings are NUL-terminated UTF-8; strings returned by the library must be
//!   released with [`opal_string_free`]
//! * on failure, [`opal_last_error_message`] describes the error for the calling thread
//! * key pairs are opaque handles released with [`opal_keypair_free`]

use opal_core::audit::{verify_file, ChainStatus};
use opal_core::canonical::{canonicalize, Digest, Value};
use opal_core::dsl::parse;
use opal_core::protocol::ContractResponse;
use opal_core::schema::DataSchema;
use opal_core::signing::{verify, Keypair, PublicKey, Role, SignatureEnvelope, VerifyError};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpalStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    InvalidKey = 4,
    UnknownRole = 5,
    UnknownScheme = 6,
    CanonicalizationFailed = 7,
    SigningFailed = 8,
    DslRejected = 9,
    Io = 10,
    ChainBroken = 11,
    HeadMismatch = 12,
    Panic = 99,
}

/// Opaque signing key with its role.
pub struct OpalKeypair {
    inner: Keypair,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("NULs removed"));
}

type Outcome = Result<(), (OpalStatus, String)>;

fn guard(f: impl FnOnce() -> Outcome) -> OpalStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            OpalStatus::Ok
        }
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            OpalStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, (OpalStatus, String)> {
    if p.is_null() {
        return Err((OpalStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (OpalStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

fn json_arg(text: &str, name: &str) -> Result<serde_json::Value, (OpalStatus, String)> {
    serde_json::from_str(text).map_err(|e| (OpalStatus::InvalidJson, format!("`{name}`: {e}")))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Outcome {
    if out.is_null() {
        return Err((OpalStatus::NullArgument, "output pointer is null".into()));
    }
    *out = CString::new(s).map_err(|_| (OpalStatus::InvalidUtf8, "output contains NUL".into()))?.into_raw();
    Ok(())
}

unsafe fn put<T>(out: *mut T, value: T) -> Outcome {
    if out.is_null() {
        return Err((OpalStatus::NullArgument, "output pointer is null".into()));
    }
    *out = value;
    Ok(())
}

fn parse_role(s: &str) -> Result<Role, (OpalStatus, String)> {
    s.parse().map_err(|e: String| (OpalStatus::UnknownRole, e))
}

fn parse_key(s: &str) -> Result<PublicKey, (OpalStatus, String)> {
    PublicKey::from_base64(s).map_err(|e| (OpalStatus::InvalidKey, e.to_string()))
}

/// Message for the last failed call on this thread. Owned by the library; valid
/// until the next call on the same thread. Never null.
#[no_mangle]
pub extern "C" fn opal_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn opal_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Generates a key pair for `role` (e.g. "querier").
///
/// # Safety
/// `role` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn opal_keypair_generate(role: *const c_char, out: *mut *mut OpalKeypair) -> OpalStatus {
    guard(|| {
        let role = parse_role(str_arg(role, "role")?)?;
        put(out, Box::into_raw(Box::new(OpalKeypair { inner: Keypair::generate(role) })))
    })
}

/// Restores a key pair from its base64 secret.
///
/// # Safety
/// String arguments must be valid C strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn opal_keypair_from_secret(
    role: *const c_char,
    secret_base64: *const c_char,
    out: *mut *mut OpalKeypair,
) -> OpalStatus {
    guard(|| {
        let role = parse_role(str_arg(role, "role")?)?;
        let inner = Keypair::from_secret_base64(role, str_arg(secret_base64, "secret_base64")?)
            .map_err(|e| (OpalStatus::InvalidKey, e.to_string()))?;
        put(out, Box::into_raw(Box::new(OpalKeypair { inner })))
    })
}

/// Releases a key pair. Null is ignored.
///
/// # Safety
/// `key` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn opal_keypair_free(key: *mut OpalKeypair) {
    if !key.is_null() {
        drop(Box::from_raw(key));
    }
}

/// Base64 public key of `key`.
///
/// # Safety
/// `key` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn opal_keypair_public_key(key: *const OpalKeypair, out: *mut *mut c_char) -> OpalStatus {
    guard(|| {
        let key = key.as_ref().ok_or((OpalStatus::NullArgument, "`key` is null".to_string()))?;
        put_string(out, key.inner.public_key().to_base64())
    })
}

/// Hex fingerprint of the public key of `key`.
///
/// # Safety
/// `key` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn opal_keypair_fingerprint(key: *const OpalKeypair, out: *mut *mut c_char) -> OpalStatus {
    guard(|| {
        let key = key.as_ref().ok_or((OpalStatus::NullArgument, "`key` is null".to_string()))?;
        put_string(out, key.inner.public_key().fingerprint().to_string())
    })
}

/// Canonical form of a JSON document.
///
/// # Safety
/// `json` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn opal_canonicalize_json(json: *const c_char, out: *mut *mut c_char) -> OpalStatus {
    guard(|| {
        let doc = json_arg(str_arg(json, "json")?, "json")?;
        let bytes = canonicalize(&Value::from(doc)).map_err(|e| (OpalStatus::CanonicalizationFailed, e.to_string()))?;
        put_string(out, String::from_utf8(bytes).expect("canonical form is UTF-8"))
    })
}

/// Signs a JSON document; writes the signature envelope as JSON.
///
/// # Safety
/// `key` must be a live handle, `json` a valid C string, `out_envelope` writable.
#[no_mangle]
pub unsafe extern "C" fn opal_sign_json(
    key: *const OpalKeypair,
    json: *const c_char,
    out_envelope: *mut *mut c_char,
) -> OpalStatus {
    guard(|| {
        let key = key.as_ref().ok_or((OpalStatus::NullArgument, "`key` is null".to_string()))?;
        let doc = Value::from(json_arg(str_arg(json, "json")?, "json")?);
        let env = key.inner.sign(&doc).map_err(|e| (OpalStatus::SigningFailed, e.to_string()))?;
        put_string(out_envelope, serde_json::to_string(&env).expect("envelope serializes"))
    })
}

/// Verifies `envelope_json` over `json` under a base64 public key. An
/// unregistered scheme is reported as `UnknownScheme`, not as an invalid signature.
///
/// # Safety
/// String arguments must be valid C strings; `out_valid` must be writable.
#[no_mangle]
pub unsafe extern "C" fn opal_verify_json(
    json: *const c_char,
    envelope_json: *const c_char,
    public_key_base64: *const c_char,
    out_valid: *mut bool,
) -> OpalStatus {
    guard(|| {
        let doc = Value::from(json_arg(str_arg(json, "json")?, "json")?);
        let env: SignatureEnvelope = serde_json::from_str(str_arg(envelope_json, "envelope_json")?)
            .map_err(|e| (OpalStatus::InvalidJson, format!("`envelope_json`: {e}")))?;
        let key = parse_key(str_arg(public_key_base64, "public_key_base64")?)?;
        match verify(&doc, &env, &key) {
            Ok(valid) => put(out_valid, valid),
            Err(VerifyError::UnknownScheme(s)) => Err((OpalStatus::UnknownScheme, format!("unregistered scheme `{s}`"))),
            Err(e) => Err((OpalStatus::CanonicalizationFailed, e.to_string())),
        }
    })
}

/// Checks an algorithm source against a schema (a JSON list of
/// `{"name", "type"}` columns). On rejection returns `DslRejected` and, when
/// `out_error` is non-null, a "line:column: message" description.
///
/// # Safety
/// String arguments must be valid C strings; `out_error` may be null.
#[no_mangle]
pub unsafe extern "C" fn opal_dsl_validate(
    source: *const c_char,
    schema_json: *const c_char,
    out_error: *mut *mut c_char,
) -> OpalStatus {
    guard(|| {
        let source = str_arg(source, "source")?;
        let schema: DataSchema = serde_json::from_str(str_arg(schema_json, "schema_json")?)
            .map_err(|e| (OpalStatus::InvalidJson, format!("`schema_json`: {e}")))?;
        match parse(source, &schema) {
            Ok(_) => Ok(()),
            Err(e) => {
                if !out_error.is_null() {
                    put_string(out_error, e.to_string())?;
                }
                Err((OpalStatus::DslRejected, e.to_string()))
            }
        }
    })
}

/// Verifies an audit log file. On `ChainBroken`, `out_broken_sequence` receives
/// the first bad sequence number (it is left untouched otherwise). `expected_head_hex` may be null.
///
/// # Safety
/// `path` must be a valid C string; `expected_head_hex` null or a valid C string;
/// `out_broken_sequence` writable.
#[no_mangle]
pub unsafe extern "C" fn opal_audit_verify_file(
    path: *const c_char,
    expected_head_hex: *const c_char,
    out_broken_sequence: *mut u64,
) -> OpalStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let head = if expected_head_hex.is_null() {
            None
        } else {
            let hex = str_arg(expected_head_hex, "expected_head_hex")?;
            Some(Digest::from_hex(hex.trim()).ok_or((OpalStatus::InvalidJson, "head is not a hex digest".to_string()))?)
        };
        match verify_file(Path::new(path), head).map_err(|e| (OpalStatus::Io, e.to_string()))? {
            ChainStatus::Ok => Ok(()),
            ChainStatus::BrokenAt(seq) => {
                put(out_broken_sequence, seq)?;
                Err((OpalStatus::ChainBroken, format!("chain broken at sequence {seq}")))
            }
            ChainStatus::HeadMismatch => Err((OpalStatus::HeadMismatch, "expected head not found".into())),
        }
    })
}

/// Verifies a contract response (wire JSON) under a provider's base64 public key.
///
/// # Safety
/// String arguments must be valid C strings; `out_valid` must be writable.
#[no_mangle]
pub unsafe extern "C" fn opal_verify_response(
    response_json: *const c_char,
    public_key_base64: *const c_char,
    out_valid: *mut bool,
) -> OpalStatus {
    guard(|| {
        let resp: ContractResponse = serde_json::from_str(str_arg(response_json, "response_json")?)
            .map_err(|e| (OpalStatus::InvalidJson, format!("`response_json`: {e}")))?;
        let key = parse_key(str_arg(public_key_base64, "public_key_base64")?)?;
        put(out_valid, resp.verify_with(&key))
    })
}
