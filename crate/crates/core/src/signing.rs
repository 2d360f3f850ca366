//! Principals, keys and the signature envelope.
//!
//! Identity is key possession: a principal is named by the SHA-256 fingerprint
//! of its public verification key. Signatures are computed over the canonical
//! bytes of a document (see [`crate::canonical`]).

use crate::canonical::{canonicalize, CanonicalError, Digest, Value};
use base64::Engine;
use ed25519_dalek::{Signer as _, SigningKey, Verifier as _, VerifyingKey};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

/// Label of the only scheme registered today. Signatures are deterministic.
pub const ED25519: &str = "ed25519";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Querier,
    DataProvider,
    Gateway,
    ConsentAuthority,
    Subject,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Querier => "querier",
            Role::DataProvider => "data-provider",
            Role::Gateway => "gateway",
            Role::ConsentAuthority => "consent-authority",
            Role::Subject => "subject",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "querier" => Ok(Role::Querier),
            "data-provider" => Ok(Role::DataProvider),
            "gateway" => Ok(Role::Gateway),
            "consent-authority" => Ok(Role::ConsentAuthority),
            "subject" => Ok(Role::Subject),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}

/// Lowercase hex SHA-256 of a public key, always 64 characters.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fingerprint(String);

impl Fingerprint {
    pub fn of(key: &PublicKey) -> Self {
        Fingerprint(Digest::of(key.as_bytes()).to_hex())
    }

    pub fn parse(s: &str) -> Option<Self> {
        Digest::from_hex(s).map(|_| Fingerprint(s.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({})", &self.0[..12])
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for Fingerprint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Fingerprint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Fingerprint::parse(&s).ok_or_else(|| serde::de::Error::custom("fingerprint must be 64 lowercase hex characters"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PrincipalId {
    pub role: Role,
    pub key_fingerprint: Fingerprint,
}

impl PrincipalId {
    pub fn new(role: Role, key: &PublicKey) -> Self {
        PrincipalId { role, key_fingerprint: Fingerprint::of(key) }
    }
}

impl fmt::Display for PrincipalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.role.as_str(), &self.key_fingerprint.as_str()[..16])
    }
}

/// Raw public verification key bytes; base64 on the wire.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PublicKey(Vec<u8>);

impl PublicKey {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        PublicKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_base64(&self) -> String {
        base64::engine::general_purpose::STANDARD.encode(&self.0)
    }

    pub fn from_base64(s: &str) -> Result<Self, KeyError> {
        base64::engine::general_purpose::STANDARD
            .decode(s.trim())
            .map(PublicKey)
            .map_err(|e| KeyError::Encoding(e.to_string()))
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::of(self)
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.to_base64())
    }
}

impl Serialize for PublicKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_base64())
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        PublicKey::from_base64(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum KeyError {
    #[error("bad key encoding: {0}")]
    Encoding(String),
    #[error("secret key must be 32 bytes, got {0}")]
    Length(usize),
    #[error("fingerprint collision for {0}")]
    Collision(Fingerprint),
}

/// A signing identity: secret key plus the role it acts in.
#[derive(Clone)]
pub struct Keypair {
    secret: SigningKey,
    role: Role,
}

impl Keypair {
    pub fn generate(role: Role) -> Self {
        Keypair { secret: SigningKey::generate(&mut rand::rngs::OsRng), role }
    }

    /// Deterministic construction from a 32-byte seed.
    pub fn from_seed(role: Role, seed: [u8; 32]) -> Self {
        Keypair { secret: SigningKey::from_bytes(&seed), role }
    }

    pub fn from_secret_base64(role: Role, s: &str) -> Result<Self, KeyError> {
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(s.trim())
            .map_err(|e| KeyError::Encoding(e.to_string()))?;
        let seed: [u8; 32] = bytes.as_slice().try_into().map_err(|_| KeyError::Length(bytes.len()))?;
        Ok(Keypair::from_seed(role, seed))
    }

    pub fn secret_base64(&self) -> String {
        base64::engine::general_purpose::STANDARD.encode(self.secret.to_bytes())
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.secret.verifying_key().to_bytes().to_vec())
    }

    pub fn principal(&self) -> PrincipalId {
        PrincipalId::new(self.role, &self.public_key())
    }

    /// Signs as this keypair's own principal.
    pub fn sign(&self, document: &Value) -> Result<SignatureEnvelope, SignError> {
        sign(document, self, &self.principal())
    }
}

impl fmt::Debug for Keypair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Keypair").field("principal", &self.principal()).finish_non_exhaustive()
    }
}

/// A detached signature over the canonical bytes of a document.
///
/// `signer_key` lets any party check a signature for self-consistency; whether
/// the signer is *trusted* is a separate decision made against configured keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureEnvelope {
    pub signer: PrincipalId,
    pub scheme_label: String,
    pub signer_key: PublicKey,
    pub payload_digest: Digest,
    #[serde(with = "base64_bytes")]
    pub signature: Vec<u8>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SignError {
    #[error("signing key does not belong to {0}")]
    PrincipalMismatch(PrincipalId),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
}

#[derive(Debug, Error, PartialEq)]
pub enum VerifyError {
    #[error("unregistered signature scheme `{0}`")]
    UnknownScheme(String),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
}

/// Signs `document` on behalf of `signer`. Refuses when the key is not the signer's.
pub fn sign(document: &Value, key: &Keypair, signer: &PrincipalId) -> Result<SignatureEnvelope, SignError> {
    let public = key.public_key();
    if Fingerprint::of(&public) != signer.key_fingerprint || key.role != signer.role {
        return Err(SignError::PrincipalMismatch(signer.clone()));
    }
    let bytes = canonicalize(document)?;
    Ok(SignatureEnvelope {
        signer: signer.clone(),
        scheme_label: ED25519.to_string(),
        signer_key: public,
        payload_digest: Digest::of(&bytes),
        signature: key.secret.sign(&bytes).to_bytes().to_vec(),
    })
}

/// True iff the envelope's digest matches `document` and the signature
/// verifies under `public_key`.
pub fn verify(document: &Value, envelope: &SignatureEnvelope, public_key: &PublicKey) -> Result<bool, VerifyError> {
    if envelope.scheme_label != ED25519 {
        return Err(VerifyError::UnknownScheme(envelope.scheme_label.clone()));
    }
    let bytes = canonicalize(document)?;
    Ok(verify_bytes(&bytes, envelope, public_key))
}

/// Same as [`verify`] over pre-computed canonical bytes. Assumes a registered scheme.
pub fn verify_bytes(bytes: &[u8], envelope: &SignatureEnvelope, public_key: &PublicKey) -> bool {
    if Digest::of(bytes) != envelope.payload_digest {
        return false;
    }
    let Ok(key_bytes) = <[u8; 32]>::try_from(public_key.as_bytes()) else {
        return false;
    };
    let Ok(key) = VerifyingKey::from_bytes(&key_bytes) else {
        return false;
    };
    let Ok(sig) = ed25519_dalek::Signature::from_slice(&envelope.signature) else {
        return false;
    };
    key.verify(bytes, &sig).is_ok()
}

/// Verifies against the key carried in the envelope, after checking that the
/// key really is the named signer's.
pub fn verify_self_certified(document: &Value, envelope: &SignatureEnvelope) -> Result<bool, VerifyError> {
    if Fingerprint::of(&envelope.signer_key) != envelope.signer.key_fingerprint {
        if envelope.scheme_label != ED25519 {
            return Err(VerifyError::UnknownScheme(envelope.scheme_label.clone()));
        }
        return Ok(false);
    }
    verify(document, envelope, &envelope.signer_key)
}

/// Trusted public keys indexed by fingerprint.
#[derive(Debug, Clone, Default)]
pub struct KeyRing {
    keys: HashMap<Fingerprint, PublicKey>,
}

impl KeyRing {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a key. A different key with the same fingerprint is an error.
    pub fn insert(&mut self, key: PublicKey) -> Result<Fingerprint, KeyError> {
        let fp = key.fingerprint();
        match self.keys.get(&fp) {
            Some(existing) if existing != &key => Err(KeyError::Collision(fp)),
            _ => {
                self.keys.insert(fp.clone(), key);
                Ok(fp)
            }
        }
    }

    pub fn get(&self, fp: &Fingerprint) -> Option<&PublicKey> {
        self.keys.get(fp)
    }

    pub fn contains(&self, fp: &Fingerprint) -> bool {
        self.keys.contains_key(fp)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

pub(crate) mod base64_bytes {
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        base64::engine::general_purpose::STANDARD.decode(s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc() -> Value {
        Value::map()
            .with("algorithm_id", Value::String("a".into()))
            .with("n", Value::Integer(3))
    }

    #[test]
    fn sign_then_verify() {
        let kp = Keypair::from_seed(Role::Querier, [7; 32]);
        let env = kp.sign(&doc()).unwrap();
        assert!(verify(&doc(), &env, &kp.public_key()).unwrap());
        assert!(verify_self_certified(&doc(), &env).unwrap());
    }

    #[test]
    fn signatures_are_deterministic() {
        let kp = Keypair::from_seed(Role::Querier, [7; 32]);
        assert_eq!(kp.sign(&doc()).unwrap(), kp.sign(&doc()).unwrap());
    }

    #[test]
    fn tampered_document_fails() {
        let kp = Keypair::from_seed(Role::Querier, [7; 32]);
        let env = kp.sign(&doc()).unwrap();
        let tampered = doc().without_keys(&["n"]).with("n", Value::Integer(4));
        assert!(!verify(&tampered, &env, &kp.public_key()).unwrap());
    }

    #[test]
    fn wrong_key_fails() {
        let a = Keypair::from_seed(Role::Querier, [1; 32]);
        let b = Keypair::from_seed(Role::Querier, [2; 32]);
        let env = a.sign(&doc()).unwrap();
        assert!(!verify(&doc(), &env, &b.public_key()).unwrap());
    }

    #[test]
    fn digest_mismatch_with_valid_signature_bytes_fails() {
        let kp = Keypair::from_seed(Role::Querier, [7; 32]);
        let mut env = kp.sign(&doc()).unwrap();
        env.payload_digest = Digest::of(b"something else");
        assert!(!verify(&doc(), &env, &kp.public_key()).unwrap());
    }

    #[test]
    fn unknown_scheme_is_an_error() {
        let kp = Keypair::from_seed(Role::Querier, [7; 32]);
        let mut env = kp.sign(&doc()).unwrap();
        env.scheme_label = "rsa-pss".into();
        assert_eq!(verify(&doc(), &env, &kp.public_key()), Err(VerifyError::UnknownScheme("rsa-pss".into())));
    }

    #[test]
    fn signing_for_another_principal_is_refused() {
        let a = Keypair::from_seed(Role::Querier, [1; 32]);
        let b = Keypair::from_seed(Role::Querier, [2; 32]);
        assert!(matches!(sign(&doc(), &a, &b.principal()), Err(SignError::PrincipalMismatch(_))));
        let as_gateway = PrincipalId::new(Role::Gateway, &a.public_key());
        assert!(sign(&doc(), &a, &as_gateway).is_err());
    }

    #[test]
    fn self_certification_rejects_swapped_key() {
        let a = Keypair::from_seed(Role::Querier, [1; 32]);
        let b = Keypair::from_seed(Role::Querier, [2; 32]);
        let mut env = a.sign(&doc()).unwrap();
        env.signer_key = b.public_key();
        assert!(!verify_self_certified(&doc(), &env).unwrap());
    }

    #[test]
    fn fingerprint_is_64_hex() {
        let kp = Keypair::generate(Role::Subject);
        assert_eq!(kp.principal().key_fingerprint.as_str().len(), 64);
        assert!(Fingerprint::parse("abc").is_none());
    }

    #[test]
    fn keyring_collision_detection() {
        let mut ring = KeyRing::new();
        let kp = Keypair::from_seed(Role::DataProvider, [3; 32]);
        let fp = ring.insert(kp.public_key()).unwrap();
        // same key again is fine
        assert_eq!(ring.insert(kp.public_key()).unwrap(), fp);
        assert_eq!(ring.len(), 1);
    }

    #[test]
    fn envelope_wire_round_trip() {
        let kp = Keypair::from_seed(Role::Gateway, [9; 32]);
        let env = kp.sign(&doc()).unwrap();
        let json = serde_json::to_string(&env).unwrap();
        assert!(json.contains("\"role\":\"gateway\""));
        let back: SignatureEnvelope = serde_json::from_str(&json).unwrap();
        assert_eq!(back, env);
    }
}
