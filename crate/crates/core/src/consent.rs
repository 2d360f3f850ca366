//! Subject consent rules, token issuance and verification, and row masks.
//!
//! Subjects are identified in datasets by the fingerprint of their signing key,
//! so a rule's `subject` maps to rows whose subject-id cell equals
//! `subject.key_fingerprint`.

use crate::canonical::{CanonicalError, Value};
use crate::dataset::DatasetSnapshot;
use crate::protocol::{ConsentToken, Contract};
use crate::signing::{verify, verify_self_certified, Keypair, PrincipalId, PublicKey, Role, SignError, SignatureEnvelope};
use crate::store::LineFile;
use crate::time::{Clock, Timestamp};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};
use thiserror::Error;
use uuid::Uuid;

/// Upper bound on token lifetime.
pub const MAX_TOKEN_TTL_SECONDS: u64 = 24 * 60 * 60;

/// Either a specific value or `"*"`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pattern<T> {
    Any,
    Exact(T),
}

impl<T: PartialEq> Pattern<T> {
    pub fn matches(&self, value: &T) -> bool {
        match self {
            Pattern::Any => true,
            Pattern::Exact(v) => v == value,
        }
    }
}

impl<T: Serialize> Serialize for Pattern<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Pattern::Any => s.serialize_str("*"),
            Pattern::Exact(v) => v.serialize(s),
        }
    }
}

impl<'de, T: DeserializeOwned> Deserialize<'de> for Pattern<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = serde_json::Value::deserialize(d)?;
        if raw.as_str() == Some("*") {
            return Ok(Pattern::Any);
        }
        serde_json::from_value(raw).map(Pattern::Exact).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Effect {
    Allow,
    Deny,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentRule {
    pub rule_id: Uuid,
    pub subject: PrincipalId,
    pub dataset_id: Uuid,
    pub algorithm_pattern: Pattern<Uuid>,
    pub querier_pattern: Pattern<PrincipalId>,
    pub effect: Effect,
    pub expires_at: Option<Timestamp>,
    pub revoked: bool,
}

impl ConsentRule {
    pub fn new(subject: PrincipalId, dataset_id: Uuid, effect: Effect) -> Self {
        ConsentRule {
            rule_id: Uuid::new_v4(),
            subject,
            dataset_id,
            algorithm_pattern: Pattern::Any,
            querier_pattern: Pattern::Any,
            effect,
            expires_at: None,
            revoked: false,
        }
    }

    /// Active and applicable to this (querier, algorithm, dataset) at `at`.
    pub fn applies(&self, querier: &PrincipalId, algorithm_id: Uuid, dataset_id: Uuid, at: Timestamp) -> bool {
        !self.revoked
            && self.expires_at.is_none_or(|e| at < e)
            && self.dataset_id == dataset_id
            && self.algorithm_pattern.matches(&algorithm_id)
            && self.querier_pattern.matches(querier)
    }

    /// Signs the rule as its subject.
    pub fn sign(self, subject_key: &Keypair) -> Result<SignedRule, SignError> {
        let signature = crate::signing::sign(&Value::from_serialize(&self)?, subject_key, &self.subject)?;
        Ok(SignedRule { rule: self, signature })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedRule {
    pub rule: ConsentRule,
    pub signature: SignatureEnvelope,
}

impl SignedRule {
    pub fn is_authentic(&self) -> bool {
        self.signature.signer == self.rule.subject
            && self.rule.subject.role == Role::Subject
            && Value::from_serialize(&self.rule)
                .ok()
                .and_then(|doc| verify_self_certified(&doc, &self.signature).ok())
                .unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevokeRequest {
    pub rule_id: Uuid,
    pub subject: PrincipalId,
    pub requested_at: Timestamp,
}

impl RevokeRequest {
    pub fn sign(self, subject_key: &Keypair) -> Result<SignedRevoke, SignError> {
        let signature = crate::signing::sign(&Value::from_serialize(&self)?, subject_key, &self.subject)?;
        Ok(SignedRevoke { request: self, signature })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedRevoke {
    pub request: RevokeRequest,
    pub signature: SignatureEnvelope,
}

impl SignedRevoke {
    pub fn is_authentic(&self) -> bool {
        self.signature.signer == self.request.subject
            && Value::from_serialize(&self.request)
                .ok()
                .and_then(|doc| verify_self_certified(&doc, &self.signature).ok())
                .unwrap_or(false)
    }
}

#[derive(Debug, Error)]
pub enum ConsentError {
    #[error("request is not signed by the rule's subject")]
    Unauthenticated,
    #[error("no rule with id {0}")]
    NotFound(Uuid),
    #[error("rule {0} already exists")]
    Duplicate(Uuid),
    #[error("token lifetime must be positive")]
    InvalidTtl,
    #[error("rule store: {0}")]
    Storage(#[from] std::io::Error),
    #[error(transparent)]
    Sign(#[from] SignError),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
    #[error("corrupt rule event: {0}")]
    Corrupt(String),
}

/// In-memory rules indexed by subject fingerprint.
#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    by_subject: HashMap<String, Vec<ConsentRule>>,
    owner: HashMap<Uuid, String>,
}

impl RuleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, rule: ConsentRule) -> Result<Uuid, ConsentError> {
        if self.owner.contains_key(&rule.rule_id) {
            return Err(ConsentError::Duplicate(rule.rule_id));
        }
        let subject = rule.subject.key_fingerprint.as_str().to_string();
        let id = rule.rule_id;
        self.owner.insert(id, subject.clone());
        self.by_subject.entry(subject).or_default().push(rule);
        Ok(id)
    }

    pub fn get(&self, rule_id: Uuid) -> Option<&ConsentRule> {
        let subject = self.owner.get(&rule_id)?;
        self.by_subject.get(subject)?.iter().find(|r| r.rule_id == rule_id)
    }

    /// Marks a rule revoked. Revocation is permanent.
    pub fn revoke(&mut self, rule_id: Uuid) -> Result<(), ConsentError> {
        let subject = self.owner.get(&rule_id).ok_or(ConsentError::NotFound(rule_id))?;
        let rules = self.by_subject.get_mut(subject).expect("owner index is consistent");
        let rule = rules.iter_mut().find(|r| r.rule_id == rule_id).expect("owner index is consistent");
        rule.revoked = true;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.owner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owner.is_empty()
    }

    /// Allow rules that grant for `subject`, or `None` when the subject is
    /// excluded (no applicable allow, or any applicable deny).
    fn granting_rules(
        &self,
        subject: &str,
        querier: &PrincipalId,
        algorithm_id: Uuid,
        dataset_id: Uuid,
        at: Timestamp,
    ) -> Option<Vec<Uuid>> {
        let rules = self.by_subject.get(subject)?;
        let mut allows = Vec::new();
        for r in rules.iter().filter(|r| r.applies(querier, algorithm_id, dataset_id, at)) {
            match r.effect {
                Effect::Deny => return None,
                Effect::Allow => allows.push(r.rule_id),
            }
        }
        (!allows.is_empty()).then_some(allows)
    }

    pub fn subject_consents(
        &self,
        subject: &str,
        querier: &PrincipalId,
        algorithm_id: Uuid,
        dataset_id: Uuid,
        at: Timestamp,
    ) -> bool {
        self.granting_rules(subject, querier, algorithm_id, dataset_id, at).is_some()
    }

    /// One bit per entry of `subjects`.
    pub fn mask(
        &self,
        subjects: &[String],
        querier: &PrincipalId,
        algorithm_id: Uuid,
        dataset_id: Uuid,
        at: Timestamp,
    ) -> Vec<bool> {
        let mut memo: HashMap<&str, bool> = HashMap::new();
        subjects
            .iter()
            .map(|s| {
                *memo
                    .entry(s.as_str())
                    .or_insert_with(|| self.subject_consents(s, querier, algorithm_id, dataset_id, at))
            })
            .collect()
    }

    /// Rule ids that would back a token, or `None` when no subject consents.
    pub fn issuance(&self, querier: &PrincipalId, algorithm_id: Uuid, dataset_id: Uuid, at: Timestamp) -> Option<Vec<Uuid>> {
        let mut granting = Vec::new();
        for subject in self.by_subject.keys() {
            if let Some(ids) = self.granting_rules(subject, querier, algorithm_id, dataset_id, at) {
                granting.extend(ids);
            }
        }
        granting.sort();
        (!granting.is_empty()).then_some(granting)
    }
}

/// Row mask for `snapshot` under `rules`.
pub fn consent_mask(
    rules: &RuleSet,
    snapshot: &DatasetSnapshot,
    algorithm_id: Uuid,
    querier: &PrincipalId,
    at: Timestamp,
) -> Vec<bool> {
    rules.mask(snapshot.subjects(), querier, algorithm_id, snapshot.dataset_id(), at)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenFailure {
    BadSignature,
    NotBound,
    Expired,
    Mismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenCheck {
    Pass,
    Fail(TokenFailure),
}

/// Checks a token against the contract that carries it.
///
/// Checks run in the order signature, binding, expiry, match, and the first
/// failure is reported. A token is bound only when it is the contract's
/// embedded token and the querier signature covers it.
pub fn verify_token(
    token: &ConsentToken,
    contract: &Contract,
    expected_dataset_id: Uuid,
    at: Timestamp,
    authority_key: &PublicKey,
) -> TokenCheck {
    let sig_ok = token.issuer.role == Role::ConsentAuthority
        && token.issuer.key_fingerprint == authority_key.fingerprint()
        && token.signature.signer == token.issuer
        && token
            .signing_document()
            .ok()
            .and_then(|doc| verify(&doc, &token.signature, authority_key).ok())
            .unwrap_or(false);
    if !sig_ok {
        return TokenCheck::Fail(TokenFailure::BadSignature);
    }
    if contract.consent_token.as_ref() != Some(token) || !contract.querier_signature_valid() {
        return TokenCheck::Fail(TokenFailure::NotBound);
    }
    if at >= token.expires_at || token.expires_at <= token.issued_at {
        return TokenCheck::Fail(TokenFailure::Expired);
    }
    if token.querier != contract.querier || token.algorithm_id != contract.algorithm_id || token.dataset_id != expected_dataset_id {
        return TokenCheck::Fail(TokenFailure::Mismatch);
    }
    TokenCheck::Pass
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRequest {
    pub querier: PrincipalId,
    pub algorithm_id: Uuid,
    pub dataset_id: Uuid,
    pub ttl_seconds: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "kebab-case")]
#[allow(clippy::large_enum_variant)]
pub enum TokenDecision {
    Issued { token: ConsentToken },
    Denied,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRequest {
    pub querier: PrincipalId,
    pub algorithm_id: Uuid,
    pub dataset_id: Uuid,
    pub subjects: Vec<String>,
    pub at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Introspection {
    pub active: bool,
    pub token_id: Uuid,
    pub expires_at: Timestamp,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
enum RuleEvent {
    Set(SignedRule),
    Revoke(SignedRevoke),
}

/// The consent authority: a single-writer rule store plus a signing key.
pub struct ConsentService {
    key: Keypair,
    rules: RwLock<RuleSet>,
    journal: Option<Mutex<LineFile>>,
    clock: Arc<dyn Clock>,
    max_ttl: u64,
}

impl ConsentService {
    /// A service whose rules live only in memory.
    pub fn in_memory(key: Keypair, clock: Arc<dyn Clock>) -> Self {
        ConsentService { key, rules: RwLock::new(RuleSet::new()), journal: None, clock, max_ttl: MAX_TOKEN_TTL_SECONDS }
    }

    /// Opens (or creates) the event journal at `path` and replays it.
    pub fn open(key: Keypair, clock: Arc<dyn Clock>, path: &Path) -> Result<Self, ConsentError> {
        let (file, lines) = LineFile::open(path)?;
        let mut rules = RuleSet::new();
        for (i, line) in lines.iter().enumerate() {
            let event: RuleEvent =
                serde_json::from_str(line).map_err(|e| ConsentError::Corrupt(format!("line {}: {e}", i + 1)))?;
            match event {
                RuleEvent::Set(s) => {
                    rules.insert(s.rule)?;
                }
                RuleEvent::Revoke(r) => rules.revoke(r.request.rule_id)?,
            }
        }
        Ok(ConsentService {
            key,
            rules: RwLock::new(rules),
            journal: Some(Mutex::new(file)),
            clock,
            max_ttl: MAX_TOKEN_TTL_SECONDS,
        })
    }

    /// Lowers the token lifetime cap. Values above the hard cap are clamped.
    pub fn with_max_ttl(mut self, seconds: u64) -> Self {
        self.max_ttl = seconds.clamp(1, MAX_TOKEN_TTL_SECONDS);
        self
    }

    pub fn principal(&self) -> PrincipalId {
        self.key.principal()
    }

    pub fn public_key(&self) -> PublicKey {
        self.key.public_key()
    }

    fn journal(&self, event: &RuleEvent) -> Result<(), ConsentError> {
        if let Some(j) = &self.journal {
            let line = serde_json::to_vec(event).map_err(|e| CanonicalError::Serialize(e.to_string()))?;
            j.lock().unwrap().append(&line)?;
        }
        Ok(())
    }

    pub fn set_rule(&self, signed: SignedRule) -> Result<Uuid, ConsentError> {
        if !signed.is_authentic() {
            return Err(ConsentError::Unauthenticated);
        }
        let mut rules = self.rules.write().unwrap();
        if rules.get(signed.rule.rule_id).is_some() {
            return Err(ConsentError::Duplicate(signed.rule.rule_id));
        }
        let event = RuleEvent::Set(signed);
        self.journal(&event)?;
        let RuleEvent::Set(signed) = event else { unreachable!() };
        rules.insert(signed.rule)
    }

    pub fn revoke_rule(&self, signed: SignedRevoke) -> Result<(), ConsentError> {
        let mut rules = self.rules.write().unwrap();
        let rule = rules.get(signed.request.rule_id).ok_or(ConsentError::NotFound(signed.request.rule_id))?;
        if !signed.is_authentic() || rule.subject != signed.request.subject {
            return Err(ConsentError::Unauthenticated);
        }
        let id = signed.request.rule_id;
        self.journal(&RuleEvent::Revoke(signed))?;
        rules.revoke(id)
    }

    pub fn issue_token(&self, request: &TokenRequest) -> Result<TokenDecision, ConsentError> {
        if request.ttl_seconds == 0 {
            return Err(ConsentError::InvalidTtl);
        }
        let now = self.clock.now();
        let granting = self.rules.read().unwrap().issuance(&request.querier, request.algorithm_id, request.dataset_id, now);
        let Some(granting_rule_ids) = granting else {
            return Ok(TokenDecision::Denied);
        };
        let ttl = request.ttl_seconds.min(self.max_ttl) as i64;
        let mut token = ConsentToken {
            token_id: Uuid::new_v4(),
            querier: request.querier.clone(),
            algorithm_id: request.algorithm_id,
            dataset_id: request.dataset_id,
            issued_at: now,
            expires_at: now.plus_seconds(ttl),
            granting_rule_ids,
            issuer: self.key.principal(),
            signature: placeholder_envelope(&self.key),
        };
        token.signature = self.key.sign(&token.signing_document()?)?;
        Ok(TokenDecision::Issued { token })
    }

    pub fn mask(&self, request: &MaskRequest) -> Vec<bool> {
        self.rules.read().unwrap().mask(
            &request.subjects,
            &request.querier,
            request.algorithm_id,
            request.dataset_id,
            request.at,
        )
    }

    /// Whether `token` was issued by this authority and is still unexpired.
    pub fn introspect(&self, token: &ConsentToken) -> Introspection {
        let key = self.key.public_key();
        let genuine = token.issuer == self.key.principal()
            && token
                .signing_document()
                .ok()
                .and_then(|doc| verify(&doc, &token.signature, &key).ok())
                .unwrap_or(false);
        Introspection { active: genuine && self.clock.now() < token.expires_at, token_id: token.token_id, expires_at: token.expires_at }
    }

    /// A consistent copy of the current rules.
    pub fn snapshot(&self) -> RuleSet {
        self.rules.read().unwrap().clone()
    }
}

// Stands in for the signature field until the real one is computed; it is
// excluded from the signed region.
fn placeholder_envelope(key: &Keypair) -> SignatureEnvelope {
    SignatureEnvelope {
        signer: key.principal(),
        scheme_label: crate::signing::ED25519.into(),
        signer_key: key.public_key(),
        payload_digest: crate::canonical::Digest::ZERO,
        signature: Vec::new(),
    }
}
