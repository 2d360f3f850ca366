//! Wire-visible protocol documents and contract validation.
//!
//! Every signed document is signed over its canonical form with the signature
//! field(s) removed. Optional fields are always present on the wire (as `null`)
//! so that the signed region is unambiguous.

use crate::canonical::{CanonicalError, Value};
use crate::dsl::{BindingIssue, Literal};
use crate::policy::SafeTable;
use crate::registry::TemplateRegistry;
use crate::schema::DataSchema;
use crate::signing::{
    base64_bytes, verify_self_certified, Keypair, PrincipalId, Role, SignError, SignatureEnvelope, VerifyError,
};
use crate::time::Timestamp;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use uuid::Uuid;

/// A vetted algorithm bound to one repository and dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmTemplate {
    pub template_id: Uuid,
    pub algorithm_id: Uuid,
    pub description: String,
    pub algorithm_source: String,
    pub target_repository_id: Uuid,
    pub dataset_id: Uuid,
    pub data_schema: DataSchema,
    #[serde(with = "crate::canonical::decimal_str")]
    pub cost_to_querier: Decimal,
    pub terms_of_use: String,
    /// Seconds a fulfilled answer stays valid; the provider default applies when absent.
    pub validity_seconds: Option<u64>,
    pub publisher: PrincipalId,
    pub vetting_signatures: Vec<SignatureEnvelope>,
}

impl AlgorithmTemplate {
    pub const SIGNATURE_FIELDS: &'static [&'static str] = &["vetting_signatures"];

    pub fn signing_document(&self) -> Result<Value, CanonicalError> {
        Ok(Value::from_serialize(self)?.without_keys(Self::SIGNATURE_FIELDS))
    }

    /// Appends a vetting signature by `key`.
    pub fn vet(&mut self, key: &Keypair) -> Result<(), SignError> {
        let env = key.sign(&self.signing_document()?)?;
        self.vetting_signatures.push(env);
        Ok(())
    }

    /// Per-signature self-consistency over the unsigned template.
    pub fn vetting_results(&self) -> Result<Vec<bool>, VerifyError> {
        let doc = self.signing_document()?;
        self.vetting_signatures.iter().map(|env| verify_self_certified(&doc, env)).collect()
    }
}

/// A querier-signed execution request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub contract_id: Uuid,
    pub algorithm_id: Uuid,
    /// Exactly one of `target_repository_id` and `target_domain` is set.
    pub target_repository_id: Option<Uuid>,
    /// Domain broadcast: every federation member serving this domain.
    pub target_domain: Option<String>,
    pub parameter_bindings: BTreeMap<String, Literal>,
    pub consent_token: Option<ConsentToken>,
    #[serde(with = "optional_base64")]
    pub payment_voucher: Option<Vec<u8>>,
    pub issued_at: Timestamp,
    pub querier: PrincipalId,
    pub signature: SignatureEnvelope,
}

/// Everything in a contract except its signature.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractDraft {
    pub contract_id: Uuid,
    pub algorithm_id: Uuid,
    pub target_repository_id: Option<Uuid>,
    pub target_domain: Option<String>,
    pub parameter_bindings: BTreeMap<String, Literal>,
    pub consent_token: Option<ConsentToken>,
    #[serde(with = "optional_base64")]
    pub payment_voucher: Option<Vec<u8>>,
    pub issued_at: Timestamp,
    pub querier: PrincipalId,
}

impl ContractDraft {
    pub fn new(algorithm_id: Uuid, target_repository_id: Uuid, querier: PrincipalId, issued_at: Timestamp) -> Self {
        ContractDraft {
            contract_id: Uuid::new_v4(),
            algorithm_id,
            target_repository_id: Some(target_repository_id),
            target_domain: None,
            parameter_bindings: BTreeMap::new(),
            consent_token: None,
            payment_voucher: None,
            issued_at,
            querier,
        }
    }

    pub fn broadcast(algorithm_id: Uuid, domain: impl Into<String>, querier: PrincipalId, issued_at: Timestamp) -> Self {
        ContractDraft {
            target_repository_id: None,
            target_domain: Some(domain.into()),
            ..ContractDraft::new(algorithm_id, Uuid::nil(), querier, issued_at)
        }
    }

    /// Signs the draft, token included, as `self.querier`.
    pub fn sign(self, key: &Keypair) -> Result<Contract, SignError> {
        let doc = Value::from_serialize(&self)?;
        let signature = crate::signing::sign(&doc, key, &self.querier)?;
        Ok(Contract {
            contract_id: self.contract_id,
            algorithm_id: self.algorithm_id,
            target_repository_id: self.target_repository_id,
            target_domain: self.target_domain,
            parameter_bindings: self.parameter_bindings,
            consent_token: self.consent_token,
            payment_voucher: self.payment_voucher,
            issued_at: self.issued_at,
            querier: self.querier,
            signature,
        })
    }
}

impl Contract {
    pub const SIGNATURE_FIELDS: &'static [&'static str] = &["signature"];

    pub fn signing_document(&self) -> Result<Value, CanonicalError> {
        Ok(Value::from_serialize(self)?.without_keys(Self::SIGNATURE_FIELDS))
    }

    /// The signed region as it would be had no token been embedded.
    pub fn signing_document_without_token(&self) -> Result<Value, CanonicalError> {
        let mut copy = self.clone();
        copy.consent_token = None;
        copy.signing_document()
    }

    /// True iff the querier's own signature covers the whole contract.
    pub fn querier_signature_valid(&self) -> bool {
        self.signature.signer == self.querier
            && self.querier.role == Role::Querier
            && self
                .signing_document()
                .ok()
                .and_then(|doc| verify_self_certified(&doc, &self.signature).ok())
                .unwrap_or(false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponseStatus {
    Fulfilled,
    Declined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeclineReason {
    DataUnavailable,
    RelatedQueryDetected,
    ConsentDenied,
    InvalidContract,
    UnknownAlgorithm,
}

impl DeclineReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DeclineReason::DataUnavailable => "data-unavailable",
            DeclineReason::RelatedQueryDetected => "related-query-detected",
            DeclineReason::ConsentDenied => "consent-denied",
            DeclineReason::InvalidContract => "invalid-contract",
            DeclineReason::UnknownAlgorithm => "unknown-algorithm",
        }
    }
}

impl fmt::Display for DeclineReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Placeholder for a field encrypted to one recipient. Encryption itself is
/// not implemented; the wrapper fixes the wire shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncryptedBlob {
    pub recipient: PrincipalId,
    pub scheme_label: String,
    #[serde(with = "base64_bytes")]
    pub ciphertext: Vec<u8>,
}

/// A field that is either in the clear or replaced by an [`EncryptedBlob`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sealed<T> {
    Encrypted { encrypted: EncryptedBlob },
    Plain(T),
}

impl<T> Sealed<T> {
    pub fn plain(&self) -> Option<&T> {
        match self {
            Sealed::Plain(t) => Some(t),
            Sealed::Encrypted { .. } => None,
        }
    }
}

/// A provider-signed answer or decline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ResponseWire")]
pub struct ContractResponse {
    pub contract_id: Uuid,
    pub status: ResponseStatus,
    pub result: Option<Sealed<SafeTable>>,
    pub decline_reason: Option<DeclineReason>,
    pub dataset_ids_used: Vec<Uuid>,
    /// Seconds.
    pub validity_duration: u64,
    pub consent_receipts: Vec<ConsentReceipt>,
    pub responded_at: Timestamp,
    pub provider: PrincipalId,
    pub signature: SignatureEnvelope,
}

#[derive(Deserialize)]
struct ResponseWire {
    contract_id: Uuid,
    status: ResponseStatus,
    result: Option<Sealed<SafeTable>>,
    decline_reason: Option<DeclineReason>,
    dataset_ids_used: Vec<Uuid>,
    validity_duration: u64,
    consent_receipts: Vec<ConsentReceipt>,
    responded_at: Timestamp,
    provider: PrincipalId,
    signature: SignatureEnvelope,
}

impl TryFrom<ResponseWire> for ContractResponse {
    type Error = String;

    fn try_from(w: ResponseWire) -> Result<Self, Self::Error> {
        let r = ContractResponse {
            contract_id: w.contract_id,
            status: w.status,
            result: w.result,
            decline_reason: w.decline_reason,
            dataset_ids_used: w.dataset_ids_used,
            validity_duration: w.validity_duration,
            consent_receipts: w.consent_receipts,
            responded_at: w.responded_at,
            provider: w.provider,
            signature: w.signature,
        };
        r.shape_is_valid().then_some(r).ok_or_else(|| "status, result and decline_reason disagree".to_string())
    }
}

/// A response before signing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponseBody {
    pub contract_id: Uuid,
    pub status: ResponseStatus,
    pub result: Option<Sealed<SafeTable>>,
    pub decline_reason: Option<DeclineReason>,
    pub dataset_ids_used: Vec<Uuid>,
    pub validity_duration: u64,
    pub consent_receipts: Vec<ConsentReceipt>,
    pub responded_at: Timestamp,
    pub provider: PrincipalId,
}

impl ResponseBody {
    pub fn fulfilled(
        contract_id: Uuid,
        result: SafeTable,
        dataset_ids_used: Vec<Uuid>,
        validity_duration: u64,
        consent_receipts: Vec<ConsentReceipt>,
        responded_at: Timestamp,
        provider: PrincipalId,
    ) -> Self {
        ResponseBody {
            contract_id,
            status: ResponseStatus::Fulfilled,
            result: Some(Sealed::Plain(result)),
            decline_reason: None,
            dataset_ids_used,
            validity_duration,
            consent_receipts,
            responded_at,
            provider,
        }
    }

    pub fn declined(contract_id: Uuid, reason: DeclineReason, responded_at: Timestamp, provider: PrincipalId) -> Self {
        ResponseBody {
            contract_id,
            status: ResponseStatus::Declined,
            result: None,
            decline_reason: Some(reason),
            dataset_ids_used: Vec::new(),
            validity_duration: 0,
            consent_receipts: Vec::new(),
            responded_at,
            provider,
        }
    }

    pub fn signing_document(&self) -> Result<Value, CanonicalError> {
        Value::from_serialize(self)
    }

    pub fn sign(self, key: &Keypair) -> Result<ContractResponse, SignError> {
        let signature = crate::signing::sign(&self.signing_document()?, key, &self.provider)?;
        Ok(ContractResponse {
            contract_id: self.contract_id,
            status: self.status,
            result: self.result,
            decline_reason: self.decline_reason,
            dataset_ids_used: self.dataset_ids_used,
            validity_duration: self.validity_duration,
            consent_receipts: self.consent_receipts,
            responded_at: self.responded_at,
            provider: self.provider,
            signature,
        })
    }
}

impl ContractResponse {
    pub const SIGNATURE_FIELDS: &'static [&'static str] = &["signature"];

    pub fn signing_document(&self) -> Result<Value, CanonicalError> {
        Ok(Value::from_serialize(self)?.without_keys(Self::SIGNATURE_FIELDS))
    }

    /// fulfilled ⇔ result present and no decline reason.
    pub fn shape_is_valid(&self) -> bool {
        match self.status {
            ResponseStatus::Fulfilled => self.result.is_some() && self.decline_reason.is_none(),
            ResponseStatus::Declined => self.result.is_none() && self.decline_reason.is_some(),
        }
    }

    /// Verifies the provider signature under `key` (and that the signer is the named provider).
    pub fn verify_with(&self, key: &crate::signing::PublicKey) -> bool {
        self.signature.signer == self.provider
            && self.provider.key_fingerprint == key.fingerprint()
            && self
                .signing_document()
                .ok()
                .and_then(|doc| crate::signing::verify(&doc, &self.signature, key).ok())
                .unwrap_or(false)
    }

    pub fn safe_table(&self) -> Option<&SafeTable> {
        self.result.as_ref().and_then(Sealed::plain)
    }
}

/// Authorization from the consent authority for one querier, algorithm and dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentToken {
    pub token_id: Uuid,
    pub querier: PrincipalId,
    pub algorithm_id: Uuid,
    pub dataset_id: Uuid,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
    pub granting_rule_ids: Vec<Uuid>,
    pub issuer: PrincipalId,
    pub signature: SignatureEnvelope,
}

impl ConsentToken {
    pub const SIGNATURE_FIELDS: &'static [&'static str] = &["signature"];

    pub fn signing_document(&self) -> Result<Value, CanonicalError> {
        Ok(Value::from_serialize(self)?.without_keys(Self::SIGNATURE_FIELDS))
    }
}

/// Per-execution record of the consent basis, returned inside fulfilled responses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentReceipt {
    pub algorithm_id: Uuid,
    pub dataset_id: Uuid,
    pub data_provider: PrincipalId,
    pub querier: PrincipalId,
    pub terms_of_use: String,
    pub token_id: Uuid,
    pub executed_at: Timestamp,
}

impl ConsentReceipt {
    /// All identification fields populated.
    pub fn is_complete(&self) -> bool {
        !self.algorithm_id.is_nil()
            && !self.dataset_id.is_nil()
            && !self.token_id.is_nil()
            && !self.terms_of_use.trim().is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Signature,
    KnownAlgorithm,
    RepositoryMatch,
    ParameterTypes,
    TimestampWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckOutcome {
    Pass,
    Fail,
    /// Could not be evaluated because an earlier check failed.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: Check,
    pub outcome: CheckOutcome,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.outcome == CheckOutcome::Pass)
    }

    pub fn failed(&self) -> Vec<Check> {
        self.checks.iter().filter(|c| c.outcome == CheckOutcome::Fail).map(|c| c.check).collect()
    }

    pub fn outcome(&self, check: Check) -> Option<CheckOutcome> {
        self.checks.iter().find(|c| c.check == check).map(|c| c.outcome)
    }
}

/// Runs every contract check and reports each one; never short-circuits.
pub fn validate_contract(
    contract: &Contract,
    registry: &TemplateRegistry,
    now: Timestamp,
    clock_skew_seconds: i64,
) -> ValidationReport {
    let mut checks = Vec::with_capacity(5);
    let mut push = |check, ok: bool, detail: Option<String>| {
        checks.push(CheckResult { check, outcome: if ok { CheckOutcome::Pass } else { CheckOutcome::Fail }, detail })
    };

    let sig_ok = contract.querier_signature_valid();
    push(Check::Signature, sig_ok, (!sig_ok).then(|| "querier signature does not cover the contract".into()));

    let registered = registry.get(contract.algorithm_id);
    push(
        Check::KnownAlgorithm,
        registered.is_some(),
        registered.is_none().then(|| format!("algorithm {} is not registered", contract.algorithm_id)),
    );

    let repo_detail = match (&contract.target_repository_id, &contract.target_domain) {
        (Some(repo), None) => {
            if *repo != registry.repository_id() {
                Some(format!("contract targets repository {repo}"))
            } else if registered.is_some_and(|t| t.template.target_repository_id != *repo) {
                Some("template targets a different repository".into())
            } else {
                None
            }
        }
        (None, Some(domain)) => {
            (!registry.serves_domain(domain)).then(|| format!("this repository does not serve domain `{domain}`"))
        }
        _ => Some("exactly one of target_repository_id and target_domain must be set".into()),
    };
    push(Check::RepositoryMatch, repo_detail.is_none(), repo_detail);

    match registered {
        Some(t) => {
            let issues = t.ast.check_bindings(&contract.parameter_bindings);
            let detail = (!issues.is_empty())
                .then(|| issues.iter().map(BindingIssue::to_string).collect::<Vec<_>>().join("; "));
            push(Check::ParameterTypes, issues.is_empty(), detail);
        }
        None => checks.push(CheckResult { check: Check::ParameterTypes, outcome: CheckOutcome::Skipped, detail: None }),
    }

    let latest = now.plus_seconds(clock_skew_seconds);
    let ts_ok = contract.issued_at <= latest;
    checks.push(CheckResult {
        check: Check::TimestampWindow,
        outcome: if ts_ok { CheckOutcome::Pass } else { CheckOutcome::Fail },
        detail: (!ts_ok).then(|| format!("issued_at {} is after {}", contract.issued_at, latest)),
    });

    ValidationReport { checks }
}

mod optional_base64 {
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(bytes) => s.serialize_some(&base64::engine::general_purpose::STANDARD.encode(bytes)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| base64::engine::general_purpose::STANDARD.decode(s).map_err(serde::de::Error::custom))
            .transpose()
    }
}
