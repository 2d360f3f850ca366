//! The data-provider node and its contract pipeline.

use crate::audit::{AuditError, AuditKind, AuditLog, AuditRecord};
use crate::canonical::{digest_of, CanonicalError, Value};
use crate::consent::{verify_token, MaskRequest, TokenCheck};
use crate::dataset::DatasetSnapshot;
use crate::dsl::evaluate;
use crate::policy::{apply_policy, differencing_guard, GuardDecision, PolicyConfig, QueryHistory};
use crate::protocol::{
    validate_contract, AlgorithmTemplate, Check, CheckOutcome, ConsentReceipt, Contract, ContractResponse, DeclineReason,
    ResponseBody, ValidationReport,
};
use crate::registry::{RegistrationError, TemplateRegistry};
use crate::signing::{verify_self_certified, Keypair, PrincipalId, PublicKey, Role, SignError, SignatureEnvelope};
use crate::time::{Clock, Timestamp};
use crate::transport::{ConsentClient, ProviderClient, TransportError};
use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, RwLock};
use thiserror::Error;
use uuid::Uuid;

/// Seconds a fulfilled answer stays valid when the template does not say.
pub const DEFAULT_VALIDITY_SECONDS: u64 = 86_400;

/// Tolerated querier clock lead, in seconds.
pub const DEFAULT_CLOCK_SKEW_SECONDS: i64 = 300;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Sign(#[from] SignError),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
    #[error("request is not signed by the named subject")]
    Unauthenticated,
}

pub struct ProviderNode {
    key: Keypair,
    registry: RwLock<TemplateRegistry>,
    datasets: RwLock<HashMap<Uuid, Arc<DatasetSnapshot>>>,
    policy: PolicyConfig,
    history: QueryHistory,
    audit: AuditLog,
    consent: Arc<dyn ConsentClient>,
    authority_key: PublicKey,
    clock: Arc<dyn Clock>,
    clock_skew_seconds: i64,
    default_validity_seconds: u64,
}

pub struct ProviderSettings {
    pub key: Keypair,
    pub registry: TemplateRegistry,
    pub policy: PolicyConfig,
    pub audit: AuditLog,
    pub consent: Arc<dyn ConsentClient>,
    pub authority_key: PublicKey,
    pub clock: Arc<dyn Clock>,
}

impl ProviderNode {
    pub fn new(s: ProviderSettings) -> Self {
        ProviderNode {
            key: s.key,
            registry: RwLock::new(s.registry),
            datasets: RwLock::new(HashMap::new()),
            policy: s.policy,
            history: QueryHistory::new(),
            audit: s.audit,
            consent: s.consent,
            authority_key: s.authority_key,
            clock: s.clock,
            clock_skew_seconds: DEFAULT_CLOCK_SKEW_SECONDS,
            default_validity_seconds: DEFAULT_VALIDITY_SECONDS,
        }
    }

    pub fn with_clock_skew(mut self, seconds: i64) -> Self {
        self.clock_skew_seconds = seconds;
        self
    }

    pub fn with_default_validity(mut self, seconds: u64) -> Self {
        self.default_validity_seconds = seconds;
        self
    }

    pub fn principal(&self) -> PrincipalId {
        self.key.principal()
    }

    pub fn public_key(&self) -> PublicKey {
        self.key.public_key()
    }

    pub fn repository_id(&self) -> Uuid {
        self.registry.read().unwrap().repository_id()
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    pub fn history(&self) -> &QueryHistory {
        &self.history
    }

    pub fn policy(&self) -> &PolicyConfig {
        &self.policy
    }

    /// Makes a snapshot available. Replaces any earlier snapshot with the same id.
    pub fn add_dataset(&self, snapshot: DatasetSnapshot) {
        self.datasets.write().unwrap().insert(snapshot.dataset_id(), Arc::new(snapshot));
    }

    pub fn dataset(&self, dataset_id: Uuid) -> Option<Arc<DatasetSnapshot>> {
        self.datasets.read().unwrap().get(&dataset_id).cloned()
    }

    pub fn register_template(&self, template: AlgorithmTemplate) -> Result<(), RegistrationError> {
        self.registry.write().unwrap().register(template)
    }

    pub fn templates(&self) -> Vec<AlgorithmTemplate> {
        self.registry.read().unwrap().templates().cloned().collect()
    }

    pub fn validate(&self, contract: &Contract) -> ValidationReport {
        validate_contract(contract, &self.registry.read().unwrap(), self.clock.now(), self.clock_skew_seconds)
    }

    /// Runs the contract pipeline. Every outcome is a signed response except
    /// an audit or signing failure, in which case nothing is released.
    pub async fn handle_contract(&self, contract: &Contract) -> Result<ContractResponse, ProviderError> {
        let registered = self.registry.read().unwrap().get(contract.algorithm_id).cloned();
        let dataset_id = registered.as_ref().map(|t| t.template.dataset_id);
        self.audit.append(AuditKind::ContractReceived, contract.contract_id, dataset_id, digest_of(contract)?)?;

        let report = self.validate(contract);
        if !report.passed() {
            let reason = if report.failed() == [Check::KnownAlgorithm]
                && report.outcome(Check::ParameterTypes) == Some(CheckOutcome::Skipped)
            {
                DeclineReason::UnknownAlgorithm
            } else {
                DeclineReason::InvalidContract
            };
            return self.decline(contract, dataset_id, reason);
        }
        let registered = registered.expect("validation passed, so the algorithm is registered");
        let template = &registered.template;

        let snapshot = match self.dataset(template.dataset_id) {
            Some(s) if *s.schema() == template.data_schema => s,
            _ => return self.decline(contract, dataset_id, DeclineReason::DataUnavailable),
        };

        let now = self.clock.now();
        let Some(token) = contract.consent_token.as_ref() else {
            return self.decline(contract, dataset_id, DeclineReason::ConsentDenied);
        };
        if verify_token(token, contract, template.dataset_id, now, &self.authority_key) != TokenCheck::Pass {
            return self.decline(contract, dataset_id, DeclineReason::ConsentDenied);
        }
        self.audit.append(AuditKind::TokenVerified, contract.contract_id, dataset_id, digest_of(token)?)?;

        let Ok(mask) = self.mask(&snapshot, contract, now).await else {
            return self.decline(contract, dataset_id, DeclineReason::ConsentDenied);
        };

        let Ok(table) = evaluate(&registered.ast, &snapshot, &mask, &contract.parameter_bindings) else {
            return self.decline(contract, dataset_id, DeclineReason::DataUnavailable);
        };

        let cohorts: Vec<_> = table.rows.iter().map(|r| r.cohort.clone()).collect();
        let guard = differencing_guard(
            &self.history,
            &contract.querier,
            template.dataset_id,
            contract.contract_id,
            &cohorts,
            &self.policy,
        );
        if guard == GuardDecision::RelatedQueryDetected {
            return self.decline(contract, dataset_id, DeclineReason::RelatedQueryDetected);
        }

        let safe = apply_policy(&table, &self.policy);
        let receipt = ConsentReceipt {
            algorithm_id: template.algorithm_id,
            dataset_id: template.dataset_id,
            data_provider: self.key.principal(),
            querier: contract.querier.clone(),
            terms_of_use: template.terms_of_use.clone(),
            token_id: token.token_id,
            executed_at: now,
        };
        let response = ResponseBody::fulfilled(
            contract.contract_id,
            safe,
            vec![template.dataset_id],
            template.validity_seconds.unwrap_or(self.default_validity_seconds),
            vec![receipt],
            self.clock.now(),
            self.key.principal(),
        )
        .sign(&self.key)?;
        self.audit.append(AuditKind::ResponseIssued, contract.contract_id, dataset_id, digest_of(&response)?)?;
        Ok(response)
    }

    async fn mask(&self, snapshot: &DatasetSnapshot, contract: &Contract, at: Timestamp) -> Result<Vec<bool>, TransportError> {
        let subjects = snapshot.distinct_subjects();
        let request = MaskRequest {
            querier: contract.querier.clone(),
            algorithm_id: contract.algorithm_id,
            dataset_id: snapshot.dataset_id(),
            subjects: subjects.clone(),
            at,
        };
        let bits = self.consent.mask(&request).await?;
        if bits.len() != subjects.len() {
            return Err(TransportError::Peer("mask length does not match subject count".into()));
        }
        let allowed: HashMap<&str, bool> = subjects.iter().map(String::as_str).zip(bits).collect();
        Ok(snapshot.subjects().iter().map(|s| allowed[s.as_str()]).collect())
    }

    fn decline(
        &self,
        contract: &Contract,
        dataset_id: Option<Uuid>,
        reason: DeclineReason,
    ) -> Result<ContractResponse, ProviderError> {
        let response =
            ResponseBody::declined(contract.contract_id, reason, self.clock.now(), self.key.principal()).sign(&self.key)?;
        self.audit.append(AuditKind::DeclineIssued, contract.contract_id, dataset_id, digest_of(&response)?)?;
        Ok(response)
    }

    /// Audit records touching datasets that contain the requesting subject.
    pub fn transparency(&self, request: &SignedTransparencyRequest) -> Result<Vec<AuditRecord>, ProviderError> {
        if !request.is_authentic() {
            return Err(ProviderError::Unauthenticated);
        }
        let subject = request.request.subject.key_fingerprint.as_str().to_string();
        let datasets = self.datasets.read().unwrap();
        Ok(self.audit.query_by_subject(|d| datasets.get(&d).is_some_and(|s| s.contains_subject(&subject))))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransparencyRequest {
    pub subject: PrincipalId,
    pub requested_at: Timestamp,
}

impl TransparencyRequest {
    pub fn sign(self, subject_key: &Keypair) -> Result<SignedTransparencyRequest, SignError> {
        let signature = crate::signing::sign(&Value::from_serialize(&self)?, subject_key, &self.subject)?;
        Ok(SignedTransparencyRequest { request: self, signature })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedTransparencyRequest {
    pub request: TransparencyRequest,
    pub signature: SignatureEnvelope,
}

impl SignedTransparencyRequest {
    pub fn is_authentic(&self) -> bool {
        self.signature.signer == self.request.subject
            && self.request.subject.role == Role::Subject
            && Value::from_serialize(&self.request)
                .ok()
                .and_then(|doc| verify_self_certified(&doc, &self.signature).ok())
                .unwrap_or(false)
    }
}

#[async_trait]
impl ProviderClient for ProviderNode {
    async fn submit(&self, contract: &Contract) -> Result<ContractResponse, TransportError> {
        self.handle_contract(contract).await.map_err(|e| TransportError::Peer(e.to_string()))
    }

    async fn templates(&self) -> Result<Vec<AlgorithmTemplate>, TransportError> {
        Ok(ProviderNode::templates(self))
    }
}
