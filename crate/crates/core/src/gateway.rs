//! Federation gateway: routes querier contracts to members unchanged and
//! countersigns the collated member answers.
//!
//! Routing looks only at contract headers (target, domain, signatures).
//! Member responses are carried through untouched; the gateway can only add
//! its own declines, never alter a member's.

use crate::canonical::{CanonicalError, Value};
use crate::protocol::{Contract, ContractResponse, DeclineReason, ResponseBody};
use crate::signing::{verify, Fingerprint, Keypair, PrincipalId, PublicKey, Role, SignError, SignatureEnvelope};
use crate::time::{Clock, Timestamp};
use crate::transport::ProviderClient;
use crate::protocol::AlgorithmTemplate;
use futures::future::join_all;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::sync::Arc;
use std::time::Duration;
use thiserror::Error;
use uuid::Uuid;

pub const DEFAULT_MEMBER_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error, PartialEq)]
pub enum MembershipError {
    #[error("repository {0} is already served by another member")]
    DuplicateRepository(Uuid),
    #[error("member key does not match principal {0}")]
    KeyMismatch(PrincipalId),
    #[error("member {0} is not a data provider")]
    NotAProvider(PrincipalId),
}

pub struct Member {
    pub principal: PrincipalId,
    pub public_key: PublicKey,
    pub endpoint: String,
    pub repository_ids: Vec<Uuid>,
    pub domains: Vec<String>,
    pub client: Arc<dyn ProviderClient>,
}

impl Member {
    pub fn info(&self) -> MemberInfo {
        MemberInfo {
            principal: self.principal.clone(),
            public_key: self.public_key.clone(),
            endpoint: self.endpoint.clone(),
            repository_ids: self.repository_ids.clone(),
            domains: self.domains.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberInfo {
    pub principal: PrincipalId,
    pub public_key: PublicKey,
    pub endpoint: String,
    pub repository_ids: Vec<Uuid>,
    pub domains: Vec<String>,
}

#[derive(Default)]
pub struct MembershipRegistry {
    members: Vec<Member>,
}

impl MembershipRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, member: Member) -> Result<(), MembershipError> {
        if member.principal.role != Role::DataProvider {
            return Err(MembershipError::NotAProvider(member.principal));
        }
        if member.public_key.fingerprint() != member.principal.key_fingerprint {
            return Err(MembershipError::KeyMismatch(member.principal));
        }
        let mut seen: HashSet<Uuid> = self.members.iter().flat_map(|m| m.repository_ids.iter().copied()).collect();
        for r in &member.repository_ids {
            if !seen.insert(*r) {
                return Err(MembershipError::DuplicateRepository(*r));
            }
        }
        self.members.push(member);
        Ok(())
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Members that should receive `contract`.
    pub fn route(&self, contract: &Contract) -> Vec<&Member> {
        match (&contract.target_repository_id, &contract.target_domain) {
            (Some(repo), None) => self.members.iter().filter(|m| m.repository_ids.contains(repo)).collect(),
            (None, Some(domain)) => self.members.iter().filter(|m| m.domains.iter().any(|d| d == domain)).collect(),
            _ => Vec::new(),
        }
    }

    fn key_of(&self, member: &PrincipalId) -> Option<&PublicKey> {
        self.members.iter().find(|m| &m.principal == member).map(|m| &m.public_key)
    }
}

/// One member's answer inside a package. `member` names the member even when
/// the answer is a gateway-issued decline on its behalf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberResponse {
    pub member: Option<PrincipalId>,
    pub response: ContractResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederatedResponse {
    pub contract_ids: Vec<Uuid>,
    pub member_responses: Vec<MemberResponse>,
    pub gateway: PrincipalId,
    pub collated_at: Timestamp,
    pub gateway_signature: SignatureEnvelope,
}

impl FederatedResponse {
    pub const SIGNATURE_FIELDS: &'static [&'static str] = &["gateway_signature"];

    pub fn signing_document(&self) -> Result<Value, CanonicalError> {
        Ok(Value::from_serialize(self)?.without_keys(Self::SIGNATURE_FIELDS))
    }

    pub fn verify_gateway(&self, gateway_key: &PublicKey) -> bool {
        self.gateway_signature.signer == self.gateway
            && self.gateway.key_fingerprint == gateway_key.fingerprint()
            && self
                .signing_document()
                .ok()
                .and_then(|doc| verify(&doc, &self.gateway_signature, gateway_key).ok())
                .unwrap_or(false)
    }

    /// Whether each inner response verifies under the key of whoever signed it:
    /// the member for member answers, the gateway for gateway declines.
    pub fn inner_verification(&self, member_key: impl Fn(&Fingerprint) -> Option<PublicKey>, gateway_key: &PublicKey) -> Vec<bool> {
        self.member_responses
            .iter()
            .map(|m| {
                let signer = &m.response.provider;
                if signer == &self.gateway {
                    m.response.verify_with(gateway_key)
                } else {
                    member_key(&signer.key_fingerprint).is_some_and(|k| m.response.verify_with(&k))
                }
            })
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Sign(#[from] SignError),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
}

pub struct Gateway {
    key: Keypair,
    members: MembershipRegistry,
    clock: Arc<dyn Clock>,
    member_timeout: Duration,
    allowed_queriers: Option<HashSet<Fingerprint>>,
}

impl Gateway {
    pub fn new(key: Keypair, members: MembershipRegistry, clock: Arc<dyn Clock>) -> Self {
        Gateway { key, members, clock, member_timeout: DEFAULT_MEMBER_TIMEOUT, allowed_queriers: None }
    }

    pub fn with_member_timeout(mut self, timeout: Duration) -> Self {
        self.member_timeout = timeout;
        self
    }

    /// Restricts service to these querier key fingerprints.
    pub fn with_allowed_queriers(mut self, allowed: impl IntoIterator<Item = Fingerprint>) -> Self {
        self.allowed_queriers = Some(allowed.into_iter().collect());
        self
    }

    pub fn principal(&self) -> PrincipalId {
        self.key.principal()
    }

    pub fn public_key(&self) -> PublicKey {
        self.key.public_key()
    }

    pub fn members(&self) -> &MembershipRegistry {
        &self.members
    }

    fn gateway_decline(&self, contract_id: Uuid, reason: DeclineReason) -> Result<ContractResponse, SignError> {
        ResponseBody::declined(contract_id, reason, self.clock.now(), self.key.principal()).sign(&self.key)
    }

    fn querier_admitted(&self, contract: &Contract) -> bool {
        contract.querier_signature_valid()
            && self.allowed_queriers.as_ref().is_none_or(|a| a.contains(&contract.querier.key_fingerprint))
    }

    /// Routes, fans out, and collates. Never alters the querier's contract.
    pub async fn handle_contract(&self, contract: &Contract) -> Result<FederatedResponse, GatewayError> {
        if !self.querier_admitted(contract) {
            let decline = self.gateway_decline(contract.contract_id, DeclineReason::InvalidContract)?;
            return self.package(vec![contract.contract_id], vec![MemberResponse { member: None, response: decline }]);
        }
        let targets = self.members.route(contract);
        if targets.is_empty() {
            let decline = self.gateway_decline(contract.contract_id, DeclineReason::DataUnavailable)?;
            return self.package(vec![contract.contract_id], vec![MemberResponse { member: None, response: decline }]);
        }
        let calls = targets.iter().map(|m| async move {
            let outcome = tokio::time::timeout(self.member_timeout, m.client.submit(contract)).await;
            match outcome {
                Ok(Ok(response)) => Some(response),
                Ok(Err(e)) => {
                    tracing::warn!(member = %m.principal, error = %e, "member request failed");
                    None
                }
                Err(_) => {
                    tracing::warn!(member = %m.principal, "member timed out");
                    None
                }
            }
        });
        let answers = join_all(calls).await;
        let mut batch = Vec::with_capacity(answers.len());
        for (member, answer) in targets.iter().zip(answers) {
            let response = match answer {
                Some(r) => r,
                None => self.gateway_decline(contract.contract_id, DeclineReason::DataUnavailable)?,
            };
            batch.push((member.principal.clone(), response));
        }
        self.collate(vec![contract.contract_id], batch)
    }

    /// Packages member answers. An answer that does not verify under its
    /// member's key, or that belongs to another request, is replaced by a
    /// gateway decline naming the member.
    pub fn collate(
        &self,
        contract_ids: Vec<Uuid>,
        batch: Vec<(PrincipalId, ContractResponse)>,
    ) -> Result<FederatedResponse, GatewayError> {
        let mut out = Vec::with_capacity(batch.len());
        for (member, response) in batch {
            let from_gateway = response.provider == self.key.principal() && response.verify_with(&self.key.public_key());
            let from_member = response.provider == member
                && self.members.key_of(&member).is_some_and(|k| response.verify_with(k));
            let ours = contract_ids.contains(&response.contract_id);
            let response = if (from_gateway || from_member) && ours {
                response
            } else {
                let id = if ours { response.contract_id } else { contract_ids.first().copied().unwrap_or(response.contract_id) };
                self.gateway_decline(id, DeclineReason::InvalidContract)?
            };
            out.push(MemberResponse { member: Some(member), response });
        }
        self.package(contract_ids, out)
    }

    fn package(&self, contract_ids: Vec<Uuid>, member_responses: Vec<MemberResponse>) -> Result<FederatedResponse, GatewayError> {
        let mut pkg = FederatedResponse {
            contract_ids,
            member_responses,
            gateway: self.key.principal(),
            collated_at: self.clock.now(),
            gateway_signature: SignatureEnvelope {
                signer: self.key.principal(),
                scheme_label: crate::signing::ED25519.into(),
                signer_key: self.key.public_key(),
                payload_digest: crate::canonical::Digest::ZERO,
                signature: Vec::new(),
            },
        };
        pkg.gateway_signature = self.key.sign(&pkg.signing_document()?)?;
        Ok(pkg)
    }

    /// Union of member template lists, in member order. Unreachable members are skipped.
    pub async fn templates(&self) -> Vec<AlgorithmTemplate> {
        let calls = self.members.members().iter().map(|m| async move {
            match tokio::time::timeout(self.member_timeout, m.client.templates()).await {
                Ok(Ok(t)) => t,
                _ => {
                    tracing::warn!(member = %m.principal, "template listing unavailable");
                    Vec::new()
                }
            }
        });
        join_all(calls).await.into_iter().flatten().collect()
    }
}
