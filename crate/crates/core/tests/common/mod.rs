#![allow(dead_code)]

pub mod gen;
pub mod oracle;

use opal_core::audit::AuditLog;
use opal_core::consent::{ConsentRule, ConsentService, Effect, TokenDecision, TokenRequest};
use opal_core::dsl::Literal;
use opal_core::policy::PolicyConfig;
use opal_core::protocol::{AlgorithmTemplate, ConsentToken, Contract, ContractDraft};
use opal_core::provider::{ProviderNode, ProviderSettings};
use opal_core::registry::TemplateRegistry;
use opal_core::schema::DataSchema;
use opal_core::signing::{KeyRing, Keypair, Role};
use opal_core::time::{ManualClock, Timestamp};
use opal_core::transport::ConsentClient;
use rust_decimal::Decimal;
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use uuid::Uuid;

pub const T0: i64 = 1_700_000_000;

pub fn clock() -> Arc<ManualClock> {
    Arc::new(ManualClock::new(Timestamp::from_unix(T0)))
}

pub fn vetted_template(
    vetter: &Keypair,
    algorithm_id: Uuid,
    repository_id: Uuid,
    dataset_id: Uuid,
    schema: DataSchema,
    source: &str,
) -> AlgorithmTemplate {
    let mut t = AlgorithmTemplate {
        template_id: Uuid::new_v4(),
        algorithm_id,
        description: "generated".into(),
        algorithm_source: source.into(),
        target_repository_id: repository_id,
        dataset_id,
        data_schema: schema,
        cost_to_querier: Decimal::ZERO,
        terms_of_use: "aggregate research use".into(),
        validity_seconds: None,
        publisher: vetter.principal(),
        vetting_signatures: vec![],
    };
    t.vet(vetter).unwrap();
    t
}

/// One provider node with an in-process consent authority.
pub struct Site {
    pub clock: Arc<ManualClock>,
    pub vetter: Keypair,
    pub authority: Arc<ConsentService>,
    pub node: Arc<ProviderNode>,
    pub repository_id: Uuid,
}

impl Site {
    pub fn new(k_min: usize, audit_path: Option<&Path>) -> Site {
        let clock = clock();
        let authority = Arc::new(ConsentService::in_memory(Keypair::generate(Role::ConsentAuthority), clock.clone()));
        Site::with_authority(k_min, audit_path, clock, authority.clone(), authority)
    }

    pub fn with_authority(
        k_min: usize,
        audit_path: Option<&Path>,
        clock: Arc<ManualClock>,
        authority: Arc<ConsentService>,
        consent: Arc<dyn ConsentClient>,
    ) -> Site {
        let vetter = Keypair::generate(Role::DataProvider);
        let mut ring = KeyRing::new();
        ring.insert(vetter.public_key()).unwrap();
        let repository_id = Uuid::new_v4();
        let audit = match audit_path {
            Some(p) => AuditLog::open(p, clock.clone()).unwrap(),
            None => AuditLog::in_memory(clock.clone()),
        };
        let node = ProviderNode::new(ProviderSettings {
            key: Keypair::generate(Role::DataProvider),
            registry: TemplateRegistry::new(repository_id, vec!["health".into()], ring),
            policy: PolicyConfig::new(k_min, 64).unwrap(),
            audit,
            consent,
            authority_key: authority.public_key(),
            clock: clock.clone(),
        });
        Site { clock, vetter, authority, node: Arc::new(node), repository_id }
    }

    pub fn install(&self, dataset_id: Uuid, schema: DataSchema, source: &str) -> AlgorithmTemplate {
        self.install_as(Uuid::new_v4(), dataset_id, schema, source)
    }

    pub fn install_as(&self, algorithm_id: Uuid, dataset_id: Uuid, schema: DataSchema, source: &str) -> AlgorithmTemplate {
        let t = vetted_template(&self.vetter, algorithm_id, self.repository_id, dataset_id, schema, source);
        self.node.register_template(t.clone()).unwrap();
        t
    }

    /// Stores a subject-signed allow-everything rule for each key.
    pub fn allow_all<'a>(&self, keys: impl IntoIterator<Item = &'a Keypair>, dataset_id: Uuid) -> Vec<Uuid> {
        keys.into_iter()
            .map(|k| {
                let rule = ConsentRule::new(k.principal(), dataset_id, Effect::Allow);
                self.authority.set_rule(rule.sign(k).unwrap()).unwrap()
            })
            .collect()
    }

    pub fn token(&self, querier: &Keypair, algorithm_id: Uuid, dataset_id: Uuid) -> Option<ConsentToken> {
        token(&self.authority, querier, algorithm_id, dataset_id)
    }

    pub fn contract(
        &self,
        querier: &Keypair,
        template: &AlgorithmTemplate,
        bindings: BTreeMap<String, Literal>,
        token: Option<ConsentToken>,
    ) -> Contract {
        let mut d = ContractDraft::new(template.algorithm_id, self.repository_id, querier.principal(), self.clock_now());
        d.parameter_bindings = bindings;
        d.consent_token = token;
        d.sign(querier).unwrap()
    }

    fn clock_now(&self) -> Timestamp {
        use opal_core::time::Clock;
        self.clock.now()
    }
}

pub fn token(authority: &ConsentService, querier: &Keypair, algorithm_id: Uuid, dataset_id: Uuid) -> Option<ConsentToken> {
    let req = TokenRequest { querier: querier.principal(), algorithm_id, dataset_id, ttl_seconds: 600 };
    match authority.issue_token(&req).unwrap() {
        TokenDecision::Issued { token } => Some(token),
        TokenDecision::Denied => None,
    }
}
