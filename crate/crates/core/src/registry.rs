//! A provider's set of vetted templates.

use crate::dsl::{parse, AlgorithmAst, DslError};
use crate::protocol::AlgorithmTemplate;
use crate::signing::{verify, KeyRing, VerifyError};
use rust_decimal::Decimal;
use std::collections::BTreeMap;
use thiserror::Error;
use uuid::Uuid;

#[derive(Debug, Clone, PartialEq)]
pub struct RegisteredTemplate {
    pub template: AlgorithmTemplate,
    pub ast: AlgorithmAst,
}

#[derive(Debug, Error, PartialEq)]
pub enum RegistrationError {
    #[error("template targets repository {0}, not this one")]
    WrongRepository(Uuid),
    #[error("template carries no vetting signature")]
    Unvetted,
    #[error("vetting signature {0} does not verify")]
    BadVettingSignature(usize),
    #[error("no vetting signature comes from a trusted key")]
    UntrustedVetting,
    #[error("template source does not compile: {0}")]
    Source(#[from] DslError),
    #[error("cost_to_querier must not be negative")]
    NegativeCost,
    #[error("terms_of_use must not be empty")]
    MissingTerms,
    #[error("algorithm {0} is already registered by a different template")]
    Conflict(Uuid),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

#[derive(Debug, Clone)]
pub struct TemplateRegistry {
    repository_id: Uuid,
    domains: Vec<String>,
    trusted_vetters: KeyRing,
    templates: BTreeMap<Uuid, RegisteredTemplate>,
}

impl TemplateRegistry {
    pub fn new(repository_id: Uuid, domains: Vec<String>, trusted_vetters: KeyRing) -> Self {
        TemplateRegistry { repository_id, domains, trusted_vetters, templates: BTreeMap::new() }
    }

    pub fn repository_id(&self) -> Uuid {
        self.repository_id
    }

    pub fn domains(&self) -> &[String] {
        &self.domains
    }

    pub fn serves_domain(&self, domain: &str) -> bool {
        self.domains.iter().any(|d| d == domain)
    }

    /// Checks every template invariant, then stores the compiled template.
    /// Re-registering the identical template is a no-op.
    pub fn register(&mut self, template: AlgorithmTemplate) -> Result<(), RegistrationError> {
        let ast = check_template(&template, self.repository_id, &self.trusted_vetters)?;
        if let Some(existing) = self.templates.get(&template.algorithm_id) {
            if existing.template != template {
                return Err(RegistrationError::Conflict(template.algorithm_id));
            }
            return Ok(());
        }
        self.templates.insert(template.algorithm_id, RegisteredTemplate { template, ast });
        Ok(())
    }

    pub fn get(&self, algorithm_id: Uuid) -> Option<&RegisteredTemplate> {
        self.templates.get(&algorithm_id)
    }

    pub fn templates(&self) -> impl Iterator<Item = &AlgorithmTemplate> {
        self.templates.values().map(|t| &t.template)
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

/// Template invariants for registration at `repository_id`. Returns the compiled program.
pub fn check_template(
    template: &AlgorithmTemplate,
    repository_id: Uuid,
    trusted_vetters: &KeyRing,
) -> Result<AlgorithmAst, RegistrationError> {
    if template.target_repository_id != repository_id {
        return Err(RegistrationError::WrongRepository(template.target_repository_id));
    }
    if template.cost_to_querier < Decimal::ZERO {
        return Err(RegistrationError::NegativeCost);
    }
    if template.terms_of_use.trim().is_empty() {
        return Err(RegistrationError::MissingTerms);
    }
    if template.vetting_signatures.is_empty() {
        return Err(RegistrationError::Unvetted);
    }
    if let Some(bad) = template.vetting_results()?.iter().position(|ok| !ok) {
        return Err(RegistrationError::BadVettingSignature(bad));
    }
    let doc = template.signing_document().map_err(VerifyError::from)?;
    let mut trusted = false;
    for env in &template.vetting_signatures {
        if let Some(key) = trusted_vetters.get(&env.signer.key_fingerprint) {
            trusted |= verify(&doc, env, key)?;
        }
    }
    if !trusted {
        return Err(RegistrationError::UntrustedVetting);
    }
    Ok(parse(&template.algorithm_source, &template.data_schema)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{ColumnSpec, DataSchema, SemanticType};
    use crate::signing::{Keypair, Role};

    fn vetter() -> Keypair {
        Keypair::from_seed(Role::DataProvider, [3; 32])
    }

    fn template(repo: Uuid) -> AlgorithmTemplate {
        let schema = DataSchema::new(vec![
            ColumnSpec::new("subject", SemanticType::SubjectId),
            ColumnSpec::new("age", SemanticType::Integer),
        ])
        .unwrap();
        let mut t = AlgorithmTemplate {
            template_id: Uuid::new_v4(),
            algorithm_id: Uuid::new_v4(),
            description: "adults".into(),
            algorithm_source: "FILTER age >= 18 AGG count() AS n".into(),
            target_repository_id: repo,
            dataset_id: Uuid::new_v4(),
            data_schema: schema,
            cost_to_querier: Decimal::ZERO,
            terms_of_use: "research only".into(),
            validity_seconds: None,
            publisher: vetter().principal(),
            vetting_signatures: vec![],
        };
        t.vet(&vetter()).unwrap();
        t
    }

    fn trusted() -> KeyRing {
        let mut ring = KeyRing::new();
        ring.insert(vetter().public_key()).unwrap();
        ring
    }

    #[test]
    fn registers_vetted_template() {
        let repo = Uuid::new_v4();
        let mut reg = TemplateRegistry::new(repo, vec![], trusted());
        let t = template(repo);
        reg.register(t.clone()).unwrap();
        reg.register(t.clone()).unwrap();
        assert_eq!(reg.len(), 1);
        assert!(reg.get(t.algorithm_id).is_some());
    }

    #[test]
    fn rejects_untrusted_or_tampered() {
        let repo = Uuid::new_v4();
        let mut reg = TemplateRegistry::new(repo, vec![], KeyRing::new());
        assert_eq!(reg.register(template(repo)), Err(RegistrationError::UntrustedVetting));

        let mut reg = TemplateRegistry::new(repo, vec![], trusted());
        let mut t = template(repo);
        t.algorithm_source = "AGG count() AS n".into();
        assert_eq!(reg.register(t), Err(RegistrationError::BadVettingSignature(0)));

        let mut t = template(repo);
        t.vetting_signatures.clear();
        assert_eq!(reg.register(t), Err(RegistrationError::Unvetted));
    }

    #[test]
    fn rejects_other_repository_and_bad_source() {
        let repo = Uuid::new_v4();
        let mut reg = TemplateRegistry::new(repo, vec![], trusted());
        assert!(matches!(reg.register(template(Uuid::new_v4())), Err(RegistrationError::WrongRepository(_))));

        let mut t = template(repo);
        t.algorithm_source = "AGG sum(subject) AS s".into();
        t.vetting_signatures.clear();
        t.vet(&vetter()).unwrap();
        assert!(matches!(reg.register(t), Err(RegistrationError::Source(_))));
    }

    #[test]
    fn conflicting_algorithm_id() {
        let repo = Uuid::new_v4();
        let mut reg = TemplateRegistry::new(repo, vec![], trusted());
        let t = template(repo);
        reg.register(t.clone()).unwrap();
        let mut other = template(repo);
        other.algorithm_id = t.algorithm_id;
        other.vetting_signatures.clear();
        other.vet(&vetter()).unwrap();
        assert_eq!(reg.register(other), Err(RegistrationError::Conflict(t.algorithm_id)));
    }
}
