//! Key files and service configuration.
//!
//! Relative paths inside a configuration file are resolved against the
//! directory that contains it.

use crate::audit::{AuditError, AuditLog};
use crate::consent::{ConsentError, ConsentService};
use crate::dataset::{ingest_file, IngestError};
use crate::gateway::{Gateway, Member, MembershipError, MembershipRegistry};
use crate::policy::PolicyConfig;
use crate::protocol::AlgorithmTemplate;
use crate::provider::{ProviderNode, ProviderSettings};
use crate::registry::{RegistrationError, TemplateRegistry};
use crate::schema::{ColumnSpec, DataSchema, SchemaError};
use crate::signing::{Fingerprint, KeyError, KeyRing, Keypair, PrincipalId, PublicKey, Role};
use crate::time::{Clock, SystemClock};
use crate::transport::HttpClient;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;
use thiserror::Error;
use uuid::Uuid;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: key file is for role {found}, expected {expected}")]
    WrongRole { path: PathBuf, found: Role, expected: Role },
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error("template {path}: {source}")]
    Template { path: PathBuf, source: RegistrationError },
    #[error("dataset {dataset_id}: {source}")]
    Dataset { dataset_id: Uuid, source: IngestError },
    #[error("dataset {dataset_id}: {source}")]
    Schema { dataset_id: Uuid, source: SchemaError },
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Consent(#[from] ConsentError),
    #[error(transparent)]
    Membership(#[from] MembershipError),
    #[error("`{0}` is not a key fingerprint")]
    Fingerprint(String),
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ConfigError> {
    serde_json::from_str(&read(path)?).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })
}

fn parse_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ConfigError> {
    toml::from_str(&read(path)?).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// On-disk private key. Never leaves the machine it was generated on.
#[derive(Debug, Serialize, Deserialize)]
pub struct KeyFile {
    pub role: Role,
    pub secret_key: String,
    pub public_key: PublicKey,
    pub fingerprint: Fingerprint,
}

/// The shareable half of a key file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicKeyFile {
    pub role: Role,
    pub public_key: PublicKey,
    pub fingerprint: Fingerprint,
}

impl PublicKeyFile {
    pub fn principal(&self) -> PrincipalId {
        PrincipalId::new(self.role, &self.public_key)
    }
}

pub fn private_key_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.key.json"))
}

pub fn public_key_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.pub.json"))
}

/// Writes `name.key.json` (owner-only on Unix) and `name.pub.json` into `dir`.
pub fn save_keypair(dir: &Path, name: &str, key: &Keypair) -> Result<(PathBuf, PathBuf), ConfigError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ConfigError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let public = key.public_key();
    let private = KeyFile {
        role: key.role(),
        secret_key: key.secret_base64(),
        public_key: public.clone(),
        fingerprint: public.fingerprint(),
    };
    let (priv_path, pub_path) = (private_key_path(dir, name), public_key_path(dir, name));
    let body = serde_json::to_string_pretty(&private).expect("key file serializes");
    write_private(&priv_path, body.as_bytes()).map_err(io(&priv_path))?;
    let pubfile = PublicKeyFile { role: key.role(), fingerprint: public.fingerprint(), public_key: public };
    std::fs::write(&pub_path, serde_json::to_string_pretty(&pubfile).expect("key file serializes")).map_err(io(&pub_path))?;
    Ok((priv_path, pub_path))
}

#[cfg(unix)]
fn write_private(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    use std::io::Write;
    use std::os::unix::fs::OpenOptionsExt;
    let mut f = std::fs::OpenOptions::new().write(true).create(true).truncate(true).mode(0o600).open(path)?;
    f.write_all(bytes)
}

#[cfg(not(unix))]
fn write_private(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    std::fs::write(path, bytes)
}

/// Loads a private key file, checking the role and that the stored public key matches.
pub fn load_keypair(path: &Path, expected: Option<Role>) -> Result<Keypair, ConfigError> {
    let file: KeyFile = parse_json(path)?;
    if let Some(expected) = expected {
        if file.role != expected {
            return Err(ConfigError::WrongRole { path: path.to_path_buf(), found: file.role, expected });
        }
    }
    let key = Keypair::from_secret_base64(file.role, &file.secret_key)?;
    if key.public_key() != file.public_key || file.public_key.fingerprint() != file.fingerprint {
        return Err(ConfigError::Parse { path: path.to_path_buf(), message: "public key does not match secret key".into() });
    }
    Ok(key)
}

pub fn load_public_key(path: &Path) -> Result<PublicKeyFile, ConfigError> {
    let file: PublicKeyFile = parse_json(path)?;
    if file.public_key.fingerprint() != file.fingerprint {
        return Err(ConfigError::Parse { path: path.to_path_buf(), message: "fingerprint does not match public key".into() });
    }
    Ok(file)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub dataset_id: Uuid,
    pub csv: PathBuf,
    pub columns: Vec<ColumnSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsentEndpoint {
    pub endpoint: String,
    /// Base64 Ed25519 public key of the consent authority.
    pub public_key: PublicKey,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub listen: String,
    pub key_file: PathBuf,
    pub repository_id: Uuid,
    #[serde(default)]
    pub domains: Vec<String>,
    /// Base64 public keys whose vetting signatures are accepted.
    pub trusted_vetters: Vec<PublicKey>,
    #[serde(default)]
    pub policy: PolicyConfig,
    pub audit_log: PathBuf,
    pub consent: ConsentEndpoint,
    #[serde(default)]
    pub templates: Vec<PathBuf>,
    #[serde(default)]
    pub datasets: Vec<DatasetConfig>,
    pub clock_skew_seconds: Option<i64>,
    pub default_validity_seconds: Option<u64>,
    pub request_timeout_seconds: Option<u64>,
}

impl ProviderConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        parse_toml(path)
    }

    /// Builds a ready node: key, templates, datasets, audit log, consent client.
    pub fn build(&self, base: &Path) -> Result<ProviderNode, ConfigError> {
        let clock: Arc<dyn Clock> = Arc::new(SystemClock);
        let key = load_keypair(&resolve(base, &self.key_file), Some(Role::DataProvider))?;
        let mut ring = KeyRing::new();
        for k in &self.trusted_vetters {
            ring.insert(k.clone())?;
        }
        let timeout = Duration::from_secs(self.request_timeout_seconds.unwrap_or(10));
        let node = ProviderNode::new(ProviderSettings {
            key,
            registry: TemplateRegistry::new(self.repository_id, self.domains.clone(), ring),
            policy: self.policy,
            audit: AuditLog::open(&resolve(base, &self.audit_log), clock.clone())?,
            consent: Arc::new(HttpClient::new(&self.consent.endpoint, timeout)),
            authority_key: self.consent.public_key.clone(),
            clock: clock.clone(),
        });
        let node = match self.clock_skew_seconds {
            Some(s) => node.with_clock_skew(s),
            None => node,
        };
        let node = match self.default_validity_seconds {
            Some(s) => node.with_default_validity(s),
            None => node,
        };
        for t in &self.templates {
            let path = resolve(base, t);
            let template: AlgorithmTemplate = parse_json(&path)?;
            node.register_template(template).map_err(|source| ConfigError::Template { path, source })?;
        }
        for d in &self.datasets {
            let schema = DataSchema::new(d.columns.clone())
                .map_err(|source| ConfigError::Schema { dataset_id: d.dataset_id, source })?;
            let snapshot = ingest_file(&resolve(base, &d.csv), &schema, d.dataset_id, clock.now())
                .map_err(|source| ConfigError::Dataset { dataset_id: d.dataset_id, source })?;
            node.add_dataset(snapshot);
        }
        Ok(node)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsentConfig {
    pub listen: String,
    pub key_file: PathBuf,
    pub rules_journal: PathBuf,
    pub max_token_ttl_seconds: Option<u64>,
}

impl ConsentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        parse_toml(path)
    }

    pub fn build(&self, base: &Path) -> Result<ConsentService, ConfigError> {
        let key = load_keypair(&resolve(base, &self.key_file), Some(Role::ConsentAuthority))?;
        let svc = ConsentService::open(key, Arc::new(SystemClock), &resolve(base, &self.rules_journal))?;
        Ok(match self.max_token_ttl_seconds {
            Some(ttl) => svc.with_max_ttl(ttl),
            None => svc,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberConfig {
    pub endpoint: String,
    pub public_key: PublicKey,
    pub repository_ids: Vec<Uuid>,
    #[serde(default)]
    pub domains: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    pub listen: String,
    pub key_file: PathBuf,
    pub member_timeout_seconds: Option<u64>,
    /// Querier key fingerprints admitted; any verifiable querier when absent.
    pub allowed_queriers: Option<Vec<String>>,
    pub members: Vec<MemberConfig>,
}

impl GatewayConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        parse_toml(path)
    }

    pub fn build(&self, base: &Path) -> Result<Gateway, ConfigError> {
        let key = load_keypair(&resolve(base, &self.key_file), Some(Role::Gateway))?;
        let timeout = self.member_timeout_seconds.map_or(crate::gateway::DEFAULT_MEMBER_TIMEOUT, Duration::from_secs);
        let mut registry = MembershipRegistry::new();
        for m in &self.members {
            registry.add(Member {
                principal: PrincipalId::new(Role::DataProvider, &m.public_key),
                public_key: m.public_key.clone(),
                endpoint: m.endpoint.clone(),
                repository_ids: m.repository_ids.clone(),
                domains: m.domains.clone(),
                // The outer timeout governs; keep the client's slightly longer.
                client: Arc::new(HttpClient::new(&m.endpoint, timeout + Duration::from_secs(1))),
            })?;
        }
        let gw = Gateway::new(key, registry, Arc::new(SystemClock)).with_member_timeout(timeout);
        match &self.allowed_queriers {
            Some(list) => {
                let fps = list
                    .iter()
                    .map(|s| Fingerprint::parse(s).ok_or_else(|| ConfigError::Fingerprint(s.clone())))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(gw.with_allowed_queriers(fps))
            }
            None => Ok(gw),
        }
    }
}
