//! The `opal` command-line tool: key management, the querier client, and
//! service launchers.
//!
//! Exit codes: 0 fulfilled (or success), 2 declined, 3 verification failure,
//! 1 usage or transport error.

use crate::audit::{verify_file, ChainStatus};
use crate::canonical::{canonicalize, Digest, Value};
use crate::config::{
    load_keypair, load_public_key, private_key_path, save_keypair, ConsentConfig, GatewayConfig, ProviderConfig,
};
use crate::consent::{ConsentRule, Effect, Pattern, RevokeRequest, TokenDecision, TokenRequest};
use crate::dsl::{parse, Literal};
use crate::gateway::FederatedResponse;
use crate::policy::{Cell, CohortSize, SafeTable};
use crate::protocol::{AlgorithmTemplate, ContractDraft, ContractResponse, ResponseStatus};
use crate::provider::TransparencyRequest;
use crate::signing::{Fingerprint, Keypair, PrincipalId, PublicKey, Role};
use crate::time::Timestamp;
use crate::transport::HttpClient;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;
use uuid::Uuid;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DECLINED: u8 = 2;
pub const EXIT_VERIFICATION: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "opal", version, about = "Federated aggregate query client and services")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct KeyArgs {
    /// Directory holding key files.
    #[arg(long, env = "OPAL_KEY_DIR", default_value = ".opal/keys")]
    keys: PathBuf,
    /// Key name; files are NAME.key.json and NAME.pub.json.
    #[arg(long)]
    name: Option<String>,
}

impl KeyArgs {
    fn load(&self, role: Role) -> Result<Keypair, Failure> {
        let name = self.name.clone().unwrap_or_else(|| role.as_str().to_string());
        load_keypair(&private_key_path(&self.keys, &name), Some(role)).map_err(|e| Failure::usage(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutputFormat {
    Table,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RoleArg {
    Querier,
    DataProvider,
    Gateway,
    ConsentAuthority,
    Subject,
}

impl From<RoleArg> for Role {
    fn from(r: RoleArg) -> Role {
        match r {
            RoleArg::Querier => Role::Querier,
            RoleArg::DataProvider => Role::DataProvider,
            RoleArg::Gateway => Role::Gateway,
            RoleArg::ConsentAuthority => Role::ConsentAuthority,
            RoleArg::Subject => Role::Subject,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EffectArg {
    Allow,
    Deny,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a key pair.
    Keygen {
        #[arg(long, value_enum)]
        role: RoleArg,
        #[command(flatten)]
        keys: KeyArgs,
        /// Replace existing key files.
        #[arg(long)]
        force: bool,
    },
    /// Print a key's role, public key and fingerprint.
    Pubkey {
        #[arg(long, value_enum)]
        role: RoleArg,
        #[command(flatten)]
        keys: KeyArgs,
    },
    /// List the templates an endpoint offers.
    Templates {
        #[arg(long)]
        endpoint: String,
        #[arg(long, value_enum, default_value = "table")]
        output: OutputFormat,
        #[arg(long, default_value_t = 30)]
        timeout: u64,
    },
    /// Request consent, sign a contract, submit it, and verify the answer.
    Run(RunArgs),
    /// Manage a subject's consent rules.
    #[command(subcommand)]
    Consent(ConsentCommand),
    /// Template authoring.
    #[command(subcommand)]
    Template(TemplateCommand),
    /// Audit log tools.
    #[command(subcommand)]
    Audit(AuditCommand),
    /// As a subject, list audit records that concern your data.
    Transparency {
        #[arg(long)]
        endpoint: String,
        #[command(flatten)]
        keys: KeyArgs,
        #[arg(long, default_value_t = 30)]
        timeout: u64,
    },
    /// Print the canonical form of each JSON document read line by line.
    Canon {
        /// Input file; standard input when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Print the SHA-256 digest instead of the canonical text.
        #[arg(long)]
        digest: bool,
    },
    /// Run a data-provider node.
    ServeProvider {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a consent authority.
    ServeConsent {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a federation gateway.
    ServeGateway {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Provider base URL.
    #[arg(long, conflicts_with = "gateway", required_unless_present = "gateway")]
    endpoint: Option<String>,
    /// Gateway base URL.
    #[arg(long)]
    gateway: Option<String>,
    /// Consent authority base URL.
    #[arg(long)]
    consent: String,
    #[arg(long)]
    template: Uuid,
    /// Parameter binding, NAME=VALUE. Repeatable.
    #[arg(long = "bind", value_name = "NAME=VALUE")]
    bindings: Vec<String>,
    /// Broadcast to every member serving this domain (gateway only).
    #[arg(long, requires = "gateway")]
    domain: Option<String>,
    /// Trusted provider key: base64 or a .pub.json file. Repeatable.
    #[arg(long = "provider-key", required = true)]
    provider_keys: Vec<String>,
    /// Trusted gateway key: base64 or a .pub.json file.
    #[arg(long, requires = "gateway")]
    gateway_key: Option<String>,
    #[command(flatten)]
    keys: KeyArgs,
    #[arg(long, value_enum, default_value = "table")]
    output: OutputFormat,
    /// Also write the verified wire body to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Opaque payment voucher file to attach.
    #[arg(long)]
    voucher: Option<PathBuf>,
    /// Requested consent-token lifetime in seconds.
    #[arg(long, default_value_t = 3600)]
    ttl: u64,
    #[arg(long, default_value_t = 30)]
    timeout: u64,
}

#[derive(Debug, Subcommand)]
enum ConsentCommand {
    /// Create a rule for your subject key.
    Set {
        #[arg(long)]
        consent: String,
        #[arg(long)]
        dataset: Uuid,
        /// Algorithm id, or `*` for any.
        #[arg(long, default_value = "*")]
        algorithm: String,
        /// Querier key fingerprint, or `*` for any.
        #[arg(long, default_value = "*")]
        querier: String,
        #[arg(long, value_enum, default_value = "allow")]
        effect: EffectArg,
        /// Expiry, YYYY-MM-DDTHH:MM:SSZ.
        #[arg(long)]
        expires: Option<String>,
        #[command(flatten)]
        keys: KeyArgs,
    },
    /// Revoke one of your rules.
    Revoke {
        #[arg(long)]
        consent: String,
        #[arg(long)]
        rule: Uuid,
        #[command(flatten)]
        keys: KeyArgs,
    },
}

#[derive(Debug, Subcommand)]
enum TemplateCommand {
    /// Add a vetting signature to a template file.
    Sign {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Role of the vetting key.
        #[arg(long, value_enum, default_value = "data-provider")]
        role: RoleArg,
        #[command(flatten)]
        keys: KeyArgs,
    },
    /// Check a template file's source and signatures.
    Check {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum AuditCommand {
    /// Verify a log file's hash chain, optionally against a published head.
    Verify {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        head: Option<String>,
    },
    /// Fetch a provider's current head digest.
    Head {
        #[arg(long)]
        endpoint: String,
    },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }

    fn verification(message: impl Into<String>) -> Self {
        Failure { code: EXIT_VERIFICATION, message: message.into() }
    }
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::usage(e.to_string())
    }
}

/// Entry point used by the `opal` binary.
pub fn main() -> ExitCode {
    // clap exits with 2 on bad arguments, which would read as a decline.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match runtime.block_on(dispatch(cli)) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn init_logging() {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .try_init();
}

async fn dispatch(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Keygen { role, keys, force } => keygen(role.into(), &keys, force),
        Command::Pubkey { role, keys } => {
            let key = keys.load(role.into())?;
            println!("role         {}", key.role());
            println!("public_key   {}", key.public_key().to_base64());
            println!("fingerprint  {}", key.public_key().fingerprint());
            Ok(EXIT_OK)
        }
        Command::Templates { endpoint, output, timeout } => templates(&endpoint, output, timeout).await,
        Command::Run(args) => run(args).await,
        Command::Consent(cmd) => consent(cmd).await,
        Command::Template(cmd) => template(cmd),
        Command::Audit(AuditCommand::Verify { log, head }) => audit_verify(&log, head.as_deref()),
        Command::Audit(AuditCommand::Head { endpoint }) => {
            let text = HttpClient::new(endpoint, Duration::from_secs(30)).get_text("/audit/head").await?;
            println!("{}", text.trim());
            Ok(EXIT_OK)
        }
        Command::Transparency { endpoint, keys, timeout } => {
            let key = keys.load(Role::Subject)?;
            let req = TransparencyRequest { subject: key.principal(), requested_at: Timestamp::now() }.sign(&key)?;
            let records: Vec<crate::audit::AuditRecord> =
                HttpClient::new(endpoint, Duration::from_secs(timeout)).post("/transparency", &req).await?;
            for r in records {
                println!("{}", serde_json::to_string(&r).expect("records serialize"));
            }
            Ok(EXIT_OK)
        }
        Command::Canon { input, digest } => canon(input.as_deref(), digest),
        Command::ServeProvider { config } => {
            init_logging();
            let cfg = ProviderConfig::load(&config)?;
            let node = cfg.build(base_dir(&config))?;
            crate::server::run(crate::server::provider_router(Arc::new(node)), &cfg.listen).await?;
            Ok(EXIT_OK)
        }
        Command::ServeConsent { config } => {
            init_logging();
            let cfg = ConsentConfig::load(&config)?;
            let svc = cfg.build(base_dir(&config))?;
            crate::server::run(crate::server::consent_router(Arc::new(svc)), &cfg.listen).await?;
            Ok(EXIT_OK)
        }
        Command::ServeGateway { config } => {
            init_logging();
            let cfg = GatewayConfig::load(&config)?;
            let gw = cfg.build(base_dir(&config))?;
            crate::server::run(crate::server::gateway_router(Arc::new(gw)), &cfg.listen).await?;
            Ok(EXIT_OK)
        }
    }
}

fn base_dir(config: &Path) -> &Path {
    config.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."))
}

fn keygen(role: Role, keys: &KeyArgs, force: bool) -> Result<u8, Failure> {
    let name = keys.name.clone().unwrap_or_else(|| role.as_str().to_string());
    let path = private_key_path(&keys.keys, &name);
    if path.exists() && !force {
        return Err(Failure::usage(format!("{} exists; pass --force to replace it", path.display())));
    }
    let key = Keypair::generate(role);
    let (_, public) = save_keypair(&keys.keys, &name, &key)?;
    println!("wrote {}", public.display());
    println!("fingerprint  {}", key.public_key().fingerprint());
    Ok(EXIT_OK)
}

/// A trusted key given on the command line: base64 or a public key file.
fn parse_key(arg: &str) -> Result<PublicKey, Failure> {
    let path = Path::new(arg);
    if path.is_file() {
        return Ok(load_public_key(path)?.public_key);
    }
    PublicKey::from_base64(arg).map_err(|e| Failure::usage(format!("`{arg}` is neither a key file nor a base64 key: {e}")))
}

fn template_signature_status(t: &AlgorithmTemplate) -> &'static str {
    match t.vetting_results() {
        Ok(r) if !r.is_empty() && r.iter().all(|ok| *ok) => "ok",
        _ => "INVALID",
    }
}

async fn templates(endpoint: &str, output: OutputFormat, timeout: u64) -> Result<u8, Failure> {
    let list: Vec<AlgorithmTemplate> = HttpClient::new(endpoint, Duration::from_secs(timeout)).get("/templates").await?;
    if let OutputFormat::Json = output {
        println!("{}", serde_json::to_string(&list).expect("templates serialize"));
        return Ok(EXIT_OK);
    }
    let header = ["template_id", "algorithm_id", "description", "cost", "terms_of_use", "signatures"];
    let rows: Vec<Vec<String>> = list
        .iter()
        .map(|t| {
            vec![
                t.template_id.to_string(),
                t.algorithm_id.to_string(),
                t.description.clone(),
                crate::canonical::normalize_decimal(t.cost_to_querier),
                t.terms_of_use.clone(),
                template_signature_status(t).to_string(),
            ]
        })
        .collect();
    print!("{}", aligned(&header.map(String::from), &rows));
    Ok(EXIT_OK)
}

fn parse_bindings(template: &AlgorithmTemplate, raw: &[String]) -> Result<BTreeMap<String, Literal>, Failure> {
    let ast = parse(&template.algorithm_source, &template.data_schema)
        .map_err(|e| Failure::usage(format!("template source does not compile: {e}")))?;
    let types: HashMap<&str, _> = ast.parameters().iter().map(|p| (p.name.as_str(), p.param_type)).collect();
    let mut out = BTreeMap::new();
    for b in raw {
        let (name, value) = b.split_once('=').ok_or_else(|| Failure::usage(format!("binding `{b}` is not NAME=VALUE")))?;
        let ty = *types.get(name).ok_or_else(|| Failure::usage(format!("template declares no parameter `{name}`")))?;
        let lit = Literal::parse_as(value, ty)
            .ok_or_else(|| Failure::usage(format!("`{value}` is not a valid {} for `{name}`", ty.as_str())))?;
        out.insert(name.to_string(), lit);
    }
    let issues = ast.check_bindings(&out);
    if !issues.is_empty() {
        let text: Vec<String> = issues.iter().map(ToString::to_string).collect();
        return Err(Failure::usage(text.join("; ")));
    }
    Ok(out)
}

async fn run(args: RunArgs) -> Result<u8, Failure> {
    let timeout = Duration::from_secs(args.timeout);
    let key = args.keys.load(Role::Querier)?;
    let provider_keys: HashMap<Fingerprint, PublicKey> = args
        .provider_keys
        .iter()
        .map(|k| parse_key(k).map(|k| (k.fingerprint(), k)))
        .collect::<Result<_, _>>()?;
    let gateway_key = args.gateway_key.as_deref().map(parse_key).transpose()?;
    if args.gateway.is_some() && gateway_key.is_none() {
        return Err(Failure::usage("--gateway requires --gateway-key"));
    }
    let target = HttpClient::new(args.gateway.clone().or(args.endpoint.clone()).expect("clap enforces a target"), timeout);

    let listing: Vec<AlgorithmTemplate> = target.get("/templates").await?;
    let template = listing
        .into_iter()
        .find(|t| t.template_id == args.template)
        .ok_or_else(|| Failure::usage(format!("endpoint offers no template {}", args.template)))?;
    let bindings = parse_bindings(&template, &args.bindings)?;

    let consent = HttpClient::new(&args.consent, timeout);
    let decision = consent
        .request_token(&TokenRequest {
            querier: key.principal(),
            algorithm_id: template.algorithm_id,
            dataset_id: template.dataset_id,
            ttl_seconds: args.ttl,
        })
        .await?;
    let token = match decision {
        TokenDecision::Issued { token } => Some(token),
        TokenDecision::Denied => {
            eprintln!("note: the consent authority issued no token; the provider will decline");
            None
        }
    };

    let now = Timestamp::now();
    let mut draft = match &args.domain {
        Some(domain) => ContractDraft::broadcast(template.algorithm_id, domain.clone(), key.principal(), now),
        None => ContractDraft::new(template.algorithm_id, template.target_repository_id, key.principal(), now),
    };
    draft.parameter_bindings = bindings;
    draft.consent_token = token;
    if let Some(v) = &args.voucher {
        draft.payment_voucher = Some(std::fs::read(v).map_err(|e| Failure::usage(format!("{}: {e}", v.display())))?);
    }
    let contract = draft.sign(&key)?;

    let (body, answers) = if args.gateway.is_some() {
        let pkg: FederatedResponse = target.post("/contracts", &contract).await?;
        let gw = gateway_key.expect("checked above");
        if !pkg.verify_gateway(&gw) {
            return Err(Failure::verification("gateway signature does not verify; result withheld"));
        }
        let checks = pkg.inner_verification(|fp| provider_keys.get(fp).cloned(), &gw);
        if let Some(i) = checks.iter().position(|ok| !ok) {
            return Err(Failure::verification(format!(
                "response {} in the package does not verify under a trusted provider key; result withheld",
                i + 1
            )));
        }
        let answers: Vec<(Option<PrincipalId>, ContractResponse)> =
            pkg.member_responses.iter().map(|m| (m.member.clone(), m.response.clone())).collect();
        (serde_json::to_string(&pkg).expect("package serializes"), answers)
    } else {
        let resp: ContractResponse = target.post("/contracts", &contract).await?;
        let ok = provider_keys.get(&resp.provider.key_fingerprint).is_some_and(|k| resp.verify_with(k));
        if !ok || resp.contract_id != contract.contract_id {
            return Err(Failure::verification("provider signature does not verify under a trusted key; result withheld"));
        }
        (serde_json::to_string(&resp).expect("response serializes"), vec![(None, resp)])
    };

    if let Some(path) = &args.out {
        std::fs::write(path, &body).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    }
    match args.output {
        OutputFormat::Json => println!("{body}"),
        OutputFormat::Table => {
            let mut stdout = std::io::stdout().lock();
            for (member, resp) in &answers {
                let _ = write!(stdout, "{}", render_response(member.as_ref(), resp, answers.len() > 1));
            }
        }
    }
    let fulfilled = answers.iter().any(|(_, r)| r.status == ResponseStatus::Fulfilled);
    Ok(if fulfilled { EXIT_OK } else { EXIT_DECLINED })
}

fn render_response(member: Option<&PrincipalId>, resp: &ContractResponse, label: bool) -> String {
    let mut out = String::new();
    if label {
        let who = member.unwrap_or(&resp.provider);
        out.push_str(&format!("== {} ({})\n", who.key_fingerprint, resp.provider.role));
    }
    match (resp.status, resp.safe_table(), resp.decline_reason) {
        (ResponseStatus::Fulfilled, Some(table), _) => {
            out.push_str(&render_table(table));
            out.push_str(&format!("valid for {}s\n", resp.validity_duration));
        }
        (ResponseStatus::Fulfilled, None, _) => out.push_str("fulfilled (result is encrypted)\n"),
        (ResponseStatus::Declined, _, Some(reason)) => out.push_str(&format!("declined: {reason}\n")),
        (ResponseStatus::Declined, _, None) => out.push_str("declined\n"),
    }
    out
}

/// Aligned text rendering of a released table.
pub fn render_table(table: &SafeTable) -> String {
    let mut header: Vec<String> = table.group_key_columns.clone();
    header.extend(table.value_columns.iter().cloned());
    header.push("cohort".into());
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            let mut cells = r.key.clone();
            for c in &table.value_columns {
                cells.push(match r.cells.get(c) {
                    Some(Cell::Number(d)) => crate::canonical::normalize_decimal(*d),
                    Some(Cell::Histogram(h)) => h.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(", "),
                    Some(Cell::Suppressed) | None => crate::policy::SUPPRESSION_MARKER.to_string(),
                });
            }
            cells.push(match r.cohort_size {
                CohortSize::Count(n) => n.to_string(),
                CohortSize::Suppressed => crate::policy::SUPPRESSION_MARKER.to_string(),
            });
            cells
        })
        .collect();
    aligned(&header, &rows)
}

fn aligned(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        format!("{}\n", parts.join("  ").trim_end())
    };
    let mut out = line(header);
    out.push_str(&line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>()));
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

async fn consent(cmd: ConsentCommand) -> Result<u8, Failure> {
    match cmd {
        ConsentCommand::Set { consent, dataset, algorithm, querier, effect, expires, keys } => {
            let key = keys.load(Role::Subject)?;
            let mut rule = ConsentRule::new(
                key.principal(),
                dataset,
                match effect {
                    EffectArg::Allow => Effect::Allow,
                    EffectArg::Deny => Effect::Deny,
                },
            );
            if algorithm != "*" {
                rule.algorithm_pattern =
                    Pattern::Exact(algorithm.parse().map_err(|_| Failure::usage(format!("`{algorithm}` is not a UUID")))?);
            }
            if querier != "*" {
                let fp = Fingerprint::parse(&querier).ok_or_else(|| Failure::usage(format!("`{querier}` is not a fingerprint")))?;
                rule.querier_pattern = Pattern::Exact(PrincipalId { role: Role::Querier, key_fingerprint: fp });
            }
            if let Some(e) = expires {
                rule.expires_at = Some(Timestamp::parse(&e).ok_or_else(|| Failure::usage(format!("`{e}` is not a timestamp")))?);
            }
            let reply: serde_json::Value =
                HttpClient::new(consent, Duration::from_secs(30)).post("/rules", &rule.sign(&key)?).await?;
            println!("{}", reply["rule_id"].as_str().unwrap_or_default());
            Ok(EXIT_OK)
        }
        ConsentCommand::Revoke { consent, rule, keys } => {
            let key = keys.load(Role::Subject)?;
            let req = RevokeRequest { rule_id: rule, subject: key.principal(), requested_at: Timestamp::now() }.sign(&key)?;
            let _: serde_json::Value = HttpClient::new(consent, Duration::from_secs(30)).post("/rules/revoke", &req).await?;
            println!("revoked {rule}");
            Ok(EXIT_OK)
        }
    }
}

fn template(cmd: TemplateCommand) -> Result<u8, Failure> {
    match cmd {
        TemplateCommand::Sign { input, output, role, keys } => {
            let key = keys.load(role.into())?;
            let text = std::fs::read_to_string(&input).map_err(|e| Failure::usage(format!("{}: {e}", input.display())))?;
            let mut t: AlgorithmTemplate = serde_json::from_str(&text)?;
            parse(&t.algorithm_source, &t.data_schema).map_err(|e| Failure::usage(format!("template source: {e}")))?;
            t.vet(&key)?;
            std::fs::write(&output, serde_json::to_string_pretty(&t).expect("template serializes"))
                .map_err(|e| Failure::usage(format!("{}: {e}", output.display())))?;
            println!("signed by {}", key.public_key().fingerprint());
            Ok(EXIT_OK)
        }
        TemplateCommand::Check { input } => {
            let text = std::fs::read_to_string(&input).map_err(|e| Failure::usage(format!("{}: {e}", input.display())))?;
            let t: AlgorithmTemplate = serde_json::from_str(&text)?;
            parse(&t.algorithm_source, &t.data_schema).map_err(|e| Failure::usage(format!("template source: {e}")))?;
            let status = template_signature_status(&t);
            println!("source ok; {} vetting signature(s): {status}", t.vetting_signatures.len());
            Ok(if status == "ok" { EXIT_OK } else { EXIT_VERIFICATION })
        }
    }
}

fn audit_verify(log: &Path, head: Option<&str>) -> Result<u8, Failure> {
    let head = head
        .map(|h| Digest::from_hex(h.trim()).ok_or_else(|| Failure::usage(format!("`{h}` is not a hex digest"))))
        .transpose()?;
    match verify_file(log, head)? {
        ChainStatus::Ok => {
            println!("ok");
            Ok(EXIT_OK)
        }
        ChainStatus::BrokenAt(seq) => Err(Failure::verification(format!("chain broken at sequence {seq}"))),
        ChainStatus::HeadMismatch => Err(Failure::verification("log does not contain the expected head (truncated?)")),
    }
}

fn canon(input: Option<&Path>, digest: bool) -> Result<u8, Failure> {
    let reader: Box<dyn BufRead> = match input {
        Some(p) => Box::new(std::io::BufReader::new(
            std::fs::File::open(p).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(std::io::BufReader::new(std::io::stdin())),
    };
    let mut stdout = std::io::stdout().lock();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let json: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| Failure::usage(format!("line {}: {e}", i + 1)))?;
        let bytes = canonicalize(&Value::from(json)).map_err(|e| Failure::usage(format!("line {}: {e}", i + 1)))?;
        if digest {
            writeln!(stdout, "{}", Digest::of(&bytes))?;
        } else {
            stdout.write_all(&bytes)?;
            stdout.write_all(b"\n")?;
        }
    }
    Ok(EXIT_OK)
}
